use std::collections::BTreeMap;

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Normal(f64),
    Uniform(f64),
}

#[derive(Debug, Clone)]
struct Param {
    var: Var,
    frozen: bool,
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone)]
pub struct ParamStore {
    dtype: DType,
    device: Device,
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            dtype,
            device: Device::Cpu,
            params: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, frozen: bool) -> Result<()> {
        let value = value.to_dtype(self.dtype)?;
        self.params.insert(
            name.into(),
            Param {
                var: Var::from_tensor(&value)?,
                frozen,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.params.get(name).map(|p| &p.var)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|p| p.frozen)
    }

    /// Names in sorted order with their variables.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var, bool)> + '_ {
        self.params
            .iter()
            .map(|(k, p)| (k.as_str(), &p.var, p.frozen))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.params.keys().map(String::as_str)
    }

    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) {
        for (name, p) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                p.frozen = frozen;
            }
        }
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.params
            .values()
            .filter(|p| !p.frozen)
            .map(|p| p.var.clone())
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.var.elem_count()).sum()
    }

    /// Copies `other`'s entries under `prefix`, keeping their frozen flags.
    pub fn absorb(&mut self, prefix: &str, other: &ParamStore) -> Result<()> {
        for (name, var, frozen) in other.iter() {
            let copy = var.as_tensor().copy()?;
            self.insert(format!("{prefix}{name}"), copy, frozen)?;
        }
        Ok(())
    }

    /// Returns the entries under `prefix` (prefix stripped) as a new store.
    pub fn extract(&self, prefix: &str) -> Result<ParamStore> {
        let mut out = ParamStore::new(self.dtype);
        for (name, var, frozen) in self.iter() {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(rest, var.as_tensor().copy()?, frozen)?;
            }
        }
        Ok(out)
    }

    /// Deep copy with independent storage.
    pub fn deep_clone(&self) -> Result<ParamStore> {
        self.extract("")
    }

    /// Overwrites the value of an existing parameter in place.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no parameter named {name}")))?;
        if var.dims() != value.dims() {
            return Err(shape(format!(
                "{name}: cannot set {:?} from {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    pub fn all_finite(&self) -> Result<bool> {
        for p in self.params.values() {
            let v: Vec<f64> = p
                .var
                .as_tensor()
                .to_dtype(DType::F64)?
                .flatten_all()?
                .to_vec1()?;
            if v.iter().any(|x| !x.is_finite()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Hands out parameters by hierarchical name, creating missing ones from a seeded generator.
///
/// When the store was populated from a checkpoint, every lookup hits an existing entry and
/// the generator is never consumed.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn pp(&mut self, name: impl AsRef<str>) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        ParamBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype
    }

    pub fn get(&mut self, name: &str, dims: impl Into<Shape>, init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        let dims: Shape = dims.into();
        if let Some(existing) = self.store.get(&full) {
            if existing.shape() != &dims {
                return Err(shape(format!(
                    "parameter {full}: stored shape {:?}, model expects {:?}",
                    existing.dims(),
                    dims.dims()
                )));
            }
            return Ok(existing.as_tensor().clone());
        }
        let n = dims.elem_count();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(b) => (0..n).map(|_| self.rng.gen_range(-b..=b)).collect(),
            Init::Normal(std) => (0..n).map(|_| std * standard_normal(self.rng)).collect(),
        };
        let t = Tensor::from_vec(values, dims, &self.store.device)?;
        self.store.insert(full.clone(), t, false)?;
        Ok(self
            .store
            .get(&full)
            .expect("just inserted")
            .as_tensor()
            .clone())
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 is kept away from zero.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn builder_reuses_existing_entries() {
        let mut store = ParamStore::new(DType::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = {
            let mut b = ParamBuilder::new(&mut store, &mut rng);
            b.pp("layer").get("w", (2, 3), Init::Normal(1.0)).unwrap()
        };
        assert!(store.get("layer.w").is_some());
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let again = ParamBuilder::new(&mut store, &mut rng2)
            .pp("layer")
            .get("w", (2, 3), Init::Zeros)
            .unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = (
            a.flatten_all().unwrap().to_vec1().unwrap(),
            again.flatten_all().unwrap().to_vec1().unwrap(),
        );
        assert_eq!(x, y);
        let mut rng3 = ChaCha8Rng::seed_from_u64(0);
        assert!(ParamBuilder::new(&mut store, &mut rng3)
            .pp("layer")
            .get("w", (3, 2), Init::Zeros)
            .is_err());
    }

    #[test]
    fn frozen_entries_are_not_trainable() {
        let mut store = ParamStore::new(DType::F32);
        store
            .insert(
                "a.w",
                Tensor::zeros(2, DType::F32, &Device::Cpu).unwrap(),
                false,
            )
            .unwrap();
        store
            .insert(
                "b.w",
                Tensor::zeros(2, DType::F32, &Device::Cpu).unwrap(),
                false,
            )
            .unwrap();
        store.set_frozen_prefix("a.", true);
        assert_eq!(store.trainable_vars().len(), 1);
        assert!(store.is_frozen("a.w"));
    }
}
