use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::embedding::EMBED_INIT_BOUND;
use super::graph::TokenDependencyGraph;
use crate::data::{TextDescription, PAD_ID};
use crate::error::{invalid, shape, Error, Result};
use crate::nn::{Init, ParamBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TextEncoderKind {
    #[default]
    Bigru,
    GraphGru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    #[serde(default)]
    pub kind: TextEncoderKind,
}

impl TextEncoderConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 200,
            hidden: 128,
            kind: TextEncoderKind::Bigru,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }
}

/// Concatenated final forward and backward hidden states, shape `[1, 2·hidden]`.
#[derive(Debug, Clone)]
pub struct TextVector(Tensor);

impl TextVector {
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        match t.dims() {
            [1, _] => Ok(Self(t)),
            [_] => Ok(Self(t.unsqueeze(0)?)),
            other => Err(shape(format!("text vector must be 1-D, got {other:?}"))),
        }
    }

    pub fn from_values(values: &[f64], dtype: DType) -> Result<Self> {
        let t = Tensor::from_slice(values, (1, values.len()), &Device::Cpu)?.to_dtype(dtype)?;
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn to_vec(&self) -> Result<Vec<f64>> {
        Ok(self.0.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?)
    }

    /// Stacks vectors into an `[N, dim]` batch.
    pub fn stack(vectors: &[TextVector]) -> Result<Tensor> {
        let parts: Vec<&Tensor> = vectors.iter().map(|v| &v.0).collect();
        Ok(Tensor::cat(&parts, 0)?)
    }
}

/// Single-direction GRU with reset/update/candidate gates packed in that order.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(pb: &mut ParamBuilder<'_>, input: usize, hidden: usize) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            w_ih: pb.get("w_ih", (3 * hidden, input), Init::Uniform(bound))?,
            w_hh: pb.get("w_hh", (3 * hidden, hidden), Init::Uniform(bound))?,
            b_ih: pb.get("b_ih", 3 * hidden, Init::Uniform(bound))?,
            b_hh: pb.get("b_hh", 3 * hidden, Init::Uniform(bound))?,
            hidden,
        })
    }

    /// Input projections for a whole sequence, `[n, 3·hidden]`.
    fn project_inputs(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.w_ih.t()?)?.broadcast_add(&self.b_ih)?)
    }

    /// One recurrence step from a projected input row `[1, 3H]` and previous state `[1, H]`:
    ///
    /// r = σ(xr + hr), z = σ(xz + hz), n = tanh(xn + r ⊙ hn), h' = (1 − z) ⊙ n + z ⊙ h
    fn step(&self, gi: &Tensor, h: &Tensor) -> Result<Tensor> {
        let hd = self.hidden;
        let gh = h.matmul(&self.w_hh.t()?)?.broadcast_add(&self.b_hh)?;
        let r = candle_nn::ops::sigmoid(&(gi.narrow(1, 0, hd)? + gh.narrow(1, 0, hd)?)?)?;
        let z = candle_nn::ops::sigmoid(&(gi.narrow(1, hd, hd)? + gh.narrow(1, hd, hd)?)?)?;
        let n = (gi.narrow(1, 2 * hd, hd)? + (r * gh.narrow(1, 2 * hd, hd)?)?)?.tanh()?;
        let keep = (z.ones_like()? - &z)?;
        Ok(((keep * n)? + (z * h)?)?)
    }
}

/// Embedding table plus forward and backward GRUs; runs either as a plain BiGRU or,
/// given a dependency graph, as a Graph GRU.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub config: TextEncoderConfig,
    pub embedding: Tensor,
    pub forward_cell: GruCell,
    pub backward_cell: GruCell,
}

impl TextEncoder {
    pub fn new(pb: &mut ParamBuilder<'_>, config: TextEncoderConfig) -> Result<Self> {
        let embedding = pb.get(
            "embedding",
            (config.vocab_size, config.embed_dim),
            Init::Uniform(EMBED_INIT_BOUND),
        )?;
        // The padding row is never indexed during encoding, so it stays at zero.
        let pad_row = embedding.narrow(0, PAD_ID as usize, 1)?;
        if pad_row
            .abs()?
            .sum_all()?
            .to_dtype(DType::F64)?
            .to_scalar::<f64>()?
            != 0.0
        {
            let zeros = Tensor::zeros((1, config.embed_dim), embedding.dtype(), &Device::Cpu)?;
            let rest = embedding.narrow(0, 1, config.vocab_size - 1)?;
            let fixed = Tensor::cat(&[&zeros, &rest], 0)?;
            // Write through the shared storage so the stored variable sees it too.
            let var = candle_core::Var::from_tensor(&embedding)?;
            var.set(&fixed)?;
        }
        Ok(Self {
            config,
            embedding,
            forward_cell: GruCell::new(&mut pb.pp("gru_fwd"), config.embed_dim, config.hidden)?,
            backward_cell: GruCell::new(&mut pb.pp("gru_bwd"), config.embed_dim, config.hidden)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn embed(&self, desc: &TextDescription) -> Result<Tensor> {
        let v = self.config.vocab_size;
        if let Some(&bad) = desc.tokens().iter().find(|&&t| t as usize >= v) {
            return Err(Error::Index {
                index: bad as usize,
                limit: v,
            });
        }
        let ids = Tensor::new(desc.tokens(), &Device::Cpu)?;
        Ok(self.embedding.index_select(&ids, 0)?)
    }

    fn zero_state(&self) -> Result<Tensor> {
        Ok(Tensor::zeros(
            (1, self.config.hidden),
            self.embedding.dtype(),
            &Device::Cpu,
        )?)
    }

    /// Encodes with whichever recurrence the config selects; the Graph GRU falls back to a
    /// chain graph when none is given.
    pub fn encode(
        &self,
        desc: &TextDescription,
        graph: Option<&TokenDependencyGraph>,
    ) -> Result<TextVector> {
        match (self.config.kind, graph) {
            (TextEncoderKind::GraphGru, Some(g)) => self.encode_graph_gru(desc, g),
            _ => self.encode_bigru(desc),
        }
    }

    pub fn encode_bigru(&self, desc: &TextDescription) -> Result<TextVector> {
        let x = self.embed(desc)?;
        let n = desc.len();
        let gi_f = self.forward_cell.project_inputs(&x)?;
        let gi_b = self.backward_cell.project_inputs(&x)?;
        let mut hf = self.zero_state()?;
        for t in 0..n {
            hf = self.forward_cell.step(&gi_f.narrow(0, t, 1)?, &hf)?;
        }
        let mut hb = self.zero_state()?;
        for t in (0..n).rev() {
            hb = self.backward_cell.step(&gi_b.narrow(0, t, 1)?, &hb)?;
        }
        TextVector::from_tensor(Tensor::cat(&[&hf, &hb], 1)?)
    }

    /// Forward pass visits nodes left to right, each starting from the mean state of its
    /// forward precedents; the backward pass mirrors it. Returns the states at the last
    /// forward node and the last backward node (position 0).
    pub fn encode_graph_gru(
        &self,
        desc: &TextDescription,
        graph: &TokenDependencyGraph,
    ) -> Result<TextVector> {
        let n = desc.len();
        if graph.len() != n {
            return Err(invalid(format!(
                "graph has {} nodes but the description has {n} tokens",
                graph.len()
            )));
        }
        let x = self.embed(desc)?;
        let gi_f = self.forward_cell.project_inputs(&x)?;
        let gi_b = self.backward_cell.project_inputs(&x)?;

        let mut forward: Vec<Option<Tensor>> = vec![None; n];
        for i in 0..n {
            let prev = self.aggregate(&forward, &graph.forward_precedents(i))?;
            forward[i] = Some(self.forward_cell.step(&gi_f.narrow(0, i, 1)?, &prev)?);
        }
        let mut backward: Vec<Option<Tensor>> = vec![None; n];
        for i in (0..n).rev() {
            let prev = self.aggregate(&backward, &graph.backward_precedents(i))?;
            backward[i] = Some(self.backward_cell.step(&gi_b.narrow(0, i, 1)?, &prev)?);
        }
        let hf = forward[n - 1].take().expect("visited");
        let hb = backward[0].take().expect("visited");
        TextVector::from_tensor(Tensor::cat(&[&hf, &hb], 1)?)
    }

    fn aggregate(&self, states: &[Option<Tensor>], precedents: &[usize]) -> Result<Tensor> {
        let get = |p: usize| {
            states[p]
                .as_ref()
                .expect("DAG order visits precedents first")
        };
        match precedents {
            [] => self.zero_state(),
            [only] => Ok(get(*only).clone()),
            many => {
                let mut sum = get(many[0]).clone();
                for &p in &many[1..] {
                    sum = (sum + get(p))?;
                }
                Ok((sum / many.len() as f64)?)
            }
        }
    }
}
