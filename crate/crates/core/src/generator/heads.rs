use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::nn::{Linear, ParamBuilder};

/// How branch outputs are combined at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Weighted average of all branches.
    #[default]
    Fusion,
    /// The single branch with the largest weight (lowest index on ties).
    Argmax,
}

impl std::str::FromStr for Readout {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(Readout::Fusion),
            "argmax" => Ok(Readout::Argmax),
            other => Err(crate::Error::InvalidInput(format!(
                "unknown readout {other:?} (expected fusion or argmax)"
            ))),
        }
    }
}

/// Affine map from the text vector to K logits followed by a softmax.
#[derive(Debug, Clone)]
pub struct WeightHead {
    pub linear: Linear,
}

impl WeightHead {
    pub fn new(pb: &mut ParamBuilder<'_>, text_dim: usize, branches: usize) -> Result<Self> {
        Ok(Self {
            linear: Linear::new(pb, text_dim, branches)?,
        })
    }

    pub fn logits(&self, text: &Tensor) -> Result<Tensor> {
        self.linear.forward(text)
    }

    /// `[N, text_dim] -> [N, K]`, rows on the probability simplex.
    pub fn weights(&self, text: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.logits(text)?, D::Minus1)?)
    }
}

/// Per-sample argmax of `[N, K]` weights as a one-hot `[N, K]` tensor.
pub fn one_hot_argmax(weights: &Tensor) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = weights.to_dtype(DType::F64)?.to_vec2()?;
    let k = weights.dim(1)?;
    let mut hot = Vec::with_capacity(rows.len() * k);
    for row in &rows {
        let best = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > row[best] { i } else { best });
        hot.extend((0..k).map(|i| if i == best { 1.0 } else { 0.0 }));
    }
    Ok(Tensor::from_vec(hot, (rows.len(), k), weights.device())?.to_dtype(weights.dtype())?)
}

/// `Σ_k w[:, k] · branches[k]` for `[N, K]` weights and K tensors of shape `[N, C, H, W]`.
pub fn combine(weights: &Tensor, branches: &[Tensor]) -> Result<Tensor> {
    let (n, k) = weights.dims2()?;
    if k != branches.len() || k == 0 {
        return Err(shape(format!(
            "{k} weights for {} branches",
            branches.len()
        )));
    }
    let mut out: Option<Tensor> = None;
    for (i, b) in branches.iter().enumerate() {
        let w = weights.narrow(1, i, 1)?.reshape((n, 1, 1, 1))?;
        let term = b.broadcast_mul(&w)?;
        out = Some(match out {
            None => term,
            Some(acc) => (acc + term)?,
        });
    }
    Ok(out.expect("k > 0"))
}
