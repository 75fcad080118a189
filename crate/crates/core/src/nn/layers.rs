use candle_core::{Tensor, D};

use super::params::{Init, ParamBuilder};
use crate::error::Result;

/// Negative-side slope of every leaky rectifier in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

const NORM_EPS: f64 = 1e-5;
const CONV_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = pb.get(
            "weight",
            (out_ch, in_ch, kernel, kernel),
            Init::Normal(CONV_INIT_STD),
        )?;
        let bias = if bias {
            Some(pb.get("bias", out_ch, Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

/// Stride-2 upsampling convolution; weight layout is `[in, out, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = pb.get(
            "weight",
            (in_ch, out_ch, kernel, kernel),
            Init::Normal(CONV_INIT_STD),
        )?;
        let bias = Some(pb.get("bias", out_ch, Init::Zeros)?);
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

fn add_channel_bias(y: Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    match bias {
        Some(b) => {
            let c = b.dim(0)?;
            Ok(y.broadcast_add(&b.reshape((1, c, 1, 1))?)?)
        }
        None => Ok(y),
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder<'_>, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Ok(Self {
            weight: pb.get("weight", (out_dim, in_dim), Init::Uniform(bound))?,
            bias: pb.get("bias", out_dim, Init::Uniform(bound))?,
        })
    }

    /// `[N, in] -> [N, out]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Per-sample, per-channel normalization over the spatial extent, without affine terms.
/// A 1×1 map has no spatial statistics and passes through unchanged.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if h * w == 1 {
        return Ok(x.clone());
    }
    let flat = x.reshape((n, c, h * w))?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
    Ok(normed.reshape((n, c, h, w))?)
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, LEAKY_SLOPE)?)
}

/// Numerically stable `ln(sigmoid(x))`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    let softplus_neg = (x.neg()?.relu()? + (x.abs()?.neg()?.exp()? + 1.0)?.log()?)?;
    Ok(softplus_neg.neg()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let x = Tensor::arange(0f64, 32.0, &Device::Cpu)
            .unwrap()
            .reshape((1, 2, 4, 4))
            .unwrap();
        let y = instance_norm(&x).unwrap();
        let v: Vec<f64> = y
            .get(0)
            .unwrap()
            .get(1)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        let mean = v.iter().sum::<f64>() / 16.0;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn log_sigmoid_matches_naive_form() {
        let xs: [f64; 5] = [-30.0, -2.0, 0.0, 0.5, 40.0];
        let t = Tensor::new(&xs, &Device::Cpu).unwrap();
        let got: Vec<f64> = log_sigmoid(&t).unwrap().to_vec1().unwrap();
        for (x, g) in xs.iter().zip(got) {
            let naive = -(1.0 + (-x).exp()).ln();
            assert!((naive - g).abs() < 1e-12, "{x}: {naive} vs {g}");
        }
    }

    #[test]
    fn transposed_conv_doubles_spatial_size() {
        let mut store = crate::nn::ParamStore::new(DType::F64);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        let up = ConvTranspose2d::new(&mut pb.pp("up"), 3, 5, 4, 2, 1).unwrap();
        let down = Conv2d::new(&mut pb.pp("down"), 5, 3, 4, 2, 1, true).unwrap();
        let x = Tensor::zeros((2, 3, 6, 10), DType::F64, &Device::Cpu).unwrap();
        let y = up.forward(&x).unwrap();
        assert_eq!(y.dims4().unwrap(), (2, 5, 12, 20));
        assert_eq!(down.forward(&y).unwrap().dims4().unwrap(), (2, 3, 6, 10));
    }
}
