//! Parameter storage and the handful of layers the generators and discriminator share.

mod layers;
mod params;

pub use layers::{
    instance_norm, leaky_relu, log_sigmoid, Conv2d, ConvTranspose2d, Linear, LEAKY_SLOPE,
};
pub use params::{Init, ParamBuilder, ParamStore};
