//! Text-guided global image editing.
//!
//! Three generator designs (bucket, end-to-end, filter bank) take an image and a free-form
//! instruction and produce an edited image. They are trained adversarially against a
//! text-aware discriminator on paired data, with content and perceptual losses.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod generator;
pub mod image;
pub mod losses;
pub mod nn;
pub mod rng;
pub mod service;
pub mod synth;
pub mod text;
pub mod training;

pub use error::{Error, Result};
