#![allow(dead_code)]

use candle_core::{DType, Tensor, Var};
use textedit::data::{build_vocabulary, EditPair};
use textedit::generator::{BackboneConfig, EditModel, GeneratorKind, ModelConfig, Precision};
use textedit::image::Image;
use textedit::synth::{apply_transform, procedural_texture, GlobalTransform};

pub const PHRASES: [&str; 4] = [
    "make it brighter",
    "make it darker",
    "increase the saturation",
    "keep the image as it is",
];

/// A small randomly initialized model that runs on `multiple`-aligned inputs in milliseconds.
pub fn tiny_model(
    kind: GeneratorKind,
    widths: &[usize],
    precision: Precision,
    seed: u64,
) -> EditModel {
    let vocab = build_vocabulary(&PHRASES, 1).unwrap();
    let mut config = ModelConfig::full(kind, vocab.len());
    config.backbone = BackboneConfig::miniature(widths);
    config.branches = 3;
    config.text.embed_dim = 6;
    config.text.hidden = 4;
    config.precision = precision;
    EditModel::new(config, vocab, seed).unwrap()
}

/// Brightness pairs over seeded textures, alternating up and down.
pub fn brightness_pairs(n: usize, size: usize, seed: u64) -> Vec<EditPair> {
    (0..n)
        .map(|i| {
            let a = procedural_texture(size, size, seed * 1000 + i as u64).unwrap();
            let (gain, text) = if i % 2 == 0 {
                (1.3, PHRASES[0])
            } else {
                (0.7, PHRASES[1])
            };
            let b = apply_transform(&a, &GlobalTransform::Brightness { gain }).unwrap();
            EditPair::new(a.quantized(), b.quantized(), vec![text.into()]).unwrap()
        })
        .collect()
}

pub fn random_image(h: usize, w: usize, seed: u64) -> Image {
    procedural_texture(h, w, seed).unwrap()
}

/// Largest relative error between backprop gradients and central differences over every
/// element of every variable. `loss` must rebuild the graph from the current variable values.
pub fn gradient_check(
    vars: &[(String, Var)],
    loss: impl Fn() -> Tensor,
    eps: f64,
) -> (f64, String) {
    let grads = loss().backward().unwrap();
    let mut worst = (0.0f64, String::new());
    for (name, var) in vars {
        assert_eq!(
            var.dtype(),
            DType::F64,
            "gradient checks run in double precision"
        );
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_vec1().unwrap())
            .unwrap_or_else(|| vec![0.0; var.elem_count()]);
        let original = var.as_tensor().copy().unwrap();
        let shape = original.shape().clone();
        let base: Vec<f64> = original.flatten_all().unwrap().to_vec1().unwrap();
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, shape.clone(), original.device()).unwrap())
                    .unwrap();
                loss().to_scalar::<f64>().unwrap()
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            var.set(&original).unwrap();
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if err > worst.0 {
                worst = (
                    err,
                    format!("{name}[{i}]: analytic {a:e}, numeric {numeric:e}"),
                );
            }
        }
    }
    worst
}
