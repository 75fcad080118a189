use rand::Rng;

use crate::data::EditPair;
use crate::error::{invalid, Result};
use crate::rng::derive_rng;
use crate::synth::TemplateBank;

const STREAM_IDENTITY: u64 = 11;

/// Appends `ceil(fraction * n)` pairs whose target equals the input, each described by a
/// seeded identity template. Source images are drawn from existing inputs and targets.
pub fn augment_identity(
    dataset: &[EditPair],
    fraction: f64,
    templates: &TemplateBank,
    seed: u64,
) -> Result<Vec<EditPair>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid(format!(
            "identity fraction {fraction} outside [0, 1]"
        )));
    }
    let mut out = dataset.to_vec();
    let extra = (fraction * dataset.len() as f64).ceil() as usize;
    if extra == 0 {
        return Ok(out);
    }
    let mut rng = derive_rng(seed, STREAM_IDENTITY, 0);
    for _ in 0..extra {
        let src = &dataset[rng.gen_range(0..dataset.len())];
        let image = if rng.gen_bool(0.5) {
            &src.input
        } else {
            &src.target
        };
        let text = templates.sample_identity(&mut rng)?;
        out.push(EditPair::new(image.clone(), image.clone(), vec![text])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn dataset(n: usize) -> Vec<EditPair> {
        (0..n)
            .map(|i| {
                let a = Image::filled(4, 4, [0.1 * i as f64 / n as f64 + 0.1; 3]).unwrap();
                let b = Image::filled(4, 4, [0.9; 3]).unwrap();
                EditPair::new(a, b, vec!["brighter".into()]).unwrap()
            })
            .collect()
    }

    #[test]
    fn counts_and_membership() {
        let bank = TemplateBank::default();
        let data = dataset(10);
        assert_eq!(augment_identity(&data, 0.0, &bank, 1).unwrap(), data);
        let out = augment_identity(&data, 0.5, &bank, 1).unwrap();
        assert_eq!(out.len(), 15);
        let phrases = bank.identity_phrases().unwrap();
        let identical: Vec<_> = out.iter().filter(|p| p.input == p.target).collect();
        assert_eq!(identical.len(), 5);
        for p in identical {
            assert!(phrases.contains(&p.descriptions[0]));
        }
        assert_eq!(augment_identity(&data, 0.01, &bank, 1).unwrap().len(), 11);
        assert!(augment_identity(&data, 1.5, &bank, 1).is_err());
    }
}
