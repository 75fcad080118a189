use candle_core::Tensor;

use super::network::Discriminator;
use crate::data::{EditPair, TextDescription};
use crate::error::{invalid, Result};
use crate::image::{images_to_tensor, Image};
use crate::nn::log_sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateSource {
    GroundTruth,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextSource {
    Description,
    Random,
}

/// Fixed construction order: only the ground truth with its own description is positive.
pub const INSTANCE_PATTERN: [(CandidateSource, TextSource, Label); 4] = [
    (
        CandidateSource::GroundTruth,
        TextSource::Description,
        Label::Positive,
    ),
    (
        CandidateSource::Generated,
        TextSource::Description,
        Label::Negative,
    ),
    (
        CandidateSource::GroundTruth,
        TextSource::Random,
        Label::Negative,
    ),
    (
        CandidateSource::Generated,
        TextSource::Random,
        Label::Negative,
    ),
];

#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub input: Image,
    pub candidate: Image,
    pub text: TextDescription,
    pub label: Label,
    pub candidate_source: CandidateSource,
    pub text_source: TextSource,
}

/// The four discriminator instances for one pair. Labels depend only on position.
pub fn build_instances(
    pair: &EditPair,
    description: &TextDescription,
    generated: &Image,
    random_text: &TextDescription,
) -> Result<Vec<LabeledInstance>> {
    pair.input.same_dims(generated)?;
    Ok(INSTANCE_PATTERN
        .iter()
        .map(|&(cand, text, label)| LabeledInstance {
            input: pair.input.clone(),
            candidate: match cand {
                CandidateSource::GroundTruth => pair.target.clone(),
                CandidateSource::Generated => generated.clone(),
            },
            text: match text {
                TextSource::Description => description.clone(),
                TextSource::Random => random_text.clone(),
            },
            label,
            candidate_source: cand,
            text_source: text,
        })
        .collect())
}

/// Binary cross-entropy of a probability: `-ln p` for positives, `-ln(1 - p)` for negatives.
pub fn bce(score: f64, label: Label) -> f64 {
    match label {
        Label::Positive => -score.ln(),
        Label::Negative => -(1.0 - score).ln(),
    }
}

/// Sum of per-instance cross-entropies, as a differentiable scalar tensor.
pub fn discriminator_loss(disc: &Discriminator, instances: &[LabeledInstance]) -> Result<Tensor> {
    if instances.is_empty() {
        return Err(invalid("discriminator loss needs at least one instance"));
    }
    let dtype = disc.store.dtype();
    let device = disc.store.device();
    let inputs: Vec<&Image> = instances.iter().map(|i| &i.input).collect();
    let cands: Vec<&Image> = instances.iter().map(|i| &i.candidate).collect();
    let texts: Vec<&TextDescription> = instances.iter().map(|i| &i.text).collect();
    let x = images_to_tensor(&inputs, dtype, device)?;
    let c = images_to_tensor(&cands, dtype, device)?;
    let t = disc.encode_texts(&texts)?;
    let logits = disc.net.logits(&x, &c, &t)?;
    // -ln σ(x) for positives, -ln σ(-x) for negatives.
    let signs: Vec<f64> = instances
        .iter()
        .map(|i| match i.label {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        })
        .collect();
    let signs = Tensor::new(signs.as_slice(), device)?.to_dtype(dtype)?;
    let per = log_sigmoid(&(logits * signs)?)?.neg()?;
    Ok(per.sum_all()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(raw: &str, ids: &[u32]) -> TextDescription {
        TextDescription::from_ids(raw, ids.to_vec()).unwrap()
    }

    #[test]
    fn pattern_has_one_positive() {
        let a = Image::filled(4, 4, [0.2; 3]).unwrap();
        let b = Image::filled(4, 4, [0.6; 3]).unwrap();
        let pair = EditPair::new(a, b.clone(), vec!["brighter".into()]).unwrap();
        let d = desc("brighter", &[2]);
        let r = desc("less saturated", &[3, 4]);
        let inst = build_instances(&pair, &d, &b, &r).unwrap();
        assert_eq!(inst.len(), 4);
        let positives: Vec<_> = inst.iter().filter(|i| i.label == Label::Positive).collect();
        assert_eq!(positives.len(), 1);
        assert_eq!(positives[0].candidate_source, CandidateSource::GroundTruth);
        assert_eq!(positives[0].text, d);
        // Generated equal to the target does not change the labels.
        assert_eq!(inst[1].candidate, inst[0].candidate);
        assert_eq!(inst[1].label, Label::Negative);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let a = Image::filled(4, 4, [0.2; 3]).unwrap();
        let pair = EditPair::new(a.clone(), a, vec!["x".into()]).unwrap();
        let g = Image::filled(4, 8, [0.2; 3]).unwrap();
        let d = desc("x", &[2]);
        assert!(build_instances(&pair, &d, &g, &d).is_err());
    }

    #[test]
    fn bce_limits() {
        let eps = 1e-9;
        assert!((bce(1.0 - eps, Label::Positive) - eps).abs() < 1e-15);
        assert!((bce(0.5, Label::Negative) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
