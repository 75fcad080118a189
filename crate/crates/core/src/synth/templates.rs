use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::transform::{Direction, TransformKind};
use crate::error::{invalid, Error, Result};

/// Bank shipped with the crate.
pub const DEFAULT_TEMPLATES: &str = include_str!("../../assets/templates.json");

/// Instruction templates per (kind, direction) plus identity phrases. `{name}` marks a slot
/// filled from `slots[name]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateBank {
    #[serde(default)]
    pub slots: BTreeMap<String, Vec<String>>,
    pub edits: BTreeMap<TransformKind, BTreeMap<Direction, Vec<String>>>,
    pub identity: Vec<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn parse(template: &str) -> Result<Vec<Piece<'_>>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| invalid(format!("unclosed slot in template {template:?}")))?;
        if open > 0 {
            out.push(Piece::Text(&rest[..open]));
        }
        out.push(Piece::Slot(&rest[open + 1..open + close]));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    Ok(out)
}

impl Default for TemplateBank {
    fn default() -> Self {
        Self::from_json(DEFAULT_TEMPLATES).expect("bundled template bank is valid")
    }
}

impl TemplateBank {
    pub fn from_json(text: &str) -> Result<Self> {
        let bank: TemplateBank = serde_json::from_str(text)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Every edit kind needs at least two templates per direction and every slot must exist.
    pub fn validate(&self) -> Result<()> {
        if self.identity.is_empty() {
            return Err(invalid("template bank has no identity templates"));
        }
        for kind in TransformKind::EDITS {
            for dir in [Direction::Up, Direction::Down] {
                let n = self
                    .edits
                    .get(&kind)
                    .and_then(|m| m.get(&dir))
                    .map_or(0, Vec::len);
                if n < 2 {
                    return Err(invalid(format!(
                        "template bank has {n} templates for {kind} {}, need at least 2",
                        dir.as_str()
                    )));
                }
            }
        }
        for t in self.all_templates() {
            for piece in parse(t)? {
                if let Piece::Slot(name) = piece {
                    match self.slots.get(name) {
                        Some(v) if !v.is_empty() => {}
                        _ => {
                            return Err(invalid(format!(
                                "template {t:?} uses unknown slot {name:?}"
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn all_templates(&self) -> impl Iterator<Item = &String> {
        self.edits
            .values()
            .flat_map(|m| m.values().flatten())
            .chain(&self.identity)
    }

    pub fn edit_templates(&self, kind: TransformKind, direction: Direction) -> &[String] {
        self.edits
            .get(&kind)
            .and_then(|m| m.get(&direction))
            .map_or(&[], Vec::as_slice)
    }

    /// Fills every slot by seeded choice.
    pub fn instantiate(&self, template: &str, rng: &mut impl Rng) -> Result<String> {
        let mut s = String::new();
        for piece in parse(template)? {
            match piece {
                Piece::Text(t) => s.push_str(t),
                Piece::Slot(name) => {
                    let choices = self
                        .slots
                        .get(name)
                        .ok_or_else(|| invalid(format!("unknown slot {name:?}")))?;
                    s.push_str(choices.choose(rng).ok_or_else(|| invalid("empty slot"))?);
                }
            }
        }
        Ok(s)
    }

    /// All strings a template can produce.
    pub fn expansions(&self, template: &str) -> Result<Vec<String>> {
        let mut out = vec![String::new()];
        for piece in parse(template)? {
            let options: Vec<&str> = match piece {
                Piece::Text(t) => vec![t],
                Piece::Slot(name) => self
                    .slots
                    .get(name)
                    .ok_or_else(|| invalid(format!("unknown slot {name:?}")))?
                    .iter()
                    .map(String::as_str)
                    .collect(),
            };
            out = out
                .iter()
                .flat_map(|prefix| options.iter().map(move |o| format!("{prefix}{o}")))
                .collect();
        }
        Ok(out)
    }

    pub fn sample_edit(
        &self,
        kind: TransformKind,
        direction: Direction,
        rng: &mut impl Rng,
    ) -> Result<String> {
        let t = self
            .edit_templates(kind, direction)
            .choose(rng)
            .ok_or_else(|| invalid(format!("no templates for {kind} {}", direction.as_str())))?
            .clone();
        self.instantiate(&t, rng)
    }

    pub fn sample_identity(&self, rng: &mut impl Rng) -> Result<String> {
        let t = self
            .identity
            .choose(rng)
            .ok_or_else(|| invalid("no identity templates"))?
            .clone();
        self.instantiate(&t, rng)
    }

    pub fn identity_phrases(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for t in &self.identity {
            out.extend(self.expansions(t)?);
        }
        Ok(out)
    }

    /// Every phrase the bank can produce, for vocabulary building.
    pub fn all_phrases(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for t in self.all_templates() {
            out.extend(self.expansions(t)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundled_bank_is_valid() {
        let bank = TemplateBank::default();
        for kind in TransformKind::EDITS {
            assert!(bank.edit_templates(kind, Direction::Up).len() >= 2);
            assert!(bank.edit_templates(kind, Direction::Down).len() >= 2);
        }
        let phrases = bank.identity_phrases().unwrap();
        assert!(phrases.contains(&"this picture is amazing".to_string()));
        assert!(phrases.contains(&"I would like to send this image to my friend".to_string()));
    }

    #[test]
    fn instantiations_are_expansions() {
        let bank = TemplateBank::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = bank.identity_phrases().unwrap();
        for _ in 0..50 {
            assert!(all.contains(&bank.sample_identity(&mut rng).unwrap()));
        }
        let all = bank
            .edit_templates(TransformKind::Brightness, Direction::Up)
            .iter()
            .flat_map(|t| bank.expansions(t).unwrap())
            .collect::<Vec<_>>();
        for _ in 0..50 {
            let s = bank
                .sample_edit(TransformKind::Brightness, Direction::Up, &mut rng)
                .unwrap();
            assert!(all.contains(&s));
        }
    }

    #[test]
    fn expansion_is_a_cartesian_product() {
        let bank = TemplateBank::default();
        let n_img = bank.slots["img"].len();
        let n_bit = bank.slots["bit"].len();
        assert_eq!(
            bank.expansions("make {img} {bit} brighter").unwrap().len(),
            n_img * n_bit
        );
        assert_eq!(bank.expansions("plain").unwrap(), vec!["plain".to_string()]);
    }

    #[test]
    fn rejects_thin_or_broken_banks() {
        let thin = r#"{"edits": {}, "identity": ["ok"]}"#;
        assert!(TemplateBank::from_json(thin).is_err());
        let mut bank = TemplateBank::default();
        bank.identity.push("{missing} slot".into());
        assert!(bank.validate().is_err());
    }
}
