use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{Image, LUMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Brightness,
    Contrast,
    Saturation,
    WhiteBalance,
    Identity,
}

impl TransformKind {
    pub const EDITS: [TransformKind; 4] = [
        TransformKind::Brightness,
        TransformKind::Contrast,
        TransformKind::Saturation,
        TransformKind::WhiteBalance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Brightness => "brightness",
            TransformKind::Contrast => "contrast",
            TransformKind::Saturation => "saturation",
            TransformKind::WhiteBalance => "white_balance",
            TransformKind::Identity => "identity",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(Self::Brightness),
            "contrast" => Ok(Self::Contrast),
            "saturation" => Ok(Self::Saturation),
            "white_balance" | "white-balance" => Ok(Self::WhiteBalance),
            "identity" => Ok(Self::Identity),
            other => Err(invalid(format!("unknown transform kind {other:?}"))),
        }
    }
}

/// Up means brighter, more contrast, more saturated or warmer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlobalTransform {
    Brightness { gain: f64 },
    Contrast { factor: f64 },
    Saturation { factor: f64 },
    WhiteBalance { gains: [f64; 3] },
    Identity,
}

/// Closed intervals for each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRanges {
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub saturation: (f64, f64),
    pub channel_gain: (f64, f64),
    /// Distance from 1 below which a sampled parameter is not drawn, so every edit is visible.
    pub margin: f64,
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            brightness: (0.6, 1.6),
            contrast: (0.5, 1.6),
            saturation: (0.0, 2.0),
            channel_gain: (0.6, 1.6),
            margin: 0.15,
        }
    }
}

fn in_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(invalid(format!("{name} {v} outside [{lo}, {hi}]")))
    }
}

impl GlobalTransform {
    pub fn kind(&self) -> TransformKind {
        match self {
            GlobalTransform::Brightness { .. } => TransformKind::Brightness,
            GlobalTransform::Contrast { .. } => TransformKind::Contrast,
            GlobalTransform::Saturation { .. } => TransformKind::Saturation,
            GlobalTransform::WhiteBalance { .. } => TransformKind::WhiteBalance,
            GlobalTransform::Identity => TransformKind::Identity,
        }
    }

    /// `None` for the identity and for parameters that leave the image unchanged.
    pub fn direction(&self) -> Option<Direction> {
        let d = match *self {
            GlobalTransform::Brightness { gain: v }
            | GlobalTransform::Contrast { factor: v }
            | GlobalTransform::Saturation { factor: v } => v - 1.0,
            GlobalTransform::WhiteBalance { gains } => gains[0] - gains[2],
            GlobalTransform::Identity => 0.0,
        };
        if d > 0.0 {
            Some(Direction::Up)
        } else if d < 0.0 {
            Some(Direction::Down)
        } else {
            None
        }
    }

    pub fn validate(&self, ranges: &TransformRanges) -> Result<()> {
        match *self {
            GlobalTransform::Brightness { gain } => {
                in_range("brightness gain", gain, ranges.brightness)
            }
            GlobalTransform::Contrast { factor } => {
                in_range("contrast factor", factor, ranges.contrast)
            }
            GlobalTransform::Saturation { factor } => {
                in_range("saturation factor", factor, ranges.saturation)
            }
            GlobalTransform::WhiteBalance { gains } => gains
                .iter()
                .try_for_each(|&g| in_range("channel gain", g, ranges.channel_gain)),
            GlobalTransform::Identity => Ok(()),
        }
    }

    /// Draws a transform of `kind` moving in `direction`. White-balance gains are chosen
    /// so a gray pixel keeps its luminance.
    pub fn sample(
        kind: TransformKind,
        direction: Direction,
        ranges: &TransformRanges,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let m = ranges.margin;
        let draw = |(lo, hi): (f64, f64), rng: &mut dyn rand::RngCore| -> Result<f64> {
            let (a, b) = match direction {
                Direction::Up => (1.0 + m, hi),
                Direction::Down => (lo, 1.0 - m),
            };
            if a > b {
                return Err(invalid(format!(
                    "{} {} has no values beyond the margin {m}",
                    kind,
                    direction.as_str()
                )));
            }
            Ok(rng.gen_range(a..=b))
        };
        let t = match kind {
            TransformKind::Brightness => GlobalTransform::Brightness {
                gain: draw(ranges.brightness, rng)?,
            },
            TransformKind::Contrast => GlobalTransform::Contrast {
                factor: draw(ranges.contrast, rng)?,
            },
            TransformKind::Saturation => GlobalTransform::Saturation {
                factor: draw(ranges.saturation, rng)?,
            },
            TransformKind::WhiteBalance => {
                let delta = rng.gen_range(m..=2.0 * m);
                let delta = match direction {
                    Direction::Up => delta,
                    Direction::Down => -delta,
                };
                let (r, b) = (1.0 + delta, 1.0 - delta);
                let g = (1.0 - LUMA[0] * r - LUMA[2] * b) / LUMA[1];
                GlobalTransform::WhiteBalance { gains: [r, g, b] }
            }
            TransformKind::Identity => GlobalTransform::Identity,
        };
        t.validate(ranges)?;
        Ok(t)
    }

    fn map(&self, p: [f64; 3]) -> [f64; 3] {
        match *self {
            GlobalTransform::Brightness { gain } => p.map(|v| gain * v),
            GlobalTransform::Contrast { factor } => p.map(|v| 0.5 + factor * (v - 0.5)),
            GlobalTransform::Saturation { factor } => {
                let l = LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2];
                p.map(|v| l + factor * (v - l))
            }
            GlobalTransform::WhiteBalance { gains } => {
                [gains[0] * p[0], gains[1] * p[1], gains[2] * p[2]]
            }
            GlobalTransform::Identity => p,
        }
    }
}

/// Applies `t` per pixel and clamps to [0, 1]. Parameters must lie in the default ranges.
pub fn apply_transform(image: &Image, t: &GlobalTransform) -> Result<Image> {
    apply_transform_in(image, t, &TransformRanges::default())
}

pub fn apply_transform_in(
    image: &Image,
    t: &GlobalTransform,
    ranges: &TransformRanges,
) -> Result<Image> {
    t.validate(ranges)?;
    Ok(image.map_pixels(|p| t.map(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn brightness_arithmetic() {
        let img = Image::filled(2, 2, [0.4; 3]).unwrap();
        let out = apply_transform(&img, &GlobalTransform::Brightness { gain: 1.5 }).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn unit_parameters_are_identity() {
        let img = Image::from_fn(3, 3, |y, x| [0.1 * y as f64, 0.1 * x as f64, 0.5]).unwrap();
        for t in [
            GlobalTransform::Identity,
            GlobalTransform::Brightness { gain: 1.0 },
            GlobalTransform::Contrast { factor: 1.0 },
            GlobalTransform::Saturation { factor: 1.0 },
            GlobalTransform::WhiteBalance { gains: [1.0; 3] },
        ] {
            let out = apply_transform(&img, &t).unwrap();
            assert!(out.max_abs_diff(&img).unwrap() < 1e-15, "{t:?}");
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        let img = Image::filled(1, 1, [0.5; 3]).unwrap();
        assert!(apply_transform(&img, &GlobalTransform::Brightness { gain: 2.0 }).is_err());
        assert!(apply_transform(&img, &GlobalTransform::Saturation { factor: -0.1 }).is_err());
    }

    #[test]
    fn samples_move_in_the_requested_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ranges = TransformRanges::default();
        for kind in TransformKind::EDITS {
            for dir in [Direction::Up, Direction::Down] {
                for _ in 0..20 {
                    let t = GlobalTransform::sample(kind, dir, &ranges, &mut rng).unwrap();
                    assert_eq!(t.kind(), kind);
                    assert_eq!(t.direction(), Some(dir));
                }
            }
        }
    }

    #[test]
    fn white_balance_keeps_gray_luminance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = GlobalTransform::sample(
            TransformKind::WhiteBalance,
            Direction::Up,
            &TransformRanges::default(),
            &mut rng,
        )
        .unwrap();
        let gray = Image::filled(1, 1, [0.5; 3]).unwrap();
        let out = apply_transform(&gray, &t).unwrap();
        assert!((out.mean_luminance() - 0.5).abs() < 1e-12);
    }
}
