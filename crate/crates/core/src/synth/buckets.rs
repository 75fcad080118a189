use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::EditPair;
use crate::image::Image;

pub const BUCKET_NAMES: [&str; 5] = [
    "brighten",
    "darken",
    "saturate",
    "desaturate",
    "color_balance",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketThresholds {
    /// Mean gray change.
    pub gray: f64,
    /// Mean relative channel spread change.
    pub spread: f64,
    /// Norm of the mean RGB change after removing its common component.
    pub color: f64,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        Self {
            gray: 0.03,
            spread: 0.02,
            color: 0.03,
        }
    }
}

/// Buckets a pair belongs to, from differences in image statistics. A pair may fall in
/// several buckets or none.
pub fn assign_buckets(pair: &EditPair, thresholds: &BucketThresholds) -> BTreeSet<usize> {
    assign_buckets_images(&pair.input, &pair.target, thresholds)
}

pub fn assign_buckets_images(
    input: &Image,
    target: &Image,
    th: &BucketThresholds,
) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let d_gray = target.mean_luminance() - input.mean_luminance();
    let d_spread = target.mean_relative_spread() - input.mean_relative_spread();
    if d_gray > th.gray {
        out.insert(0);
    }
    if d_gray < -th.gray {
        out.insert(1);
    }
    if d_spread > th.spread {
        out.insert(2);
    }
    if d_spread < -th.spread {
        out.insert(3);
    }
    let (a, b) = (input.mean_rgb(), target.mean_rgb());
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let m = (d[0] + d[1] + d[2]) / 3.0;
    let dev = d.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt();
    if dev > th.color && d_gray.abs() <= th.gray {
        out.insert(4);
    }
    out
}
