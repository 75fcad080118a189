use serde::Serialize;

use crate::error::Result;
use crate::image::Image;

pub const LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinStat {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelRemap {
    /// Output statistics for each input level; `None` where no pixel has that level.
    pub bins: Vec<Option<BinStat>>,
    /// Mean over occupied bins of the conditional standard deviation.
    pub spread: f64,
}

/// How far each input level fans out to different output levels, per channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemapSpreadReport {
    pub channels: [ChannelRemap; 3],
    /// Mean of the three channel spreads.
    pub spread: f64,
}

/// Bin index of a value in [0, 1].
pub fn level(v: f64) -> usize {
    ((v * 255.0).round() as usize).min(LEVELS - 1)
}

fn channel(input: &Image, output: &Image, ch: usize) -> ChannelRemap {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); LEVELS];
    for (p, q) in input.pixels().zip(output.pixels()) {
        groups[level(p[ch])].push(q[ch]);
    }
    let bins: Vec<Option<BinStat>> = groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                return None;
            }
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            Some(BinStat {
                count: g.len(),
                mean,
                std: var.sqrt(),
            })
        })
        .collect();
    let occupied: Vec<f64> = bins.iter().flatten().map(|b| b.std).collect();
    let spread = occupied.iter().sum::<f64>() / occupied.len().max(1) as f64;
    ChannelRemap { bins, spread }
}

/// Conditional output statistics given the input level. Zero spread means a global
/// per-level mapping; spatially varying edits spread one input level over many outputs.
pub fn remap_spread(input: &Image, output: &Image) -> Result<RemapSpreadReport> {
    input.same_dims(output)?;
    let channels = [0, 1, 2].map(|ch| channel(input, output, ch));
    let spread = channels.iter().map(|c| c.spread).sum::<f64>() / 3.0;
    Ok(RemapSpreadReport { channels, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{apply_transform, procedural_texture, GlobalTransform};

    #[test]
    fn global_map_has_no_spread() {
        let a = procedural_texture(32, 32, 1).unwrap().quantized();
        let b = apply_transform(&a, &GlobalTransform::Brightness { gain: 1.2 }).unwrap();
        assert!(remap_spread(&a, &b).unwrap().spread <= 1e-12);
    }

    #[test]
    fn split_edit_spreads() {
        let a = procedural_texture(32, 32, 1).unwrap().quantized();
        let up = apply_transform(&a, &GlobalTransform::Brightness { gain: 1.2 }).unwrap();
        let down = apply_transform(&a, &GlobalTransform::Brightness { gain: 0.8 }).unwrap();
        let mixed = Image::from_fn(32, 32, |y, x| {
            if x < 16 {
                up.pixel(y, x)
            } else {
                down.pixel(y, x)
            }
        })
        .unwrap();
        assert!(remap_spread(&a, &mixed).unwrap().spread > 0.01);
    }
}
