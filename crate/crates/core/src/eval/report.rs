use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::generator::EditModel;
use crate::image::Image;

/// Summary of one filter applied alone to one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub image: usize,
    pub filter: usize,
    pub delta_luminance: f64,
    pub delta_spread: f64,
    pub file: String,
}

#[derive(Debug, Clone)]
pub struct FilterReport {
    pub rows: Vec<ProbeRow>,
    /// Probe outputs as saved (8-bit), indexed `[image][filter]`.
    pub probes: Vec<Vec<Image>>,
    pub grid_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Change in mean luminance and mean relative channel spread from `input` to `output`.
pub fn probe_stats(input: &Image, output: &Image) -> (f64, f64) {
    (
        output.mean_luminance() - input.mean_luminance(),
        output.mean_relative_spread() - input.mean_relative_spread(),
    )
}

/// Rows of `[input, probe 0, ..., probe K-1]`, each cell `h x w`, on a white background.
fn grid(inputs: &[Image], probes: &[Vec<Image>]) -> Result<Image> {
    let (h, w) = inputs
        .iter()
        .map(Image::dims)
        .fold((0, 0), |(a, b), (c, d)| (a.max(c), b.max(d)));
    let cols = 1 + probes.first().map_or(0, Vec::len);
    let mut canvas = vec![1.0; inputs.len() * h * cols * w * 3];
    let stride = cols * w * 3;
    let mut paste = |row: usize, col: usize, img: &Image| {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let p = img.pixel(y, x);
                let at = (row * h + y) * stride + (col * w + x) * 3;
                canvas[at..at + 3].copy_from_slice(&p);
            }
        }
    };
    for (r, img) in inputs.iter().enumerate() {
        paste(r, 0, img);
        for (k, p) in probes[r].iter().enumerate() {
            paste(r, k + 1, p);
        }
    }
    Image::new(inputs.len() * h, cols * w, canvas)
}

/// Runs every filter of a filter-bank model alone on each image. Writes each probe as a
/// PNG, a grid image and a CSV of per-probe statistics computed from the saved 8-bit probes.
pub fn filter_effect_report(
    model: &EditModel,
    images: &[Image],
    out_dir: impl AsRef<Path>,
) -> Result<FilterReport> {
    if images.is_empty() {
        return Err(invalid("filter report needs at least one image"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let k = model.branches();
    let mut rows = Vec::new();
    let mut probes = Vec::with_capacity(images.len());
    let mut inputs = Vec::with_capacity(images.len());
    for (i, image) in images.iter().enumerate() {
        let input = image.quantized();
        let mut row = Vec::with_capacity(k);
        for f in 0..k {
            let probe = model.probe(&input, f)?.quantized();
            let file = format!("probe_{i:03}_{f}.png");
            probe.save(out_dir.join(&file))?;
            let (dl, ds) = probe_stats(&input, &probe);
            rows.push(ProbeRow {
                image: i,
                filter: f,
                delta_luminance: dl,
                delta_spread: ds,
                file,
            });
            row.push(probe);
        }
        probes.push(row);
        inputs.push(input);
    }
    let grid_path = out_dir.join("filters.png");
    grid(&inputs, &probes)?.save(&grid_path)?;
    let csv_path = out_dir.join("filters.csv");
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
    for r in &rows {
        w.serialize(r)
            .map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(FilterReport {
        rows,
        probes,
        grid_path,
        csv_path,
    })
}
