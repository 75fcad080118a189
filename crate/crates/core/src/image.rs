//! RGB raster with intensities in [0, 1], plus codec and tensor conversions.

use std::io::Cursor;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::{ImageFormat, RgbImage};

use crate::error::{invalid, shape, Error, Result};

/// Luma weights shared by the synthetic transforms and image statistics.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// H×W×3 image stored row-major, channels interleaved as R, G, B.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(shape(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(shape(format!(
                "expected {} values for a {height}x{width} RGB image, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    /// Builds an image from a per-pixel closure; values are validated, not clamped.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Applies `f` to every pixel and clamps the result into [0, 1].
    pub fn map_pixels(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for p in self.pixels() {
            data.extend(f(p).iter().map(|v| v.clamp(0.0, 1.0)));
        }
        Image {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(shape(format!(
                "image sizes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(shape(format!(
                "expected {} bytes for {width}x{height} RGB8, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(height, width, data)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Rounds every value to the nearest 8-bit level, i.e. what a PNG round trip produces.
    pub fn quantized(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self
                .to_rgb8()
                .into_iter()
                .map(|b| f64::from(b) / 255.0)
                .collect(),
        }
    }

    fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("buffer length matches dimensions")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(w as usize, h as usize, img.as_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Saves as PNG or JPEG depending on the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = ImageFormat::from_path(path)?;
        if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
            return Err(invalid(format!(
                "{}: only PNG and JPEG are supported",
                path.display()
            )));
        }
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image().write_to(&mut out, format)?;
        std::fs::write(path, out.into_inner()).map_err(|e| Error::io(path, e))
    }

    /// Bilinear resize (pixel-center aligned). Same-size requests return an exact copy.
    pub fn resize(&self, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 {
            return Err(shape("resize target must be non-empty"));
        }
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let coord = |i: usize, scale: f64, limit: usize| {
            let c = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (limit - 1) as f64);
            let lo = c.floor() as usize;
            let hi = (lo + 1).min(limit - 1);
            (lo, hi, c - lo as f64)
        };
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            let (y0, y1, fy) = coord(y, sy, self.height);
            for x in 0..width {
                let (x0, x1, fx) = coord(x, sx, self.width);
                let (a, b) = (self.pixel(y0, x0), self.pixel(y0, x1));
                let (c, d) = (self.pixel(y1, x0), self.pixel(y1, x1));
                for ch in 0..3 {
                    let top = a[ch] + (b[ch] - a[ch]) * fx;
                    let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                    data.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
                }
            }
        }
        Image::new(height, width, data)
    }

    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        for p in self.pixels() {
            for ch in 0..3 {
                sum[ch] += p[ch];
            }
        }
        let n = (self.height * self.width) as f64;
        sum.map(|s| s / n)
    }

    /// Mean Rec.601 luma over all pixels.
    pub fn mean_luminance(&self) -> f64 {
        let m = self.mean_rgb();
        LUMA[0] * m[0] + LUMA[1] * m[1] + LUMA[2] * m[2]
    }

    /// Mean of (max - min) / max over pixels; black pixels count as zero spread.
    ///
    /// Invariant under a global gain, so brightness edits leave it unchanged.
    pub fn mean_relative_spread(&self) -> f64 {
        let total: f64 = self
            .pixels()
            .map(|p| {
                let hi = p[0].max(p[1]).max(p[2]);
                let lo = p[0].min(p[1]).min(p[2]);
                if hi > 1e-6 {
                    (hi - lo) / hi
                } else {
                    0.0
                }
            })
            .sum();
        total / (self.height * self.width) as f64
    }
}

/// Rescales so both sides become the nearest multiple of `multiple` (at least one multiple).
/// Returns the resized image and the original (height, width) for the inverse resize.
pub fn resize_for_model(image: &Image, multiple: usize) -> Result<(Image, (usize, usize))> {
    if multiple == 0 {
        return Err(invalid("resize multiple must be positive"));
    }
    let snap = |n: usize| {
        let k = (n as f64 / multiple as f64).round().max(1.0) as usize;
        k * multiple
    };
    let resized = image.resize(snap(image.height), snap(image.width))?;
    Ok((resized, image.dims()))
}

/// Stacks images into an `[N, 3, H, W]` tensor.
pub fn images_to_tensor(images: &[&Image], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| invalid("cannot build a tensor from zero images"))?;
    let (h, w) = first.dims();
    let mut planar = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        first.same_dims(img)?;
        for ch in 0..3 {
            planar.extend(img.data.iter().skip(ch).step_by(3).copied());
        }
    }
    let t = Tensor::from_vec(planar, (images.len(), 3, h, w), device)?;
    Ok(t.to_dtype(dtype)?)
}

/// Extracts image `index` from an `[N, 3, H, W]` tensor, clamping round-off into [0, 1].
pub fn tensor_to_image(t: &Tensor, index: usize) -> Result<Image> {
    let (n, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(shape(format!("expected 3 channels, got {c}")));
    }
    if index >= n {
        return Err(Error::Index { index, limit: n });
    }
    let planar: Vec<f64> = t
        .get(index)?
        .to_dtype(DType::F64)?
        .flatten_all()?
        .to_vec1()?;
    let plane = h * w;
    let mut data = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            let v = planar[ch * plane + i];
            if !v.is_finite() {
                return Err(Error::NonFinite("generated image".into()));
            }
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Image::new(h, w, data)
}
