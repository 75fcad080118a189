use crate::error::Result;
use crate::image::Image;

/// D65 reference white in XYZ, Y normalized to 1.
pub const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Per-pixel L*a*b* triplets in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<[f64; 3]>,
}

fn linearize(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn delinearize(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn mat(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mat(&RGB_TO_XYZ, rgb.map(linearize));
    let f = |t: f64| {
        if t > EPSILON {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let [fx, fy, fz] = [0, 1, 2].map(|i| f(xyz[i] / WHITE_D65[i]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse conversion; results are not clamped, so out-of-gamut colours may leave [0, 1].
pub fn lab_pixel_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let inv = |f: f64| {
        let f3 = f * f * f;
        if f3 > EPSILON {
            f3
        } else {
            (116.0 * f - 16.0) / KAPPA
        }
    };
    let y = if lab[0] > KAPPA * EPSILON {
        fy.powi(3)
    } else {
        lab[0] / KAPPA
    };
    let xyz = [
        inv(fx) * WHITE_D65[0],
        y * WHITE_D65[1],
        inv(fz) * WHITE_D65[2],
    ];
    mat(&XYZ_TO_RGB, xyz).map(delinearize)
}

pub fn srgb_to_lab(image: &Image) -> LabImage {
    LabImage {
        height: image.height(),
        width: image.width(),
        pixels: image.pixels().map(srgb_pixel_to_lab).collect(),
    }
}

/// Mean over pixels of the Euclidean distance between Lab triplets.
pub fn lab_l2(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let total: f64 = a
        .pixels()
        .zip(b.pixels())
        .map(|(p, q)| {
            let (x, y) = (srgb_pixel_to_lab(p), srgb_pixel_to_lab(q));
            ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(total / (a.height() * a.width()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_and_black() {
        let w = srgb_pixel_to_lab([1.0; 3]);
        assert!(
            (w[0] - 100.0).abs() < 1e-4 && w[1].abs() < 0.01 && w[2].abs() < 0.01,
            "{w:?}"
        );
        let k = srgb_pixel_to_lab([0.0; 3]);
        assert!(k.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn size_mismatch() {
        let a = Image::filled(2, 2, [0.5; 3]).unwrap();
        let b = Image::filled(2, 3, [0.5; 3]).unwrap();
        assert!(lab_l2(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let back = lab_pixel_to_srgb(srgb_pixel_to_lab([r, g, b]));
            for (x, y) in back.iter().zip([r, g, b]) {
                prop_assert!((x - y).abs() < 1e-3);
            }
        }

        #[test]
        fn pseudometric(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = crate::synth::procedural_texture(4, 5, seed_a).unwrap();
            let b = crate::synth::procedural_texture(4, 5, seed_b).unwrap();
            let ab = lab_l2(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - lab_l2(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert_eq!(lab_l2(&a, &a).unwrap(), 0.0);
        }
    }
}
