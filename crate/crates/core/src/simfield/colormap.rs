//! Colormaps and PNG rasters for scalar seed grids.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

/// Color of seeds without a value.
pub const MASK_COLOR: [u8; 3] = [255, 0, 255];

const VIRIDIS: [[u8; 3]; 9] = [
    [0x44, 0x01, 0x54],
    [0x48, 0x28, 0x78],
    [0x3e, 0x49, 0x89],
    [0x31, 0x68, 0x8e],
    [0x26, 0x82, 0x8e],
    [0x1f, 0x9e, 0x89],
    [0x35, 0xb7, 0x79],
    [0x6e, 0xce, 0x58],
    [0xfd, 0xe7, 0x25],
];

// cool-warm: blue, light gray, red
const DIVERGING: [[u8; 3]; 3] = [[59, 76, 192], [221, 221, 221], [180, 4, 38]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    #[default]
    Viridis,
    Grayscale,
    Diverging,
}

impl std::str::FromStr for Colormap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "viridis" => Ok(Colormap::Viridis),
            "grayscale" | "gray" => Ok(Colormap::Grayscale),
            "diverging" => Ok(Colormap::Diverging),
            other => Err(format!("unknown colormap {other:?}")),
        }
    }
}

fn piecewise(anchors: &[[u8; 3]], v: f64) -> [u8; 3] {
    let pos = v * (anchors.len() - 1) as f64;
    let i = (pos.floor() as usize).min(anchors.len() - 2);
    let w = pos - i as f64;
    let (a, b) = (anchors[i], anchors[i + 1]);
    std::array::from_fn(|c| ((1.0 - w) * f64::from(a[c]) + w * f64::from(b[c])).round() as u8)
}

impl Colormap {
    /// Color of `v`, clamped to `[0, 1]`; non-finite values get [`MASK_COLOR`].
    pub fn color(self, v: f64) -> [u8; 3] {
        if !v.is_finite() {
            return MASK_COLOR;
        }
        let v = v.clamp(0.0, 1.0);
        match self {
            Colormap::Viridis => piecewise(&VIRIDIS, v),
            Colormap::Grayscale => {
                let g = (v * 255.0).round() as u8;
                [g, g, g]
            }
            Colormap::Diverging => piecewise(&DIVERGING, v),
        }
    }
}

/// One pixel per seed, `y` pointing up: seed row `j = ny − 1` is the top
/// image row. Values are mapped linearly from `range` to `[0, 1]`.
pub fn raster(values: &[f64], nx: usize, ny: usize, range: [f64; 2], colormap: Colormap) -> RgbImage {
    assert_eq!(values.len(), nx * ny, "value count does not match {nx}×{ny}");
    let span = range[1] - range[0];
    RgbImage::from_fn(nx as u32, ny as u32, |x, y| {
        let j = ny - 1 - y as usize;
        let v = values[j * nx + x as usize];
        let t = if span > 0.0 { (v - range[0]) / span } else { 0.0 * v };
        Rgb(colormap.color(t))
    })
}

pub fn png_bytes(image: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), image::ImageError> {
    image.save_with_format(path, ImageFormat::Png)
}

/// Smallest and largest finite value, if any.
pub fn finite_range(values: &[f64]) -> Option<[f64; 2]> {
    values
        .iter()
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<[f64; 2]>, &v| match acc {
            None => Some([v, v]),
            Some([lo, hi]) => Some([lo.min(v), hi.max(v)]),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_endpoints_and_mask() {
        // 2×2 grid, row-major from the bottom: (0, 1) bottom, (0.5, NaN) top
        let img = raster(&[0.0, 1.0, 0.5, f64::NAN], 2, 2, [0.0, 1.0], Colormap::Grayscale);
        assert_eq!(img.get_pixel(0, 1).0, [0, 0, 0]);
        assert_eq!(img.get_pixel(1, 1).0, [255, 255, 255]);
        assert_eq!(img.get_pixel(0, 0).0, [128, 128, 128]);
        assert_eq!(img.get_pixel(1, 0).0, MASK_COLOR);
    }

    #[test]
    fn anchors_are_hit_exactly() {
        assert_eq!(Colormap::Viridis.color(0.0), VIRIDIS[0]);
        assert_eq!(Colormap::Viridis.color(1.0), VIRIDIS[8]);
        assert_eq!(Colormap::Viridis.color(0.5), VIRIDIS[4]);
        assert_eq!(Colormap::Diverging.color(0.5), DIVERGING[1]);
        assert_eq!(Colormap::Diverging.color(-3.0), DIVERGING[0]);
    }

    #[test]
    fn uniform_field_gives_uniform_image() {
        for cmap in [Colormap::Viridis, Colormap::Grayscale, Colormap::Diverging] {
            let img = raster(&[0.0; 12], 4, 3, [0.0, 1.0], cmap);
            let first = *img.get_pixel(0, 0);
            assert!(img.pixels().all(|p| *p == first));
        }
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let values: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let img = raster(&values, 8, 8, [0.0, 1.0], Colormap::Grayscale);
        let decoded = image::load_from_memory(&png_bytes(&img).unwrap()).unwrap().to_rgb8();
        for j in 0..8 {
            for i in 0..8 {
                let px = decoded.get_pixel(i as u32, (7 - j) as u32).0[0];
                let v = values[j * 8 + i];
                assert!((f64::from(px) / 255.0 - v).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn finite_range_skips_nan() {
        assert_eq!(finite_range(&[f64::NAN, 2.0, -1.0]), Some([-1.0, 2.0]));
        assert_eq!(finite_range(&[f64::NAN]), None);
    }
}
