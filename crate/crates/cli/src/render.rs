//! PNG heatmaps of rasters, one pixel per cell, with a JSON legend.

use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use sppa_core::PixelImage;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    Linear,
    Quantile,
}

/// Viridis sampled at nine stops.
const STOPS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Color at `t ∈ [0, 1]`, interpolated between stops.
pub fn color_at(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mut c = [0u8; 3];
    for ch in 0..3 {
        let a = STOPS[i][ch] as f64;
        let b = STOPS[i + 1][ch] as f64;
        c[ch] = (a + f * (b - a)).round() as u8;
    }
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct Legend {
    pub palette: Palette,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Class boundaries: interior quantiles for `quantile`, min/max for `linear`.
    pub breakpoints: Vec<f64>,
    /// One color per class (`quantile`) or the two end colors (`linear`).
    pub colors: Vec<String>,
    pub nodata: &'static str,
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Renders `img` with north up. Missing cells are fully transparent.
pub fn render(img: &PixelImage, palette: Palette, classes: usize) -> Result<(RgbaImage, Legend)> {
    if classes < 2 {
        return Err(CliError::Config("render needs at least 2 classes".into()));
    }
    let range = img.min_max();
    let (breakpoints, colors, class_of): (Vec<f64>, Vec<String>, Box<dyn Fn(f64) -> f64>) = match (palette, range) {
        (_, None) => (vec![], vec![], Box::new(|_| 0.5)),
        (Palette::Linear, Some((lo, hi))) => {
            let span = hi - lo;
            (
                vec![lo, hi],
                vec![hex(color_at(0.0)), hex(color_at(1.0))],
                Box::new(move |v| if span > 0.0 { (v - lo) / span } else { 0.5 }),
            )
        }
        (Palette::Quantile, Some(_)) => {
            let bps: Vec<f64> = (1..classes)
                .map(|i| img.quantile_threshold(i as f64 / classes as f64))
                .collect::<sppa_core::Result<_>>()?;
            let cols = (0..classes)
                .map(|c| hex(color_at(c as f64 / (classes - 1) as f64)))
                .collect();
            let b = bps.clone();
            let n = classes;
            (
                bps,
                cols,
                Box::new(move |v| {
                    let class = b.iter().filter(|&&t| v > t).count();
                    class as f64 / (n - 1) as f64
                }),
            )
        }
    };
    let (nx, ny) = (img.nx() as u32, img.ny() as u32);
    let mut png = RgbaImage::new(nx, ny);
    for (k, v) in img.values().iter().enumerate() {
        let col = (k % img.nx()) as u32;
        let row = (k / img.nx()) as u32;
        let px = match v {
            Some(v) => {
                let c = color_at(class_of(*v));
                Rgba([c[0], c[1], c[2], 255])
            }
            None => Rgba([0, 0, 0, 0]),
        };
        png.put_pixel(col, ny - 1 - row, px);
    }
    let legend = Legend {
        palette,
        min: range.map(|r| r.0),
        max: range.map(|r| r.1),
        breakpoints,
        colors,
        nodata: "transparent",
    };
    Ok((png, legend))
}

/// PNG-encodes an image in memory.
pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}
