//! Pixel images: rectangular grids masked to a window.
//!
//! Cells are indexed row-major from the south-west corner: cell `k` sits at
//! column `k % nx` and row `k / nx`, with row 0 the southernmost. A cell is
//! *masked* (inside the window) when its center lies in the window. Masked
//! cells normally carry a value; a masked cell may still be missing when an
//! estimator cannot produce a value there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlanarPoint, Window};

pub mod ascii;

/// Grid resolution used to discretize a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nx: 128, ny: 128 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    origin: PlanarPoint,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    mask: Vec<bool>,
    values: Vec<Option<f64>>,
}

/// Lays a grid over the window's bounding box and masks cells by center
/// membership. Masked cells start at 0.
pub fn build_grid(spec: GridSpec, window: &Window) -> Result<PixelImage> {
    if spec.nx == 0 || spec.ny == 0 {
        return Err(Error::InvalidInput(format!(
            "grid must have at least one cell, got {}x{}",
            spec.nx, spec.ny
        )));
    }
    let b = window.bbox();
    let dx = b.width() / spec.nx as f64;
    let dy = b.height() / spec.ny as f64;
    let origin = PlanarPoint::new(b.xmin, b.ymin);
    let mask: Vec<bool> = (0..spec.nx * spec.ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % spec.nx, k / spec.nx);
            window.contains(PlanarPoint::new(
                origin.x + (i as f64 + 0.5) * dx,
                origin.y + (j as f64 + 0.5) * dy,
            ))
        })
        .collect();
    let values = mask.iter().map(|&m| m.then_some(0.0)).collect();
    Ok(PixelImage {
        origin,
        nx: spec.nx,
        ny: spec.ny,
        dx,
        dy,
        mask,
        values,
    })
}

impl PixelImage {
    /// Assembles an image from raw parts; a cell is masked iff it has a value.
    pub fn from_values(
        origin: PlanarPoint,
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || !(dx > 0.0) || !(dy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid grid geometry {nx}x{ny}, cell {dx}x{dy}"
            )));
        }
        if values.len() != nx * ny {
            return Err(Error::InvalidInput(format!(
                "expected {} cell values, got {}",
                nx * ny,
                values.len()
            )));
        }
        let mask = values.iter().map(Option::is_some).collect();
        Ok(Self {
            origin,
            nx,
            ny,
            dx,
            dy,
            mask,
            values,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn origin(&self) -> PlanarPoint {
        self.origin
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> Option<f64> {
        self.values[k]
    }

    pub fn is_masked(&self, k: usize) -> bool {
        self.mask[k]
    }

    /// Number of cells inside the window.
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Number of cells carrying a value.
    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn center(&self, col: usize, row: usize) -> PlanarPoint {
        PlanarPoint::new(
            self.origin.x + (col as f64 + 0.5) * self.dx,
            self.origin.y + (row as f64 + 0.5) * self.dy,
        )
    }

    pub fn cell_center(&self, k: usize) -> PlanarPoint {
        self.center(k % self.nx, k / self.nx)
    }

    /// Cell index containing `p`; the grid's upper edges are closed.
    pub fn cell_index(&self, p: PlanarPoint) -> Option<usize> {
        let col = axis_index(p.x, self.origin.x, self.dx, self.nx)?;
        let row = axis_index(p.y, self.origin.y, self.dy, self.ny)?;
        Some(row * self.nx + col)
    }

    /// Value of the cell containing `p`, or `None` when that cell is unmasked,
    /// missing, or off the grid.
    pub fn lookup(&self, p: PlanarPoint) -> Option<f64> {
        self.cell_index(p).and_then(|k| self.values[k])
    }

    /// Masked cells with their centers, in index order.
    pub fn masked_cells(&self) -> impl Iterator<Item = (usize, PlanarPoint)> + '_ {
        (0..self.len())
            .filter(|&k| self.mask[k])
            .map(|k| (k, self.cell_center(k)))
    }

    /// Defined cells with their values, in index order.
    pub fn defined(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(k, v)| v.map(|v| (k, v)))
    }

    pub fn same_grid(&self, other: &PixelImage) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.origin == other.origin
            && self.dx == other.dx
            && self.dy == other.dy
    }

    /// New image on the same grid and mask, evaluating `f` at every masked
    /// cell. Evaluation is parallel; each cell is computed independently.
    pub fn fill<F>(&self, f: F) -> PixelImage
    where
        F: Fn(usize, PlanarPoint) -> Option<f64> + Sync,
    {
        let values = (0..self.len())
            .into_par_iter()
            .map(|k| if self.mask[k] { f(k, self.cell_center(k)) } else { None })
            .collect();
        self.with_values(values)
    }

    /// Same grid and mask with new values. Values on unmasked cells are dropped.
    pub fn with_values(&self, values: Vec<Option<f64>>) -> PixelImage {
        assert_eq!(values.len(), self.len(), "value count must match the grid");
        let values = values
            .into_iter()
            .zip(&self.mask)
            .map(|(v, &m)| if m { v } else { None })
            .collect();
        PixelImage {
            origin: self.origin,
            nx: self.nx,
            ny: self.ny,
            dx: self.dx,
            dy: self.dy,
            mask: self.mask.clone(),
            values,
        }
    }

    pub fn map<F>(&self, f: F) -> PixelImage
    where
        F: Fn(f64) -> Option<f64> + Sync,
    {
        let values = self.values.par_iter().map(|v| v.and_then(&f)).collect();
        self.with_values(values)
    }

    /// Cell-wise combination on a shared grid; missing in either input stays missing.
    pub fn zip_with<F>(&self, other: &PixelImage, f: F) -> Result<PixelImage>
    where
        F: Fn(f64, f64) -> Option<f64> + Sync,
    {
        if !self.same_grid(other) {
            return Err(Error::InvalidInput("images are on different grids".into()));
        }
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => f(*a, *b),
                _ => None,
            })
            .collect();
        Ok(self.with_values(values))
    }

    /// Pixel-area-weighted sum of the defined values.
    pub fn integrate(&self) -> f64 {
        self.dx * self.dy * self.values.iter().flatten().sum::<f64>()
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values.iter().flatten().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Lower empirical quantile over the defined cells: the smallest value `v`
    /// such that at least a fraction `q` of cells are `<= v`.
    pub fn quantile_threshold(&self, q: f64) -> Result<f64> {
        let mut vals: Vec<f64> = self.values.iter().flatten().copied().collect();
        quantile_of(&mut vals, q)
    }

    /// Reads another image at this image's cell centers (nearest-cell lookup).
    pub fn resample_from(&self, source: &PixelImage) -> PixelImage {
        if self.same_grid(source) {
            return self.with_values(source.values.clone());
        }
        self.fill(|_, c| source.lookup(c))
    }
}

/// Lower empirical quantile of `vals` (sorted in place).
pub fn quantile_of(vals: &mut [f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile level {q} outside [0, 1]")));
    }
    if vals.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty image".into()));
    }
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    let rank = (q * m as f64 - 1e-9).ceil() as isize - 1;
    Ok(vals[rank.clamp(0, m as isize - 1) as usize])
}

fn axis_index(v: f64, origin: f64, step: f64, n: usize) -> Option<usize> {
    let t = (v - origin) / step;
    if !(t >= 0.0) || t > n as f64 {
        return None;
    }
    Some((t.floor() as usize).min(n - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> PixelImage {
        build_grid(GridSpec { nx: n, ny: n }, &Window::unit_square()).unwrap()
    }

    #[test]
    fn unit_square_two_by_two() {
        let g = unit_grid(2);
        assert_eq!(g.masked_count(), 4);
        assert_eq!((g.dx(), g.dy()), (0.5, 0.5));
    }

    #[test]
    fn l_shape_masks_three_quadrants() {
        let w = Window::new(
            vec![
                PlanarPoint::new(0.0, 0.0),
                PlanarPoint::new(2.0, 0.0),
                PlanarPoint::new(2.0, 1.0),
                PlanarPoint::new(1.0, 1.0),
                PlanarPoint::new(1.0, 2.0),
                PlanarPoint::new(0.0, 2.0),
            ],
            vec![],
        )
        .unwrap();
        let g = build_grid(GridSpec { nx: 2, ny: 2 }, &w).unwrap();
        assert_eq!(g.masked_count(), 3);
        assert!(!g.is_masked(3));
    }

    #[test]
    fn irregular_window_mask_tracks_area_fraction() {
        // Blob with area fraction ~0.58 of its bounding box.
        let n = 200;
        let outer: Vec<PlanarPoint> = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let r = 400.0 * (1.0 + 0.18 * (3.0 * t).sin() + 0.07 * (5.0 * t).cos());
                PlanarPoint::new(r * t.cos(), r * t.sin())
            })
            .collect();
        let w = Window::new(outer, vec![]).unwrap();
        let b = w.bbox();
        let frac = w.area() / (b.width() * b.height());
        let g = build_grid(GridSpec::default(), &w).unwrap();
        let expected = frac * 16384.0;
        let got = g.masked_count() as f64;
        assert!(((got - expected) / expected).abs() < 0.02, "{got} vs {expected}");
    }

    #[test]
    fn integrate_constants() {
        let g = unit_grid(2);
        assert_eq!(g.map(|_| Some(1.0)).integrate(), 1.0);
        assert_eq!(g.integrate(), 0.0);
        let w = Window::rectangle(0.0, 3.0, 0.0, 2.0).unwrap();
        let g = build_grid(GridSpec { nx: 7, ny: 5 }, &w).unwrap();
        let c = 2.5;
        let got = g.map(|_| Some(c)).integrate();
        assert!((got - c * g.masked_count() as f64 * g.cell_area()).abs() < 1e-12);
    }

    #[test]
    fn lookup_semantics() {
        let w = Window::new(
            vec![
                PlanarPoint::new(0.0, 0.0),
                PlanarPoint::new(3.0, 0.0),
                PlanarPoint::new(3.0, 3.0),
                PlanarPoint::new(0.0, 3.0),
            ],
            vec![vec![
                PlanarPoint::new(1.0, 1.0),
                PlanarPoint::new(2.0, 1.0),
                PlanarPoint::new(2.0, 2.0),
                PlanarPoint::new(1.0, 2.0),
            ]],
        )
        .unwrap();
        let g = build_grid(GridSpec { nx: 3, ny: 3 }, &w).unwrap();
        let img = g.fill(|k, _| Some(k as f64));
        assert_eq!(img.lookup(img.cell_center(1)), Some(1.0));
        assert_eq!(img.lookup(PlanarPoint::new(4.0, 1.0)), None);
        assert_eq!(img.lookup(PlanarPoint::new(1.5, 1.5)), None);
        // closed upper edge
        assert_eq!(img.lookup(PlanarPoint::new(3.0, 3.0)), Some(8.0));
    }

    #[test]
    fn quantiles() {
        let vals: Vec<Option<f64>> = (1..=100).map(|v| Some(v as f64)).collect();
        let img = PixelImage::from_values(PlanarPoint::new(0.0, 0.0), 10, 10, 1.0, 1.0, vals).unwrap();
        assert_eq!(img.quantile_threshold(0.95).unwrap(), 95.0);
        assert_eq!(img.quantile_threshold(0.0).unwrap(), 1.0);
        assert_eq!(img.quantile_threshold(1.0).unwrap(), 100.0);
        assert!(img.quantile_threshold(1.5).is_err());
        let empty = img.map(|_| None);
        assert!(empty.quantile_threshold(0.5).is_err());
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in -5.0..5.0f64, b in -5.0..5.0f64, seed in 0u64..1000) {
            let g = unit_grid(8);
            let f = g.fill(|k, _| Some(((k as u64 * 2654435761 + seed) % 97) as f64 / 10.0));
            let h = g.fill(|k, p| Some(p.x * p.y + k as f64 * 0.01));
            let combo = f.zip_with(&h, |u, v| Some(a * u + b * v)).unwrap();
            let lhs = combo.integrate();
            let rhs = a * f.integrate() + b * h.integrate();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn lookup_missing_iff_unmasked(x in -0.5..3.5f64, y in -0.5..3.5f64) {
            let w = Window::new(
                vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(3.0, 0.0), PlanarPoint::new(0.0, 3.0)],
                vec![],
            ).unwrap();
            let g = build_grid(GridSpec { nx: 6, ny: 6 }, &w).unwrap();
            let p = PlanarPoint::new(x, y);
            let masked = g.cell_index(p).map(|k| g.is_masked(k)).unwrap_or(false);
            prop_assert_eq!(g.lookup(p).is_some(), masked);
        }
    }
}
