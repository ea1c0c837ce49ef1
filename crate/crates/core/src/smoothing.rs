//! Gaussian kernel smoothing on a pixel grid.
//!
//! The kernel intensity estimate at a cell center `u` is
//! `λ*(u) = Σ_i w_i e(x_i) k(x_i - u)`, where `e(x_i)` is the reciprocal of the
//! kernel mass around `x_i` that falls on masked cells. Because `e` is computed
//! on the same grid that carries the estimate, the estimate integrates to
//! `Σ w_i` over the window.
//!
//! Kernel sums are truncated at 8σ along each axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;
use crate::pattern::PointPattern;
use crate::raster::PixelImage;

/// Kernel support cut-off, in standard deviations per axis.
pub const TRUNCATION: f64 = 8.0;

/// Nadaraya-Watson cells whose kernel mass (per km²) falls below this are missing.
pub const NW_MIN_MASS: f64 = 1e-12;

/// Per-axis Gaussian standard deviations, in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Bandwidth {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let ok = |s: f64| s > 0.0 && s.is_finite();
        if !ok(sigma_x) || !ok(sigma_y) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive and finite, got ({sigma_x}, {sigma_y})"
            )));
        }
        Ok(Self { sigma_x, sigma_y })
    }

    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    pub fn is_isotropic(&self) -> bool {
        self.sigma_x == self.sigma_y
    }

    fn norm(&self) -> f64 {
        1.0 / (2.0 * PI * self.sigma_x * self.sigma_y)
    }
}

/// Bivariate Gaussian density (per km²) at displacement `(dx, dy)`.
pub fn gaussian_kernel(dx: f64, dy: f64, bw: Bandwidth) -> f64 {
    bw.norm() * (-0.5 * (dx / bw.sigma_x).powi(2) - 0.5 * (dy / bw.sigma_y).powi(2)).exp()
}

/// Separable kernel weights of one source point over the grid axes.
struct Footprint {
    col0: usize,
    ax: Vec<f64>,
    row0: usize,
    ay: Vec<f64>,
}

fn axis_weights(c: f64, origin: f64, step: f64, n: usize, sigma: f64) -> (usize, Vec<f64>) {
    let reach = TRUNCATION * sigma;
    let lo = ((c - reach - origin) / step - 0.5).ceil().max(0.0);
    let hi = ((c + reach - origin) / step - 0.5).floor().min(n as f64 - 1.0);
    if !(lo <= hi) {
        return (0, Vec::new());
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let w = (lo..=hi)
        .map(|i| {
            let d = origin + (i as f64 + 0.5) * step - c;
            (-0.5 * (d / sigma).powi(2)).exp()
        })
        .collect();
    (lo, w)
}

fn footprint(grid: &PixelImage, x: PlanarPoint, bw: Bandwidth) -> Footprint {
    let o = grid.origin();
    let (col0, ax) = axis_weights(x.x, o.x, grid.dx(), grid.nx(), bw.sigma_x);
    let (row0, ay) = axis_weights(x.y, o.y, grid.dy(), grid.ny(), bw.sigma_y);
    Footprint { col0, ax, row0, ay }
}

/// Kernel mass around `x` retained on the grid's masked cells.
fn retained_mass(grid: &PixelImage, fp: &Footprint, bw: Bandwidth) -> f64 {
    let nx = grid.nx();
    let mask = grid.mask();
    let mut total = 0.0;
    for (jr, &wy) in fp.ay.iter().enumerate() {
        let base = (fp.row0 + jr) * nx + fp.col0;
        let row: f64 = fp
            .ax
            .iter()
            .enumerate()
            .filter(|(ic, _)| mask[base + ic])
            .map(|(_, &wx)| wx)
            .sum();
        total += wy * row;
    }
    total * bw.norm() * grid.cell_area()
}

/// Edge correction factor `e(x)`: reciprocal of the kernel mass centered at
/// `x` that lies on masked cells of `grid`.
pub fn edge_correction(x: PlanarPoint, bw: Bandwidth, grid: &PixelImage) -> Result<f64> {
    let fp = footprint(grid, x, bw);
    let mass = retained_mass(grid, &fp, bw);
    if !(mass > 0.0) {
        return Err(Error::Numerical(format!(
            "no kernel mass retained in the window around ({}, {})",
            x.x, x.y
        )));
    }
    Ok(1.0 / mass)
}

/// Accumulates `Σ_i coef_i k(x_i - u)` at every grid cell, row-parallel.
/// The per-cell summation order is the point order, independent of threads.
fn kernel_sum(grid: &PixelImage, footprints: &[Footprint], coefs: &[f64], bw: Bandwidth) -> Vec<f64> {
    let nx = grid.nx();
    let norm = bw.norm();
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(row, cells)| {
        for (fp, &c) in footprints.iter().zip(coefs) {
            if row < fp.row0 || row >= fp.row0 + fp.ay.len() || c == 0.0 {
                continue;
            }
            let f = c * norm * fp.ay[row - fp.row0];
            for (ic, &wx) in fp.ax.iter().enumerate() {
                cells[fp.col0 + ic] += f * wx;
            }
        }
    });
    out
}

/// Edge-corrected Gaussian kernel intensity on the masked cells of `grid`.
///
/// Optional `weights` (one per point, non-negative) turn this into a weighted
/// intensity. An empty pattern yields an all-zero image.
pub fn kernel_intensity(
    p: &PointPattern,
    bw: Bandwidth,
    grid: &PixelImage,
    weights: Option<&[f64]>,
) -> Result<PixelImage> {
    if let Some(w) = weights {
        if w.len() != p.len() {
            return Err(Error::InvalidInput(format!("{} weights for {} points", w.len(), p.len())));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
    }
    let footprints: Vec<Footprint> = p.points().par_iter().map(|x| footprint(grid, *x, bw)).collect();
    let coefs: Vec<f64> = footprints
        .par_iter()
        .enumerate()
        .map(|(i, fp)| {
            let mass = retained_mass(grid, fp, bw);
            if !(mass > 0.0) {
                let x = p.points()[i];
                return Err(Error::Numerical(format!(
                    "no kernel mass retained in the window around ({}, {})",
                    x.x, x.y
                )));
            }
            Ok(weights.map_or(1.0, |w| w[i]) / mass)
        })
        .collect::<Result<_>>()?;
    let sums = kernel_sum(grid, &footprints, &coefs, bw);
    Ok(grid.fill(|k, _| Some(sums[k])))
}

/// Nadaraya-Watson smoother of the pattern's marks:
/// `g(u) = Σ k(u - x_i) v_i / Σ k(u - x_i)`. Cells where the kernel mass is
/// below [`NW_MIN_MASS`] are missing.
pub fn nw_smooth(p: &PointPattern, bw: Bandwidth, grid: &PixelImage) -> Result<PixelImage> {
    let marks = p
        .marks()
        .ok_or_else(|| Error::InvalidInput("Nadaraya-Watson smoothing needs marks".into()))?;
    let footprints: Vec<Footprint> = p.points().par_iter().map(|x| footprint(grid, *x, bw)).collect();
    let ones = vec![1.0; p.len()];
    let num = kernel_sum(grid, &footprints, marks, bw);
    let den = kernel_sum(grid, &footprints, &ones, bw);
    let (lo, hi) = marks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(grid.fill(|k, _| (den[k] >= NW_MIN_MASS).then(|| (num[k] / den[k]).clamp(lo, hi))))
}

fn sample_sd(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Scott's rule in two dimensions: `σ_axis = sd(axis) · n^(-1/6)`.
pub fn bw_scott(p: &PointPattern) -> Result<Bandwidth> {
    let n = p.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("Scott's rule needs at least 2 points, got {n}")));
    }
    let sx = sample_sd(p.points().iter().map(|q| q.x));
    let sy = sample_sd(p.points().iter().map(|q| q.y));
    if !(sx > 0.0) || !(sy > 0.0) {
        return Err(Error::InvalidInput("zero spread in point coordinates".into()));
    }
    let f = (n as f64).powf(-1.0 / 6.0);
    Bandwidth::new(sx * f, sy * f)
}

/// Log-spaced bandwidth search interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub lower: f64,
    pub upper: f64,
    pub steps: usize,
}

impl SearchRange {
    pub fn new(lower: f64, upper: f64, steps: usize) -> Result<Self> {
        if !(lower > 0.0 && upper > lower && upper.is_finite()) || steps < 3 {
            return Err(Error::InvalidInput(format!(
                "bad search range [{lower}, {upper}] with {steps} steps"
            )));
        }
        Ok(Self { lower, upper, steps })
    }

    /// Default range for a window: from 1/500 to 1/4 of its diameter.
    pub fn for_window(diameter: f64) -> Self {
        Self {
            lower: diameter / 500.0,
            upper: diameter / 4.0,
            steps: 50,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.lower.ln(), self.upper.ln());
        let last = self.steps - 1;
        (0..self.steps)
            .map(|i| match i {
                0 => self.lower,
                i if i == last => self.upper,
                i => (a + (b - a) * i as f64 / last as f64).exp(),
            })
            .collect()
    }
}

/// Outcome of a cross-validated bandwidth search.
#[derive(Debug, Clone, Serialize)]
pub struct BandwidthChoice {
    pub sigma: f64,
    pub criterion: f64,
    /// The minimum sits at an end of the search range.
    pub at_boundary: bool,
    /// The scanned profile has more than one local minimum.
    pub multimodal: bool,
    /// The criterion is flat over the whole range.
    pub degenerate: bool,
    /// `(sigma, criterion)` at every scanned value.
    pub scan: Vec<(f64, f64)>,
}

impl BandwidthChoice {
    pub fn bandwidth(&self) -> Bandwidth {
        Bandwidth {
            sigma_x: self.sigma,
            sigma_y: self.sigma,
        }
    }
}

/// Scans `objective` over the log grid, then refines the best bracket by
/// golden-section search in log σ.
fn minimize_profile<F>(range: SearchRange, objective: F) -> Result<BandwidthChoice>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let sigmas = range.grid();
    let values: Vec<f64> = sigmas.par_iter().map(|&s| objective(s)).collect::<Result<_>>()?;
    let scan: Vec<(f64, f64)> = sigmas.iter().copied().zip(values.iter().copied()).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        return Ok(BandwidthChoice {
            sigma: sigmas[0],
            criterion: values[0],
            at_boundary: true,
            multimodal: false,
            degenerate: true,
            scan,
        });
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let local_minima = (0..values.len())
        .filter(|&i| {
            let left = i == 0 || values[i - 1] > values[i];
            let right = i + 1 == values.len() || values[i + 1] > values[i];
            left && right
        })
        .count();
    let last = values.len() - 1;
    if best == 0 || best == last {
        return Ok(BandwidthChoice {
            sigma: sigmas[best],
            criterion: values[best],
            at_boundary: true,
            multimodal: local_minima > 1,
            degenerate: false,
            scan,
        });
    }
    let (mut a, mut b) = (sigmas[best - 1].ln(), sigmas[best + 1].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = objective(c.exp())?;
    let mut fd = objective(d.exp())?;
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d.exp())?;
        }
    }
    let (mut sigma, mut criterion) = if fc < fd { (c.exp(), fc) } else { (d.exp(), fd) };
    if values[best] < criterion {
        sigma = sigmas[best];
        criterion = values[best];
    }
    Ok(BandwidthChoice {
        sigma,
        criterion,
        at_boundary: false,
        multimodal: local_minima > 1,
        degenerate: false,
        scan,
    })
}

/// Least-squares cross-validation criterion for the intensity at bandwidth `sigma`:
/// `∫ λ*(u)² du - 2 Σ_i λ*_{-i}(x_i)`, both edge-corrected on `grid`.
pub fn lscv_density_criterion(p: &PointPattern, grid: &PixelImage, sigma: f64) -> Result<f64> {
    let bw = Bandwidth::isotropic(sigma)?;
    let pts = p.points();
    let corr: Vec<f64> = pts
        .par_iter()
        .map(|x| edge_correction(*x, bw, grid))
        .collect::<Result<_>>()?;
    let lambda = kernel_intensity(p, bw, grid, None)?;
    let sq: f64 = grid.cell_area() * lambda.values().iter().flatten().map(|v| v * v).sum::<f64>();
    let reach = TRUNCATION * sigma;
    let loo: f64 = pts
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            pts.iter()
                .enumerate()
                .filter(|&(j, xj)| j != i && (xi.x - xj.x).abs() <= reach && (xi.y - xj.y).abs() <= reach)
                .map(|(j, xj)| corr[j] * gaussian_kernel(xi.x - xj.x, xi.y - xj.y, bw))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(sq - 2.0 * loo)
}

/// Isotropic bandwidth minimizing the intensity LSCV criterion.
pub fn bw_lscv_density(p: &PointPattern, grid: &PixelImage, range: SearchRange) -> Result<BandwidthChoice> {
    if p.len() < 2 {
        return Err(Error::InvalidInput("LSCV needs at least 2 points".into()));
    }
    minimize_profile(range, |s| lscv_density_criterion(p, grid, s))
}

/// Leave-one-out squared prediction error of the Nadaraya-Watson smoother.
/// A point whose leave-one-out kernel mass underflows is predicted by the
/// mean of the other marks.
pub fn lscv_smoother_criterion(p: &PointPattern, sigma: f64) -> Result<f64> {
    let marks = p
        .marks()
        .ok_or_else(|| Error::InvalidInput("smoother cross-validation needs marks".into()))?;
    let bw = Bandwidth::isotropic(sigma)?;
    let pts = p.points();
    let n = pts.len() as f64;
    let total: f64 = marks.iter().sum();
    let reach = TRUNCATION * sigma;
    let errs: Vec<f64> = pts
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            let (mut num, mut den) = (0.0, 0.0);
            for (j, xj) in pts.iter().enumerate() {
                if j == i || (xi.x - xj.x).abs() > reach || (xi.y - xj.y).abs() > reach {
                    continue;
                }
                let k = gaussian_kernel(xi.x - xj.x, xi.y - xj.y, bw);
                num += k * marks[j];
                den += k;
            }
            let pred = if den >= NW_MIN_MASS {
                num / den
            } else {
                (total - marks[i]) / (n - 1.0)
            };
            (marks[i] - pred).powi(2)
        })
        .collect();
    Ok(errs.iter().sum())
}

/// Isotropic bandwidth minimizing the smoother's leave-one-out error.
pub fn bw_lscv_smoother(p: &PointPattern, range: SearchRange) -> Result<BandwidthChoice> {
    if p.len() < 3 {
        return Err(Error::InvalidInput("smoother cross-validation needs at least 3 points".into()));
    }
    if p.marks().is_none() {
        return Err(Error::InvalidInput("smoother cross-validation needs marks".into()));
    }
    minimize_profile(range, |s| lscv_smoother_criterion(p, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::raster::{build_grid, GridSpec};
    use crate::sim::{sim_csr, RngSeed};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn square(side: f64) -> Arc<Window> {
        Arc::new(Window::rectangle(0.0, side, 0.0, side).unwrap())
    }

    #[test]
    fn kernel_values() {
        let bw = Bandwidth::isotropic(20.0).unwrap();
        assert!((gaussian_kernel(0.0, 0.0, bw) - 3.97887e-4).abs() < 1e-9);
        assert!((gaussian_kernel(30.0, 40.0, bw) - 1.748e-5).abs() < 1e-8);
        assert!((gaussian_kernel(6.0, 8.0, bw) - 3.512e-4).abs() < 1e-7);
    }

    #[test]
    fn kernel_integrates_to_one() {
        let bw = Bandwidth::new(1.3, 0.7).unwrap();
        let h = 0.05;
        let mut s = 0.0;
        for i in -300..=300 {
            for j in -300..=300 {
                s += gaussian_kernel(i as f64 * h, j as f64 * h, bw);
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidth::isotropic(0.0).is_err());
        assert!(Bandwidth::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn edge_correction_interior_edge_corner() {
        let w = square(100.0);
        let grid = build_grid(GridSpec { nx: 200, ny: 200 }, &w).unwrap();
        let bw = Bandwidth::isotropic(5.0).unwrap();
        let deep = edge_correction(PlanarPoint::new(50.0, 50.0), bw, &grid).unwrap();
        assert!((deep - 1.0).abs() < 0.01, "{deep}");
        let side = edge_correction(PlanarPoint::new(50.0, 0.0), bw, &grid).unwrap();
        assert!((side - 2.0).abs() < 0.05, "{side}");
        let corner = edge_correction(PlanarPoint::new(0.0, 0.0), bw, &grid).unwrap();
        assert!((corner - 4.0).abs() < 0.1, "{corner}");
    }

    #[test]
    fn edge_correction_fails_without_retained_mass() {
        let w = square(1.0);
        let grid = build_grid(GridSpec { nx: 8, ny: 8 }, &w).unwrap();
        let bw = Bandwidth::isotropic(0.01).unwrap();
        assert!(matches!(
            edge_correction(PlanarPoint::new(5.0, 5.0), bw, &grid),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn single_point_has_unit_mass() {
        let w = square(100.0);
        let grid = build_grid(GridSpec::default(), &w).unwrap();
        let p = PointPattern::new(vec![PlanarPoint::new(50.0, 50.0)], None, w).unwrap();
        let img = kernel_intensity(&p, Bandwidth::isotropic(5.0).unwrap(), &grid, None).unwrap();
        assert!((img.integrate() - 1.0).abs() < 0.01);
    }

    #[test]
    fn empty_pattern_gives_zero_image() {
        let w = square(10.0);
        let grid = build_grid(GridSpec { nx: 16, ny: 16 }, &w).unwrap();
        let img = kernel_intensity(&PointPattern::empty(w), Bandwidth::isotropic(1.0).unwrap(), &grid, None).unwrap();
        assert_eq!(img.defined_count(), 256);
        assert!(img.defined().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn weighted_intensity_scales_mass() {
        let w = square(10.0);
        let grid = build_grid(GridSpec { nx: 64, ny: 64 }, &w).unwrap();
        let p = sim_csr(&w, 40, 3.into()).unwrap();
        let weights: Vec<f64> = (0..40).map(|i| (i % 4) as f64).collect();
        let img = kernel_intensity(&p, Bandwidth::isotropic(0.8).unwrap(), &grid, Some(&weights)).unwrap();
        let total: f64 = weights.iter().sum();
        assert!((img.integrate() - total).abs() < 1e-9 * total);
        assert!(kernel_intensity(&p, Bandwidth::isotropic(0.8).unwrap(), &grid, Some(&[1.0])).is_err());
        let neg = vec![-1.0; 40];
        assert!(kernel_intensity(&p, Bandwidth::isotropic(0.8).unwrap(), &grid, Some(&neg)).is_err());
    }

    #[test]
    fn intensity_is_additive_over_partitions() {
        let w = square(10.0);
        let grid = build_grid(GridSpec { nx: 32, ny: 32 }, &w).unwrap();
        let a = sim_csr(&w, 15, 1.into()).unwrap();
        let b = sim_csr(&w, 25, 2.into()).unwrap();
        let bw = Bandwidth::isotropic(1.5).unwrap();
        let whole = kernel_intensity(&a.concat(&b).unwrap(), bw, &grid, None).unwrap();
        let la = kernel_intensity(&a, bw, &grid, None).unwrap();
        let lb = kernel_intensity(&b, bw, &grid, None).unwrap();
        for k in 0..grid.len() {
            let s = la.value(k).unwrap() + lb.value(k).unwrap();
            assert!((whole.value(k).unwrap() - s).abs() <= 1e-12 * (1.0 + s));
        }
    }

    #[test]
    fn intensity_is_translation_equivariant() {
        let w = square(10.0);
        let p = sim_csr(&w, 30, 9.into()).unwrap();
        let bw = Bandwidth::isotropic(1.0).unwrap();
        let grid = build_grid(GridSpec { nx: 20, ny: 20 }, &w).unwrap();
        let shifted = p.translate(250.0, -40.0);
        let grid2 = build_grid(GridSpec { nx: 20, ny: 20 }, shifted.window()).unwrap();
        let a = kernel_intensity(&p, bw, &grid, None).unwrap();
        let b = kernel_intensity(&shifted, bw, &grid2, None).unwrap();
        for k in 0..grid.len() {
            let (x, y) = (a.value(k).unwrap(), b.value(k).unwrap());
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn nw_examples() {
        let w = square(10.0);
        let grid = build_grid(GridSpec { nx: 20, ny: 20 }, &w).unwrap();
        let bw = Bandwidth::isotropic(1.0).unwrap();
        let p = sim_csr(&w, 25, 4.into()).unwrap();
        let constant = nw_smooth(&p.with_marks(vec![3.25; 25]).unwrap(), bw, &grid).unwrap();
        assert!(constant.defined().all(|(_, v)| (v - 3.25).abs() < 1e-12));
        let single = PointPattern::new(vec![PlanarPoint::new(5.0, 5.0)], Some(vec![7.0]), w.clone()).unwrap();
        let g = nw_smooth(&single, bw, &grid).unwrap();
        assert!(g.defined_count() > 0);
        assert!(g.defined().all(|(_, v)| (v - 7.0).abs() < 1e-12));
        // cells more than 8σ away from the only point are missing
        let tiny = nw_smooth(&single, Bandwidth::isotropic(0.1).unwrap(), &grid).unwrap();
        assert!(tiny.defined_count() < grid.masked_count());

        let grid1 = build_grid(GridSpec { nx: 1, ny: 1 }, &w).unwrap();
        let two = PointPattern::new(
            vec![PlanarPoint::new(3.0, 5.0), PlanarPoint::new(7.0, 5.0)],
            Some(vec![0.0, 10.0]),
            w.clone(),
        )
        .unwrap();
        let g = nw_smooth(&two, Bandwidth::isotropic(2.0).unwrap(), &grid1).unwrap();
        assert!((g.value(0).unwrap() - 5.0).abs() < 1e-12);
        assert!(nw_smooth(&two.without_marks(), bw, &grid).is_err());
    }

    #[test]
    fn scott_examples() {
        // 64 points with sample sd exactly 1 on both axes
        let w = Arc::new(Window::rectangle(-10.0, 10.0, -10.0, 10.0).unwrap());
        let base: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let scale = (63.0f64 / 64.0).sqrt();
        let pts: Vec<PlanarPoint> = base
            .iter()
            .enumerate()
            .map(|(i, v)| PlanarPoint::new(v * scale, if (i / 2) % 2 == 0 { scale } else { -scale }))
            .collect();
        let p = PointPattern::new(pts, None, w).unwrap();
        let bw = bw_scott(&p).unwrap();
        assert!((bw.sigma_x - 0.5).abs() < 1e-12 && (bw.sigma_y - 0.5).abs() < 1e-12);

        let doubled = PointPattern::new(
            p.points().iter().map(|q| PlanarPoint::new(2.0 * q.x, 2.0 * q.y)).collect(),
            None,
            Arc::new(Window::rectangle(-20.0, 20.0, -20.0, 20.0).unwrap()),
        )
        .unwrap();
        let bw2 = bw_scott(&doubled).unwrap();
        assert!((bw2.sigma_x - 2.0 * bw.sigma_x).abs() < 1e-12);

        let flat = PointPattern::new(
            vec![PlanarPoint::new(1.0, 0.0), PlanarPoint::new(2.0, 0.0)],
            None,
            Arc::new(Window::rectangle(-5.0, 5.0, -5.0, 5.0).unwrap()),
        )
        .unwrap();
        assert!(bw_scott(&flat).is_err());
    }

    #[test]
    fn scott_on_normal_cloud() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = RngSeed::new(17, 0).rng();
        let pts: Vec<PlanarPoint> = (0..1000)
            .map(|_| PlanarPoint::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let sx = sample_sd(pts.iter().map(|p| p.x));
        let w = Arc::new(Window::rectangle(-10.0, 10.0, -10.0, 10.0).unwrap());
        let p = PointPattern::new(pts, None, w).unwrap();
        let bw = bw_scott(&p).unwrap();
        assert!((bw.sigma_x / sx - 1000f64.powf(-1.0 / 6.0)).abs() < 1e-12);
        assert!((bw.sigma_x - 0.3162).abs() < 0.03);
    }

    #[test]
    fn lscv_density_on_tight_cluster_is_interior() {
        let w = square(10.0);
        let grid = build_grid(GridSpec { nx: 64, ny: 64 }, &w).unwrap();
        let mut rng = RngSeed::new(3, 0).rng();
        use rand_distr::{Distribution, Normal};
        let nd = Normal::new(0.0, 0.3).unwrap();
        let pts: Vec<PlanarPoint> = (0..60)
            .map(|_| PlanarPoint::new(5.0 + nd.sample(&mut rng), 5.0 + nd.sample(&mut rng)))
            .collect();
        let p = PointPattern::new(pts, None, w).unwrap();
        let range = SearchRange::new(0.05, 3.0, 30).unwrap();
        let choice = bw_lscv_density(&p, &grid, range).unwrap();
        assert!(!choice.at_boundary, "{:?}", choice.sigma);
        assert!(choice.sigma > 0.05 && choice.sigma < 3.0);
        for &(s, v) in &choice.scan {
            assert!(choice.criterion <= v + 1e-9, "σ={s}: {v} < {}", choice.criterion);
        }
    }

    #[test]
    fn lscv_density_on_csr_oversmooths_to_the_range_end() {
        // a flat intensity rewards ever wider kernels, so the minimum sits on
        // the upper end of the range rather than near Scott's rule
        let w = square(1.0);
        let grid = build_grid(GridSpec { nx: 64, ny: 64 }, &w).unwrap();
        let p = sim_csr(&w, 200, 11.into()).unwrap();
        let range = SearchRange::new(0.01, 0.5, 30).unwrap();
        let choice = bw_lscv_density(&p, &grid, range).unwrap();
        for &(_, v) in &choice.scan {
            assert!(choice.criterion <= v + 1e-9);
        }
        assert!(choice.at_boundary);
        assert_eq!(choice.sigma, 0.5);
        assert!(choice.sigma > 2.0 * bw_scott(&p).unwrap().sigma_x);
    }

    #[test]
    fn lscv_smoother_constant_marks_are_degenerate() {
        let w = square(10.0);
        let p = sim_csr(&w, 30, 5.into()).unwrap().with_marks(vec![2.0; 30]).unwrap();
        let range = SearchRange::new(0.1, 5.0, 20).unwrap();
        let c = bw_lscv_smoother(&p, range).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.sigma, 0.1);
    }

    #[test]
    fn lscv_smoother_linear_marks_return_scanned_minimizer() {
        let w = square(10.0);
        let p = sim_csr(&w, 200, 6.into()).unwrap();
        let marks: Vec<f64> = p.points().iter().map(|q| 2.0 * q.x).collect();
        let p = p.with_marks(marks).unwrap();
        let range = SearchRange::new(0.05, 5.0, 25).unwrap();
        let c = bw_lscv_smoother(&p, range).unwrap();
        for &(_, v) in &c.scan {
            assert!(c.criterion <= v + 1e-9);
        }
        let tiny = lscv_smoother_criterion(&p, 0.05).unwrap();
        assert!(c.criterion < tiny);
    }

    #[test]
    fn lscv_smoother_needs_marks_and_points() {
        let w = square(10.0);
        let p = sim_csr(&w, 10, 5.into()).unwrap();
        let range = SearchRange::new(0.1, 5.0, 20).unwrap();
        assert!(bw_lscv_smoother(&p, range).is_err());
        let two = sim_csr(&w, 2, 5.into()).unwrap().with_marks(vec![1.0, 2.0]).unwrap();
        assert!(bw_lscv_smoother(&two, range).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kernel_radially_symmetric_and_decreasing(r in 0.0..50.0f64, dr in 0.01..10.0f64, t in 0.0..6.28f64) {
            let bw = Bandwidth::isotropic(7.0).unwrap();
            let a = gaussian_kernel(r, 0.0, bw);
            let b = gaussian_kernel(r * t.cos(), r * t.sin(), bw);
            prop_assert!((a - b).abs() <= 1e-15 + 1e-12 * a);
            prop_assert!(gaussian_kernel(r + dr, 0.0, bw) < a);
        }

        #[test]
        fn nw_bounded_by_mark_range(seed in 0u64..500, sigma in 0.2..4.0f64) {
            let w = square(10.0);
            let grid = build_grid(GridSpec { nx: 16, ny: 16 }, &w).unwrap();
            let p = sim_csr(&w, 12, seed.into()).unwrap();
            let marks: Vec<f64> = (0..12).map(|i| ((i as u64 * 7 + seed) % 11) as f64 - 3.0).collect();
            let (lo, hi) = marks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let g = nw_smooth(&p.with_marks(marks).unwrap(), Bandwidth::isotropic(sigma).unwrap(), &grid).unwrap();
            for (_, v) in g.defined() {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
