//! Tests of complete spatial randomness: quadrat counts, the spatial
//! Kolmogorov-Smirnov test against a covariate, and Ripley's K with Monte
//! Carlo envelopes.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{PlanarPoint, Window};
use crate::pattern::PointPattern;
use crate::raster::{build_grid, GridSpec, PixelImage};
use crate::sim::{sim_csr, RngSeed};

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub n_used: usize,
    pub n_dropped: usize,
    pub details: serde_json::Value,
}

/// Upper tail of the asymptotic Kolmogorov distribution,
/// `P(K > x) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² x²)`, truncated at 100 terms.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    // the alternating series is useless this close to 0, where P(K > x) = 1 - O(e^{-1/x²})
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Upper tail of the chi-squared distribution.
pub fn chi_squared_sf(x: f64, df: f64) -> Result<f64> {
    let d = ChiSquared::new(df).map_err(|e| Error::InvalidInput(format!("chi-squared df {df}: {e}")))?;
    Ok(d.sf(x).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
struct QuadratCell {
    quadrats: Vec<(usize, usize)>,
    observed: usize,
    expected: f64,
}

/// Quadrats whose expected count falls below this are merged with a neighbor.
pub const MIN_QUADRAT_EXPECTATION: f64 = 0.5;

/// Pearson χ² test of CSR on an `nx × ny` partition of the window's bounding
/// box. Expected counts are proportional to the masked area of each quadrat on
/// `grid`; quadrats expecting fewer than 0.5 points are merged into the nearest
/// remaining quadrat.
pub fn quadrat_test(p: &PointPattern, nx: usize, ny: usize, grid: &PixelImage) -> Result<TestResult> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput("quadrat grid needs at least one cell per axis".into()));
    }
    let n = p.len();
    if n == 0 {
        return Err(Error::InvalidInput("quadrat test needs at least one point".into()));
    }
    let b = p.window().bbox();
    let qindex = |pt: PlanarPoint| -> (usize, usize) {
        let i = (((pt.x - b.xmin) / b.width() * nx as f64).floor().max(0.0) as usize).min(nx - 1);
        let j = (((pt.y - b.ymin) / b.height() * ny as f64).floor().max(0.0) as usize).min(ny - 1);
        (i, j)
    };
    let mut observed = vec![0usize; nx * ny];
    for pt in p.points() {
        let (i, j) = qindex(*pt);
        observed[j * nx + i] += 1;
    }
    let mut area = vec![0usize; nx * ny];
    for (_, c) in grid.masked_cells() {
        let (i, j) = qindex(c);
        area[j * nx + i] += 1;
    }
    let total: usize = area.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput("analysis grid has no masked cells".into()));
    }
    let mut cells: Vec<QuadratCell> = (0..nx * ny)
        .filter(|&k| area[k] > 0 || observed[k] > 0)
        .map(|k| QuadratCell {
            quadrats: vec![(k % nx, k / nx)],
            observed: observed[k],
            expected: n as f64 * area[k] as f64 / total as f64,
        })
        .collect();
    let center = |c: &QuadratCell| -> (f64, f64) {
        let m = c.quadrats.len() as f64;
        let (sx, sy) = c
            .quadrats
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(i, j)| (sx + i as f64 + 0.5, sy + j as f64 + 0.5));
        (sx / m * b.width() / nx as f64, sy / m * b.height() / ny as f64)
    };
    loop {
        let small = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.expected < MIN_QUADRAT_EXPECTATION)
            .min_by(|a, b| a.1.expected.total_cmp(&b.1.expected))
            .map(|(k, _)| k);
        let Some(k) = small else { break };
        if cells.len() < 2 {
            break;
        }
        let (cx, cy) = center(&cells[k]);
        let target = cells
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != k)
            .min_by(|a, b| {
                let (ax, ay) = center(a.1);
                let (bx, by) = center(b.1);
                ((ax - cx).powi(2) + (ay - cy).powi(2)).total_cmp(&((bx - cx).powi(2) + (by - cy).powi(2)))
            })
            .map(|(m, _)| m)
            .unwrap();
        let merged = cells.remove(k);
        let t = if target > k { target - 1 } else { target };
        cells[t].observed += merged.observed;
        cells[t].expected += merged.expected;
        cells[t].quadrats.extend(merged.quadrats);
    }
    if cells.len() < 2 {
        return Err(Error::InvalidInput(
            "all expected mass falls in a single quadrat after merging".into(),
        ));
    }
    let statistic: f64 = cells
        .iter()
        .map(|c| (c.observed as f64 - c.expected).powi(2) / c.expected)
        .sum();
    let df = (cells.len() - 1) as f64;
    Ok(TestResult {
        method: format!("quadrat chi-squared test ({nx}x{ny})"),
        statistic,
        p_value: chi_squared_sf(statistic, df)?,
        df: Some(df),
        n_used: n,
        n_dropped: 0,
        details: json!({ "cells": cells }),
    })
}

/// Spatial Kolmogorov-Smirnov test: compares the covariate's distribution at
/// the data points with its area-weighted distribution over the window.
/// Points where the covariate is missing are dropped and counted.
pub fn ks_test_covariate(p: &PointPattern, covariate: &PixelImage) -> Result<TestResult> {
    let mut cells: Vec<f64> = covariate.values().iter().flatten().copied().collect();
    if cells.is_empty() {
        return Err(Error::InvalidInput("covariate has no defined cells".into()));
    }
    let mut data: Vec<f64> = p.points().iter().filter_map(|q| covariate.lookup(*q)).collect();
    let dropped = p.len() - data.len();
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "no data point falls on a defined covariate cell".into(),
        ));
    }
    cells.sort_by(f64::total_cmp);
    data.sort_by(f64::total_cmp);
    let (m, n) = (cells.len(), data.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    let mut at = f64::NAN;
    while i < m || j < n {
        let z = match (cells.get(i), data.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < m && cells[i] <= z {
            i += 1;
        }
        while j < n && data[j] <= z {
            j += 1;
        }
        let gap = (j as f64 / n as f64 - i as f64 / m as f64).abs();
        if gap > d {
            d = gap;
            at = z;
        }
    }
    Ok(TestResult {
        method: "spatial Kolmogorov-Smirnov test of CSR".into(),
        statistic: d,
        p_value: kolmogorov_sf(d * (n as f64).sqrt()),
        df: None,
        n_used: n,
        n_dropped: dropped,
        details: json!({ "sup_at": if at.is_finite() { json!(at) } else { json!(null) } }),
    })
}

/// Estimated K function on a grid of radii.
#[derive(Debug, Clone, Serialize)]
pub struct KFunctionEstimate {
    pub r: Vec<f64>,
    pub khat: Vec<f64>,
    pub correction: String,
}

/// Set covariance `|A ∩ (A + v)|` of a window, tabulated on the lags of a
/// masking grid and interpolated bilinearly between them.
#[derive(Debug, Clone)]
pub struct SetCovariance {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    /// Lag table, `(2nx) × (2ny)` in FFT wrap-around order.
    table: Vec<f64>,
}

impl SetCovariance {
    pub fn new(grid: &PixelImage) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (px, py) = (2 * nx, 2 * ny);
        let mut buf = vec![Complex::new(0.0, 0.0); px * py];
        for (k, &m) in grid.mask().iter().enumerate() {
            if m {
                buf[(k / nx) * px + k % nx] = Complex::new(1.0, 0.0);
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        fft2(&mut buf, px, py, planner.plan_fft_forward(px), planner.plan_fft_forward(py));
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        fft2(&mut buf, px, py, planner.plan_fft_inverse(px), planner.plan_fft_inverse(py));
        let scale = grid.cell_area() / (px * py) as f64;
        let table = buf.iter().map(|c| snap_to_cells(c.re * scale, grid.cell_area())).collect();
        Self {
            nx,
            ny,
            dx: grid.dx(),
            dy: grid.dy(),
            table,
        }
    }

    fn at_lag(&self, i: isize, j: isize) -> f64 {
        if i.unsigned_abs() >= self.nx || j.unsigned_abs() >= self.ny {
            return 0.0;
        }
        let px = 2 * self.nx as isize;
        let py = 2 * self.ny as isize;
        let (ii, jj) = (i.rem_euclid(px) as usize, j.rem_euclid(py) as usize);
        self.table[jj * px as usize + ii]
    }

    /// Interpolated overlap area for shift `(vx, vy)`.
    pub fn overlap(&self, vx: f64, vy: f64) -> f64 {
        let (fx, fy) = (vx / self.dx, vy / self.dy);
        let (i0, j0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - i0, fy - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        (1.0 - tx) * (1.0 - ty) * self.at_lag(i0, j0)
            + tx * (1.0 - ty) * self.at_lag(i0 + 1, j0)
            + (1.0 - tx) * ty * self.at_lag(i0, j0 + 1)
            + tx * ty * self.at_lag(i0 + 1, j0 + 1)
    }

    /// Overlap at zero shift: the masked area.
    pub fn area(&self) -> f64 {
        self.table[0]
    }
}

/// The exact table holds integer multiples of the cell area; removes FFT noise.
fn snap_to_cells(v: f64, cell: f64) -> f64 {
    (v / cell).round().max(0.0) * cell
}

fn fft2(
    buf: &mut [Complex<f64>],
    px: usize,
    py: usize,
    row_fft: Arc<dyn rustfft::Fft<f64>>,
    col_fft: Arc<dyn rustfft::Fft<f64>>,
) {
    for row in buf.chunks_mut(px) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); py];
    for i in 0..px {
        for j in 0..py {
            col[j] = buf[j * px + i];
        }
        col_fft.process(&mut col);
        for j in 0..py {
            buf[j * px + i] = col[j];
        }
    }
}

/// Ripley's K with translation edge correction for one window.
///
/// The window's set covariance is computed once, so the estimator can be
/// reused across the many patterns of an envelope.
#[derive(Debug, Clone)]
pub struct KEstimator {
    window: Arc<Window>,
    setcov: SetCovariance,
}

impl KEstimator {
    pub fn new(window: Arc<Window>, spec: GridSpec) -> Result<Self> {
        let grid = build_grid(spec, &window)?;
        if grid.masked_count() == 0 {
            return Err(Error::InvalidInput("window masks no grid cell".into()));
        }
        Ok(Self {
            setcov: SetCovariance::new(&grid),
            window,
        })
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn estimate(&self, p: &PointPattern, r: &[f64]) -> Result<KFunctionEstimate> {
        validate_r_grid(&self.window, r)?;
        let n = p.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("K function needs at least 2 points, got {n}")));
        }
        let rmax = *r.last().unwrap();
        let pts = p.points();
        let base = self.setcov.area();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let xi = pts[i];
                pts[i + 1..].iter().filter_map(move |xj| {
                    let (vx, vy) = (xj.x - xi.x, xj.y - xi.y);
                    if vx.abs() > rmax || vy.abs() > rmax {
                        return None;
                    }
                    let d = vx.hypot(vy);
                    if d > rmax {
                        return None;
                    }
                    let overlap = self.setcov.overlap(vx, vy);
                    (overlap > 0.0).then(|| (d, base / overlap))
                })
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let scale = self.window.area() / (n as f64 * n as f64);
        let mut khat = Vec::with_capacity(r.len());
        let (mut k, mut acc) = (0usize, 0.0);
        for &rv in r {
            while k < pairs.len() && pairs[k].0 <= rv {
                acc += 2.0 * pairs[k].1;
                k += 1;
            }
            khat.push(scale * acc);
        }
        Ok(KFunctionEstimate {
            r: r.to_vec(),
            khat,
            correction: "translation".into(),
        })
    }
}

fn validate_r_grid(w: &Window, r: &[f64]) -> Result<()> {
    if r.is_empty() {
        return Err(Error::InvalidInput("empty r grid".into()));
    }
    if r[0] < 0.0 || r.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidInput("r grid must be non-negative and increasing".into()));
    }
    let diag = w.bbox().diagonal();
    if *r.last().unwrap() > diag {
        return Err(Error::InvalidInput(format!(
            "r = {} exceeds the window's bounding-box diagonal {diag}",
            r.last().unwrap()
        )));
    }
    Ok(())
}

/// `steps` equally spaced radii from 0 to a quarter of the window's shorter side.
pub fn default_r_grid(w: &Window, steps: usize) -> Vec<f64> {
    let b = w.bbox();
    let rmax = 0.25 * b.width().min(b.height());
    let steps = steps.max(2);
    (0..steps).map(|i| rmax * i as f64 / (steps - 1) as f64).collect()
}

/// Ripley's K with translation correction, using a 128 × 128 mask of the window.
pub fn ripley_k(p: &PointPattern, r: &[f64]) -> Result<KFunctionEstimate> {
    KEstimator::new(p.window_arc().clone(), GridSpec::default())?.estimate(p, r)
}

/// Pointwise min/max band of simulated K functions.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub r: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nsim: usize,
}

impl Envelope {
    pub fn from_curves(r: Vec<f64>, curves: &[Vec<f64>]) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidInput("envelope needs at least one curve".into()));
        }
        if curves.iter().any(|c| c.len() != r.len()) {
            return Err(Error::InvalidInput("curve length does not match the r grid".into()));
        }
        let mut lower = curves[0].clone();
        let mut upper = curves[0].clone();
        for c in &curves[1..] {
            for (k, &v) in c.iter().enumerate() {
                lower[k] = lower[k].min(v);
                upper[k] = upper[k].max(v);
            }
        }
        Ok(Self {
            r,
            lower,
            upper,
            nsim: curves.len(),
        })
    }

    /// Radii at which `curve` falls strictly outside the band.
    pub fn exits(&self, curve: &[f64]) -> Vec<f64> {
        curve
            .iter()
            .enumerate()
            .filter(|&(k, &v)| v < self.lower[k] || v > self.upper[k])
            .map(|(k, _)| self.r[k])
            .collect()
    }

    pub fn contains(&self, curve: &[f64]) -> bool {
        self.exits(curve).is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeTest {
    pub observed: KFunctionEstimate,
    pub envelope: Envelope,
    /// True when the observed curve leaves the envelope somewhere on the grid.
    pub outside: bool,
    pub exit_radii: Vec<f64>,
}

impl EnvelopeTest {
    pub fn to_result(&self, n: usize) -> TestResult {
        TestResult {
            method: format!("Ripley K simulation envelope ({} CSR simulations)", self.envelope.nsim),
            statistic: self.exit_radii.len() as f64,
            // rank-based bound for a single pre-chosen r; reported for reference only
            p_value: if self.outside {
                2.0 / (self.envelope.nsim as f64 + 1.0)
            } else {
                1.0
            },
            df: None,
            n_used: n,
            n_dropped: 0,
            details: json!({
                "outside": self.outside,
                "exit_radii": self.exit_radii,
                "r": self.envelope.r,
                "khat": self.observed.khat,
                "lower": self.envelope.lower,
                "upper": self.envelope.upper,
            }),
        }
    }
}

/// Simulates `nsim` binomial CSR patterns with the data's point count, and
/// checks whether the observed K leaves their pointwise envelope. Replicate `i`
/// uses stream `seed.replicate(i)`, so results do not depend on scheduling.
pub fn k_envelope(
    estimator: &KEstimator,
    p: &PointPattern,
    nsim: usize,
    r: &[f64],
    seed: RngSeed,
) -> Result<EnvelopeTest> {
    if nsim == 0 {
        return Err(Error::InvalidInput("envelope needs at least one simulation".into()));
    }
    let observed = estimator.estimate(p, r)?;
    let n = p.len();
    let curves: Vec<Vec<f64>> = (0..nsim as u64)
        .into_par_iter()
        .map(|i| {
            let sim = sim_csr(estimator.window(), n, seed.replicate(i))?;
            Ok(estimator.estimate(&sim, r)?.khat)
        })
        .collect::<Result<_>>()?;
    let envelope = Envelope::from_curves(r.to_vec(), &curves)?;
    let exit_radii = envelope.exits(&observed.khat);
    Ok(EnvelopeTest {
        outside: !exit_radii.is_empty(),
        exit_radii,
        observed,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::sim_cluster;
    use std::f64::consts::PI;

    fn unit() -> Arc<Window> {
        Arc::new(Window::unit_square())
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // classic critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_sf(1.358_099) - 0.05).abs() < 1e-5);
        assert!((kolmogorov_sf(1.627_624) - 0.01).abs() < 1e-5);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(0.5) > 0.96);
    }

    fn four_quadrant_pattern(counts: [usize; 4]) -> PointPattern {
        let mut pts = Vec::new();
        for (q, &c) in counts.iter().enumerate() {
            let (ox, oy) = ((q % 2) as f64 * 0.5, (q / 2) as f64 * 0.5);
            for k in 0..c {
                pts.push(PlanarPoint::new(ox + 0.1 + 0.3 * (k as f64 / c as f64), oy + 0.25));
            }
        }
        PointPattern::new(pts, None, unit()).unwrap()
    }

    #[test]
    fn quadrat_uniform_counts() {
        let grid = build_grid(GridSpec { nx: 8, ny: 8 }, &unit()).unwrap();
        let r = quadrat_test(&four_quadrant_pattern([10, 10, 10, 10]), 2, 2, &grid).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, Some(3.0));
    }

    #[test]
    fn quadrat_skewed_counts() {
        let grid = build_grid(GridSpec { nx: 8, ny: 8 }, &unit()).unwrap();
        let r = quadrat_test(&four_quadrant_pattern([20, 20, 0, 0]), 2, 2, &grid).unwrap();
        assert!((r.statistic - 40.0).abs() < 1e-12);
        // P(χ²₃ > 40) = 1.073e-8 (closed form for odd df via erfc)
        assert!(r.p_value < 1e-7 && r.p_value > 1e-9, "{}", r.p_value);
    }

    #[test]
    fn quadrat_merges_sparse_cells() {
        // triangle: the corner quadrat barely touches the window
        let w = Arc::new(
            Window::new(
                vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(1.0, 0.0), PlanarPoint::new(0.0, 1.0)],
                vec![],
            )
            .unwrap(),
        );
        let grid = build_grid(GridSpec::default(), &w).unwrap();
        let p = sim_csr(&w, 6, 2.into()).unwrap();
        let r = quadrat_test(&p, 3, 3, &grid).unwrap();
        let cells = r.details["cells"].as_array().unwrap();
        assert!(cells.iter().all(|c| c["expected"].as_f64().unwrap() >= 0.5));
        let total_obs: u64 = cells.iter().map(|c| c["observed"].as_u64().unwrap()).sum();
        assert_eq!(total_obs, 6);
        assert_eq!(r.df, Some(cells.len() as f64 - 1.0));
    }

    #[test]
    fn quadrat_single_cell_is_an_error() {
        let grid = build_grid(GridSpec { nx: 4, ny: 4 }, &unit()).unwrap();
        let p = sim_csr(&unit(), 5, 1.into()).unwrap();
        assert!(quadrat_test(&p, 1, 1, &grid).is_err());
    }

    #[test]
    fn quadrat_statistic_invariant_under_relabeling() {
        let grid = build_grid(GridSpec { nx: 8, ny: 8 }, &unit()).unwrap();
        let a = quadrat_test(&four_quadrant_pattern([3, 9, 14, 6]), 2, 2, &grid).unwrap();
        let b = quadrat_test(&four_quadrant_pattern([14, 6, 3, 9]), 2, 2, &grid).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
    }

    #[test]
    fn ks_constant_covariate() {
        let grid = build_grid(GridSpec { nx: 10, ny: 10 }, &unit()).unwrap();
        let cov = grid.map(|_| Some(3.0));
        let p = sim_csr(&unit(), 20, 1.into()).unwrap();
        let r = ks_test_covariate(&p, &cov).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_single_point_at_median() {
        let grid = build_grid(GridSpec { nx: 10, ny: 10 }, &unit()).unwrap();
        let cov = grid.fill(|_, c| Some(c.x));
        // x = 0.45 is the 5th of 10 distinct column values: F0 = 0.5
        let p = PointPattern::new(vec![PlanarPoint::new(0.45, 0.3)], None, unit()).unwrap();
        let r = ks_test_covariate(&p, &cov).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert_eq!(r.n_used, 1);
    }

    #[test]
    fn ks_drops_points_on_missing_cells() {
        let grid = build_grid(GridSpec { nx: 10, ny: 10 }, &unit()).unwrap();
        let cov = grid.fill(|_, c| (c.x < 0.5).then_some(c.y));
        let p = PointPattern::new(
            vec![PlanarPoint::new(0.2, 0.2), PlanarPoint::new(0.8, 0.2), PlanarPoint::new(0.9, 0.9)],
            None,
            unit(),
        )
        .unwrap();
        let r = ks_test_covariate(&p, &cov).unwrap();
        assert_eq!((r.n_used, r.n_dropped), (1, 2));
        let none = PointPattern::new(vec![PlanarPoint::new(0.8, 0.2)], None, unit()).unwrap();
        assert!(ks_test_covariate(&none, &cov).is_err());
    }

    #[test]
    fn ks_invariant_under_monotone_transform() {
        let grid = build_grid(GridSpec { nx: 32, ny: 32 }, &unit()).unwrap();
        let cov = grid.fill(|_, c| Some(c.x + 0.3 * c.y));
        let p = sim_cluster(&unit(), 5, 8, 0.05, 3.into()).unwrap();
        let a = ks_test_covariate(&p, &cov).unwrap();
        let b = ks_test_covariate(&p, &cov.map(|v| Some((3.0 * v).exp() - 7.0))).unwrap();
        assert_eq!(a.statistic, b.statistic);
    }

    #[test]
    fn ks_accepts_csr_on_ramp() {
        let grid = build_grid(GridSpec::default(), &unit()).unwrap();
        let cov = grid.fill(|_, c| Some(c.x));
        let ok = (0..100)
            .filter(|&i| {
                let p = sim_csr(&unit(), 500, RngSeed::new(44, i)).unwrap();
                ks_test_covariate(&p, &cov).unwrap().statistic < 1.36 / 500f64.sqrt()
            })
            .count();
        assert!(ok >= 93, "{ok}");
    }

    #[test]
    fn set_covariance_of_unit_square() {
        let grid = build_grid(GridSpec { nx: 32, ny: 32 }, &unit()).unwrap();
        let sc = SetCovariance::new(&grid);
        assert!((sc.area() - 1.0).abs() < 1e-12);
        for &(vx, vy) in &[(0.1, 0.0), (0.25, -0.3), (-0.6, 0.05), (0.0, 0.9)] {
            let exact = (1.0 - f64::abs(vx)) * (1.0 - f64::abs(vy));
            assert!((sc.overlap(vx, vy) - exact).abs() < 1e-9, "{vx},{vy}");
        }
        assert_eq!(sc.overlap(1.2, 0.0), 0.0);
    }

    #[test]
    fn k_at_zero_and_two_points() {
        let w = Arc::new(Window::rectangle(-1000.0, 1000.0, -1000.0, 1000.0).unwrap());
        let d = 1.5;
        let p = PointPattern::new(vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(d, 0.0)], None, w.clone()).unwrap();
        let k = ripley_k(&p, &[0.0, 1.0, 1.49, 1.5, 3.0]).unwrap();
        assert_eq!(k.khat[0], 0.0);
        assert_eq!(k.khat[1], 0.0);
        assert_eq!(k.khat[2], 0.0);
        let half = w.area() / 2.0;
        assert!((k.khat[3] - half).abs() < 1e-3 * half, "{}", k.khat[3]);
        assert!((k.khat[4] - half).abs() < 1e-3 * half);
    }

    #[test]
    fn k_rejects_bad_r() {
        let p = sim_csr(&unit(), 10, 1.into()).unwrap();
        assert!(ripley_k(&p, &[0.0, 2.0]).is_err());
        assert!(ripley_k(&p, &[0.0, 0.2, 0.1]).is_err());
        let one = sim_csr(&unit(), 1, 1.into()).unwrap();
        assert!(ripley_k(&one, &[0.0, 0.1]).is_err());
    }

    #[test]
    fn k_invariant_under_translation_and_quarter_turn() {
        let w = Arc::new(Window::rectangle(0.0, 2.0, 0.0, 1.0).unwrap());
        let p = sim_csr(&w, 80, 5.into()).unwrap();
        let r: Vec<f64> = (0..10).map(|i| 0.03 * i as f64).collect();
        let k = ripley_k(&p, &r).unwrap();
        let shifted = p.translate(10.0, -3.0);
        let ks = ripley_k(&shifted, &r).unwrap();
        let wr = Arc::new(Window::rectangle(-1.0, 0.0, 0.0, 2.0).unwrap());
        let rotated = PointPattern::new(
            p.points().iter().map(|q| PlanarPoint::new(-q.y, q.x)).collect(),
            None,
            wr,
        )
        .unwrap();
        let kr = ripley_k(&rotated, &r).unwrap();
        for i in 0..r.len() {
            assert!((k.khat[i] - ks.khat[i]).abs() <= 1e-9 * (1.0 + k.khat[i]));
            assert!((k.khat[i] - kr.khat[i]).abs() <= 1e-9 * (1.0 + k.khat[i]));
        }
    }

    #[test]
    fn k_nondecreasing() {
        let p = sim_csr(&unit(), 100, 8.into()).unwrap();
        let k = ripley_k(&p, &default_r_grid(p.window(), 40)).unwrap();
        assert!(k.khat.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn envelope_contains_its_own_curves() {
        let est = KEstimator::new(unit(), GridSpec::default()).unwrap();
        let r = default_r_grid(&Window::unit_square(), 20);
        let data = sim_cluster(&unit(), 20, 5, 0.02, 1.into()).unwrap();
        let observed = est.estimate(&data, &r).unwrap().khat;
        let mut curves = vec![observed.clone()];
        for i in 0..9 {
            curves.push(est.estimate(&sim_csr(&unit(), data.len(), RngSeed::new(3, i)).unwrap(), &r).unwrap().khat);
        }
        let env = Envelope::from_curves(r, &curves).unwrap();
        assert!(env.contains(&observed));
        assert!(env.lower.iter().zip(&env.upper).all(|(a, b)| a <= b));
    }

    #[test]
    fn envelope_widens_with_nested_simulations() {
        let est = KEstimator::new(unit(), GridSpec::default()).unwrap();
        let r = default_r_grid(&Window::unit_square(), 10);
        let p = sim_csr(&unit(), 60, 9.into()).unwrap();
        let small = k_envelope(&est, &p, 9, &r, RngSeed::new(1, 0)).unwrap().envelope;
        let large = k_envelope(&est, &p, 19, &r, RngSeed::new(1, 0)).unwrap().envelope;
        for k in 0..r.len() {
            assert!(large.lower[k] <= small.lower[k] && large.upper[k] >= small.upper[k]);
        }
    }

    #[test]
    fn clustered_pattern_leaves_envelope() {
        let est = KEstimator::new(unit(), GridSpec::default()).unwrap();
        let r = default_r_grid(&Window::unit_square(), 32);
        let p = sim_cluster(&unit(), 50, 10, 0.01, 12.into()).unwrap();
        let t = k_envelope(&est, &p, 39, &r, RngSeed::new(77, 0)).unwrap();
        assert!(t.outside);
    }

    #[test]
    fn tiny_sigma_cluster_inflates_k() {
        let sigma = 0.01;
        let p = sim_cluster(&unit(), 50, 10, sigma, 4.into()).unwrap();
        let r = 2.0 * sigma;
        let k = ripley_k(&p, &[0.0, r]).unwrap();
        assert!(k.khat[1] / (PI * r * r) > 5.0);
    }
}
