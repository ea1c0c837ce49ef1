//! Point-pattern generators.
//!
//! Every generator draws from a ChaCha stream keyed by `(seed, stream)`, so a
//! replicate's output depends only on its own key and never on which thread
//! produced it or in what order.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlanarPoint, Window};
use crate::pattern::PointPattern;
use crate::raster::PixelImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Key for the `i`-th replicate derived from this one.
    pub const fn replicate(&self, i: u64) -> Self {
        Self {
            seed: self.seed,
            stream: self.stream.wrapping_add(i),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed, 0)
    }
}

fn uniform_in_window<R: Rng>(w: &Window, rng: &mut R) -> PlanarPoint {
    let b = w.bbox();
    loop {
        let p = PlanarPoint::new(
            b.xmin + rng.random::<f64>() * b.width(),
            b.ymin + rng.random::<f64>() * b.height(),
        );
        if w.contains(p) {
            return p;
        }
    }
}

fn check_window(w: &Window) -> Result<()> {
    if !(w.area() > 0.0) {
        return Err(Error::InvalidInput("window has zero area".into()));
    }
    Ok(())
}

/// Exactly `n` independent uniform points (binomial process).
pub fn sim_csr(w: &Arc<Window>, n: usize, seed: RngSeed) -> Result<PointPattern> {
    check_window(w)?;
    let mut rng = seed.rng();
    let pts = (0..n).map(|_| uniform_in_window(w, &mut rng)).collect();
    PointPattern::new(pts, None, w.clone())
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidInput(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as usize)
}

/// Homogeneous Poisson process of intensity `lambda` (points per unit area).
pub fn sim_poisson(w: &Arc<Window>, lambda: f64, seed: RngSeed) -> Result<PointPattern> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("intensity must be finite and >= 0, got {lambda}")));
    }
    check_window(w)?;
    let mut rng = seed.rng();
    let n = poisson_count(lambda * w.area(), &mut rng)?;
    let pts = (0..n).map(|_| uniform_in_window(w, &mut rng)).collect();
    PointPattern::new(pts, None, w.clone())
}

/// Inhomogeneous Poisson process by thinning a homogeneous one at the image
/// maximum. The intensity at a proposal is read from its cell (nearest-cell
/// lookup); proposals on missing cells are discarded.
pub fn sim_inhomogeneous(w: &Arc<Window>, intensity: &PixelImage, seed: RngSeed) -> Result<PointPattern> {
    check_window(w)?;
    if intensity.values().iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("intensity image must be finite and non-negative".into()));
    }
    let lmax = intensity.min_max().map(|(_, hi)| hi).unwrap_or(0.0);
    if lmax == 0.0 {
        return Ok(PointPattern::empty(w.clone()));
    }
    let mut rng = seed.rng();
    let n = poisson_count(lmax * w.area(), &mut rng)?;
    let mut pts = Vec::new();
    for _ in 0..n {
        let p = uniform_in_window(w, &mut rng);
        let u: f64 = rng.random();
        if let Some(l) = intensity.lookup(p) {
            if u * lmax < l {
                pts.push(p);
            }
        }
    }
    PointPattern::new(pts, None, w.clone())
}

/// Parent-offspring clusters: uniform parents, each with a fixed number of
/// Gaussian-displaced offspring. Offspring falling outside the window are
/// redrawn around the same parent. Only offspring are returned.
pub fn sim_cluster(
    w: &Arc<Window>,
    n_parents: usize,
    offspring_per_parent: usize,
    sigma: f64,
    seed: RngSeed,
) -> Result<PointPattern> {
    check_window(w)?;
    if n_parents == 0 || offspring_per_parent == 0 {
        return Err(Error::InvalidInput("cluster counts must be at least 1".into()));
    }
    let normal = Normal::new(0.0, sigma)
        .ok()
        .filter(|_| sigma > 0.0 && sigma.is_finite())
        .ok_or_else(|| Error::InvalidInput(format!("sigma must be positive, got {sigma}")))?;
    let mut rng = seed.rng();
    let mut pts = Vec::with_capacity(n_parents * offspring_per_parent);
    for _ in 0..n_parents {
        let parent = uniform_in_window(w, &mut rng);
        for _ in 0..offspring_per_parent {
            let child = loop {
                let c = parent.translate(normal.sample(&mut rng), normal.sample(&mut rng));
                if w.contains(c) {
                    break c;
                }
            };
            pts.push(child);
        }
    }
    PointPattern::new(pts, None, w.clone())
}
