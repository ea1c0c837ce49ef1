//! Loglinear Poisson point-process regression, `λ(u) = exp(Z(u) β)`.
//!
//! The likelihood is approximated on a Berman-Turner quadrature scheme (data
//! points plus one dummy point per masked cell) and maximized as a weighted
//! Poisson regression by Newton-Raphson / Fisher scoring, which for the log
//! link coincide with IRLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;
use crate::pattern::PointPattern;
use crate::raster::PixelImage;

pub const INTERCEPT: &str = "(Intercept)";

/// Relative objective change at which the fit is declared converged.
pub const REL_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    Log,
}

impl Transform {
    pub fn apply(self, v: f64) -> Option<f64> {
        match self {
            Transform::Identity => v.is_finite().then_some(v),
            Transform::Log => (v > 0.0 && v.is_finite()).then(|| v.ln()),
        }
    }
}

/// A named covariate image with the transform applied before modeling.
#[derive(Debug, Clone)]
pub struct Covariate {
    pub name: String,
    pub image: PixelImage,
    pub transform: Transform,
}

impl Covariate {
    pub fn new(name: impl Into<String>, image: PixelImage, transform: Transform) -> Self {
        Self {
            name: name.into(),
            image,
            transform,
        }
    }

    fn term(&self) -> Term {
        Term {
            covariate: self.name.clone(),
            transform: self.transform,
        }
    }

    /// Transformed covariate value at `p`, if defined.
    pub fn value_at(&self, p: PlanarPoint) -> Option<f64> {
        self.image.lookup(p).and_then(|v| self.transform.apply(v))
    }
}

/// One non-intercept model column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub covariate: String,
    pub transform: Transform,
}

impl Term {
    pub fn label(&self) -> String {
        match self.transform {
            Transform::Identity => self.covariate.clone(),
            Transform::Log => format!("log({})", self.covariate),
        }
    }
}

/// Data and dummy points with quadrature weights and model rows.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    pub points: Vec<PlanarPoint>,
    pub is_data: Vec<bool>,
    pub weights: Vec<f64>,
    /// Model rows, first entry 1 (intercept).
    pub z: Vec<Vec<f64>>,
    pub terms: Vec<Term>,
    pub n_data: usize,
    pub dropped_data: usize,
    pub dropped_dummy: usize,
}

impl QuadratureScheme {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.terms.iter().map(Term::label))
            .collect()
    }

    pub fn ncols(&self) -> usize {
        1 + self.terms.len()
    }

    /// Same scheme without model column `col` (1-based over terms; 0 is the intercept).
    pub fn drop_column(&self, col: usize) -> Result<Self> {
        if col == 0 || col >= self.ncols() {
            return Err(Error::InvalidInput(format!("cannot drop column {col}")));
        }
        let mut out = self.clone();
        out.terms.remove(col - 1);
        for row in &mut out.z {
            row.remove(col);
        }
        Ok(out)
    }

    /// Same scheme with the term columns reordered by `order` (indices into `terms`).
    pub fn permute_terms(&self, order: &[usize]) -> Result<Self> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.terms.len()).collect::<Vec<_>>() {
            return Err(Error::InvalidInput("not a permutation of the terms".into()));
        }
        let mut out = self.clone();
        out.terms = order.iter().map(|&k| self.terms[k].clone()).collect();
        for (row, src) in out.z.iter_mut().zip(&self.z) {
            for (slot, &k) in order.iter().enumerate() {
                row[slot + 1] = src[k + 1];
            }
        }
        Ok(out)
    }
}

/// Berman-Turner quadrature: data points plus one dummy point per masked cell
/// center. Each point's weight is the cell area divided by the number of
/// retained quadrature points sharing its cell. Points whose cell is unmasked
/// or whose covariates are missing are dropped and counted.
pub fn build_quadrature(data: &PointPattern, covariates: &[Covariate], grid: &PixelImage) -> Result<QuadratureScheme> {
    if let Some(c) = covariates.iter().find(|c| !c.image.same_grid(grid)) {
        return Err(Error::InvalidInput(format!(
            "covariate {} is not on the analysis grid",
            c.name
        )));
    }
    let row_at = |p: PlanarPoint| -> Option<Vec<f64>> {
        let mut row = Vec::with_capacity(1 + covariates.len());
        row.push(1.0);
        for c in covariates {
            row.push(c.value_at(p)?);
        }
        Some(row)
    };
    let mut cells = Vec::new();
    let mut points = Vec::new();
    let mut is_data = Vec::new();
    let mut z = Vec::new();
    let mut dropped_data = 0;
    for &p in data.points() {
        match grid.cell_index(p).filter(|&k| grid.is_masked(k)).zip(row_at(p)) {
            Some((k, row)) => {
                cells.push(k);
                points.push(p);
                is_data.push(true);
                z.push(row);
            }
            None => dropped_data += 1,
        }
    }
    let n_data = points.len();
    let mut dropped_dummy = 0;
    for (k, c) in grid.masked_cells() {
        match row_at(c) {
            Some(row) => {
                cells.push(k);
                points.push(c);
                is_data.push(false);
                z.push(row);
            }
            None => dropped_dummy += 1,
        }
    }
    let mut counts = vec![0usize; grid.len()];
    for &k in &cells {
        counts[k] += 1;
    }
    let area = grid.cell_area();
    let weights = cells.iter().map(|&k| area / counts[k] as f64).collect();
    if dropped_data > 0 {
        log::warn!("quadrature: dropped {dropped_data} data point(s) with missing covariates");
    }
    Ok(QuadratureScheme {
        points,
        is_data,
        weights,
        z,
        terms: covariates.iter().map(Covariate::term).collect(),
        n_data,
        dropped_data,
        dropped_dummy,
    })
}

/// Coefficients of a loglinear intensity, independent of how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub terms: Vec<Term>,
    /// `beta[0]` is the intercept; `beta[k]` belongs to `terms[k - 1]`.
    pub beta: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(terms: Vec<Term>, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != terms.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for {} terms plus intercept",
                beta.len(),
                terms.len()
            )));
        }
        Ok(Self { terms, beta })
    }

    fn check_row(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.terms.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} covariate values, got {}",
                self.terms.len(),
                z.len()
            )));
        }
        Ok(())
    }

    /// `Σ z_j β_j` for transformed covariate values `z` (intercept excluded).
    pub fn eta(&self, z: &[f64]) -> Result<f64> {
        self.check_row(z)?;
        Ok(self.beta[0] + z.iter().zip(&self.beta[1..]).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn intensity(&self, z: &[f64]) -> Result<f64> {
        Ok(self.eta(z)?.exp())
    }

    /// Multiplicative contribution `exp(z_j β_j)` of each term.
    pub fn factors(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_row(z)?;
        Ok(z.iter().zip(&self.beta[1..]).map(|(a, b)| (a * b).exp()).collect())
    }

    /// `∂λ/∂z_j = β_j λ(z)`, with `j = 0` the intercept column (constant 1).
    pub fn derivative(&self, z: &[f64], j: usize) -> Result<f64> {
        if j >= self.beta.len() {
            return Err(Error::InvalidInput(format!("no model column {j}")));
        }
        Ok(self.beta[j] * self.intensity(z)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedModel {
    pub predictor: LinearPredictor,
    pub names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Score vector `Σ w (y - λ) Z` at the returned coefficients.
    pub score: Vec<f64>,
    pub n_data: usize,
    pub n_quadrature: usize,
}

impl FittedModel {
    pub fn beta(&self) -> &[f64] {
        &self.predictor.beta
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.predictor.beta[k])
    }
}

/// Two-sided normal p-value of a Wald ratio.
pub fn wald_pvalue(beta: f64, se: f64) -> Result<f64> {
    if !(se > 0.0) {
        return Err(Error::InvalidInput(format!("standard error must be positive, got {se}")));
    }
    Ok(erfc((beta / se).abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// Names the columns that are (numerically) linear combinations of earlier ones.
fn collinear_columns(q: &QuadratureScheme) -> Vec<String> {
    let p = q.ncols();
    let names = q.column_names();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..p {
        let mut v: Vec<f64> = q.z.iter().map(|row| row[j]).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            bad.push(names[j].clone());
        } else {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    bad
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    info: DMatrix<f64>,
}

fn evaluate(q: &QuadratureScheme, beta: &DVector<f64>) -> Evaluation {
    let p = q.ncols();
    let mut loglik = 0.0;
    let mut score = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for ((row, &w), &data) in q.z.iter().zip(&q.weights).zip(&q.is_data) {
        let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        let lambda = eta.exp();
        let wl = w * lambda;
        // w·y = 1 at data points, 0 at dummies
        let resid = if data { 1.0 - wl } else { -wl };
        if data {
            loglik += eta;
        }
        loglik -= wl;
        for a in 0..p {
            score[a] += resid * row[a];
            let ra = wl * row[a];
            for b in 0..=a {
                info[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    Evaluation { loglik, score, info }
}

/// Maximizes the quadrature approximation of the Poisson log-likelihood
/// `Σ_j w_j (y_j log λ_j - λ_j)`, `y_j = 1/w_j` at data points and 0 at dummies.
///
/// Stops when the relative change of the objective drops below
/// [`REL_TOLERANCE`], or after [`MAX_ITERATIONS`] with `converged = false`.
pub fn fit_ppm(q: &QuadratureScheme) -> Result<FittedModel> {
    if q.is_empty() {
        return Err(Error::InvalidInput("empty quadrature scheme".into()));
    }
    let bad = collinear_columns(q);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let p = q.ncols();
    let mut beta = DVector::zeros(p);
    beta[0] = (q.n_data.max(1) as f64 / q.total_weight()).ln();
    let mut cur = evaluate(q, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let chol = cur
            .info
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("Fisher information is not positive definite".into()))?;
        let step = chol.solve(&cur.score);
        let mut t = 1.0;
        let mut next_beta = &beta + &step;
        let mut next = evaluate(q, &next_beta);
        while next.loglik < cur.loglik && t > 1e-9 {
            t *= 0.5;
            next_beta = &beta + &step * t;
            next = evaluate(q, &next_beta);
        }
        let rel = (next.loglik - cur.loglik).abs() / cur.loglik.abs().max(f64::MIN_POSITIVE);
        let improved = next.loglik >= cur.loglik;
        if improved {
            beta = next_beta;
            cur = next;
        }
        if !improved || rel < REL_TOLERANCE {
            converged = improved || rel < REL_TOLERANCE;
            break;
        }
    }
    if converged {
        // one more Newton step from the converged point sharpens the score
        // equations without affecting the stopping rule
        if let Some(chol) = cur.info.clone().cholesky() {
            let polished = &beta + chol.solve(&cur.score);
            let next = evaluate(q, &polished);
            // near the optimum the objective is flat to rounding, so judge by the score
            if next.score.amax() <= cur.score.amax() {
                beta = polished;
                cur = next;
            }
        }
    } else {
        log::warn!("IRLS did not converge after {iterations} iterations");
    }
    let cov_mat = cur
        .info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("Fisher information is singular at the estimate".into()))?;
    let covariance: Vec<Vec<f64>> = (0..p).map(|a| (0..p).map(|b| cov_mat[(a, b)]).collect()).collect();
    let se: Vec<f64> = (0..p).map(|a| cov_mat[(a, a)].max(0.0).sqrt()).collect();
    let p_values = beta
        .iter()
        .zip(&se)
        .map(|(&b, &s)| wald_pvalue(b, s).unwrap_or(f64::NAN))
        .collect();
    Ok(FittedModel {
        predictor: LinearPredictor::new(q.terms.clone(), beta.iter().copied().collect())?,
        names: q.column_names(),
        covariance,
        se,
        p_values,
        loglik: cur.loglik,
        converged,
        iterations,
        score: cur.score.iter().copied().collect(),
        n_data: q.n_data,
        n_quadrature: q.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Removal {
    pub name: String,
    pub p_value: f64,
}

/// Backward elimination: refit, dropping the non-intercept term with the
/// largest p-value while that p-value exceeds `alpha`.
pub fn stepwise_backward(q: &QuadratureScheme, alpha: f64) -> Result<(FittedModel, Vec<Removal>)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut scheme = q.clone();
    let mut trace = Vec::new();
    loop {
        let model = fit_ppm(&scheme)?;
        let worst = model
            .p_values
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, &pv)| (k, pv));
        match worst {
            Some((k, pv)) if pv > alpha => {
                trace.push(Removal {
                    name: model.names[k].clone(),
                    p_value: pv,
                });
                scheme = scheme.drop_column(k)?;
            }
            _ => return Ok((model, trace)),
        }
    }
}

/// Evaluates `exp(Z(u) β)` at every masked cell; cells where any model
/// covariate is missing are missing. Covariates are matched to terms by name.
pub fn predict_intensity(model: &LinearPredictor, covariates: &[Covariate], grid: &PixelImage) -> Result<PixelImage> {
    let images: Vec<&PixelImage> = model
        .terms
        .iter()
        .map(|t| {
            covariates
                .iter()
                .find(|c| c.name == t.covariate)
                .map(|c| &c.image)
                .ok_or_else(|| Error::InvalidInput(format!("no covariate named {}", t.covariate)))
        })
        .collect::<Result<_>>()?;
    Ok(grid.fill(|_, u| {
        let z: Option<Vec<f64>> = model
            .terms
            .iter()
            .zip(&images)
            .map(|(t, img)| img.lookup(u).and_then(|v| t.transform.apply(v)))
            .collect();
        model.eta(&z?).ok().map(f64::exp)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `λ* - λ̂`
    Raw,
    /// `(λ* - λ̂) / λ̂`
    Pearson,
    /// `(λ* - λ̂) / sqrt(λ̂)`
    PearsonConventional,
}

/// Cell-wise residual image, with the count of cells left missing because
/// `λ̂` vanished there.
pub fn residuals(lambda_star: &PixelImage, lambda_hat: &PixelImage, kind: ResidualKind) -> Result<(PixelImage, usize)> {
    let img = lambda_star.zip_with(lambda_hat, |s, h| {
        let raw = s - h;
        match kind {
            ResidualKind::Raw => Some(raw),
            ResidualKind::Pearson => (h > 0.0).then(|| raw / h),
            ResidualKind::PearsonConventional => (h > 0.0).then(|| raw / h.sqrt()),
        }
    })?;
    let both = lambda_star
        .values()
        .iter()
        .zip(lambda_hat.values())
        .filter(|(a, b)| a.is_some() && b.is_some())
        .count();
    Ok((img.clone(), both - img.defined_count()))
}
