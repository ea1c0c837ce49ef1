//! The pipeline stages behind each subcommand.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use sppa_core::geometry::geojson::{read_window, CoordinateUnits};
use sppa_core::inference::{default_r_grid, k_envelope, ks_test_covariate, quadrat_test, KEstimator};
use sppa_core::model::{
    build_quadrature, fit_ppm, predict_intensity, residuals, stepwise_backward, Covariate, FittedModel, ResidualKind,
    Transform,
};
use sppa_core::pattern::{count_within, read_points, write_points};
use sppa_core::raster::ascii::read_ascii_grid;
use sppa_core::sim::{sim_cluster, sim_csr, sim_inhomogeneous, sim_poisson, RngSeed};
use sppa_core::smoothing::{bw_lscv_density, bw_scott, kernel_intensity, nw_smooth, Bandwidth, SearchRange};
use sppa_core::{build_grid, PixelImage, PointPattern, Window};

use crate::config::{AnalysisConfig, CovariateConfig, CovariateKind};
use crate::error::{CliError, Result};
use crate::render::{encode_png, render, Palette};
use crate::report::Outputs;

/// Window, grid and coordinate handling shared by the config-driven commands.
pub struct Context {
    pub cfg: AnalysisConfig,
    pub window: Arc<Window>,
    pub grid: PixelImage,
    pub units: CoordinateUnits,
}

impl Context {
    pub fn load(cfg: AnalysisConfig) -> Result<Self> {
        cfg.validate()?;
        let units = cfg.units()?;
        let path = cfg.resolve(&cfg.window.path);
        let window = read_window(&path, units).map_err(|e| CliError::input(format!("window {}", path.display()), e))?;
        let grid = build_grid(cfg.grid, &window)?;
        Ok(Self {
            cfg,
            window: Arc::new(window),
            grid,
            units,
        })
    }

    fn read_pattern(&self, what: &str, path: &Path) -> Result<(PointPattern, usize)> {
        let full = self.cfg.resolve(path);
        let ctx = || format!("{what} {}", full.display());
        let file = File::open(&full).map_err(|e| CliError::input(ctx(), e.into()))?;
        read_points(file, &self.units, self.window.clone()).map_err(|e| CliError::input(ctx(), e))
    }

    /// The response pattern and the number of its points dropped outside the window.
    pub fn points(&self) -> Result<(PointPattern, usize)> {
        let path = self
            .cfg
            .points
            .as_ref()
            .ok_or_else(|| CliError::Config("no points file configured".into()))?;
        self.read_pattern("points", path)
    }

    /// Builds one covariate image on the analysis grid.
    pub fn covariate_image(&self, c: &CovariateConfig) -> Result<PixelImage> {
        let ctx = format!("covariate {}", c.name);
        let wrap = |e: sppa_core::Error| CliError::input(ctx.clone(), e);
        let iso = |s: Option<f64>| Bandwidth::isotropic(s.unwrap_or(f64::NAN)).map_err(wrap);
        let marks_of = |p: &PointPattern| -> Result<Vec<f64>> {
            p.marks()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| CliError::Config(format!("{ctx} needs a mark column in {}", c.path.display())))
        };
        match c.kind {
            CovariateKind::Raster => {
                let full = self.cfg.resolve(&c.path);
                let src = read_ascii_grid(&full).map_err(wrap)?;
                Ok(self.grid.resample_from(&src))
            }
            kind => {
                let (p, _) = self.read_pattern(&ctx, &c.path)?;
                match kind {
                    CovariateKind::PointSmooth => nw_smooth(&p, iso(c.sigma)?, &self.grid).map_err(wrap),
                    CovariateKind::WeightedIntensity => {
                        let w = marks_of(&p)?;
                        kernel_intensity(&p, iso(c.sigma)?, &self.grid, Some(&w)).map_err(wrap)
                    }
                    CovariateKind::NeighborCount => {
                        count_within(&p, &self.grid, c.radius.unwrap_or(f64::NAN)).map_err(wrap)
                    }
                    CovariateKind::Raster => unreachable!(),
                }
            }
        }
    }

    pub fn covariates(&self) -> Result<Vec<Covariate>> {
        self.cfg
            .covariates
            .iter()
            .map(|c| {
                let transform = if c.log_transform { Transform::Log } else { Transform::Identity };
                Ok(Covariate::new(c.name.clone(), self.covariate_image(c)?, transform))
            })
            .collect()
    }

    pub fn config_echo(&self) -> Result<Value> {
        Ok(serde_json::to_value(&self.cfg)?)
    }
}

fn bandwidth_json(b: Bandwidth) -> Value {
    json!({ "sigma_x": b.sigma_x, "sigma_y": b.sigma_y })
}

fn image_summary(img: &PixelImage) -> Value {
    let (min, max) = img.min_max().map_or((None, None), |(a, b)| (Some(a), Some(b)));
    json!({
        "defined_cells": img.defined_count(),
        "masked_cells": img.masked_count(),
        "min": min,
        "max": max,
        "integral": img.integrate(),
    })
}

/// Response bandwidth: configured σ, else Scott's rule.
fn response_bandwidth(cfg: &AnalysisConfig, p: &PointPattern) -> Result<Bandwidth> {
    match cfg.sigma {
        Some(s) => Ok(Bandwidth::isotropic(s)?),
        None => Ok(bw_scott(p)?),
    }
}

pub fn cmd_density(ctx: &Context, out: &mut Outputs) -> Result<Value> {
    let (p, dropped) = ctx.points()?;
    let n = p.len();
    if n == 0 {
        log::warn!("points file holds no points inside the window; writing a zero raster");
        out.write_raster("intensity.asc", &ctx.grid)?;
        return Ok(json!({
            "n": 0,
            "n_dropped": dropped,
            "sigma": { "configured": ctx.cfg.sigma, "used": null, "scott": null, "lscv": null },
            "integral": 0.0,
            "intensity": image_summary(&ctx.grid),
            "raster": "intensity.asc",
        }));
    }
    let scott = if n >= 2 { Some(bw_scott(&p)?) } else { None };
    let lscv = if n >= 2 {
        let range = SearchRange::for_window(ctx.window.diameter());
        Some(out.stage("lscv", |_| Ok(bw_lscv_density(&p, &ctx.grid, range)?))?)
    } else {
        None
    };
    let bw = response_bandwidth(&ctx.cfg, &p)?;
    let lambda = out.stage("intensity", |_| Ok(kernel_intensity(&p, bw, &ctx.grid, None)?))?;
    out.write_raster("intensity.asc", &lambda)?;
    let integral = lambda.integrate();
    Ok(json!({
        "n": n,
        "n_dropped": dropped,
        "sigma": {
            "configured": ctx.cfg.sigma,
            "used": bandwidth_json(bw),
            "scott": scott.map(bandwidth_json),
            "lscv": lscv.map(|c| json!({
                "sigma": c.sigma,
                "criterion": c.criterion,
                "at_boundary": c.at_boundary,
                "multimodal": c.multimodal,
                "degenerate": c.degenerate,
            })),
        },
        "integral": integral,
        "integral_over_n": integral / n as f64,
        "intensity": image_summary(&lambda),
        "raster": "intensity.asc",
    }))
}

pub fn cmd_smooth_covariate(ctx: &Context, only: Option<&str>, out: &mut Outputs) -> Result<Value> {
    let selected: Vec<&CovariateConfig> = ctx
        .cfg
        .covariates
        .iter()
        .filter(|c| only.is_none_or(|n| n == c.name))
        .collect();
    if let Some(name) = only {
        if selected.is_empty() {
            return Err(CliError::Config(format!("no covariate named {name}")));
        }
    }
    let mut results = Vec::new();
    for c in selected {
        let img = out.stage(&format!("covariate {}", c.name), |_| ctx.covariate_image(c))?;
        let file = format!("covariate_{}.asc", c.name);
        out.write_raster(&file, &img)?;
        results.push(json!({
            "name": c.name,
            "kind": c.kind,
            "log_transform": c.log_transform,
            "raster": file,
            "summary": image_summary(&img),
        }));
    }
    Ok(json!({ "covariates": results }))
}

/// Radii for the K function: `r_steps` values from 0 to `r_max`.
fn r_grid(ctx: &Context) -> Vec<f64> {
    let steps = ctx.cfg.tests.r_steps;
    match ctx.cfg.tests.r_max {
        Some(rmax) => (0..steps).map(|i| rmax * i as f64 / (steps - 1) as f64).collect(),
        None => default_r_grid(&ctx.window, steps),
    }
}

pub fn cmd_test(ctx: &Context, out: &mut Outputs) -> Result<Value> {
    let (p, dropped) = ctx.points()?;
    let covs = ctx.covariates()?;
    let t = &ctx.cfg.tests;
    let quadrat = out.stage("quadrat", |_| Ok(quadrat_test(&p, t.quadrat[0], t.quadrat[1], &ctx.grid)?))?;
    let mut ks = Vec::new();
    for c in &covs {
        let r = out.stage(&format!("ks {}", c.name), |_| {
            ks_test_covariate(&p, &c.image).map_err(|e| CliError::input(format!("covariate {}", c.name), e))
        })?;
        ks.push(json!({ "covariate": c.name, "result": r }));
    }
    let envelope = out.stage("k_envelope", |_| {
        let est = KEstimator::new(ctx.window.clone(), ctx.cfg.grid)?;
        Ok(k_envelope(&est, &p, t.nsim, &r_grid(ctx), RngSeed::new(ctx.cfg.seed, 0))?)
    })?;
    Ok(json!({
        "n": p.len(),
        "n_dropped": dropped,
        "quadrat": quadrat,
        "ks": ks,
        "k_envelope": envelope.to_result(p.len()),
    }))
}

pub fn model_json(m: &FittedModel) -> Value {
    let coefficients: Vec<Value> = (0..m.names.len())
        .map(|k| {
            json!({
                "name": m.names[k],
                "beta": m.beta()[k],
                "se": m.se[k],
                "z": m.beta()[k] / m.se[k],
                "p": m.p_values[k],
            })
        })
        .collect();
    json!({
        "coefficients": coefficients,
        "loglik": m.loglik,
        "converged": m.converged,
        "iterations": m.iterations,
        "max_abs_score": m.score.iter().fold(0.0f64, |a, s| a.max(s.abs())),
        "n_data": m.n_data,
        "n_quadrature": m.n_quadrature,
    })
}

fn tails(img: &PixelImage, q: f64) -> Result<Value> {
    if img.defined_count() == 0 {
        return Ok(Value::Null);
    }
    Ok(json!({
        "lower": img.quantile_threshold(q)?,
        "upper": img.quantile_threshold(1.0 - q)?,
    }))
}

pub fn cmd_fit(ctx: &Context, out: &mut Outputs) -> Result<Value> {
    let (p, dropped) = ctx.points()?;
    if p.is_empty() {
        return Err(CliError::Config("fit needs at least one point inside the window".into()));
    }
    let covs = ctx.covariates()?;
    let mc = &ctx.cfg.model;
    let q = build_quadrature(&p, &covs, &ctx.grid)?;
    let full = out.stage("fit", |_| Ok(fit_ppm(&q)?))?;
    if !full.converged {
        log::warn!("full model did not converge");
    }
    let (model, removed) = if mc.stepwise {
        let (m, trace) = out.stage("stepwise", |_| Ok(stepwise_backward(&q, mc.alpha)?))?;
        (m, Some(trace))
    } else {
        (full.clone(), None)
    };
    let hat = predict_intensity(&model.predictor, &covs, &ctx.grid)?;
    let bw = response_bandwidth(&ctx.cfg, &p)?;
    let star = kernel_intensity(&p, bw, &ctx.grid, None)?;
    let (raw, _) = residuals(&star, &hat, ResidualKind::Raw)?;
    let (pearson, pearson_missing) = residuals(&star, &hat, ResidualKind::Pearson)?;
    out.write_raster("lambda_hat.asc", &hat)?;
    out.write_raster("lambda_star.asc", &star)?;
    out.write_raster("residual_raw.asc", &raw)?;
    out.write_raster("residual_pearson.asc", &pearson)?;
    let mut residual_report = json!({
        "tail": mc.residual_tail,
        "raw": tails(&raw, mc.residual_tail)?,
        "pearson": tails(&pearson, mc.residual_tail)?,
        "pearson_missing_cells": pearson_missing,
        "raw_integral": raw.integrate(),
    });
    if mc.conventional_pearson {
        let (conv, _) = residuals(&star, &hat, ResidualKind::PearsonConventional)?;
        out.write_raster("residual_pearson_conventional.asc", &conv)?;
        residual_report["pearson_conventional"] = tails(&conv, mc.residual_tail)?;
    }
    Ok(json!({
        "n": p.len(),
        "n_dropped_outside": dropped,
        "quadrature": {
            "n_data": q.n_data,
            "n_points": q.len(),
            "dropped_data": q.dropped_data,
            "dropped_dummy": q.dropped_dummy,
            "total_weight": q.total_weight(),
        },
        "full_model": model_json(&full),
        "stepwise": removed.map(|r| json!({ "alpha": mc.alpha, "removed": r })),
        "model": model_json(&model),
        "response_bandwidth": bandwidth_json(bw),
        "residuals": residual_report,
        "intensity": image_summary(&hat),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Process {
    /// Fixed number of uniform points.
    Csr,
    /// Homogeneous Poisson process.
    Poisson,
    /// Thinned Poisson process driven by an intensity raster.
    Inhomogeneous,
    /// Gaussian parent-offspring clusters.
    Cluster,
}

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "csr")]
    pub process: Process,
    /// Number of points (csr).
    #[arg(long)]
    pub n: Option<usize>,
    /// Points per km² (poisson).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Intensity raster (inhomogeneous).
    #[arg(long)]
    pub intensity: Option<PathBuf>,
    #[arg(long)]
    pub parents: Option<usize>,
    #[arg(long)]
    pub offspring: Option<usize>,
    /// Offspring displacement sd in km (cluster).
    #[arg(long)]
    pub cluster_sigma: Option<f64>,
}

fn required<T>(v: Option<T>, flag: &str, process: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Config(format!("--{flag} is required for process {process}")))
}

pub fn cmd_simulate(ctx: &Context, args: &SimulateArgs, out: &mut Outputs) -> Result<Value> {
    let seed = RngSeed::new(ctx.cfg.seed, 0);
    let w = &ctx.window;
    let p = match args.process {
        Process::Csr => sim_csr(w, required(args.n, "n", "csr")?, seed)?,
        Process::Poisson => sim_poisson(w, required(args.lambda, "lambda", "poisson")?, seed)?,
        Process::Inhomogeneous => {
            let path = required(args.intensity.as_ref(), "intensity", "inhomogeneous")?;
            let img = read_ascii_grid(path).map_err(|e| CliError::input(format!("intensity {}", path.display()), e))?;
            sim_inhomogeneous(w, &img, seed)?
        }
        Process::Cluster => sim_cluster(
            w,
            required(args.parents, "parents", "cluster")?,
            required(args.offspring, "offspring", "cluster")?,
            required(args.cluster_sigma, "cluster-sigma", "cluster")?,
            seed,
        )?,
    };
    let mut buf = Vec::new();
    write_points(&p, &mut buf)?;
    out.write_bytes("simulated.csv", &buf)?;
    Ok(json!({
        "process": format!("{:?}", args.process).to_lowercase(),
        "n": p.len(),
        "points": "simulated.csv",
    }))
}

/// Renders a raster to `png` and writes `<stem>.legend.json` next to it.
pub fn cmd_render(raster: &Path, palette: Palette, classes: usize, png: &Path) -> Result<Vec<PathBuf>> {
    let img = read_ascii_grid(raster).map_err(|e| CliError::input(format!("raster {}", raster.display()), e))?;
    let (pixels, legend) = render(&img, palette, classes)?;
    if let Some(dir) = png.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(png, encode_png(&pixels)?)?;
    let legend_path = png.with_extension("legend.json");
    let mut text = serde_json::to_string_pretty(&legend)?;
    text.push('\n');
    std::fs::write(&legend_path, text)?;
    Ok(vec![png.to_path_buf(), legend_path])
}
