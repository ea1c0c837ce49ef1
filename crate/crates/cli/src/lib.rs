//! Batch driver for the `sppa` command-line tool.
//!
//! Each subcommand reads a TOML [`config::AnalysisConfig`], runs one pipeline
//! stage and writes its rasters plus a JSON report with a hashed manifest of
//! every file produced.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sppa_core::GridSpec;

pub mod commands;
pub mod config;
pub mod error;
pub mod render;
pub mod report;

use commands::{Context, SimulateArgs};
use config::AnalysisConfig;
use error::{CliError, Result};
use render::Palette;
use report::Outputs;

#[derive(Debug, Parser)]
#[command(name = "sppa", version, about = "Spatial point-pattern analysis in a polygonal window")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel intensity of the points, with Scott and LSCV bandwidth suggestions.
    Density(RunArgs),
    /// Build covariate rasters on the analysis grid.
    SmoothCovariate {
        #[command(flatten)]
        run: RunArgs,
        /// Only build this covariate.
        #[arg(long)]
        name: Option<String>,
    },
    /// Quadrat, Kolmogorov-Smirnov and K-envelope tests of CSR.
    Test(RunArgs),
    /// Fit the loglinear Poisson model, predict and compute residuals.
    Fit(RunArgs),
    /// Simulate a point pattern in the configured window.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sim: SimulateArgs,
    },
    /// Render an ESRI ASCII raster to a PNG heatmap.
    Render {
        raster: PathBuf,
        #[arg(long, value_enum, default_value = "linear")]
        palette: Palette,
        /// Number of color classes for the quantile palette.
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid size as NXxNY, e.g. 128x128.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridSpec>,
    /// Response bandwidth in km.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Stepwise elimination threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Record per-stage wall times in the report (makes it non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

pub fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got {s}"))?;
    let nx: usize = a.trim().parse().map_err(|_| format!("bad grid width in {s}"))?;
    let ny: usize = b.trim().parse().map_err(|_| format!("bad grid height in {s}"))?;
    if nx == 0 || ny == 0 {
        return Err("grid dimensions must be at least 1".into());
    }
    Ok(GridSpec { nx, ny })
}

impl RunArgs {
    /// Loads the config and applies command-line overrides.
    pub fn config(&self) -> Result<AnalysisConfig> {
        let mut cfg = AnalysisConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = self.grid {
            cfg.grid = g;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = Some(s);
        }
        if let Some(a) = self.alpha {
            cfg.model.alpha = a;
        }
        match &self.out {
            Some(o) => cfg.output_dir = o.clone(),
            None => cfg.output_dir = cfg.resolve(&cfg.output_dir),
        }
        Ok(cfg)
    }
}

fn run_stage<F>(run: &RunArgs, name: &str, f: F) -> Result<PathBuf>
where
    F: FnOnce(&Context, &mut Outputs) -> Result<serde_json::Value>,
{
    let ctx = Context::load(run.config()?)?;
    let mut out = Outputs::create(&ctx.cfg.output_dir, run.timings)?;
    let results = f(&ctx, &mut out)?;
    out.finish(name, ctx.config_echo()?, results)
}

/// Executes a parsed command line; returns the paths of the main outputs.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let report = match &cli.command {
        Command::Density(run) => run_stage(run, "density", commands::cmd_density)?,
        Command::SmoothCovariate { run, name } => run_stage(run, "smooth-covariate", |c, o| {
            commands::cmd_smooth_covariate(c, name.as_deref(), o)
        })?,
        Command::Test(run) => run_stage(run, "test", commands::cmd_test)?,
        Command::Fit(run) => run_stage(run, "fit", commands::cmd_fit)?,
        Command::Simulate { run, sim } => run_stage(run, "simulate", |c, o| commands::cmd_simulate(c, sim, o))?,
        Command::Render {
            raster,
            palette,
            classes,
            out,
        } => return commands::cmd_render(raster, *palette, *classes, out),
    };
    Ok(vec![report])
}
