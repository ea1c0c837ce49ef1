//! Synthetic study area shared by the CLI tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use sppa_core::geometry::geojson::window_to_value;
use sppa_core::pattern::write_points;
use sppa_core::raster::ascii::write_ascii_grid;
use sppa_core::sim::{sim_csr, sim_inhomogeneous, RngSeed};
use sppa_core::{build_grid, GridSpec, PixelImage, PlanarPoint, PointPattern, Window};

pub fn sppa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sppa"))
        .args(args)
        .output()
        .expect("failed to run sppa")
}

pub fn study_window() -> Window {
    let outer = [(0.0, 0.0), (120.0, 10.0), (140.0, 70.0), (90.0, 110.0), (20.0, 95.0), (-10.0, 40.0)]
        .iter()
        .map(|&(x, y)| PlanarPoint::new(x, y))
        .collect();
    Window::new(outer, vec![]).unwrap()
}

/// A fitted-model truth: log λ = -3 + 2·east with east = x/100.
pub fn truth(grid: &PixelImage) -> PixelImage {
    grid.fill(|_, c| Some((-3.0 + 2.0 * c.x / 100.0).exp()))
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap()
    }
}

fn write_pattern(p: &PointPattern, path: &Path) {
    let mut buf = Vec::new();
    write_points(p, &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

/// Window, inhomogeneous points, two rasters and two site files, plus a
/// config referring to all of them. `extra` is appended to the config.
pub fn fixture(seed: u64, extra: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let w = Arc::new(study_window());
    let grid = build_grid(GridSpec { nx: 48, ny: 48 }, &w).unwrap();
    std::fs::write(dir.path().join("window.geojson"), window_to_value(&w).to_string()).unwrap();

    let p = sim_inhomogeneous(&w, &truth(&grid), RngSeed::new(seed, 0)).unwrap();
    write_pattern(&p, &dir.path().join("points.csv"));

    write_ascii_grid(&grid.fill(|_, c| Some(c.x / 100.0)), &dir.path().join("east.asc")).unwrap();
    let noise = grid.fill(|k, _| Some(((k * 7919 + seed as usize * 31) % 1009) as f64 / 1009.0));
    write_ascii_grid(&noise, &dir.path().join("noise.asc")).unwrap();

    let towns = sim_csr(&w, 60, RngSeed::new(seed, 1)).unwrap();
    let sizes: Vec<f64> = (0..towns.len()).map(|i| 100.0 + (i * 37 % 50) as f64 * 20.0).collect();
    write_pattern(&towns.with_marks(sizes).unwrap(), &dir.path().join("towns.csv"));
    let plants = sim_csr(&w, 25, RngSeed::new(seed, 2)).unwrap();
    write_pattern(&plants, &dir.path().join("plants.csv"));

    let config = format!(
        r#"points = "points.csv"
sigma = 8.0
seed = {seed}
output_dir = "out"

[window]
path = "window.geojson"

[grid]
nx = 48
ny = 48

[[covariates]]
name = "east"
path = "east.asc"
kind = "raster"

[[covariates]]
name = "noise"
path = "noise.asc"
kind = "raster"

[[covariates]]
name = "pop"
path = "towns.csv"
kind = "weighted-intensity"
sigma = 10.0
log_transform = true

[[covariates]]
name = "plants"
path = "plants.csv"
kind = "neighbor-count"
radius = 15.0

[tests]
quadrat = [4, 4]
nsim = 19
r_steps = 11
{extra}"#
    );
    let config_path = dir.path().join("analysis.toml");
    std::fs::write(&config_path, config).unwrap();
    Fixture { dir, config: config_path }
}
