//! Spatial point-pattern analysis in a polygonal window.
//!
//! The crate covers the whole analysis chain: projecting and masking a window
//! onto a pixel grid, kernel intensity estimation with edge correction,
//! Nadaraya-Watson smoothing of marks, tests of complete spatial randomness,
//! and loglinear Poisson regression on a Berman-Turner quadrature scheme.

pub mod error;
pub mod geometry;
pub mod inference;
pub mod model;
pub mod pattern;
pub mod raster;
pub mod sim;
pub mod smoothing;

pub use error::{Error, Result};
pub use geometry::{distance, polygon_area, PlanarPoint, Window};
pub use pattern::PointPattern;
pub use raster::{build_grid, GridSpec, PixelImage};
