//! Image interpolation with a gradient graph Laplacian regularizer (GGLR).
//!
//! Missing pixels are recovered by minimizing `‖Hx − y‖² + μ xᵀ(ℒʰ + ℒᵛ)x`,
//! where `ℒ = FᵀLF` lifts a Laplacian `L` built on the image's horizontal or
//! vertical gradient field back to the pixel domain. Planar patches have zero
//! regularizer value, so linear ramps are reconstructed without staircasing.

pub mod bench;
pub mod cg;
pub mod degrade;
pub mod error;
pub mod gradient;
pub mod graph;
pub mod grid;
pub mod metrics;
pub mod mu_select;
pub mod netpbm;
pub mod solver;
pub mod sparse;
pub mod structure_tensor;

pub use error::{GglrError, Result};
pub use gradient::{Direction, GradientField};
pub use graph::{Connectivity, GradientGraph, LiftedLaplacian};
pub use grid::{ImageGrid, PixelMask};
pub use mu_select::SpectralSummary;
pub use solver::{interpolate, restore, Method, MuSetting, SolveConfig, SolveReport};
pub use sparse::SparseMatrix;
