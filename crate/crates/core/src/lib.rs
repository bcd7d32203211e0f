//! Density-sensitive semisupervised kernel regression.
//!
//! Unlabeled data give a kernel density estimate on a grid; the estimate
//! defines a density-weighted geodesic distance, realized as shortest paths
//! through the eroded support; labels are then averaged over geodesic
//! neighborhoods. The density sensitivity `alpha` and bandwidth `h` are chosen
//! by hold-out validation, with `alpha = 0` (plain Euclidean distance) always
//! among the candidates.

pub mod adapt;
pub mod density;
pub mod error;
pub mod experiment;
pub mod geodesic;
pub mod model;
pub mod regress;
pub mod synth;

pub use error::{Error, Result};
