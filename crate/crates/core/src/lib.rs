//! Invasion fronts of a cancer stem cell / tumour cell model.
//!
//! Simulation of the rescaled two-species system, front tracking with
//! logarithmic corrections, linear spreading speeds from the dispersion
//! relation, travelling-wave relaxation, weighted spectra and total-mass
//! analysis.

// negated comparisons reject NaN along with out-of-range values; index loops
// mirror the stencil formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dispersion;
pub mod error;
pub mod experiments;
pub mod front;
pub mod linalg;
pub mod mass;
pub mod model;
pub mod pde;
pub mod spectrum;
pub mod wave;

pub use error::{Error, Result};
pub use model::{ModelParams, Regime, SpeedPrediction};
