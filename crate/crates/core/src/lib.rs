//! Efficiency bounds and shape estimation for elliptically symmetric distributions.

// `!(x > 0.0)` guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptivity;
pub mod bounds;
pub mod complex_ces;
pub mod elliptical;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod matcalc;
pub mod quad;
pub mod scale_shape;
pub mod scores_fim;

pub use elliptical::{Coefficients, DensityGenerator, Family, ModularVariate};
pub use error::{CesError, Result};
pub use matcalc::VecHalf;
pub use scale_shape::{ScaleFunctional, ShapeDecomposition};
pub use adaptivity::{LowRankModel, Parameterization};
pub use scores_fim::FimBlocksEta;
pub use bounds::BoundSet;
pub use complex_ces::{ComplexLowRank, RectilinearModel};
pub use estimators::{Method, ScoreFunction, ShapeEstimate};
pub use harness::{Config, SimConfig, SimResult};
