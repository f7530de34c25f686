//! Finite-measure verification of the constructions behind the non-homogeneous local Tb theorem.

pub mod czo;
pub mod error;
pub mod geometry;
pub mod martingale;
pub mod measure;
pub mod pairing;
pub mod rng;
pub mod scalar;
pub mod stopping;
pub mod suites;
pub mod testfns;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete `f64` instantiations of the generic layers.
pub type Measure = measure::DiscreteMeasure<f64>;
pub type Function = measure::AtomFn<f64>;
pub type Tree = tree::CubeTree<f64>;
pub type Operator = czo::DiscretizedOperator<f64>;
pub type Family = testfns::TestFunctionFamily<f64>;
pub type Stopping = stopping::StoppingTree<f64>;
pub type Expansion = martingale::Decomposition<f64>;
pub type Maximal = measure::MaximalEngine<f64>;
