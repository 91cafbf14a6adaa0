//! Perturbation expansions and proximity bounds for the signal subspace of
//! Hankel trajectory matrices, with the downstream LRF, LS-ESPRIT and SSA
//! reconstruction methods and an experiment harness.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod methods;
pub mod perturb;
pub mod series;
pub mod spectral;
pub mod trajectory;

pub use bounds::{BoundsReport, ZeroPerturbationReport};
pub use error::{Error, Result};
pub use harness::{SweepConfig, SweepResult};
pub use linalg::{Matrix, Vector};
pub use perturb::{DeltaOperator, OperatorKind, PerturbationPair};
pub use series::{Innovation, Series, SeriesSpec};
pub use spectral::{RankPolicy, SpectralDecomposition};
