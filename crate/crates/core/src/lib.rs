//! Robust finite-dimensional approximation of Koopman and Perron–Frobenius
//! operators from noisy time series.
//!
//! Conventions: a dictionary maps a state `x` to a feature row `Psi(x)`; every
//! estimator returns `K` with `Psi(x_{m+1}) ~ Psi(x_m) K`, and the
//! Perron–Frobenius estimate is `K^T`.

pub mod dictionary;
pub mod edmd;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nsdmd;
pub mod predictor;
pub mod robust;
pub mod simulators;
pub mod snapshots;
pub mod spectrum;
pub mod subspace;

pub use dictionary::{gram, Dictionary, DictionaryKind, FeatureVector};
pub use edmd::{dmd, edmd, pf_from_koopman, Method, OperatorEstimate, SolverInfo};
pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use nsdmd::{nsdmd_robust, pf_estimate, NsdmdResult};
pub use predictor::{fit_output_map, fit_output_map_with, prediction_error, OutputFit, OutputMap, PredictionError, Predictor};
pub use robust::{robust_lasso, robust_tikhonov, uncertainty_bound, worst_case, RobustConfig, UncertaintyModel, WorstCase};
pub use snapshots::{assemble, GramPair, SnapshotMatrix};
pub use spectrum::{analyze, spectral_distance, SpectrumReport};
pub use subspace::{subspace_dmd, ObservationMatrix, SpectralModes};
