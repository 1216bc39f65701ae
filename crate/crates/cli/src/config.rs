//! Run configuration: one JSON document per experiment.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use robust_koopman::dictionary::DictionaryKind;
use robust_koopman::predictor::OUTPUT_RCOND;
use robust_koopman::simulators::{
    BurgersParams, RotationParams, StuartLandauParams, SyntheticLinearParams, SYNTHETIC_DIM,
};
use robust_koopman::spectrum::DEFAULT_TOL;
use robust_koopman::{Dictionary, Method, RobustConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "RKOOP_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "rkoop_out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Defaults to the experiment's dictionary.
    #[serde(default)]
    pub dictionary: Option<DictionaryKind>,
    #[serde(default)]
    pub estimators: Option<Vec<EstimatorSpec>>,
    #[serde(default)]
    pub training: Option<Training>,
    /// Prediction steps after the training window.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub bench: BenchSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Rotation {
        #[serde(default)]
        params: RotationParams,
        /// Snapshots to simulate.
        #[serde(default = "rotation_steps")]
        steps: usize,
    },
    StuartLandau {
        #[serde(default)]
        params: StuartLandauParams,
        #[serde(default = "stuart_landau_steps")]
        steps: usize,
    },
    Burgers {
        #[serde(default)]
        params: BurgersParams,
    },
    LinearSynthetic {
        #[serde(default)]
        params: SyntheticLinearParams,
        #[serde(default = "synthetic_steps")]
        steps: usize,
    },
    FromCsv {
        path: PathBuf,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        angle_coords: Vec<usize>,
        #[serde(default = "two_pi")]
        angle_period: f64,
    },
}

fn rotation_steps() -> usize {
    6000
}

fn stuart_landau_steps() -> usize {
    100
}

fn synthetic_steps() -> usize {
    25
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub method: Method,
    /// Output name; defaults to the method name.
    #[serde(default)]
    pub label: Option<String>,
    /// Feature-space radius for robust_tikhonov and nsdmd.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Data-space radius, converted to `lambda` through the uncertainty bound.
    #[serde(default)]
    pub rho: Option<f64>,
    /// l1 weight for robust_lasso.
    #[serde(default)]
    pub c: Option<f64>,
    /// Truncation rank for dmd and subspace_dmd.
    #[serde(default)]
    pub rank: Option<usize>,
    /// Pseudo-inverse cutoff for edmd.
    #[serde(default)]
    pub rcond: Option<f64>,
}

impl EstimatorSpec {
    pub fn new(method: Method) -> Self {
        EstimatorSpec {
            method,
            label: None,
            lambda: None,
            rho: None,
            c: None,
            rank: None,
            rcond: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    fn validate(&self) -> Result<(), CliError> {
        let label = self.label();
        let bad = |what: &str| Err(CliError::Config(format!("estimator `{label}`: {what}")));
        let nonneg = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && x >= 0.0);
        if !(nonneg(self.lambda) && nonneg(self.rho) && nonneg(self.c) && nonneg(self.rcond)) {
            return bad("parameters must be finite and nonnegative");
        }
        if label.is_empty() || !label.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
            return bad("label must be nonempty and use [A-Za-z0-9_-]");
        }
        let (lam, c, rank, rcond) = (
            self.lambda.is_some() || self.rho.is_some(),
            self.c.is_some(),
            self.rank.is_some(),
            self.rcond.is_some(),
        );
        match self.method {
            Method::Edmd if lam || c || rank => bad("edmd takes only rcond"),
            Method::Dmd | Method::SubspaceDmd if lam || c || rcond => bad("takes only rank"),
            Method::RobustTikhonov | Method::Nsdmd if c || rank || rcond => bad("takes only lambda or rho"),
            Method::RobustTikhonov | Method::Nsdmd if self.lambda.is_some() == self.rho.is_some() => {
                bad("give exactly one of lambda and rho")
            }
            Method::RobustLasso if lam || rank || rcond => bad("robust_lasso takes only c"),
            Method::RobustLasso if !c => bad("robust_lasso needs c"),
            _ if self.rank == Some(0) => bad("rank must be positive"),
            _ => Ok(()),
        }
    }
}

/// Snapshots `start .. start + length` are used for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    #[serde(default)]
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub solver: RobustConfig,
    /// Instability threshold on `|lambda| - 1`.
    pub spectrum_tol: f64,
    /// Pseudo-inverse cutoff of the predictor output map.
    pub output_rcond: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver: RobustConfig::default(),
            spectrum_tol: DEFAULT_TOL,
            output_rcond: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    /// Training lengths to sweep; defaults to the configured window only.
    pub training_sizes: Vec<usize>,
    /// Eigenvalues compared against the reference spectrum.
    pub k_dominant: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            training_sizes: Vec::new(),
            k_dominant: 21,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Default settings for an experiment.
    pub fn for_experiment(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            dictionary: None,
            estimators: None,
            training: None,
            horizon: None,
            seeds: default_seeds(),
            output_dir: None,
            tolerances: Tolerances::default(),
            bench: BenchSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        self.tolerances.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.tolerances.spectrum_tol >= 0.0) {
            return Err(CliError::Config("spectrum_tol must be >= 0".into()));
        }
        if let Some(r) = self.tolerances.output_rcond {
            if !(r >= 0.0) {
                return Err(CliError::Config("output_rcond must be >= 0".into()));
            }
        }
        let mut labels = BTreeSet::new();
        for e in self.estimators() {
            e.validate()?;
            if !labels.insert(e.label()) {
                return Err(CliError::Config(format!("duplicate estimator label `{}`", e.label())));
            }
        }
        if self.estimators().is_empty() {
            return Err(CliError::Config("estimator list is empty".into()));
        }
        if self.training().length < 2 {
            return Err(CliError::Config("training window needs at least 2 snapshots".into()));
        }
        if self.bench.training_sizes.iter().any(|&n| n < 2) {
            return Err(CliError::Config("training sizes must be at least 2".into()));
        }
        match &self.experiment {
            Experiment::Rotation { steps, .. }
            | Experiment::StuartLandau { steps, .. }
            | Experiment::LinearSynthetic { steps, .. }
                if *steps < 2 =>
            {
                return Err(CliError::Config("steps must be at least 2".into()))
            }
            Experiment::FromCsv { dt, angle_period, .. } => {
                if dt.is_some_and(|d| !(d.is_finite() && d > 0.0)) || !(angle_period.is_finite() && *angle_period > 0.0) {
                    return Err(CliError::Config("dt and angle_period must be positive".into()));
                }
            }
            _ => {}
        }
        if !matches!(self.experiment, Experiment::FromCsv { .. }) {
            self.dictionary(self.experiment_state_dim()?)?;
        }
        Ok(())
    }

    pub fn estimators(&self) -> Vec<EstimatorSpec> {
        self.estimators.clone().unwrap_or_else(|| {
            vec![
                EstimatorSpec::new(Method::Edmd),
                EstimatorSpec::new(Method::RobustTikhonov).with_lambda(1.0),
                EstimatorSpec::new(Method::SubspaceDmd),
            ]
        })
    }

    pub fn training(&self) -> Training {
        self.training.unwrap_or(match self.experiment {
            Experiment::Rotation { .. } => Training { start: 0, length: 51 },
            Experiment::StuartLandau { .. } => Training { start: 0, length: 30 },
            Experiment::Burgers { .. } => Training { start: 0, length: 100 },
            Experiment::LinearSynthetic { .. } => Training { start: 0, length: 25 },
            Experiment::FromCsv { .. } => Training { start: 0, length: usize::MAX },
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.experiment {
            Experiment::Rotation { .. } => 10,
            Experiment::StuartLandau { .. } => 70,
            Experiment::Burgers { .. } => 15,
            Experiment::LinearSynthetic { .. } | Experiment::FromCsv { .. } => 0,
        })
    }

    /// State dimension of simulated experiments.
    pub fn experiment_state_dim(&self) -> Result<usize, CliError> {
        Ok(match &self.experiment {
            Experiment::Rotation { .. } => 1,
            Experiment::StuartLandau { .. } => 2,
            Experiment::Burgers { params } => params.nodes()?,
            Experiment::LinearSynthetic { .. } => SYNTHETIC_DIM,
            Experiment::FromCsv { .. } => {
                return Err(CliError::Config("state dimension of CSV data is only known after loading".into()))
            }
        })
    }

    pub fn dictionary(&self, state_dim: usize) -> Result<Dictionary, CliError> {
        let kind = match (&self.dictionary, &self.experiment) {
            (Some(k), _) => k.clone(),
            (None, Experiment::Rotation { .. }) => DictionaryKind::FourierCircle {
                n_min: -50,
                n_max: 50,
                period: 1.0,
                coordinate: 0,
            },
            (None, Experiment::StuartLandau { params, .. }) => DictionaryKind::AngleExponential {
                n_min: params.n_min,
                n_max: params.n_max,
                coordinate: 1,
            },
            (None, _) => DictionaryKind::Linear {},
        };
        Ok(Dictionary::new(kind, state_dim)?)
    }

    /// Angle coordinates and their period, used by the output map and the error metric.
    pub fn angles(&self) -> (Vec<usize>, f64) {
        match &self.experiment {
            Experiment::Rotation { .. } => (vec![0], 1.0),
            Experiment::StuartLandau { .. } => (vec![1], two_pi()),
            Experiment::FromCsv {
                angle_coords,
                angle_period,
                ..
            } => (angle_coords.clone(), *angle_period),
            _ => (Vec::new(), two_pi()),
        }
    }

    pub fn output_rcond(&self) -> f64 {
        self.tolerances.output_rcond.unwrap_or(match self.experiment {
            Experiment::StuartLandau { .. } => 1e-6,
            _ => OUTPUT_RCOND,
        })
    }

    pub fn training_sizes(&self) -> Vec<usize> {
        if self.bench.training_sizes.is_empty() {
            vec![self.training().length]
        } else {
            self.bench.training_sizes.clone()
        }
    }

    /// Output directory: explicit flag, then config, then the environment, then a default.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
