//! Data generation, fitting, prediction and benchmarking, independent of files.

use std::path::Path;

use rayon::prelude::*;
use robust_koopman::dictionary::DictionaryKind;
use robust_koopman::edmd::{exact_dmd, DEFAULT_RCOND};
use robust_koopman::linalg::eigenvalues;
use robust_koopman::predictor::prediction_error_periodic;
use robust_koopman::simulators::{
    rotation_reference, simulate_burgers, simulate_rotation, simulate_stuart_landau, simulate_synthetic_linear,
    synthetic_system,
};
use robust_koopman::subspace::subspace_estimate;
use robust_koopman::{
    assemble, dmd, edmd, fit_output_map_with, gram, nsdmd_robust, robust_lasso, robust_tikhonov, spectral_distance,
    uncertainty_bound, CMatrix, Dictionary, Method, ObservationMatrix, OperatorEstimate, OutputFit, PredictionError,
    Predictor, SnapshotMatrix, C64,
};
use serde::Serialize;

use crate::config::{EstimatorSpec, Experiment, RunConfig};
use crate::CliError;

/// What the estimators get to see.
#[derive(Debug, Clone)]
pub enum Measured {
    /// Measured states; features come from the dictionary.
    States(SnapshotMatrix),
    /// Measured feature rows, one per time step.
    Features(CMatrix),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Noise-free (or best available) states, used for the output map and as truth.
    pub truth: SnapshotMatrix,
    pub measured: Measured,
    /// Exact eigenvalues the estimates are compared against, when known.
    pub reference: Option<Vec<C64>>,
    /// Steps where the Stuart–Landau radius was clamped.
    pub clamped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// A dataset where the measured states are the truth.
    pub fn from_states(states: SnapshotMatrix) -> Self {
        Dataset {
            truth: states.clone(),
            measured: Measured::States(states),
            reference: None,
            clamped: 0,
        }
    }
}

pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<Dataset, CliError> {
    let dict = match cfg.experiment {
        Experiment::FromCsv { .. } => None,
        _ => Some(cfg.dictionary(cfg.experiment_state_dim()?)?),
    };
    let data = match &cfg.experiment {
        Experiment::Rotation { params, steps } => {
            let states = simulate_rotation(params, *steps, seed)?;
            let reference = match dict.as_ref().map(Dictionary::kind) {
                Some(DictionaryKind::FourierCircle { n_min, n_max, period, .. }) => {
                    Some(rotation_reference(params.theta, *period, *n_min, *n_max))
                }
                _ => None,
            };
            Dataset {
                reference,
                ..Dataset::from_states(states)
            }
        }
        Experiment::StuartLandau { params, steps } => {
            let run = simulate_stuart_landau(params, *steps, seed)?;
            let step = (params.gamma - params.beta * params.mu) * params.dt;
            let reference = (params.n_min..=params.n_max)
                .map(|n| C64::from_polar(1.0, n as f64 * step))
                .collect();
            Dataset {
                truth: run.states,
                measured: Measured::Features(run.observations.matrix().transpose()),
                reference: Some(reference),
                clamped: run.clamped,
            }
        }
        Experiment::Burgers { params } => Dataset::from_states(simulate_burgers(params, seed)?),
        Experiment::LinearSynthetic { params, steps } => {
            let run = simulate_synthetic_linear(params, *steps, seed)?;
            let (_, eigs) = synthetic_system(params)?;
            Dataset {
                truth: run.states,
                measured: Measured::States(run.observed),
                reference: Some(eigs),
                clamped: 0,
            }
        }
        Experiment::FromCsv { path, dt, .. } => load_states(path, *dt)?,
    };
    Ok(data)
}

pub fn load_states(path: &Path, dt: Option<f64>) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("data file {} not found", path.display())));
    }
    Ok(Dataset::from_states(SnapshotMatrix::read_csv(path, dt)?))
}

/// Dictionary for a dataset (CSV data fixes the state dimension at load time).
pub fn dictionary_for(cfg: &RunConfig, data: &Dataset) -> Result<Dictionary, CliError> {
    cfg.dictionary(data.truth.state_dim())
}

/// Snapshots `start .. start + len` must exist.
fn check_window(data: &Dataset, start: usize, len: usize) -> Result<(), CliError> {
    if len < 2 || start.checked_add(len).is_none_or(|end| end > data.len()) {
        return Err(CliError::Config(format!(
            "training window {start}+{len} does not fit {} snapshots",
            data.len()
        )));
    }
    Ok(())
}

/// Training window length, with "all data" resolved.
pub fn resolve_length(cfg: &RunConfig, data: &Dataset, start: usize, len: usize) -> usize {
    if len == usize::MAX {
        data.len().saturating_sub(start + cfg.horizon())
    } else {
        len
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub label: String,
    pub method: Method,
    pub reg_level: f64,
    /// Data-space radius when `lambda` came from the uncertainty bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub residual: f64,
    pub training_start: usize,
    pub training_length: usize,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub spec: EstimatorSpec,
    pub estimate: OperatorEstimate,
    pub record: FitRecord,
}

/// Fit one estimator on snapshots `start .. start + len`.
pub fn fit_one(
    cfg: &RunConfig,
    dict: &Dictionary,
    data: &Dataset,
    start: usize,
    len: usize,
    spec: &EstimatorSpec,
) -> Result<Fitted, CliError> {
    check_window(data, start, len)?;
    let truth = data.truth.window(start, len)?;
    let (states, rows) = match &data.measured {
        Measured::States(s) => {
            let w = s.window(start, len)?;
            let rows = dict.feature_rows(w.states())?;
            (Some(w), rows)
        }
        Measured::Features(f) => {
            if f.ncols() != dict.feature_dim() {
                return Err(CliError::Config(format!(
                    "{} measured features but the dictionary has {}",
                    f.ncols(),
                    dict.feature_dim()
                )));
            }
            (None, f.rows(start, len).into_owned())
        }
    };
    let gp = match &states {
        Some(w) => assemble(dict, w)?,
        None => {
            let mut gp = robust_koopman::GramPair::from_feature_rows(
                &rows.rows(0, len - 1).into_owned(),
                &rows.rows(1, len - 1).into_owned(),
            )?;
            gp.dict_id = dict.id();
            gp
        }
    };
    let solver = &cfg.tolerances.solver;
    let lambda = |spec: &EstimatorSpec| -> Result<f64, CliError> {
        match (spec.lambda, spec.rho) {
            (Some(l), _) => Ok(l),
            (None, Some(rho)) => Ok(uncertainty_bound(dict, states.as_ref().unwrap_or(&truth), rho)?),
            (None, None) => Err(CliError::Config("no lambda".into())),
        }
    };
    let estimate = match spec.method {
        Method::Edmd => edmd(&gp, spec.rcond.unwrap_or(DEFAULT_RCOND))?,
        Method::RobustTikhonov => robust_tikhonov(&gp, lambda(spec)?, solver)?,
        Method::RobustLasso => robust_lasso(&gp, spec.c.unwrap_or(0.0), solver)?,
        Method::Nsdmd => {
            let w = states.as_ref().ok_or_else(|| {
                CliError::Config("nsdmd needs a real dictionary evaluated on states, not measured features".into())
            })?;
            let lam = gram(dict, w)?;
            nsdmd_robust(&gp, dict, &lam, lambda(spec)?, solver)?.estimate
        }
        Method::Dmd => match &states {
            Some(w) if matches!(dict.kind(), DictionaryKind::Linear {}) => dmd(w, spec.rank)?,
            _ => {
                let x0 = rows.rows(0, len - 1).transpose();
                let x1 = rows.rows(1, len - 1).transpose();
                let (a, r) = exact_dmd(&x0, &x1, spec.rank)?;
                let residual = (&x1 - &a * &x0).norm();
                let mut est = OperatorEstimate::new(a.transpose(), Method::Dmd, 0.0, &dict.id(), residual)?;
                est.info.rank = Some(r);
                est
            }
        },
        Method::SubspaceDmd => subspace_estimate(&ObservationMatrix::new(rows.transpose())?, spec.rank, &dict.id())?,
    };
    if estimate.dim() != dict.feature_dim() {
        return Err(CliError::Config(format!(
            "{} produced a {0}x{0} operator but the dictionary has {} features",
            spec.label(),
            estimate.dim()
        )));
    }
    let record = FitRecord {
        label: spec.label(),
        method: spec.method,
        reg_level: estimate.reg_level,
        rho: if spec.lambda.is_none() { spec.rho } else { None },
        residual: estimate.residual,
        training_start: start,
        training_length: len,
    };
    Ok(Fitted {
        spec: spec.clone(),
        estimate,
        record,
    })
}

pub fn fit_all(cfg: &RunConfig, dict: &Dictionary, data: &Dataset, start: usize, len: usize) -> Result<Vec<Fitted>, CliError> {
    cfg.estimators()
        .iter()
        .map(|spec| fit_one(cfg, dict, data, start, len, spec))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub predicted: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
    pub error: PredictionError,
}

/// Predict `horizon` steps from the last training snapshot.
pub fn predict(
    cfg: &RunConfig,
    dict: &Dictionary,
    data: &Dataset,
    start: usize,
    len: usize,
    estimate: &OperatorEstimate,
    horizon: usize,
) -> Result<Prediction, CliError> {
    check_window(data, start, len)?;
    if horizon == 0 {
        return Err(CliError::Config("prediction horizon must be positive".into()));
    }
    let t0 = start + len - 1;
    if t0 + horizon >= data.len() {
        return Err(CliError::Config(format!(
            "horizon {horizon} after snapshot {t0} exceeds {} snapshots",
            data.len()
        )));
    }
    let (angle_coords, angle_period) = cfg.angles();
    let opts = OutputFit {
        angle_coords: angle_coords.clone(),
        angle_period,
        rcond: cfg.output_rcond(),
    };
    let output = fit_output_map_with(dict, &data.truth.window(start, len)?, &opts)?;
    let p = Predictor::new(estimate.clone(), output, dict.clone())?;
    let predicted = p.predict(&data.truth.state(t0), horizon)?;
    let truth: Vec<Vec<f64>> = (1..=horizon).map(|n| data.truth.state(t0 + n)).collect();
    let error = prediction_error_periodic(&predicted, &truth, &angle_coords, angle_period)?;
    Ok(Prediction { predicted, truth, error })
}

/// One line of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub seed: u64,
    pub training_size: usize,
    pub label: String,
    pub method: Method,
    pub reg_level: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub unstable_count: Option<usize>,
    pub spectral_distance: Option<f64>,
    pub avg_error: Option<f64>,
    pub final_error: Option<f64>,
    /// Set when this estimator failed on this seed.
    pub failure: Option<String>,
}

fn bench_row(
    cfg: &RunConfig,
    dict: &Dictionary,
    data: &Dataset,
    seed: u64,
    size: usize,
    spec: &EstimatorSpec,
) -> BenchRow {
    let mut row = BenchRow {
        seed,
        training_size: size,
        label: spec.label(),
        method: spec.method,
        reg_level: None,
        spectral_radius: None,
        unstable_count: None,
        spectral_distance: None,
        avg_error: None,
        final_error: None,
        failure: None,
    };
    let start = cfg.training().start;
    let result = (|| -> Result<(), CliError> {
        let fitted = fit_one(cfg, dict, data, start, size, spec)?;
        row.reg_level = Some(fitted.estimate.reg_level);
        let eigs = eigenvalues(&fitted.estimate.k_matrix)?;
        let radius = eigs.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        row.spectral_radius = Some(radius);
        row.unstable_count = Some(eigs.iter().filter(|z| z.norm() > 1.0 + cfg.tolerances.spectrum_tol).count());
        if let Some(reference) = &data.reference {
            let k = cfg.bench.k_dominant.min(reference.len()).min(eigs.len());
            row.spectral_distance = Some(spectral_distance(&eigs, reference, k)?);
        }
        let horizon = cfg.horizon();
        if horizon > 0 {
            let p = predict(cfg, dict, data, start, size, &fitted.estimate, horizon)?;
            row.avg_error = Some(p.error.average);
            row.final_error = p.error.per_step.last().copied();
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.failure = Some(e.to_string());
    }
    row
}

/// Every seed, training size and estimator; seeds run in parallel, rows come
/// back in (seed, size, estimator) order.
pub fn bench(cfg: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let per_seed: Vec<Result<Vec<BenchRow>, CliError>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = simulate(cfg, seed)?;
            let dict = dictionary_for(cfg, &data)?;
            let mut rows = Vec::new();
            for size in cfg.training_sizes() {
                for spec in cfg.estimators() {
                    rows.push(bench_row(cfg, &dict, &data, seed, size, &spec));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}
