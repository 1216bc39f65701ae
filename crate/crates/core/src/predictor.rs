//! Lifted linear predictor: `z_0 = Psi(x_0)`, `z_{n+1} = z_n K`,
//! `x_n = C z_n^T`.
//!
//! `C` is the least-squares output map `min_C sum_i ||x_i - C Psi(x_i)^T||^2`.
//! Angle-valued coordinates are fitted through `exp(i theta)` and decoded with
//! `arg`, so predictions never suffer from wrap-around.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::edmd::OperatorEstimate;
use crate::error::{Error, Result};
use crate::io::cmatrix_serde;
use crate::linalg::{max_imag, pinv, CMatrix, C64};
use crate::snapshots::SnapshotMatrix;

pub const OUTPUT_RCOND: f64 = 1e-12;

/// The output map `C` (`n x K`) and how to decode its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputMap {
    #[serde(with = "cmatrix_serde")]
    pub c: CMatrix,
    /// Coordinates fitted through `exp(i x_j)` and decoded with `arg`.
    #[serde(default)]
    pub angle_coords: Vec<usize>,
    /// Period of the angle coordinates.
    #[serde(default = "two_pi")]
    pub angle_period: f64,
    /// False when the fitted map kept a non-negligible imaginary part.
    pub real: bool,
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

/// Options for [`fit_output_map_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFit {
    pub angle_coords: Vec<usize>,
    pub angle_period: f64,
    pub rcond: f64,
}

impl Default for OutputFit {
    fn default() -> Self {
        OutputFit {
            angle_coords: Vec::new(),
            angle_period: two_pi(),
            rcond: OUTPUT_RCOND,
        }
    }
}

fn embed(x: f64, period: f64) -> C64 {
    C64::from_polar(1.0, std::f64::consts::TAU * x / period)
}

impl OutputMap {
    pub fn state_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Map a feature column to a state.
    pub fn decode(&self, z: &CMatrix) -> Vec<f64> {
        let v = &self.c * z;
        (0..v.nrows())
            .map(|j| {
                if self.angle_coords.contains(&j) {
                    v[(j, 0)].arg() * self.angle_period / std::f64::consts::TAU
                } else {
                    v[(j, 0)].re
                }
            })
            .collect()
    }
}

/// Least-squares output map for plain (non-angle) coordinates.
pub fn fit_output_map(dict: &Dictionary, snap: &SnapshotMatrix) -> Result<OutputMap> {
    fit_output_map_with_angles(dict, snap, &[])
}

pub fn fit_output_map_with_angles(dict: &Dictionary, snap: &SnapshotMatrix, angle_coords: &[usize]) -> Result<OutputMap> {
    fit_output_map_with(
        dict,
        snap,
        &OutputFit {
            angle_coords: angle_coords.to_vec(),
            ..OutputFit::default()
        },
    )
}

pub fn fit_output_map_with(dict: &Dictionary, snap: &SnapshotMatrix, opts: &OutputFit) -> Result<OutputMap> {
    let angle_coords = &opts.angle_coords[..];
    if !(opts.angle_period.is_finite() && opts.angle_period > 0.0) {
        return Err(Error::Config(format!("angle period must be positive, got {}", opts.angle_period)));
    }
    if !(opts.rcond >= 0.0) {
        return Err(Error::Config(format!("rcond must be >= 0, got {}", opts.rcond)));
    }
    if snap.is_empty() {
        return Err(Error::EmptyData("output map needs at least one snapshot".into()));
    }
    let n = snap.state_dim();
    if let Some(&j) = angle_coords.iter().find(|&&j| j >= n) {
        return Err(Error::Dimension(format!("angle coordinate {j} out of range for dimension {n}")));
    }
    let phi = dict.feature_rows(snap.states())?;
    let x = snap.states();
    let target = CMatrix::from_fn(snap.len(), n, |i, j| {
        if angle_coords.contains(&j) {
            embed(x[(i, j)], opts.angle_period)
        } else {
            C64::new(x[(i, j)], 0.0)
        }
    });
    let (phi_pinv, _) = pinv(&phi, opts.rcond)?;
    let mut c = (phi_pinv * target).transpose();
    let mut real = false;
    if angle_coords.is_empty() && max_imag(&c) < 1e-8 {
        c = c.map(|z| C64::new(z.re, 0.0));
        real = true;
    }
    Ok(OutputMap {
        c,
        angle_coords: angle_coords.to_vec(),
        angle_period: opts.angle_period,
        real,
    })
}

#[derive(Debug, Clone)]
pub struct Predictor {
    pub operator: OperatorEstimate,
    pub output: OutputMap,
    pub dict: Dictionary,
}

impl Predictor {
    pub fn new(operator: OperatorEstimate, output: OutputMap, dict: Dictionary) -> Result<Self> {
        let k = dict.feature_dim();
        if operator.dim() != k || output.c.ncols() != k {
            return Err(Error::Dimension(format!(
                "operator is {0}x{0}, output map has {1} columns, dictionary has {k} features",
                operator.dim(),
                output.c.ncols()
            )));
        }
        if output.state_dim() != dict.state_dim() {
            return Err(Error::Dimension("output map and dictionary disagree on state dimension".into()));
        }
        Ok(Predictor { operator, output, dict })
    }

    /// Predicted states `x_1 .. x_steps` from `x0`.
    pub fn predict(&self, x0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
        let z0 = self.dict.eval(x0)?.row();
        self.predict_from_features(&z0, steps)
    }

    /// Same as [`Predictor::predict`] but starting from a feature row `z0`.
    pub fn predict_from_features(&self, z0: &CMatrix, steps: usize) -> Result<Vec<Vec<f64>>> {
        if steps == 0 {
            return Err(Error::Config("prediction needs at least one step".into()));
        }
        if z0.shape() != (1, self.operator.dim()) {
            return Err(Error::Dimension(format!(
                "initial features must be 1x{}",
                self.operator.dim()
            )));
        }
        let mut z = z0.clone();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            z = &z * &self.operator.k_matrix;
            out.push(self.output.decode(&z.transpose()));
        }
        Ok(out)
    }
}

/// Per-step and mean prediction error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionError {
    pub per_step: Vec<f64>,
    pub average: f64,
}

/// `per_step[i] = ||pred_i - truth_i||_2`, with chordal distance
/// `|exp(i a) - exp(i b)|` on angle coordinates.
pub fn prediction_error(pred: &[Vec<f64>], truth: &[Vec<f64>], angle_coords: &[usize]) -> Result<PredictionError> {
    prediction_error_periodic(pred, truth, angle_coords, two_pi())
}

/// [`prediction_error`] for angle coordinates with period `period`.
pub fn prediction_error_periodic(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    angle_coords: &[usize],
    period: f64,
) -> Result<PredictionError> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} steps, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyData("no steps to compare".into()));
    }
    let mut per_step = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::Dimension("state lengths differ".into()));
        }
        let sq: f64 = p
            .iter()
            .zip(t)
            .enumerate()
            .map(|(j, (a, b))| {
                let d = if angle_coords.contains(&j) {
                    (embed(*a, period) - embed(*b, period)).norm()
                } else {
                    a - b
                };
                d * d
            })
            .sum();
        per_step.push(sq.sqrt());
    }
    let average = per_step.iter().sum::<f64>() / per_step.len() as f64;
    Ok(PredictionError { per_step, average })
}

/// Predicted trajectory as snapshot CSV plus sidecar.
pub fn write_trajectory(path: &Path, states: &[Vec<f64>], dt: f64) -> Result<()> {
    SnapshotMatrix::from_rows(states, dt)?.write_csv(path)
}
