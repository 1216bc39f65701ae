//! Unregularized estimators: EDMD, exact DMD, and the Koopman to
//! Perron–Frobenius transpose.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{cmatrix_serde, write_atomic};
use crate::linalg::{is_finite, pinv, to_complex, CMatrix, Svd, C64};
use crate::snapshots::{GramPair, SnapshotMatrix};

pub const DEFAULT_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Edmd,
    Dmd,
    RobustTikhonov,
    RobustLasso,
    Nsdmd,
    SubspaceDmd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Edmd => "edmd",
            Method::Dmd => "dmd",
            Method::RobustTikhonov => "robust_tikhonov",
            Method::RobustLasso => "robust_lasso",
            Method::Nsdmd => "nsdmd",
            Method::SubspaceDmd => "subspace_dmd",
        }
    }
}

/// Solver diagnostics; fields not meaningful for a method are left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_decrease: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub squared_objective: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_violation: Option<f64>,
}

/// A `K x K` Koopman matrix with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorEstimate {
    #[serde(with = "cmatrix_serde")]
    pub k_matrix: CMatrix,
    pub method: Method,
    pub reg_level: f64,
    pub dict_id: String,
    pub residual: f64,
    #[serde(default)]
    pub info: SolverInfo,
}

impl OperatorEstimate {
    pub fn new(k_matrix: CMatrix, method: Method, reg_level: f64, dict_id: &str, residual: f64) -> Result<Self> {
        if !k_matrix.is_square() {
            return Err(Error::Dimension(format!(
                "operator must be square, got {}x{}",
                k_matrix.nrows(),
                k_matrix.ncols()
            )));
        }
        if !is_finite(&k_matrix) {
            return Err(Error::Numerical(format!("{} produced non-finite entries", method.name())));
        }
        if !(reg_level >= 0.0) {
            return Err(Error::Config(format!("regularization level must be >= 0, got {reg_level}")));
        }
        Ok(OperatorEstimate {
            k_matrix,
            method,
            reg_level,
            dict_id: dict_id.to_string(),
            residual,
            info: SolverInfo::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.k_matrix.nrows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let est: OperatorEstimate = serde_json::from_str(text)?;
        if !est.k_matrix.is_square() || !is_finite(&est.k_matrix) {
            return Err(Error::Domain("stored operator is not a finite square matrix".into()));
        }
        Ok(est)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `||G K - A||_F`.
pub fn fit_residual(gp: &GramPair, k: &CMatrix) -> f64 {
    (&gp.g * k - &gp.a).norm()
}

/// `K = G^+ A` with singular values below `rcond * s_max` discarded.
pub fn edmd(gp: &GramPair, rcond: f64) -> Result<OperatorEstimate> {
    if !(rcond >= 0.0) {
        return Err(Error::Config(format!("rcond must be >= 0, got {rcond}")));
    }
    let (g_pinv, rank) = pinv(&gp.g, rcond)?;
    let k = g_pinv * &gp.a;
    let residual = fit_residual(gp, &k);
    let mut est = OperatorEstimate::new(k, Method::Edmd, 0.0, &gp.dict_id, residual)?;
    est.info.rank = Some(rank);
    Ok(est)
}

/// Exact DMD on raw states.
///
/// With `X0 = [x_0 .. x_{M-1}]`, `X1 = [x_1 .. x_M]` as columns and the
/// truncated SVD `X0 = U S V^H`, the state-space operator is
/// `A = X1 V S^-1 U^H`; its nonzero eigenvalues are those of the projected
/// `U^H X1 V S^-1`. The estimate stores `A^T` so it acts on feature rows like
/// every other operator (Linear dictionary).
pub fn dmd(snap: &SnapshotMatrix, rank: Option<usize>) -> Result<OperatorEstimate> {
    let idx = snap.pair_indices();
    if snap.len() < 2 || idx.is_empty() {
        return Err(Error::EmptyData("DMD needs at least one snapshot pair".into()));
    }
    let n = snap.state_dim();
    let x = snap.states();
    let x0 = to_complex(&nalgebra::DMatrix::from_fn(n, idx.len(), |i, j| x[(idx[j], i)]));
    let x1 = to_complex(&nalgebra::DMatrix::from_fn(n, idx.len(), |i, j| x[(idx[j] + 1, i)]));
    let (a, r) = exact_dmd(&x0, &x1, rank)?;
    let residual = (&x1 - &a * &x0).norm();
    let mut est = OperatorEstimate::new(a.transpose(), Method::Dmd, 0.0, &format!("linear(n={n})"), residual)?;
    est.info.rank = Some(r);
    Ok(est)
}

/// Column-convention exact DMD operator `A = X1 V S^-1 U^H` from the
/// (optionally rank-truncated) SVD of `X0`. Returns `A` and the rank used.
pub fn exact_dmd(x0: &CMatrix, x1: &CMatrix, rank: Option<usize>) -> Result<(CMatrix, usize)> {
    if x0.shape() != x1.shape() || x0.ncols() == 0 {
        return Err(Error::EmptyData("DMD needs matching, nonempty snapshot blocks".into()));
    }
    let svd = Svd::new(x0)?;
    let mut r = svd.rank(DEFAULT_RCOND);
    if let Some(req) = rank {
        if req == 0 {
            return Err(Error::Config("DMD rank must be positive".into()));
        }
        r = r.min(req);
    }
    Ok((x1 * svd.truncate(r).pinv(), r))
}

/// `P = K^T`.
pub fn pf_from_koopman(est: &OperatorEstimate) -> CMatrix {
    est.k_matrix.transpose()
}

/// `(G^H G + alpha I)^-1 G^H A`, solved through the SVD of `G`.
pub(crate) fn ridge_solution(svd: &Svd, a: &CMatrix, alpha: f64) -> CMatrix {
    let b = svd.u.adjoint() * a;
    let mut scaled = b;
    for (i, &s) in svd.s.iter().enumerate() {
        let f = if s * s + alpha > 0.0 { s / (s * s + alpha) } else { 0.0 };
        scaled.row_mut(i).iter_mut().for_each(|z| *z *= C64::new(f, 0.0));
    }
    svd.v_h.adjoint() * scaled
}
