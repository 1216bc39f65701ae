//! Subspace DMD for data with observation noise.
//!
//! With `Y_t = [h(x_t) .. h(x_{t+L-1})]`, `L = m - 3`:
//!
//! 1. `Y_p = [Y_0; Y_1]`, `Y_f = [Y_2; Y_3]`
//! 2. `O = Y_f` projected onto the row space of `Y_p`
//! 3. compact SVD `O = U_q S_q V_q^H`; split `U_q` into `U_q1` (top) and `U_q2` (bottom)
//! 4. compact SVD `U_q1 = U S V^H`, `A~ = U^H U_q2 V S^-1`
//! 5. eigenpairs `(lambda, w~)` of `A~`
//! 6. modes `w = lambda^-1 U_q2 V S^-1 w~`

use std::path::Path;

use nalgebra::DMatrix;

use crate::edmd::{Method, OperatorEstimate};
use crate::error::{Error, Result};
use crate::io::{csv_string, fmt_f64, parse_numeric_csv, write_atomic};
use crate::linalg::{eigen, is_finite, pinv, to_complex, CMatrix, Svd, C64};
use crate::snapshots::SnapshotMatrix;

const RCOND: f64 = 1e-12;

/// Observations `h(x_t)` as columns, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    y: CMatrix,
}

impl ObservationMatrix {
    pub fn new(y: CMatrix) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() < 4 {
            return Err(Error::EmptyData(format!(
                "need at least 4 observations of nonzero length, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        if !is_finite(&y) {
            return Err(Error::Domain("observations contain non-finite entries".into()));
        }
        Ok(ObservationMatrix { y })
    }

    /// Use the real states themselves as observations.
    pub fn from_snapshots(snap: &SnapshotMatrix) -> Result<Self> {
        Self::new(to_complex(&snap.states().transpose()))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.y
    }

    pub fn obs_dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    /// Columns `start .. start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Dimension(format!(
                "window {start}..{} outside {} observations",
                start + len,
                self.len()
            )));
        }
        Self::new(self.y.columns(start, len).into_owned())
    }

    /// One time step per row, `re_j,im_j` column pairs.
    pub fn to_csv_string(&self) -> Result<String> {
        let header: Vec<String> = (0..self.obs_dim())
            .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
            .collect();
        let rows: Vec<Vec<String>> = self
            .y
            .column_iter()
            .map(|c| c.iter().flat_map(|z| [fmt_f64(z.re), fmt_f64(z.im)]).collect())
            .collect();
        csv_string(Some(&header), &rows)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let (_, rows) = parse_numeric_csv(text)?;
        let width = rows.first().map_or(0, Vec::len);
        if width % 2 != 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("complex CSV needs an even, constant column count".into()));
        }
        let k = width / 2;
        Self::new(CMatrix::from_fn(k, rows.len(), |i, t| C64::new(rows[t][2 * i], rows[t][2 * i + 1])))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string()?.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralModes {
    pub eigenvalues: Vec<C64>,
    /// Columns are the dynamic modes, aligned with `eigenvalues`.
    pub modes: CMatrix,
    pub truncation_rank: usize,
    /// `||O - Y_f||_F / ||Y_f||_F`.
    pub projection_loss: f64,
}

impl SpectralModes {
    /// Column-convention operator `W diag(lambda) W^+` on the observation space.
    pub fn operator(&self) -> Result<CMatrix> {
        let (w_pinv, _) = pinv(&self.modes, RCOND)?;
        let mut wl = self.modes.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            wl.column_mut(j).iter_mut().for_each(|z| *z *= lam);
        }
        Ok(wl * w_pinv)
    }
}

pub fn subspace_dmd(obs: &ObservationMatrix, rank: Option<usize>) -> Result<SpectralModes> {
    let y = obs.matrix();
    let k = obs.obs_dim();
    let l = obs.len() - 3;
    let block = |t: usize| y.columns(t, l).into_owned();
    let mut y_p = CMatrix::zeros(2 * k, l);
    y_p.rows_mut(0, k).copy_from(&block(0));
    y_p.rows_mut(k, k).copy_from(&block(1));
    let mut y_f = CMatrix::zeros(2 * k, l);
    y_f.rows_mut(0, k).copy_from(&block(2));
    y_f.rows_mut(k, k).copy_from(&block(3));

    let (gram_pinv, _) = pinv(&(&y_p * y_p.adjoint()), RCOND)?;
    let o = &y_f * y_p.adjoint() * gram_pinv * &y_p;
    let yf_norm = y_f.norm();
    let projection_loss = if yf_norm > 0.0 { (&o - &y_f).norm() / yf_norm } else { 0.0 };

    let svd_o = Svd::new(&o)?;
    let achieved = svd_o.rank(RCOND);
    let r = match rank {
        Some(0) => return Err(Error::Config("subspace rank must be positive".into())),
        Some(req) if req > achieved => {
            return Err(Error::Numerical(format!(
                "requested rank {req} but projected data has rank {achieved}"
            )))
        }
        Some(req) => req,
        None => achieved,
    };
    if r == 0 {
        return Err(Error::Numerical("projected data has rank 0".into()));
    }
    let u_q = svd_o.truncate(r).u;
    let u_q1 = u_q.rows(0, k).into_owned();
    let u_q2 = u_q.rows(k, k).into_owned();

    let svd1 = Svd::new(&u_q1)?;
    let r1 = svd1.rank(RCOND);
    if r1 == 0 {
        return Err(Error::Numerical("upper block of the subspace basis vanishes".into()));
    }
    let svd1 = svd1.truncate(r1);
    let mut v_sinv = svd1.v_h.adjoint();
    for (j, &s) in svd1.s.iter().enumerate() {
        v_sinv.column_mut(j).iter_mut().for_each(|z| *z /= s);
    }
    let b = &u_q2 * v_sinv;
    let a_tilde = svd1.u.adjoint() * &b;
    let (vals, vecs) = eigen(&a_tilde)?;

    let scale = vals.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i].norm() > 1e-14 * scale.max(f64::MIN_POSITIVE))
        .collect();
    let raw = &b * vecs;
    let mut modes = CMatrix::zeros(k, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        modes.set_column(c, &(raw.column(i) / vals[i]));
    }
    Ok(SpectralModes {
        eigenvalues: keep.iter().map(|&i| vals[i]).collect(),
        modes,
        truncation_rank: r,
        projection_loss,
    })
}

/// Subspace DMD packaged as an operator on feature rows (`K = A_obs^T`).
pub fn subspace_estimate(obs: &ObservationMatrix, rank: Option<usize>, dict_id: &str) -> Result<OperatorEstimate> {
    let sm = subspace_dmd(obs, rank)?;
    let a = sm.operator()?;
    let y = obs.matrix();
    let m = obs.len();
    let residual = (y.columns(1, m - 1) - &a * y.columns(0, m - 1)).norm();
    let mut est = OperatorEstimate::new(a.transpose(), Method::SubspaceDmd, 0.0, dict_id, residual)?;
    est.info.rank = Some(sm.truncation_rank);
    Ok(est)
}

/// Real states as observations, `x` columns.
pub fn observations_from_states(states: &DMatrix<f64>) -> Result<ObservationMatrix> {
    ObservationMatrix::new(to_complex(&states.transpose()))
}
