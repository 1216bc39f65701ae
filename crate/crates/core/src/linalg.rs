//! Dense complex linear algebra used by the estimators.
//!
//! Thin layer over nalgebra: a compact SVD with descending singular values,
//! a truncated pseudo-inverse, and a full eigendecomposition built from the
//! complex Schur form.

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const SVD_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 100_000;
const JACOBI_SWEEPS: usize = 80;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Plain (non-conjugating) transpose.
pub fn transpose(m: &CMatrix) -> CMatrix {
    m.transpose()
}

/// Largest imaginary part magnitude in `m`.
pub fn max_imag(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.im.abs()))
}

/// Compact SVD `m = u * diag(s) * v_h`, singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v_h: CMatrix,
}

impl Svd {
    pub fn new(m: &CMatrix) -> Result<Self> {
        if !is_finite(m) {
            return Err(Error::Numerical("SVD input contains non-finite entries".into()));
        }
        let (rows, cols) = m.shape();
        let k = rows.min(cols);
        if k == 0 {
            return Ok(Svd {
                u: CMatrix::zeros(rows, 0),
                s: Vec::new(),
                v_h: CMatrix::zeros(0, cols),
            });
        }
        let (u, s, v) = if rows >= cols {
            jacobi_svd(m.clone())?
        } else {
            let (u, s, v) = jacobi_svd(m.adjoint())?;
            (v, s, u)
        };
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let u = CMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]);
        let v_h = CMatrix::from_fn(k, cols, |r, c| v[(c, order[r])].conj());
        let s = order.iter().map(|&i| s[i]).collect();
        Ok(Svd { u, s, v_h })
    }

    pub fn max_singular(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rcond * s_max`.
    pub fn rank(&self, rcond: f64) -> usize {
        let cut = rcond * self.max_singular();
        self.s.iter().take_while(|&&v| v > cut && v > 0.0).count()
    }

    /// Keep the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> Svd {
        let r = r.min(self.s.len());
        Svd {
            u: self.u.columns(0, r).into_owned(),
            s: self.s[..r].to_vec(),
            v_h: self.v_h.rows(0, r).into_owned(),
        }
    }

    /// `V diag(1/s) U^H` over the kept triplets.
    pub fn pinv(&self) -> CMatrix {
        let mut vs = self.v_h.adjoint();
        for (j, &sv) in self.s.iter().enumerate() {
            let inv = 1.0 / sv;
            vs.column_mut(j).iter_mut().for_each(|z| *z *= inv);
        }
        vs * self.u.adjoint()
    }
}

/// One-sided Jacobi SVD of a tall matrix: returns `u` (`rows x cols`),
/// unsorted singular values and `v` with `m = u diag(s) v^H`. Columns at
/// rounding level (`<= eps ||m||_F`) are left unrotated and their `u`
/// columns replaced by an orthonormal completion.
fn jacobi_svd(mut a: CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    let (rows, n) = a.shape();
    let mut v = CMatrix::identity(n, n);
    let tol = f64::EPSILON * (rows as f64).sqrt();
    let cut = f64::EPSILON * a.norm();
    let negligible = cut * cut;
    let mut converged = false;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, C64::new(0.0, 0.0));
                for r in 0..rows {
                    let (x, y) = (a[(r, p)], a[(r, q)]);
                    alpha += x.norm_sqr();
                    beta += y.norm_sqr();
                    gamma += x.conj() * y;
                }
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let phase = gamma.conj() / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut a, &mut v] {
                    for r in 0..m.nrows() {
                        let x = m[(r, p)];
                        let y = m[(r, q)] * phase;
                        m[(r, p)] = x * c - y * s;
                        m[(r, q)] = x * s + y * c;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("SVD did not converge".into()));
    }
    let s: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut basis: Vec<CVector> = Vec::new();
    let mut fill = Vec::new();
    for j in 0..n {
        if s[j] > cut {
            let u = a.column(j) / C64::new(s[j], 0.0);
            a.set_column(j, &u);
            basis.push(u);
        } else {
            fill.push(j);
        }
    }
    if !fill.is_empty() {
        let k = basis.len();
        let mut stacked = CMatrix::zeros(rows, k + rows);
        for (c, q) in basis.iter().enumerate() {
            stacked.set_column(c, q);
        }
        for r in 0..rows {
            stacked[(r, k + r)] = C64::new(1.0, 0.0);
        }
        let q = stacked.qr().q();
        for (c, &j) in fill.iter().enumerate() {
            a.set_column(j, &q.column(k + c));
        }
    }
    Ok((a, s, v))
}

/// Pseudo-inverse with singular values below `rcond * s_max` discarded.
/// Returns the inverse and the retained rank.
pub fn pinv(m: &CMatrix, rcond: f64) -> Result<(CMatrix, usize)> {
    let svd = Svd::new(m)?;
    let r = svd.rank(rcond);
    Ok((svd.truncate(r).pinv(), r))
}

pub fn spectral_norm(m: &CMatrix) -> Result<f64> {
    Ok(Svd::new(m)?.max_singular())
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Hermitian eigendecomposition `m = w diag(h) w^H`, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let eig = SymmetricEigen::try_new(m.clone(), SVD_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let h = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((h, w))
}

fn schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::Numerical("eigensolver input contains non-finite entries".into()));
    }
    let s = Schur::try_new(m.clone(), 1e-15, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(s.unpack())
}

/// Eigenvalues of a general complex square matrix (unordered).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (_, t) = schur(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues and unit-norm right eigenvectors (columns), same order.
pub fn eigen(m: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let (q, t) = schur(m)?;
    let vals: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let floor = scale * f64::EPSILON;
    let mut vecs = CMatrix::zeros(n, n);
    for k in 0..n {
        // back-substitution on (T - lambda_k I) y = 0 with y_k = 1
        let mut y = CVector::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - vals[k];
            if d.norm() < floor {
                d = C64::new(floor, 0.0);
            }
            y[i] = -acc / d;
        }
        let mut x = &q * y;
        let nrm = x.norm();
        if nrm > 0.0 {
            x /= C64::new(nrm, 0.0);
        }
        vecs.set_column(k, &x);
    }
    Ok((vals, vecs))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}
