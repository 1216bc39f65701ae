//! Robust estimation under naturally-structured constraints:
//!
//! ```text
//! min ||GK - A||_F + lambda ||K||_F
//! s.t. K >= 0,  Y = Lambda K Lambda^-1 >= 0,  Y 1 = 1
//! ```
//!
//! Solved by majorize-minimize projected gradient. Each step projects
//! alternately onto the orthant `K >= 0` and, in `Y` coordinates, onto the set
//! of row-stochastic matrices; a step is accepted only if the projection
//! reaches feasibility and the objective does not increase.

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::edmd::{Method, OperatorEstimate};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, max_imag, to_complex, CMatrix};
use crate::robust::{robust_tikhonov, RobustConfig};
use crate::snapshots::GramPair;

/// Feasibility required of every returned result.
pub const FEASIBILITY_TOL: f64 = 1e-6;
const PROJECTION_TOL: f64 = 1e-10;
const MAX_PROJECTION_SWEEPS: usize = 500;

#[derive(Debug, Clone)]
pub struct NsdmdResult {
    pub estimate: OperatorEstimate,
    /// `Lambda K Lambda^-1`.
    pub markov: DMatrix<f64>,
    pub constraint_violation: f64,
    /// Objective after every accepted step, starting point first.
    pub objective_trace: Vec<f64>,
}

/// `P = K^T`.
pub fn pf_estimate(res: &NsdmdResult) -> CMatrix {
    res.estimate.k_matrix.transpose()
}

fn real_part(m: &CMatrix, what: &str) -> Result<DMatrix<f64>> {
    if max_imag(m) > 1e-12 * m.norm().max(1.0) {
        return Err(Error::UnsupportedDictionary(format!(
            "{what} has complex entries; structured estimation needs a real dictionary"
        )));
    }
    Ok(m.map(|z| z.re))
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

struct Structure {
    lam: DMatrix<f64>,
    lam_inv: DMatrix<f64>,
}

impl Structure {
    fn markov(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.lam * k * &self.lam_inv
    }

    fn violation(&self, k: &DMatrix<f64>) -> f64 {
        let y = self.markov(k);
        let neg_k = -k.min();
        let neg_y = -y.min();
        let rows = y
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0_f64, f64::max);
        neg_k.max(neg_y).max(rows).max(0.0)
    }

    fn project_markov(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.markov(k);
        for i in 0..y.nrows() {
            let row: Vec<f64> = y.row(i).iter().copied().collect();
            for (j, v) in project_simplex(&row).into_iter().enumerate() {
                y[(i, j)] = v;
            }
        }
        &self.lam_inv * y * &self.lam
    }

    fn project(&self, k: &DMatrix<f64>, cap: usize) -> Option<DMatrix<f64>> {
        let mut k = k.clone();
        for _ in 0..cap {
            k = self.project_markov(&k);
            if self.violation(&k) <= PROJECTION_TOL {
                return Some(k);
            }
            k = k.map(|v| v.max(0.0));
            if self.violation(&k) <= PROJECTION_TOL {
                return Some(k);
            }
        }
        None
    }
}

/// Structured robust estimate; `lam` is the Gram matrix `Lambda` of the
/// dictionary (usually [`crate::dictionary::gram`] over the training states).
pub fn nsdmd_robust(
    gp: &GramPair,
    dict: &Dictionary,
    lam: &CMatrix,
    lambda: f64,
    cfg: &RobustConfig,
) -> Result<NsdmdResult> {
    cfg.validate()?;
    if !dict.is_real() {
        return Err(Error::UnsupportedDictionary(format!(
            "{} is complex-valued; structured estimation needs a real dictionary",
            dict.id()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = gp.dim();
    if lam.shape() != (n, n) {
        return Err(Error::Dimension(format!("Lambda must be {n}x{n}")));
    }
    let g = real_part(&gp.g, "G")?;
    let a = real_part(&gp.a, "A")?;
    let lam_r = real_part(lam, "Lambda")?;
    let lam_sym = (&lam_r + lam_r.transpose()) * 0.5;
    let min_eig = hermitian_eigenvalues(&to_complex(&lam_sym))?[0];
    if !(min_eig > 1e-10) {
        return Err(Error::Numerical(format!(
            "Lambda is singular (min eigenvalue {min_eig:.3e})"
        )));
    }
    let lam_inv = lam_sym
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Lambda could not be inverted".into()))?;
    let st = Structure {
        lam: lam_sym,
        lam_inv,
    };
    let objective = |k: &DMatrix<f64>| (&g * k - &a).norm() + lambda * k.norm();
    let cap = cfg.max_iter.min(MAX_PROJECTION_SWEEPS);

    let mut k = DMatrix::<f64>::identity(n, n);
    let mut f = objective(&k);
    let free = robust_tikhonov(gp, lambda, cfg)?;
    if let Ok(free_r) = real_part(&free.k_matrix, "K") {
        if let Some(p) = st.project(&free_r, cap) {
            let fp = objective(&p);
            if fp < f {
                k = p;
                f = fp;
            }
        }
    }

    let g_norm2 = g.norm_squared().max(f64::MIN_POSITIVE);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut last_decrease = 0.0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let r = &g * &k - &a;
        let rn = r.norm().max(1e-300);
        let kn = k.norm();
        let mut grad = g.transpose() * &r / rn;
        let mut lip = g_norm2 / rn;
        if lambda > 0.0 && kn > 0.0 {
            grad += &k * (lambda / kn);
            lip += lambda / kn;
        }
        let mut step = 1.0 / lip;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &k - &grad * step;
            if let Some(p) = st.project(&trial, cap) {
                let fp = objective(&p);
                if fp <= f {
                    accepted = Some((p, fp));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((p, fp)) = accepted else {
            converged = true;
            break;
        };
        last_decrease = f - fp;
        k = p;
        f = fp;
        trace.push(f);
        if last_decrease <= cfg.solver_tol * f.max(1.0) {
            converged = true;
            break;
        }
    }

    let violation = st.violation(&k);
    if violation > FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "structured iterate infeasible (violation {violation:.3e})"
        )));
    }
    let markov = st.markov(&k);
    let mut est = OperatorEstimate::new(to_complex(&k), Method::Nsdmd, lambda, &gp.dict_id, f)?;
    est.info.iterations = Some(iterations);
    est.info.final_decrease = Some(last_decrease);
    est.info.converged = Some(converged);
    est.info.constraint_violation = Some(violation);
    Ok(NsdmdResult {
        estimate: est,
        markov,
        constraint_violation: violation,
        objective_trace: trace,
    })
}
