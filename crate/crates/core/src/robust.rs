//! Robust EDMD.
//!
//! The min-max problem over Gram perturbations `||dG||_F <= lambda` is solved
//! through its regularized form
//!
//! ```text
//! f(K) = ||G K - A||_F + lambda ||K||_F        (Tikhonov)
//! g(K) = ||G K - A||_F + c sum_ij |K_ij|       (Lasso)
//! ```
//!
//! together with the data-space bound `lambda_feat = rho * max|Psi| * max|Psi'|_F`
//! and an exact solver for the inner maximization used as a test oracle.

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::edmd::{edmd, fit_residual, ridge_solution, Method, OperatorEstimate};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, Svd, C64};
use crate::snapshots::{GramPair, SnapshotMatrix};

/// Tolerances and budgets for the robust solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    /// Tolerance of the 1-D search (in `ln alpha`) and of the Lasso decrease test.
    pub solver_tol: f64,
    /// `alpha_max = alpha_max_factor * ||G^H G||_2`.
    pub alpha_max_factor: f64,
    pub max_iter: usize,
    /// Lasso step; `None` means `1 / (2 ||G||_2^2)`.
    pub prox_step: Option<f64>,
    /// Minimize `||GK-A||^2 + lambda ||K||^2` (plain ridge) instead.
    pub squared_objective: bool,
    pub rcond: f64,
    /// Grid points of the coarse `ln alpha` scan.
    pub grid_points: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            solver_tol: 1e-9,
            alpha_max_factor: 10.0,
            max_iter: 5000,
            prox_step: None,
            squared_objective: false,
            rcond: crate::edmd::DEFAULT_RCOND,
            grid_points: 400,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.solver_tol, "solver_tol")?;
        pos(self.alpha_max_factor, "alpha_max_factor")?;
        pos(self.rcond, "rcond")?;
        if let Some(t) = self.prox_step {
            pos(t, "prox_step")?;
        }
        if self.max_iter == 0 || self.grid_points < 3 {
            return Err(Error::Config("max_iter must be positive and grid_points >= 3".into()));
        }
        Ok(())
    }
}

/// Uncertainty set: a Frobenius ball on `dG` directly, or a ball of radius
/// `rho` on every data point, converted through [`uncertainty_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintyModel {
    FeatureBall { radius: f64 },
    DataBall { radius: f64 },
}

impl UncertaintyModel {
    /// The Frobenius radius on `dG` implied by this model.
    pub fn feature_radius(&self, dict: &Dictionary, snap: &SnapshotMatrix) -> Result<f64> {
        match *self {
            UncertaintyModel::FeatureBall { radius } => {
                if !(radius >= 0.0) {
                    return Err(Error::Config(format!("radius must be >= 0, got {radius}")));
                }
                Ok(radius)
            }
            UncertaintyModel::DataBall { radius } => uncertainty_bound(dict, snap, radius),
        }
    }
}

/// `rho * max_m ||Psi(x_m)|| * max_m ||Psi'(x_m)||_F` over the pair sources.
pub fn uncertainty_bound(dict: &Dictionary, snap: &SnapshotMatrix, rho: f64) -> Result<f64> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("rho must be >= 0, got {rho}")));
    }
    if snap.state_dim() != dict.state_dim() {
        return Err(Error::Dimension(format!(
            "snapshots have dimension {}, dictionary expects {}",
            snap.state_dim(),
            dict.state_dim()
        )));
    }
    let idx = snap.pair_indices();
    if idx.is_empty() {
        return Err(Error::EmptyData("uncertainty bound needs at least one pair".into()));
    }
    let mut psi_max = 0.0_f64;
    let mut jac_max = 0.0_f64;
    for m in idx {
        let x = snap.state(m);
        psi_max = psi_max.max(dict.eval(&x)?.values.norm());
        jac_max = jac_max.max(dict.jacobian(&x)?.norm());
    }
    Ok(rho * psi_max * jac_max)
}

/// Result of the inner maximization over `||dG||_F <= lambda`.
#[derive(Debug, Clone)]
pub struct WorstCase {
    /// `||GK - A||_F + lambda ||K||_F`.
    pub value: f64,
    /// A feasible maximizer of `||(G + dG) K - A||_F`.
    pub perturbation: CMatrix,
    /// `||(G + dG*) K - A||_F`, the attained inner maximum.
    pub achieved: f64,
}

/// Evaluate the robust objective at `K` and construct the worst perturbation.
///
/// The maximizer of `||R + D K||_F` with `R = GK - A` over `||D||_F <= lambda`
/// solves the trust-region system `D (mu I - K K^H) = R K^H`, `||D||_F = lambda`,
/// `mu >= lambda_max(K K^H)`; `mu` is found by bisection on the secular
/// equation in the eigenbasis of `K K^H`.
pub fn worst_case(gp: &GramPair, k: &CMatrix, lambda: f64) -> Result<WorstCase> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = gp.dim();
    if k.shape() != (n, n) {
        return Err(Error::Dimension(format!("K must be {n}x{n}")));
    }
    let r = &gp.g * k - &gp.a;
    let value = r.norm() + lambda * k.norm();
    let zero = CMatrix::zeros(n, n);
    if lambda == 0.0 || k.norm() == 0.0 {
        return Ok(WorstCase {
            value,
            achieved: r.norm(),
            perturbation: zero,
        });
    }
    let (h, w) = hermitian_eigen(&(k * k.adjoint()))?;
    let h_max = h[n - 1];
    let e = &r * k.adjoint() * &w;
    let c: Vec<f64> = (0..n).map(|j| e.column(j).norm_squared()).collect();
    let top_tol = 1e-12 * h_max.max(f64::MIN_POSITIVE);
    let secular = |mu: f64| -> f64 {
        c.iter()
            .zip(&h)
            .map(|(&cj, &hj)| if cj == 0.0 { 0.0 } else { cj / ((mu - hj) * (mu - hj)) })
            .sum::<f64>()
    };
    let top_weight: f64 = c.iter().zip(&h).filter(|(_, &hj)| h_max - hj <= top_tol).map(|(cj, _)| cj).sum();
    let scale = c.iter().sum::<f64>().sqrt();
    let hard = top_weight <= 1e-28 * scale.max(1.0) * scale.max(1.0)
        && c.iter()
            .zip(&h)
            .filter(|(_, &hj)| h_max - hj > top_tol)
            .map(|(&cj, &hj)| cj / ((h_max - hj) * (h_max - hj)))
            .sum::<f64>()
            <= lambda * lambda;
    let mut d_w = CMatrix::zeros(n, n);
    if hard {
        let mut used = 0.0;
        for j in 0..n {
            if h_max - h[j] > top_tol {
                let f = 1.0 / (h_max - h[j]);
                d_w.set_column(j, &(e.column(j) * C64::new(f, 0.0)));
                used += c[j] * f * f;
            }
        }
        let tau = (lambda * lambda - used).max(0.0).sqrt();
        d_w[(0, n - 1)] += C64::new(tau, 0.0);
    } else {
        let mut lo = h_max;
        let mut hi = h_max + scale / lambda + f64::MIN_POSITIVE;
        while secular(hi) > lambda * lambda {
            hi = h_max + 2.0 * (hi - h_max);
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if secular(mid) > lambda * lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = hi;
        for j in 0..n {
            d_w.set_column(j, &(e.column(j) * C64::new(1.0 / (mu - h[j]), 0.0)));
        }
    }
    let mut d = d_w * w.adjoint();
    let dn = d.norm();
    if dn > lambda {
        d *= C64::new(lambda / dn, 0.0);
    }
    let achieved = (&r + &d * k).norm();
    Ok(WorstCase {
        value,
        perturbation: d,
        achieved,
    })
}

/// `||GK - A||_F + lambda ||K||_F`.
pub fn tikhonov_objective(gp: &GramPair, k: &CMatrix, lambda: f64) -> f64 {
    fit_residual(gp, k) + lambda * k.norm()
}

/// `||GK - A||_F + c sum |K_ij|`.
pub fn lasso_objective(gp: &GramPair, k: &CMatrix, c: f64) -> f64 {
    fit_residual(gp, k) + c * k.iter().map(|z| z.norm()).sum::<f64>()
}

struct RidgePath {
    svd: Svd,
    b: Vec<f64>,
    perp: f64,
}

impl RidgePath {
    fn new(gp: &GramPair) -> Result<Self> {
        let svd = Svd::new(&gp.g)?;
        let bm = svd.u.adjoint() * &gp.a;
        let b: Vec<f64> = (0..bm.nrows()).map(|i| bm.row(i).norm_squared()).collect();
        let perp = (gp.a.norm_squared() - b.iter().sum::<f64>()).max(0.0);
        Ok(RidgePath { svd, b, perp })
    }

    /// (residual^2, ||K||^2) of the ridge solution at `alpha > 0`.
    fn parts(&self, alpha: f64) -> (f64, f64) {
        let mut res = self.perp;
        let mut kn = 0.0;
        for (&s, &b) in self.svd.s.iter().zip(&self.b) {
            let den = s * s + alpha;
            res += (alpha / den) * (alpha / den) * b;
            kn += (s / den) * (s / den) * b;
        }
        (res, kn)
    }
}

/// Minimize `f(K) = ||GK - A||_F + lambda ||K||_F`.
///
/// Candidates are the ridge path `K_alpha = (G^H G + alpha I)^-1 G^H A`,
/// scanned on a logarithmic grid in `alpha` and refined by golden-section
/// search, plus the pseudo-inverse solution (`alpha = 0`) and `K = 0`.
pub fn robust_tikhonov(gp: &GramPair, lambda: f64, cfg: &RobustConfig) -> Result<OperatorEstimate> {
    cfg.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if cfg.squared_objective {
        return ridge(gp, lambda, cfg);
    }
    let base = edmd(gp, cfg.rcond)?;
    if lambda == 0.0 {
        let mut est = base;
        est.method = Method::RobustTikhonov;
        est.info.alpha = Some(0.0);
        est.info.squared_objective = Some(false);
        return Ok(est);
    }
    let path = RidgePath::new(gp)?;
    let f = |alpha: f64| {
        let (r, k) = path.parts(alpha);
        r.sqrt() + lambda * k.sqrt()
    };

    // (objective, alpha); alpha = None encodes K = 0
    let mut best: (f64, Option<f64>) = (gp.a.norm(), None);
    let f0 = tikhonov_objective(gp, &base.k_matrix, lambda);
    if f0 < best.0 {
        best = (f0, Some(0.0));
    }
    let s_max = path.svd.max_singular();
    if s_max > 0.0 {
        let alpha_max = cfg.alpha_max_factor * s_max * s_max;
        let t_hi = alpha_max.ln();
        let t_lo = t_hi - 70.0;
        let n = cfg.grid_points;
        let ts: Vec<f64> = (0..n).map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| f(t.exp())).collect();
        let i_best = (0..n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("nonempty grid");
        let mut a = ts[i_best.saturating_sub(1)];
        let mut b = ts[(i_best + 1).min(n - 1)];
        let g = 0.5 * (5.0_f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = f(x1.exp());
        let mut f2 = f(x2.exp());
        let mut iters = 0;
        while b - a > cfg.solver_tol && iters < cfg.max_iter {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1.exp());
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2.exp());
            }
            iters += 1;
        }
        let mut cand = [(vals[i_best], ts[i_best]), (f1, x1), (f2, x2)];
        cand.sort_by(|p, q| p.0.total_cmp(&q.0));
        let alpha = cand[0].1.exp();
        let k = ridge_solution(&path.svd, &gp.a, alpha);
        let fk = tikhonov_objective(gp, &k, lambda);
        if fk < best.0 {
            best = (fk, Some(alpha));
        }
    }
    let n = gp.dim();
    let k = match best.1 {
        None => CMatrix::zeros(n, n),
        Some(0.0) => base.k_matrix.clone(),
        Some(a) => ridge_solution(&path.svd, &gp.a, a),
    };
    let residual = tikhonov_objective(gp, &k, lambda);
    let mut est = OperatorEstimate::new(k, Method::RobustTikhonov, lambda, &gp.dict_id, residual)?;
    est.info.alpha = best.1;
    est.info.squared_objective = Some(false);
    est.info.rank = if best.1 == Some(0.0) { base.info.rank } else { None };
    Ok(est)
}

fn ridge(gp: &GramPair, lambda: f64, cfg: &RobustConfig) -> Result<OperatorEstimate> {
    let k = if lambda == 0.0 {
        edmd(gp, cfg.rcond)?.k_matrix
    } else {
        ridge_solution(&Svd::new(&gp.g)?, &gp.a, lambda)
    };
    let residual = fit_residual(gp, &k).powi(2) + lambda * k.norm_squared();
    let mut est = OperatorEstimate::new(k, Method::RobustTikhonov, lambda, &gp.dict_id, residual)?;
    est.info.alpha = Some(lambda);
    est.info.squared_objective = Some(true);
    Ok(est)
}

fn soft_threshold(z: C64, tau: f64) -> C64 {
    let a = z.norm();
    if a <= tau {
        C64::new(0.0, 0.0)
    } else {
        z * (1.0 - tau / a)
    }
}

/// Lasso solver output with the objective after every iteration.
#[derive(Debug, Clone)]
pub struct LassoTrace {
    pub estimate: OperatorEstimate,
    pub objective: Vec<f64>,
}

/// Minimize `g(K) = ||GK - A||_F + c sum |K_ij|`.
///
/// Each iteration majorizes the unsquared residual at the current point by
/// `(||R||^2 / r_k + r_k) / 2` and takes one proximal-gradient step on the
/// majorizer: `K <- S_{t c r_k}(K - t G^H (GK - A))`. With
/// `t <= 1 / ||G||_2^2` the objective never increases.
pub fn robust_lasso(gp: &GramPair, c: f64, cfg: &RobustConfig) -> Result<OperatorEstimate> {
    Ok(robust_lasso_trace(gp, c, cfg)?.estimate)
}

pub fn robust_lasso_trace(gp: &GramPair, c: f64, cfg: &RobustConfig) -> Result<LassoTrace> {
    cfg.validate()?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("c must be >= 0, got {c}")));
    }
    let n = gp.dim();
    if c == 0.0 {
        let mut est = edmd(gp, cfg.rcond)?;
        est.method = Method::RobustLasso;
        est.info.iterations = Some(0);
        est.info.converged = Some(true);
        let obj = vec![est.residual];
        return Ok(LassoTrace { estimate: est, objective: obj });
    }
    let s_max = Svd::new(&gp.g)?.max_singular();
    let mut k = CMatrix::zeros(n, n);
    let mut g_cur = lasso_objective(gp, &k, c);
    let mut history = vec![g_cur];
    let mut iterations = 0;
    let mut decrease = 0.0;
    let mut converged = s_max == 0.0;
    if !converged {
        let t = cfg.prox_step.unwrap_or(0.5 / (s_max * s_max));
        let gh = gp.g.adjoint();
        while iterations < cfg.max_iter {
            let r = &gp.g * &k - &gp.a;
            let rk = r.norm();
            if rk == 0.0 {
                converged = true;
                break;
            }
            let step = &k - (&gh * r) * C64::new(t, 0.0);
            let tau = t * c * rk;
            let next = step.map(|z| soft_threshold(z, tau));
            let g_next = lasso_objective(gp, &next, c);
            iterations += 1;
            if g_next > g_cur {
                // step too long for this instance (custom prox_step)
                decrease = g_cur - g_next;
                break;
            }
            decrease = g_cur - g_next;
            k = next;
            g_cur = g_next;
            history.push(g_cur);
            if decrease <= cfg.solver_tol * g_cur.max(1.0) {
                converged = true;
                break;
            }
        }
    }
    let mut est = OperatorEstimate::new(k, Method::RobustLasso, c, &gp.dict_id, g_cur)?;
    est.info.iterations = Some(iterations);
    est.info.final_decrease = Some(decrease);
    est.info.converged = Some(converged);
    Ok(LassoTrace {
        estimate: est,
        objective: history,
    })
}
