//! Eigenvalue reports and spectral comparison.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::edmd::OperatorEstimate;
use crate::error::{Error, Result};
use crate::io::{csv_string, cvec_serde, fmt_f64};
use crate::linalg::{eigenvalues, C64};

pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted by descending magnitude, then real part, then imaginary part.
    #[serde(with = "cvec_serde")]
    pub discrete_eigs: Vec<C64>,
    /// `ln(lambda) / dt` (principal branch); `None` for `lambda = 0`.
    pub continuous_eigs: Vec<Option<[f64; 2]>>,
    pub spectral_radius: f64,
    pub unstable_count_discrete: usize,
    pub unstable_count_continuous: usize,
    #[serde(with = "cvec_serde")]
    pub dominant: Vec<C64>,
    pub dt: f64,
    pub tol: f64,
}

fn dominance_key(z: &C64) -> (i64, i64, f64) {
    let q = |v: f64| (v * 1e10).round() as i64;
    (q(z.norm()), q(z.re), z.im)
}

/// Dominance order: magnitude, then real part, then imaginary part, all descending.
pub fn dominance_cmp(a: &C64, b: &C64) -> Ordering {
    let (ma, ra, ia) = dominance_key(a);
    let (mb, rb, ib) = dominance_key(b);
    mb.cmp(&ma).then(rb.cmp(&ra)).then(ib.total_cmp(&ia))
}

pub fn sort_dominant(v: &mut [C64]) {
    v.sort_by(dominance_cmp);
}

pub fn analyze(est: &OperatorEstimate, dt: f64, tol: f64, k_dominant: usize) -> Result<SpectrumReport> {
    analyze_eigenvalues(eigenvalues(&est.k_matrix)?, dt, tol, k_dominant)
}

pub fn analyze_eigenvalues(mut eigs: Vec<C64>, dt: f64, tol: f64, k_dominant: usize) -> Result<SpectrumReport> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !(tol >= 0.0) {
        return Err(Error::Config(format!("tol must be >= 0, got {tol}")));
    }
    if eigs.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    sort_dominant(&mut eigs);
    let continuous: Vec<Option<[f64; 2]>> = eigs
        .iter()
        .map(|z| {
            if z.norm() == 0.0 {
                None
            } else {
                let c = z.ln() / dt;
                Some([c.re, c.im])
            }
        })
        .collect();
    let spectral_radius = eigs.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let unstable_count_discrete = eigs.iter().filter(|z| z.norm() > 1.0 + tol).count();
    let unstable_count_continuous = continuous.iter().flatten().filter(|c| c[0] > tol / dt).count();
    let dominant = eigs.iter().take(k_dominant).copied().collect();
    Ok(SpectrumReport {
        discrete_eigs: eigs,
        continuous_eigs: continuous,
        spectral_radius,
        unstable_count_discrete,
        unstable_count_continuous,
        dominant,
        dt,
        tol,
    })
}

impl SpectrumReport {
    /// `re,im` rows of the discrete eigenvalues.
    pub fn to_csv_string(&self) -> Result<String> {
        let header = vec!["re".to_string(), "im".to_string()];
        let rows: Vec<Vec<String>> = self.discrete_eigs.iter().map(|z| vec![fmt_f64(z.re), fmt_f64(z.im)]).collect();
        csv_string(Some(&header), &rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns `assign[row] = col` and the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based arrays, column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assign, total)
}

/// Minimum total `|a_i - b_j|` over matchings of the top-`k` (dominance
/// order) eigenvalues of each set.
pub fn spectral_distance(a: &[C64], b: &[C64], k: usize) -> Result<f64> {
    if k > a.len() || k > b.len() {
        return Err(Error::Dimension(format!(
            "k = {k} exceeds set sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    sort_dominant(&mut a);
    sort_dominant(&mut b);
    let cost: Vec<Vec<f64>> = a[..k].iter().map(|x| b[..k].iter().map(|y| (x - y).norm()).collect()).collect();
    Ok(hungarian(&cost).1)
}
