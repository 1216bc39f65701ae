//! Observable dictionaries: the lifting map from state space to feature space.
//!
//! A dictionary evaluates `K` observables at a state `x` and returns them as a
//! feature row. Features are ordered deterministically: ascending harmonic
//! index for the Fourier kinds, graded order for monomials, center order for
//! radial basis functions and bin order for indicators.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::snapshots::SnapshotMatrix;

/// The family of observables and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionaryKind {
    /// The state coordinates themselves.
    Linear {},
    /// All monomials of total degree `<= max_degree`, constant included.
    Monomial { max_degree: u32 },
    /// `exp(2 pi i n x_c / period)` for `n` in `n_min..=n_max`.
    FourierCircle {
        n_min: i32,
        n_max: i32,
        period: f64,
        #[serde(default)]
        coordinate: usize,
    },
    /// `exp(i n x_c)` for an angle coordinate `x_c`, `n` in `n_min..=n_max`.
    AngleExponential {
        n_min: i32,
        n_max: i32,
        #[serde(default)]
        coordinate: usize,
    },
    /// `exp(-|x - c|^2 / width^2)` per center `c`.
    GaussianRbf { centers: Vec<Vec<f64>>, width: f64 },
    /// Piecewise-constant bin indicators on one coordinate. Bin `i` covers
    /// `[edges[i], edges[i+1])` and takes the value `weights[i]` (default 1).
    Indicator {
        edges: Vec<f64>,
        #[serde(default)]
        coordinate: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictionarySpec {
    state_dim: usize,
    kind: DictionaryKind,
}

/// A validated dictionary over states of dimension `state_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DictionarySpec", into = "DictionarySpec")]
pub struct Dictionary {
    kind: DictionaryKind,
    state_dim: usize,
    feature_dim: usize,
    exponents: Vec<Vec<u32>>,
}

impl TryFrom<DictionarySpec> for Dictionary {
    type Error = Error;
    fn try_from(spec: DictionarySpec) -> Result<Self> {
        Dictionary::new(spec.kind, spec.state_dim)
    }
}

impl From<Dictionary> for DictionarySpec {
    fn from(d: Dictionary) -> Self {
        DictionarySpec {
            state_dim: d.state_dim,
            kind: d.kind,
        }
    }
}

/// Lifted state `[psi_1(x), ..., psi_K(x)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: CVector,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The features as a `1 x K` matrix.
    pub fn row(&self) -> CMatrix {
        CMatrix::from_row_slice(1, self.values.len(), self.values.as_slice())
    }
}

fn graded_exponents(n: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn fill(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e;
            fill(pos + 1, left - e, cur, out);
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    for deg in 0..=max_degree {
        fill(0, deg, &mut cur, &mut out);
    }
    out
}

fn check_coordinate(coordinate: usize, state_dim: usize) -> Result<()> {
    if coordinate >= state_dim {
        return Err(Error::Config(format!(
            "coordinate {coordinate} out of range for state dimension {state_dim}"
        )));
    }
    Ok(())
}

fn check_range(n_min: i32, n_max: i32) -> Result<usize> {
    if n_min > n_max {
        return Err(Error::Config(format!("empty harmonic range {n_min}..={n_max}")));
    }
    Ok((n_max - n_min + 1) as usize)
}

impl Dictionary {
    pub fn new(kind: DictionaryKind, state_dim: usize) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        let mut exponents = Vec::new();
        let feature_dim = match &kind {
            DictionaryKind::Linear {} => state_dim,
            DictionaryKind::Monomial { max_degree } => {
                exponents = graded_exponents(state_dim, *max_degree);
                exponents.len()
            }
            DictionaryKind::FourierCircle {
                n_min,
                n_max,
                period,
                coordinate,
            } => {
                check_coordinate(*coordinate, state_dim)?;
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::Config(format!("period must be positive, got {period}")));
                }
                check_range(*n_min, *n_max)?
            }
            DictionaryKind::AngleExponential {
                n_min,
                n_max,
                coordinate,
            } => {
                check_coordinate(*coordinate, state_dim)?;
                check_range(*n_min, *n_max)?
            }
            DictionaryKind::GaussianRbf { centers, width } => {
                if centers.is_empty() {
                    return Err(Error::Config("RBF dictionary needs at least one center".into()));
                }
                if let Some(c) = centers.iter().find(|c| c.len() != state_dim) {
                    return Err(Error::Config(format!(
                        "RBF center of length {} for state dimension {state_dim}",
                        c.len()
                    )));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::Config(format!("RBF width must be positive, got {width}")));
                }
                centers.len()
            }
            DictionaryKind::Indicator {
                edges,
                coordinate,
                weights,
            } => {
                check_coordinate(*coordinate, state_dim)?;
                if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config("indicator edges must be strictly increasing, at least two".into()));
                }
                let bins = edges.len() - 1;
                if let Some(w) = weights {
                    if w.len() != bins || w.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Config(format!("indicator needs {bins} finite weights")));
                    }
                }
                bins
            }
        };
        Ok(Dictionary {
            kind,
            state_dim,
            feature_dim,
            exponents,
        })
    }

    pub fn linear(state_dim: usize) -> Self {
        Dictionary::new(DictionaryKind::Linear {}, state_dim).expect("positive state dimension")
    }

    pub fn kind(&self) -> &DictionaryKind {
        &self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Whether every observable is real-valued.
    pub fn is_real(&self) -> bool {
        !matches!(
            self.kind,
            DictionaryKind::FourierCircle { .. } | DictionaryKind::AngleExponential { .. }
        )
    }

    /// Short human-readable identifier, stable across runs.
    pub fn id(&self) -> String {
        match &self.kind {
            DictionaryKind::Linear {} => format!("linear(n={})", self.state_dim),
            DictionaryKind::Monomial { max_degree } => {
                format!("monomial(n={},d={max_degree})", self.state_dim)
            }
            DictionaryKind::FourierCircle {
                n_min,
                n_max,
                period,
                coordinate,
            } => format!("fourier_circle(x{coordinate},{n_min}..{n_max},L={period})"),
            DictionaryKind::AngleExponential {
                n_min,
                n_max,
                coordinate,
            } => format!("angle_exponential(x{coordinate},{n_min}..{n_max})"),
            DictionaryKind::GaussianRbf { centers, width } => {
                format!("gaussian_rbf(n={},centers={},w={width})", self.state_dim, centers.len())
            }
            DictionaryKind::Indicator { edges, coordinate, .. } => {
                format!("indicator(x{coordinate},bins={})", edges.len() - 1)
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::Dimension(format!(
                "state of length {} for dictionary over dimension {}",
                x.len(),
                self.state_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("state contains non-finite entries".into()));
        }
        Ok(())
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        match &self.kind {
            DictionaryKind::Linear {} => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = C64::new(*v, 0.0);
                }
            }
            DictionaryKind::Monomial { .. } => {
                for (o, e) in out.iter_mut().zip(&self.exponents) {
                    let v: f64 = x.iter().zip(e).map(|(xi, &p)| xi.powi(p as i32)).product();
                    *o = C64::new(v, 0.0);
                }
            }
            DictionaryKind::FourierCircle {
                n_min,
                period,
                coordinate,
                ..
            } => {
                let base = 2.0 * PI * x[*coordinate] / period;
                for (k, o) in out.iter_mut().enumerate() {
                    *o = C64::from_polar(1.0, (*n_min + k as i32) as f64 * base);
                }
            }
            DictionaryKind::AngleExponential {
                n_min, coordinate, ..
            } => {
                let th = x[*coordinate];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = C64::from_polar(1.0, (*n_min + k as i32) as f64 * th);
                }
            }
            DictionaryKind::GaussianRbf { centers, width } => {
                let w2 = width * width;
                for (o, c) in out.iter_mut().zip(centers) {
                    let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    *o = C64::new((-d2 / w2).exp(), 0.0);
                }
            }
            DictionaryKind::Indicator {
                edges,
                coordinate,
                weights,
            } => {
                let v = x[*coordinate];
                for (i, o) in out.iter_mut().enumerate() {
                    let inside = v >= edges[i] && v < edges[i + 1];
                    let w = weights.as_ref().map_or(1.0, |w| w[i]);
                    *o = C64::new(if inside { w } else { 0.0 }, 0.0);
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<FeatureVector> {
        self.check_input(x)?;
        let mut out = vec![C64::new(0.0, 0.0); self.feature_dim];
        self.eval_into(x, &mut out);
        Ok(FeatureVector {
            values: CVector::from_vec(out),
        })
    }

    /// Evaluate every row of `states`; row `m` of the result is `Psi(x_m)`.
    pub fn feature_rows(&self, states: &DMatrix<f64>) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(states.nrows(), self.feature_dim);
        let mut buf = vec![C64::new(0.0, 0.0); self.feature_dim];
        let mut x = vec![0.0; self.state_dim];
        for m in 0..states.nrows() {
            for (j, v) in x.iter_mut().enumerate() {
                *v = states[(m, j)];
            }
            self.check_input(&x)?;
            self.eval_into(&x, &mut buf);
            for (k, z) in buf.iter().enumerate() {
                out[(m, k)] = *z;
            }
        }
        Ok(out)
    }

    /// Analytic Jacobian: row `k` holds the gradient of `psi_k` at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Result<CMatrix> {
        self.check_input(x)?;
        let n = self.state_dim;
        let mut jac = CMatrix::zeros(self.feature_dim, n);
        match &self.kind {
            DictionaryKind::Linear {} => jac.fill_with_identity(),
            DictionaryKind::Monomial { .. } => {
                for (k, e) in self.exponents.iter().enumerate() {
                    for j in 0..n {
                        if e[j] == 0 {
                            continue;
                        }
                        let mut v = e[j] as f64;
                        for (i, (&xi, &p)) in x.iter().zip(e).enumerate() {
                            let p = if i == j { p - 1 } else { p };
                            v *= xi.powi(p as i32);
                        }
                        jac[(k, j)] = C64::new(v, 0.0);
                    }
                }
            }
            DictionaryKind::FourierCircle {
                n_min,
                period,
                coordinate,
                ..
            } => {
                let f = self.eval(x)?;
                for k in 0..self.feature_dim {
                    let n_k = (*n_min + k as i32) as f64;
                    jac[(k, *coordinate)] = C64::new(0.0, 2.0 * PI * n_k / period) * f.values[k];
                }
            }
            DictionaryKind::AngleExponential {
                n_min, coordinate, ..
            } => {
                let f = self.eval(x)?;
                for k in 0..self.feature_dim {
                    let n_k = (*n_min + k as i32) as f64;
                    jac[(k, *coordinate)] = C64::new(0.0, n_k) * f.values[k];
                }
            }
            DictionaryKind::GaussianRbf { centers, width } => {
                let f = self.eval(x)?;
                let w2 = width * width;
                for (k, c) in centers.iter().enumerate() {
                    for j in 0..n {
                        jac[(k, j)] = f.values[k] * (-2.0 * (x[j] - c[j]) / w2);
                    }
                }
            }
            // zero almost everywhere
            DictionaryKind::Indicator { .. } => {}
        }
        Ok(jac)
    }
}

/// Empirical Gram matrix `(1/N) sum_m Psi(x_m)^H Psi(x_m)` over every state in
/// `samples`. Hermitian symmetry is enforced exactly.
pub fn gram(dict: &Dictionary, samples: &SnapshotMatrix) -> Result<CMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptyData("gram needs at least one sample".into()));
    }
    let phi = dict.feature_rows(samples.states())?;
    Ok(gram_of_rows(&phi))
}

pub(crate) fn gram_of_rows(phi: &CMatrix) -> CMatrix {
    let n = phi.nrows() as f64;
    let g = phi.adjoint() * phi / C64::new(n, 0.0);
    hermitize(&g)
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;

    fn fourier(n_min: i32, n_max: i32) -> Dictionary {
        Dictionary::new(
            DictionaryKind::FourierCircle {
                n_min,
                n_max,
                period: 1.0,
                coordinate: 0,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn feature_dims() {
        assert_eq!(fourier(-50, 50).feature_dim(), 101);
        let mono = Dictionary::new(DictionaryKind::Monomial { max_degree: 2 }, 2).unwrap();
        // 1, x, y, x^2, xy, y^2
        assert_eq!(mono.feature_dim(), 6);
        let mono3 = Dictionary::new(DictionaryKind::Monomial { max_degree: 3 }, 3).unwrap();
        assert_eq!(mono3.feature_dim(), 20);
    }

    #[test]
    fn linear_eval_is_identity() {
        let d = Dictionary::linear(2);
        let f = d.eval(&[1.0, 2.0]).unwrap();
        assert_eq!(f.values[0], C64::new(1.0, 0.0));
        assert_eq!(f.values[1], C64::new(2.0, 0.0));
        let j = d.jacobian(&[3.0, -1.0]).unwrap();
        assert_eq!(j, CMatrix::identity(2, 2));
    }

    #[test]
    fn fourier_at_zero_is_ones() {
        let f = fourier(-1, 1).eval(&[0.0]).unwrap();
        for z in f.values.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let j = fourier(-1, 1).jacobian(&[0.0]).unwrap();
        assert!((j[(2, 0)] - C64::new(0.0, 2.0 * PI)).norm() < 1e-12);
    }

    #[test]
    fn angle_exponential_at_pi() {
        let d = Dictionary::new(
            DictionaryKind::AngleExponential {
                n_min: -10,
                n_max: 10,
                coordinate: 0,
            },
            1,
        )
        .unwrap();
        let f = d.eval(&[PI]).unwrap();
        // index of n = 1 is 11
        assert!((f.values[11] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn monomial_ordering() {
        let d = Dictionary::new(DictionaryKind::Monomial { max_degree: 2 }, 2).unwrap();
        let f = d.eval(&[2.0, 3.0]).unwrap();
        let re: Vec<f64> = f.values.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn eval_rejects_bad_input() {
        let d = Dictionary::linear(2);
        assert!(matches!(d.eval(&[1.0]), Err(Error::Dimension(_))));
        assert!(matches!(d.eval(&[1.0, f64::NAN]), Err(Error::Domain(_))));
        assert!(matches!(d.jacobian(&[f64::INFINITY, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_kinds_rejected() {
        assert!(Dictionary::new(DictionaryKind::Linear {}, 0).is_err());
        assert!(Dictionary::new(
            DictionaryKind::FourierCircle {
                n_min: 2,
                n_max: 1,
                period: 1.0,
                coordinate: 0
            },
            1
        )
        .is_err());
        assert!(Dictionary::new(
            DictionaryKind::GaussianRbf {
                centers: vec![vec![0.0]],
                width: 0.0
            },
            1
        )
        .is_err());
        assert!(Dictionary::new(
            DictionaryKind::Indicator {
                edges: vec![1.0, 0.0],
                coordinate: 0,
                weights: None
            },
            1
        )
        .is_err());
    }

    #[test]
    fn gram_constant_observable() {
        let d = Dictionary::new(DictionaryKind::Monomial { max_degree: 0 }, 1).unwrap();
        let snap = SnapshotMatrix::from_rows(&[vec![0.3], vec![-2.0], vec![5.0]], 1.0).unwrap();
        let g = gram(&d, &snap).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert!((g[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gram_linear_identity_rows() {
        let n = 3;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let snap = SnapshotMatrix::from_rows(&rows, 1.0).unwrap();
        let g = gram(&Dictionary::linear(n), &snap).unwrap();
        let expect = CMatrix::identity(n, n) / C64::new(n as f64, 0.0);
        assert!((g - expect).norm() < 1e-15);
    }

    #[test]
    fn gram_fourier_is_near_identity_under_uniform_sampling() {
        let n = 1000;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let snap = SnapshotMatrix::from_rows(&rows, 1.0).unwrap();
        let g = gram(&fourier(-2, 2), &snap).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let z = g[(i, j)];
                if i == j {
                    assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
                } else {
                    assert!(z.norm() < 0.1);
                }
            }
        }
        assert_eq!(g, g.adjoint());
        assert!(hermitian_eigenvalues(&g).unwrap()[0] >= -1e-10);
    }

    #[test]
    fn indicator_weights_and_bins() {
        let d = Dictionary::new(
            DictionaryKind::Indicator {
                edges: vec![-0.5, 0.5, 1.5],
                coordinate: 0,
                weights: Some(vec![2.0, 4.0]),
            },
            1,
        )
        .unwrap();
        let f = d.eval(&[1.0]).unwrap();
        assert_eq!(f.values[0].re, 0.0);
        assert_eq!(f.values[1].re, 4.0);
        assert!(d.is_real());
        assert!(!fourier(-1, 1).is_real());
    }

    #[test]
    fn serde_round_trip_validates() {
        let d = fourier(-3, 3);
        let s = serde_json::to_string(&d).unwrap();
        let back: Dictionary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"state_dim":1,"kind":{"name":"linear","extra":1}}"#;
        assert!(serde_json::from_str::<Dictionary>(bad).is_err());
        let bad_dim = r#"{"state_dim":0,"kind":{"name":"linear"}}"#;
        assert!(serde_json::from_str::<Dictionary>(bad_dim).is_err());
    }
}
