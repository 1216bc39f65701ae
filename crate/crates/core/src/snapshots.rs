//! Time-series containers and the `G`, `A` assembly.
//!
//! Features are rows: `Psi(x)` is `1 x K`, so the estimated operator satisfies
//! `Psi(x_{m+1}) ~ Psi(x_m) K`. With `M` consecutive pairs,
//!
//! ```text
//! G = (1/M) sum_m Psi(x_m)^H Psi(x_m)
//! A = (1/M) sum_m Psi(x_m)^H Psi(x_{m+1})
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{gram_of_rows, Dictionary};
use crate::error::{Error, Result};
use crate::io::{csv_string, fmt_f64, parse_numeric_csv, write_atomic};
use crate::linalg::{is_finite, CMatrix, C64};

/// Ordered states `x_0 .. x_M`, one per row, sampled every `dt`.
///
/// `breaks` lists row indices that start a new trajectory; no pair spans a
/// break.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    states: DMatrix<f64>,
    dt: f64,
    meta: String,
    breaks: Vec<usize>,
}

/// Sidecar metadata stored next to a snapshot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub dt: f64,
    #[serde(default)]
    pub meta: String,
    #[serde(default)]
    pub breaks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
}

impl SnapshotMatrix {
    pub fn new(states: DMatrix<f64>, dt: f64) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(Error::EmptyData("snapshot matrix has no states".into()));
        }
        if states.ncols() == 0 {
            return Err(Error::Dimension("states have zero length".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("snapshot data contains non-finite entries".into()));
        }
        Ok(SnapshotMatrix {
            states,
            dt,
            meta: String::new(),
            breaks: Vec::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension(format!(
                "ragged snapshot rows: lengths {n} and {}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), n, &flat), dt)
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = meta.into();
        self
    }

    pub fn with_breaks(mut self, mut breaks: Vec<usize>) -> Result<Self> {
        breaks.sort_unstable();
        breaks.dedup();
        breaks.retain(|&b| b != 0);
        if breaks.iter().any(|&b| b >= self.len()) {
            return Err(Error::Dimension("break index beyond last state".into()));
        }
        self.breaks = breaks;
        Ok(self)
    }

    /// Stack several trajectories, marking each junction as a break.
    pub fn concat(parts: &[SnapshotMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyData("nothing to concatenate".into()))?;
        let n = first.state_dim();
        let total: usize = parts.iter().map(SnapshotMatrix::len).sum();
        let mut states = DMatrix::zeros(total, n);
        let mut breaks = Vec::new();
        let mut row = 0;
        for p in parts {
            if p.state_dim() != n {
                return Err(Error::Dimension("trajectories differ in state dimension".into()));
            }
            if p.dt != first.dt {
                return Err(Error::Config("trajectories differ in dt".into()));
            }
            if row > 0 {
                breaks.push(row);
            }
            breaks.extend(p.breaks.iter().map(|b| b + row));
            states.rows_mut(row, p.len()).copy_from(&p.states);
            row += p.len();
        }
        SnapshotMatrix::new(states, first.dt)?
            .with_meta(first.meta.clone())
            .with_breaks(breaks)
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn state(&self, i: usize) -> Vec<f64> {
        self.states.row(i).iter().copied().collect()
    }

    /// Rows `start .. start + len` as a new matrix (breaks shifted accordingly).
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::Dimension(format!(
                "window {start}..{} outside {} states",
                start + len,
                self.len()
            )));
        }
        let breaks = self
            .breaks
            .iter()
            .filter(|&&b| b > start && b < start + len)
            .map(|b| b - start)
            .collect();
        SnapshotMatrix::new(self.states.rows(start, len).into_owned(), self.dt)?
            .with_meta(self.meta.clone())
            .with_breaks(breaks)
    }

    /// Indices `m` such that `(x_m, x_{m+1})` is a valid pair.
    pub fn pair_indices(&self) -> Vec<usize> {
        (0..self.len().saturating_sub(1))
            .filter(|m| self.breaks.binary_search(&(m + 1)).is_err())
            .collect()
    }

    /// Consecutive pairs `(x_m, x_{m+1})` in time order.
    pub fn make_pairs(&self) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if self.len() < 2 {
            return Err(Error::EmptyData("need at least two snapshots to form a pair".into()));
        }
        let pairs: Vec<_> = self
            .pair_indices()
            .into_iter()
            .map(|m| (self.state(m), self.state(m + 1)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::EmptyData("no pairs survive trajectory breaks".into()));
        }
        Ok(pairs)
    }

    /// CSV text with an `x0,x1,..` header and one state per row.
    pub fn to_csv_string(&self) -> Result<String> {
        let header: Vec<String> = (0..self.state_dim()).map(|j| format!("x{j}")).collect();
        let rows: Vec<Vec<String>> = self
            .states
            .row_iter()
            .map(|r| r.iter().map(|&v| fmt_f64(v)).collect())
            .collect();
        csv_string(Some(&header), &rows)
    }

    pub fn from_csv_str(text: &str, dt: f64) -> Result<Self> {
        let (_, rows) = parse_numeric_csv(text)?;
        Self::from_rows(&rows, dt)
    }

    pub fn sidecar_meta(&self) -> SnapshotMeta {
        SnapshotMeta {
            dt: self.dt,
            meta: self.meta.clone(),
            breaks: self.breaks.clone(),
            rows: Some(self.len()),
            state_dim: Some(self.state_dim()),
        }
    }

    /// Writes `path` and its sidecar (see [`sidecar_path`]).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string()?.as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.sidecar_meta())?;
        write_atomic(&sidecar_path(path), meta.as_bytes())
    }

    /// Reads a CSV; `dt` is taken from the argument when given, else from the sidecar.
    pub fn read_csv(path: &Path, dt: Option<f64>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let side = sidecar_path(path);
        let meta: Option<SnapshotMeta> = if side.exists() {
            Some(serde_json::from_str(&fs::read_to_string(&side)?)?)
        } else {
            None
        };
        let dt = match (dt, &meta) {
            (Some(d), _) => d,
            (None, Some(m)) => m.dt,
            (None, None) => {
                return Err(Error::Config(format!(
                    "no dt given and no sidecar {} found",
                    side.display()
                )))
            }
        };
        let snap = Self::from_csv_str(&text, dt)?;
        match meta {
            Some(m) => snap.with_meta(m.meta).with_breaks(m.breaks),
            None => Ok(snap.with_meta(path.display().to_string())),
        }
    }
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// The assembled matrices `G` and `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub g: CMatrix,
    pub a: CMatrix,
    pub m_pairs: usize,
    /// Identifier of the dictionary that produced the features, if known.
    pub dict_id: String,
}

impl GramPair {
    pub fn new(g: CMatrix, a: CMatrix, m_pairs: usize) -> Result<Self> {
        if !g.is_square() || g.shape() != a.shape() {
            return Err(Error::Dimension(format!(
                "G is {}x{}, A is {}x{}",
                g.nrows(),
                g.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if !is_finite(&g) || !is_finite(&a) {
            return Err(Error::Numerical("G or A contains non-finite entries".into()));
        }
        Ok(GramPair {
            g,
            a,
            m_pairs,
            dict_id: String::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// Assemble from feature rows of the pair sources (`phi0`) and targets (`phi1`).
    pub fn from_feature_rows(phi0: &CMatrix, phi1: &CMatrix) -> Result<Self> {
        if phi0.shape() != phi1.shape() {
            return Err(Error::Dimension("source and target feature rows differ in shape".into()));
        }
        let m = phi0.nrows();
        if m == 0 {
            return Err(Error::EmptyData("no pairs to assemble".into()));
        }
        let g = gram_of_rows(phi0);
        let a = phi0.adjoint() * phi1 / C64::new(m as f64, 0.0);
        GramPair::new(g, a, m)
    }
}

/// Feature rows of pair sources and targets, in pair order.
pub fn pair_features(dict: &Dictionary, snap: &SnapshotMatrix) -> Result<(CMatrix, CMatrix)> {
    if snap.state_dim() != dict.state_dim() {
        return Err(Error::Dimension(format!(
            "snapshots have dimension {}, dictionary expects {}",
            snap.state_dim(),
            dict.state_dim()
        )));
    }
    snap.make_pairs()?;
    let phi = dict.feature_rows(snap.states())?;
    let idx = snap.pair_indices();
    let k = dict.feature_dim();
    let phi0 = CMatrix::from_fn(idx.len(), k, |r, c| phi[(idx[r], c)]);
    let phi1 = CMatrix::from_fn(idx.len(), k, |r, c| phi[(idx[r] + 1, c)]);
    Ok((phi0, phi1))
}

pub fn assemble(dict: &Dictionary, snap: &SnapshotMatrix) -> Result<GramPair> {
    let (phi0, phi1) = pair_features(dict, snap)?;
    let mut gp = GramPair::from_feature_rows(&phi0, &phi1)?;
    gp.dict_id = dict.id();
    Ok(gp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::gram;

    fn scalar(vals: &[f64]) -> SnapshotMatrix {
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        SnapshotMatrix::from_rows(&rows, 1.0).unwrap()
    }

    #[test]
    fn pairs_in_order() {
        let s = scalar(&[1.0, 2.0, 3.0]);
        let p = s.make_pairs().unwrap();
        assert_eq!(p, vec![(vec![1.0], vec![2.0]), (vec![2.0], vec![3.0])]);
        assert_eq!(scalar(&[1.0, 2.0]).make_pairs().unwrap().len(), 1);
        assert!(matches!(scalar(&[1.0]).make_pairs(), Err(Error::EmptyData(_))));
        let long: Vec<f64> = (0..51).map(f64::from).collect();
        assert_eq!(scalar(&long).make_pairs().unwrap().len(), 50);
    }

    #[test]
    fn breaks_are_respected() {
        let a = scalar(&[1.0, 2.0, 3.0]);
        let b = scalar(&[10.0, 20.0]);
        let c = SnapshotMatrix::concat(&[a, b]).unwrap();
        assert_eq!(c.breaks(), &[3]);
        let p = c.make_pairs().unwrap();
        assert_eq!(p.len(), 3);
        assert!(!p.contains(&(vec![3.0], vec![10.0])));
        let w = c.window(2, 3).unwrap();
        assert_eq!(w.breaks(), &[1]);
        assert_eq!(w.pair_indices(), vec![1]);
    }

    #[test]
    fn assemble_scalar_decay() {
        let s = scalar(&[1.0, 0.5, 0.25]);
        let gp = assemble(&Dictionary::linear(1), &s).unwrap();
        assert_eq!(gp.m_pairs, 2);
        assert!((gp.g[(0, 0)].re - 0.625).abs() < 1e-15);
        assert!((gp.a[(0, 0)].re - 0.3125).abs() < 1e-15);
        assert!(((gp.a[(0, 0)] / gp.g[(0, 0)]).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_trajectory_gives_a_equal_g() {
        let s = SnapshotMatrix::from_rows(&vec![vec![0.3, -1.2]; 5], 0.1).unwrap();
        let gp = assemble(&Dictionary::linear(2), &s).unwrap();
        assert!((&gp.a - &gp.g).norm() < 1e-15);
    }

    #[test]
    fn g_matches_gram_of_sources() {
        let vals: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = scalar(&vals);
        let dict = Dictionary::new(crate::dictionary::DictionaryKind::Monomial { max_degree: 3 }, 1).unwrap();
        let gp = assemble(&dict, &s).unwrap();
        let g2 = gram(&dict, &s.window(0, 19).unwrap()).unwrap();
        assert_eq!(gp.g, g2);
    }

    #[test]
    fn dimension_and_data_errors() {
        let s = SnapshotMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], 1.0).unwrap();
        assert!(matches!(assemble(&Dictionary::linear(3), &s), Err(Error::Dimension(_))));
        assert!(SnapshotMatrix::from_rows(&[vec![1.0], vec![f64::NAN]], 1.0).is_err());
        assert!(SnapshotMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], 1.0).is_err());
        assert!(SnapshotMatrix::from_rows(&[vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = SnapshotMatrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-12, 7.5]], 0.2).unwrap();
        let text = s.to_csv_string().unwrap();
        assert!(text.starts_with("x0,x1\n"));
        let back = SnapshotMatrix::from_csv_str(&text, 0.2).unwrap();
        assert_eq!(back.states(), s.states());
    }

    #[test]
    fn csv_file_with_sidecar() {
        let dir = std::env::temp_dir().join(format!("rk-snap-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("traj.csv");
        let s = SnapshotMatrix::concat(&[scalar(&[1.0, 2.0]), scalar(&[3.0, 4.0])])
            .unwrap()
            .with_meta("unit");
        s.write_csv(&p).unwrap();
        assert!(dir.join("traj.meta.json").exists());
        let back = SnapshotMatrix::read_csv(&p, None).unwrap();
        assert_eq!(back, s);
        fs::remove_dir_all(&dir).unwrap();
    }
}
