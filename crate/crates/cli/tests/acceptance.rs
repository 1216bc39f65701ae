use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rkoop::config::{EstimatorSpec, Experiment, RunConfig, Training};
use rkoop::pipeline::{bench, BenchRow};
use robust_koopman::dictionary::{gram, DictionaryKind};
use robust_koopman::edmd::{dmd, DEFAULT_RCOND};
use robust_koopman::linalg::{eigenvalues, to_complex};
use robust_koopman::nsdmd::FEASIBILITY_TOL;
use robust_koopman::simulators::{
    simulate_linear, simulate_markov_chain, simulate_rotation, BurgersParams, RotationParams, StuartLandauParams,
    SyntheticLinearParams,
};
use robust_koopman::{
    assemble, edmd, nsdmd_robust, robust_tikhonov, spectral_distance, subspace_dmd, uncertainty_bound, worst_case, CMatrix,
    Dictionary, GramPair, Method, ObservationMatrix, RobustConfig, SnapshotMatrix, C64,
};

type Check = Result<Outcome, Box<dyn StdError>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Check {
    Ok(Outcome { pass, detail })
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn rmat(rng: &mut ChaCha20Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_gram_pair(rng: &mut ChaCha20Rng, n: usize) -> GramPair {
    let phi0 = rmat(rng, 4 * n, n);
    let phi1 = rmat(rng, 4 * n, n);
    GramPair::from_feature_rows(&phi0, &phi1).unwrap()
}

fn radius(eigs: &[C64]) -> f64 {
    eigs.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn lambda_one() -> EstimatorSpec {
    EstimatorSpec::new(Method::RobustTikhonov).with_lambda(1.0)
}

/// Rows keyed by (seed, training size, label).
fn index(rows: &[BenchRow]) -> BTreeMap<(u64, usize, String), &BenchRow> {
    rows.iter().map(|r| ((r.seed, r.training_size, r.label.clone()), r)).collect()
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

fn failures(rows: &[BenchRow]) -> usize {
    rows.iter().filter(|r| r.failure.is_some()).count()
}

fn worst_case_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng(101);
    let (mut violations, mut achieved_ok, mut dominated, mut max_gap) = (0usize, 0usize, 0usize, 0.0_f64);
    let draws = 10_000;
    let instances = 100;
    for i in 0..instances {
        let n = 2 + i % 5;
        let gp = random_gram_pair(&mut r, n);
        let k = rmat(&mut r, n, n);
        let lambda = r.random_range(0.01..=1.0);
        let wc = worst_case(&gp, &k, lambda)?;
        let slack = 1e-12 * wc.value.max(1.0);
        let mut best = 0.0_f64;
        for _ in 0..draws {
            let mut dg = rmat(&mut r, n, n);
            let scale = lambda * r.random_range(0.0..=1.0_f64).powf(1.0 / (2 * n * n) as f64) / dg.norm();
            dg *= C64::new(scale, 0.0);
            let v = ((&gp.g + &dg) * &k - &gp.a).norm();
            best = best.max(v);
            if v > wc.value + slack {
                violations += 1;
            }
        }
        let feasible = wc.perturbation.norm() <= lambda * (1.0 + 1e-12);
        let achieved = ((&gp.g + &wc.perturbation) * &k - &gp.a).norm();
        if feasible && achieved >= best - slack {
            dominated += 1;
        }
        let gap = (wc.value - achieved).abs();
        max_gap = max_gap.max(gap);
        if feasible && gap <= 1e-9 {
            achieved_ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && achieved_ok == instances && secs < 30.0,
        format!(
            "{violations} bound violations in {} draws; constructed perturbation attains the closed form within 1e-9 in {achieved_ok}/{instances} (max gap {max_gap:.3e}); it dominates every draw in {dominated}/{instances}; {secs:.1} s",
            draws * instances
        ),
    )
}

fn small_lambda_matches_edmd() -> Check {
    let mut r = rng(202);
    let mut worst = 0.0_f64;
    for i in 0..50 {
        let gp = random_gram_pair(&mut r, 2 + i % 7);
        let kr = robust_tikhonov(&gp, 1e-12, &RobustConfig::default())?.k_matrix;
        let ke = edmd(&gp, DEFAULT_RCOND)?.k_matrix;
        worst = worst.max((kr - ke).norm());
    }
    outcome(worst <= 1e-6, format!("max ||K_robust - K_edmd||_F = {worst:.3e} over 50 instances"))
}

fn clean_rotation_spectrum() -> Check {
    let theta = std::f64::consts::PI / 320.0;
    let params = RotationParams {
        theta,
        noise_halfwidth: 0.0,
        x0: 1.0,
    };
    let snap = simulate_rotation(&params, 51, 0)?;
    let dict = Dictionary::new(
        DictionaryKind::FourierCircle {
            n_min: -50,
            n_max: 50,
            period: 1.0,
            coordinate: 0,
        },
        1,
    )?;
    let est = edmd(&assemble(&dict, &snap)?, DEFAULT_RCOND)?;
    let eigs = eigenvalues(&est.k_matrix)?;
    let truth: Vec<C64> = (-50..=50)
        .map(|n| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * n as f64 * theta))
        .collect();
    let d = spectral_distance(&eigs, &truth, 21)?;
    outcome(
        d <= 1e-4,
        format!(
            "50 pairs, 101 features: top-21 spectral distance {d:.3e} (radius {:.6}, retained rank {})",
            radius(&eigs),
            est.info.rank.unwrap_or(0)
        ),
    )
}

/// Robust radius within `1 + 1e-3` and no larger than EDMD's, per seed.
fn stability(cfg: &RunConfig, limit_secs: f64) -> Check {
    let start = Instant::now();
    let rows = bench(cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let idx = index(&rows);
    let size = cfg.training().length;
    let n = cfg.seeds.len();
    let (mut bounded, mut below) = (0usize, 0usize);
    let mut radii = Vec::new();
    for &s in &cfg.seeds {
        let rob = idx.get(&(s, size, "robust_tikhonov".into())).and_then(|r| finite(r.spectral_radius));
        let ed = idx.get(&(s, size, "edmd".into())).and_then(|r| finite(r.spectral_radius));
        if let Some(rr) = rob {
            radii.push(rr);
            if rr <= 1.0 + 1e-3 {
                bounded += 1;
            }
            if ed.is_some_and(|e| rr <= e) {
                below += 1;
            }
        }
    }
    let need = (0.9 * n as f64).ceil() as usize;
    let max_r = radii.iter().cloned().fold(0.0_f64, f64::max);
    outcome(
        bounded >= need && below >= need && secs < limit_secs,
        format!(
            "robust radius <= 1.001 in {bounded}/{n}, robust <= edmd radius in {below}/{n} (need {need}); max robust radius {max_r:.6}; {} failed fits; {secs:.1} s",
            failures(&rows)
        ),
    )
}

fn noisy_rotation_stability() -> Check {
    let mut cfg = RunConfig::for_experiment(Experiment::Rotation {
        params: RotationParams::default(),
        steps: 51,
    });
    cfg.training = Some(Training { start: 0, length: 51 });
    cfg.horizon = Some(0);
    cfg.estimators = Some(vec![EstimatorSpec::new(Method::Edmd), lambda_one()]);
    cfg.seeds = seeds(20);
    stability(&cfg, 120.0)
}

fn synthetic_linear_stability() -> Check {
    let mut cfg = RunConfig::for_experiment(Experiment::LinearSynthetic {
        params: SyntheticLinearParams::default(),
        steps: 25,
    });
    cfg.training = Some(Training { start: 0, length: 25 });
    cfg.horizon = Some(0);
    cfg.estimators = Some(vec![EstimatorSpec::new(Method::Edmd), lambda_one()]);
    cfg.seeds = seeds(20);
    stability(&cfg, 120.0)
}

fn stuart_landau_prediction() -> Check {
    let start = Instant::now();
    let mut cfg = RunConfig::for_experiment(Experiment::StuartLandau {
        params: StuartLandauParams::default(),
        steps: 100,
    });
    cfg.horizon = Some(10);
    cfg.bench.training_sizes = vec![10, 20, 30, 40];
    cfg.estimators = Some(vec![lambda_one(), EstimatorSpec::new(Method::SubspaceDmd)]);
    cfg.seeds = seeds(20);
    let rows = bench(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let idx = index(&rows);
    let mut all = true;
    let mut parts = Vec::new();
    for size in [10, 20, 30, 40] {
        let mut wins = 0;
        let (mut sum_r, mut sum_s) = (0.0, 0.0);
        for s in 0..20 {
            let rob = idx.get(&(s, size, "robust_tikhonov".into())).and_then(|r| finite(r.avg_error));
            let sub = idx.get(&(s, size, "subspace_dmd".into())).and_then(|r| finite(r.avg_error));
            if let (Some(a), Some(b)) = (rob, sub) {
                sum_r += a;
                sum_s += b;
                if a <= b {
                    wins += 1;
                }
            }
        }
        all &= wins > 10;
        parts.push(format!("n={size}: {wins}/20 (mean {:.3} vs {:.3})", sum_r / 20.0, sum_s / 20.0));
    }
    outcome(
        all && secs < 300.0,
        format!(
            "robust <= subspace average error: {}; {} failed fits; {secs:.1} s",
            parts.join(", "),
            failures(&rows)
        ),
    )
}

fn burgers_prediction() -> Check {
    let start = Instant::now();
    let mut cfg = RunConfig::for_experiment(Experiment::Burgers {
        params: BurgersParams::default(),
    });
    cfg.training = Some(Training { start: 0, length: 100 });
    cfg.horizon = Some(15);
    cfg.estimators = Some(vec![
        lambda_one(),
        EstimatorSpec::new(Method::SubspaceDmd),
        EstimatorSpec::new(Method::Dmd),
    ]);
    cfg.seeds = seeds(10);
    let rows = bench(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let idx = index(&rows);
    let (mut wins, mut diverged, mut unstable) = (0, 0, 0);
    for s in 0..10 {
        let get = |label: &str| idx.get(&(s, 100, label.to_string())).copied();
        let (Some(rob), Some(sub), Some(plain)) = (get("robust_tikhonov"), get("subspace_dmd"), get("dmd")) else {
            continue;
        };
        let (Some(ra), Some(rf)) = (finite(rob.avg_error), finite(rob.final_error)) else {
            continue;
        };
        if finite(sub.avg_error).is_some_and(|sa| ra < sa) {
            wins += 1;
        }
        if plain.final_error.is_some_and(|pf| !(pf <= 10.0 * rf)) {
            diverged += 1;
        }
        if plain.spectral_radius.is_some_and(|r| r > 1.0) {
            unstable += 1;
        }
    }
    outcome(
        wins >= 7 && diverged >= 7 && secs < 300.0,
        format!(
            "robust < subspace mean error in {wins}/10, plain DMD step-15 error > 10x robust in {diverged}/10 (need 7 each); plain DMD spectral radius > 1 in {unstable}/10; {} failed fits; {secs:.1} s",
            failures(&rows)
        ),
    )
}

struct Structure {
    min_markov: f64,
    max_row_dev: f64,
    min_k: f64,
    max_imag: f64,
}

/// Checks `Lambda K Lambda^-1` recomputed from scratch.
fn structure(k: &CMatrix, lam: &CMatrix) -> Result<Structure, Box<dyn StdError>> {
    let kr = k.map(|z| z.re);
    let lr = lam.map(|z| z.re);
    let inv = lr.clone().try_inverse().ok_or("Lambda is singular")?;
    let m = &lr * &kr * inv;
    Ok(Structure {
        min_markov: m.min(),
        max_row_dev: m.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max),
        min_k: kr.min(),
        max_imag: k.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
    })
}

fn nsdmd_structure() -> Check {
    let cfg = RobustConfig::default();
    let mut worst = Structure {
        min_markov: f64::INFINITY,
        max_row_dev: 0.0,
        min_k: f64::INFINITY,
        max_imag: 0.0,
    };
    let mut merge = |s: Structure| {
        worst.min_markov = worst.min_markov.min(s.min_markov);
        worst.max_row_dev = worst.max_row_dev.max(s.max_row_dev);
        worst.min_k = worst.min_k.min(s.min_k);
        worst.max_imag = worst.max_imag.max(s.max_imag);
    };
    let mut r = rng(707);
    let mut runs = 0;
    for i in 0..20 {
        let n = 2 + i % 4;
        let b = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let g = &b * b.transpose() + DMatrix::identity(n, n) * 0.2;
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| r.random_range(0.5..2.0)));
        let gp = GramPair::new(to_complex(&g), to_complex(&a), 1)?;
        let edges = (0..=n).map(|e| e as f64 - 0.5).collect();
        let dict = Dictionary::new(
            DictionaryKind::Indicator {
                edges,
                coordinate: 0,
                weights: None,
            },
            1,
        )?;
        let lam = to_complex(&d);
        let res = nsdmd_robust(&gp, &dict, &lam, r.random_range(0.01..1.0), &cfg)?;
        merge(structure(&res.estimate.k_matrix, &lam)?);
        runs += 1;
    }
    let t = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
    let mut oracle_err = 0.0_f64;
    for seed in 0..10 {
        let snap = simulate_markov_chain(&t, 0, 5000, seed)?;
        let ones = (0..snap.len()).filter(|&m| snap.state(m)[0] > 0.5).count() as f64;
        let freq = [1.0 - ones / snap.len() as f64, ones / snap.len() as f64];
        let dict = Dictionary::new(
            DictionaryKind::Indicator {
                edges: vec![-0.5, 0.5, 1.5],
                coordinate: 0,
                weights: Some(vec![1.0 / freq[0], 1.0 / freq[1]]),
            },
            1,
        )?;
        let lam = gram(&dict, &snap)?;
        let res = nsdmd_robust(&assemble(&dict, &snap)?, &dict, &lam, 1e-3, &cfg)?;
        merge(structure(&res.estimate.k_matrix, &lam)?);
        runs += 1;
        let lr = lam.map(|z| z.re);
        let markov = &lr * res.estimate.k_matrix.map(|z| z.re) * lr.try_inverse().ok_or("Lambda is singular")?;
        oracle_err = oracle_err.max((markov - &t).amax());
    }
    let tol = FEASIBILITY_TOL;
    let feasible = worst.min_markov >= -tol && worst.max_row_dev <= tol && worst.min_k >= -tol && worst.max_imag <= tol;
    outcome(
        feasible && oracle_err <= 0.05,
        format!(
            "{runs} runs: min(Lambda K Lambda^-1) {:.2e}, max |row sum - 1| {:.2e}, min K {:.2e}, max |Im K| {:.1e}; 2-state chain recovered within {oracle_err:.4} at 5000 samples (10 seeds)",
            worst.min_markov, worst.max_row_dev, worst.min_k, worst.max_imag
        ),
    )
}

fn rotation_matrix(rho: f64, w: f64) -> DMatrix<f64> {
    let (s, c) = w.sin_cos();
    DMatrix::from_row_slice(2, 2, &[rho * c, -rho * s, rho * s, rho * c])
}

fn subspace_sanity() -> Check {
    let scalar = CMatrix::from_fn(1, 20, |_, t| C64::new(0.9_f64.powi(t as i32), 0.0));
    let e1 = subspace_dmd(&ObservationMatrix::new(scalar)?, None)?.eigenvalues;
    let d1 = spectral_distance(&e1, &[C64::new(0.9, 0.0)], 1)?;
    let a = rotation_matrix(0.95, 0.3);
    let truth = vec![C64::from_polar(0.95, 0.3), C64::from_polar(0.95, -0.3)];
    let clean = simulate_linear(&a, &[1.0, 0.3], 20, 1.0, 0.0, 0.0, 0)?;
    let e2 = subspace_dmd(&ObservationMatrix::from_snapshots(&clean.observed)?, None)?.eigenvalues;
    let d2 = spectral_distance(&e2, &truth, 2)?;
    let exact = e1.len() == 1 && e2.len() == 2 && d1 <= 1e-8 && d2 <= 1e-8;
    let mut wins = 0;
    let (mut sum_s, mut sum_d) = (0.0, 0.0);
    for seed in 0..20 {
        let run = simulate_linear(&a, &[1.0, 0.0], 10_000, 1.0, 0.1, 0.3, seed)?;
        let es = subspace_dmd(&ObservationMatrix::from_snapshots(&run.observed)?, Some(2))?.eigenvalues;
        let ed = eigenvalues(&dmd(&run.observed, None)?.k_matrix)?;
        let (s, d) = (spectral_distance(&es, &truth, 2)?, spectral_distance(&ed, &truth, 2)?);
        sum_s += s;
        sum_d += d;
        if s <= d {
            wins += 1;
        }
    }
    outcome(
        exact && wins >= 16,
        format!(
            "noise-free errors {d1:.1e} (scalar), {d2:.1e} (rotation); noisy: subspace <= DMD eigenvalue error in {wins}/20 (mean {:.4} vs {:.4})",
            sum_s / 20.0,
            sum_d / 20.0
        ),
    )
}

fn uncertainty_bound_holds() -> Check {
    let mut r = rng(909);
    let mut worst_ratio = 0.0_f64;
    let mut violations = 0;
    for i in 0..20 {
        let (kind, dim) = match i % 4 {
            0 => (DictionaryKind::Monomial { max_degree: 3 }, 2),
            1 => (
                DictionaryKind::GaussianRbf {
                    centers: (0..5).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect(),
                    width: 0.8,
                },
                2,
            ),
            2 => (
                DictionaryKind::FourierCircle {
                    n_min: -3,
                    n_max: 3,
                    period: 2.0,
                    coordinate: 0,
                },
                1,
            ),
            _ => (
                DictionaryKind::AngleExponential {
                    n_min: -4,
                    n_max: 4,
                    coordinate: 1,
                },
                2,
            ),
        };
        let dict = Dictionary::new(kind, dim)?;
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let snap = SnapshotMatrix::from_rows(&rows, 1.0)?;
        let rho = r.random_range(0.01..0.5);
        let bound = uncertainty_bound(&dict, &snap, rho)?;
        let sources = snap.pair_indices();
        let feats: Vec<(CMatrix, CMatrix)> = sources
            .iter()
            .map(|&m| {
                let x = snap.state(m);
                (dict.eval(&x).unwrap().row(), dict.jacobian(&x).unwrap())
            })
            .collect();
        let k = dict.feature_dim();
        for _ in 0..200 {
            let mut dg = CMatrix::zeros(k, k);
            for (psi, jac) in &feats {
                let dx = DMatrix::from_fn(dim, 1, |_, _| r.random_range(-1.0..1.0));
                let dx = to_complex(&(&dx * (rho / dx.norm())));
                dg += psi.adjoint() * (jac * dx).transpose();
            }
            dg /= C64::new(sources.len() as f64, 0.0);
            let v = dg.norm();
            worst_ratio = worst_ratio.max(v / bound);
            if v > bound + 1e-8 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in 4000 draws over 20 instances; max ||dG||_F / bound = {worst_ratio:.4}"),
    )
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn rkoop(args: &[&str]) -> Result<(), Box<dyn StdError>> {
    let out = Command::new(env!("CARGO_BIN_EXE_rkoop")).args(args).env_remove("RKOOP_OUTPUT_DIR").output()?;
    if !out.status.success() {
        return Err(format!("rkoop {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)).into());
    }
    Ok(())
}

fn cli_determinism() -> Check {
    let tmp = tempfile::tempdir()?;
    let root = tmp.path();
    let configs = [
        (
            "rotation",
            r#"{"experiment": {"name": "rotation", "steps": 80},
                "training": {"start": 0, "length": 51}, "horizon": 10,
                "estimators": [{"method": "edmd"}, {"method": "robust_tikhonov", "lambda": 1.0},
                               {"method": "subspace_dmd"}],
                "seeds": [3, 4], "bench": {"training_sizes": [30, 51]}}"#,
        ),
        (
            "stuart_landau",
            r#"{"experiment": {"name": "stuart_landau", "steps": 60}, "horizon": 10,
                "estimators": [{"method": "robust_tikhonov", "lambda": 1.0}, {"method": "subspace_dmd"}],
                "seeds": [1, 2, 5], "bench": {"training_sizes": [10, 20]}}"#,
        ),
        (
            "burgers",
            r#"{"experiment": {"name": "burgers", "params": {"t_end": 0.6}},
                "training": {"start": 0, "length": 20}, "horizon": 5,
                "estimators": [{"method": "robust_tikhonov", "rho": 0.01}, {"method": "dmd"}],
                "seeds": [0]}"#,
        ),
        (
            "synthetic",
            r#"{"experiment": {"name": "linear_synthetic", "steps": 40},
                "training": {"start": 0, "length": 25}, "horizon": 5,
                "estimators": [{"method": "edmd"}, {"method": "robust_tikhonov", "lambda": 1.0},
                               {"method": "robust_lasso", "c": 0.1}],
                "seeds": [0, 1]}"#,
        ),
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, text) in configs {
        let cfg = root.join(format!("{name}.json"));
        std::fs::write(&cfg, text)?;
        let cfg = cfg.to_str().ok_or("non-UTF-8 path")?;
        for (run, threads) in [("a", "1"), ("b", "3")] {
            let out = root.join(run).join(name);
            let dir = |sub: &str| out.join(sub).to_string_lossy().into_owned();
            rkoop(&["simulate", "--config", cfg, "--seed", "1", "--output-dir", &dir("sim")])?;
            rkoop(&["fit", "--config", cfg, "--output-dir", &dir("fit")])?;
            rkoop(&["predict", "--config", cfg, "--output-dir", &dir("predict")])?;
            rkoop(&["bench", "--config", cfg, "--threads", threads, "--output-dir", &dir("bench")])?;
            let mut by_dir: BTreeMap<PathBuf, Vec<PathBuf>> = BTreeMap::new();
            for p in files(&out.join("fit")).into_keys() {
                if p.extension().is_some_and(|e| e == "json") && !p.ends_with("fit_log.json") {
                    let parent = p.parent().map(Path::to_path_buf).unwrap_or_default();
                    by_dir.entry(parent).or_default().push(out.join("fit").join(&p));
                }
            }
            for (sub, estimates) in by_dir {
                let mut args = vec!["spectrum".to_string(), "--dt".into(), "1".into()];
                for e in estimates {
                    args.push("--estimate".into());
                    args.push(e.to_string_lossy().into_owned());
                }
                args.push("--output-dir".into());
                args.push(out.join("spectrum").join(sub).to_string_lossy().into_owned());
                rkoop(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
            }
        }
        let (a, b) = (files(&root.join("a").join(name)), files(&root.join("b").join(name)));
        if a.keys().ne(b.keys()) {
            differing.push(format!("{name}: file sets differ"));
        }
        for (p, bytes) in &a {
            compared += 1;
            if b.get(p) != Some(bytes) {
                differing.push(format!("{name}/{}", p.display()));
            }
        }
    }
    outcome(
        differing.is_empty() && compared > 0,
        format!(
            "{compared} files from simulate/fit/predict/spectrum/bench compared across two runs (bench on 1 vs 3 threads); differing: {}",
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    )
}

fn main() {
    let checks: Vec<(&str, fn() -> Check)> = vec![
        ("worst-case-oracle", worst_case_oracle),
        ("small-lambda-edmd", small_lambda_matches_edmd),
        ("clean-rotation-spectrum", clean_rotation_spectrum),
        ("noisy-rotation-stability", noisy_rotation_stability),
        ("stuart-landau-prediction", stuart_landau_prediction),
        ("burgers-prediction", burgers_prediction),
        ("nsdmd-structure", nsdmd_structure),
        ("subspace-sanity", subspace_sanity),
        ("uncertainty-bound", uncertainty_bound_holds),
        ("cli-determinism", cli_determinism),
        ("synthetic-linear-stability", synthetic_linear_stability),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}").into())
        });
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(name);
        }
    }
    println!("acceptance: {}/{ran} passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
