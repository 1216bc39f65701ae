//! Command implementations: every artifact goes through an atomic write under
//! the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use robust_koopman::io::{csv_string, fmt_f64, write_atomic};
use robust_koopman::predictor::write_trajectory;
use robust_koopman::spectrum::{analyze, SpectrumReport};
use robust_koopman::{OperatorEstimate, C64};
use serde::Serialize;

use crate::config::{Experiment, RunConfig};
use crate::pipeline::{self, BenchRow, Dataset, Measured};
use crate::CliError;

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Seeds to run: an explicit override or the configured list.
fn seeds(cfg: &RunConfig, seed: Option<u64>) -> Vec<u64> {
    seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

/// Either a CSV file given on the command line or the configured experiment.
fn dataset(cfg: &RunConfig, data: Option<&Path>, seed: u64) -> Result<Dataset, CliError> {
    match (data, &cfg.experiment) {
        (Some(p), Experiment::FromCsv { dt, .. }) => pipeline::load_states(p, *dt),
        (Some(p), _) => pipeline::load_states(p, None),
        (None, _) => pipeline::simulate(cfg, seed),
    }
}

/// Simulated runs get one directory per seed; CSV input writes directly.
fn run_dir(cfg: &RunConfig, out: &Path, data: Option<&Path>, seed: u64) -> PathBuf {
    if data.is_some() || matches!(cfg.experiment, Experiment::FromCsv { .. }) {
        out.to_path_buf()
    } else {
        out.join(format!("seed_{seed}"))
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    experiment: &'a Experiment,
    seed: u64,
    snapshots: usize,
    state_dim: usize,
    dt: f64,
    dictionary: String,
    clamped_steps: usize,
}

pub fn simulate(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    if matches!(cfg.experiment, Experiment::FromCsv { .. }) {
        return Err(CliError::Config("simulate needs a simulated experiment, not from_csv".into()));
    }
    let mut written = Vec::new();
    for s in seeds(cfg, seed) {
        let data = pipeline::simulate(cfg, s)?;
        let dict = pipeline::dictionary_for(cfg, &data)?;
        let dir = run_dir(cfg, out, None, s);
        let states = dir.join("states.csv");
        data.truth.write_csv(&states)?;
        written.push(states);
        match &data.measured {
            Measured::States(m) if m != &data.truth => {
                let p = dir.join("measured.csv");
                m.write_csv(&p)?;
                written.push(p);
            }
            Measured::Features(f) => {
                let p = dir.join("observations.csv");
                robust_koopman::ObservationMatrix::new(f.transpose())?.write_csv(&p)?;
                written.push(p);
            }
            _ => {}
        }
        if data.clamped > 0 {
            eprintln!("warning: seed {s}: radius clamped on {} steps", data.clamped);
        }
        let meta = RunMeta {
            experiment: &cfg.experiment,
            seed: s,
            snapshots: data.len(),
            state_dim: data.truth.state_dim(),
            dt: data.truth.dt(),
            dictionary: dict.id(),
            clamped_steps: data.clamped,
        };
        let p = dir.join("run.json");
        write(&p, to_json(&meta)?.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

pub fn fit(cfg: &RunConfig, out: &Path, data_path: Option<&Path>, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for s in seeds(cfg, seed) {
        let data = dataset(cfg, data_path, s)?;
        let dict = pipeline::dictionary_for(cfg, &data)?;
        let tr = cfg.training();
        let len = pipeline::resolve_length(cfg, &data, tr.start, tr.length);
        let dir = run_dir(cfg, out, data_path, s);
        let mut records = Vec::new();
        let mut estimates = Vec::new();
        for spec in cfg.estimators() {
            let t = Instant::now();
            let fitted = pipeline::fit_one(cfg, &dict, &data, tr.start, len, &spec)?;
            if let Some(rho) = fitted.record.rho {
                eprintln!(
                    "{}: lambda = {} from uncertainty bound with rho = {rho}",
                    fitted.record.label,
                    fmt_f64(fitted.estimate.reg_level)
                );
            }
            eprintln!(
                "seed {s} {}: residual {:.6e}, {:.3} s",
                fitted.record.label,
                fitted.estimate.residual,
                t.elapsed().as_secs_f64()
            );
            estimates.push((fitted.record.label.clone(), fitted.estimate));
            records.push(fitted.record);
        }
        for (label, est) in &estimates {
            let p = dir.join(format!("{label}.json"));
            write(&p, format!("{}\n", est.to_json()?).as_bytes())?;
            written.push(p);
        }
        let p = dir.join("fit_log.json");
        write(&p, to_json(&records)?.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

pub fn read_estimate(path: &Path) -> Result<OperatorEstimate, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("estimate {} not found", path.display())));
    }
    Ok(OperatorEstimate::read_json(path)?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "estimate".into(), |s| s.to_string_lossy().into_owned())
}

pub fn spectrum(estimates: &[PathBuf], dt: f64, tol: f64, k_dominant: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if estimates.is_empty() {
        return Err(CliError::Config("no estimates given".into()));
    }
    if !(dt.is_finite() && dt > 0.0) || !(tol >= 0.0) {
        return Err(CliError::Config("dt must be positive and tol nonnegative".into()));
    }
    let mut names = Vec::new();
    let mut reports: Vec<(String, SpectrumReport)> = Vec::new();
    for path in estimates {
        let mut name = stem(path);
        if names.contains(&name) {
            name = format!("{name}_{}", names.len());
        }
        names.push(name.clone());
        let est = read_estimate(path)?;
        reports.push((name, analyze(&est, dt, tol, k_dominant)?));
    }
    let mut written = Vec::new();
    let mut rows = Vec::new();
    for (name, report) in &reports {
        let p = out.join(format!("{name}.spectrum.json"));
        write(&p, format!("{}\n", report.to_json()?).as_bytes())?;
        written.push(p);
        for (i, (z, c)) in report.discrete_eigs.iter().zip(&report.continuous_eigs).enumerate() {
            rows.push(vec![
                name.clone(),
                i.to_string(),
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(z.norm()),
                c.map(|c| fmt_f64(c[0])).unwrap_or_default(),
                c.map(|c| fmt_f64(c[1])).unwrap_or_default(),
            ]);
        }
        println!(
            "{name}: spectral radius {:.6}, unstable {} (discrete) {} (continuous)",
            report.spectral_radius, report.unstable_count_discrete, report.unstable_count_continuous
        );
    }
    let header: Vec<String> = ["estimate", "index", "re", "im", "abs", "cont_re", "cont_im"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let p = out.join("eigenvalues.csv");
    write(&p, csv_string(Some(&header), &rows)?.as_bytes())?;
    written.push(p);
    Ok(written)
}

pub struct PredictArgs<'a> {
    pub estimates: &'a [PathBuf],
    pub data: Option<&'a Path>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
}

pub fn predict(cfg: &RunConfig, out: &Path, args: &PredictArgs) -> Result<Vec<PathBuf>, CliError> {
    let horizon = args.horizon.unwrap_or_else(|| cfg.horizon());
    if horizon == 0 {
        return Err(CliError::Config("prediction horizon must be positive".into()));
    }
    let given: Vec<(String, OperatorEstimate)> = args
        .estimates
        .iter()
        .map(|p| Ok((stem(p), read_estimate(p)?)))
        .collect::<Result<_, CliError>>()?;
    let mut written = Vec::new();
    for s in seeds(cfg, args.seed) {
        let data = dataset(cfg, args.data, s)?;
        let dict = pipeline::dictionary_for(cfg, &data)?;
        let tr = cfg.training();
        let len = pipeline::resolve_length(cfg, &data, tr.start, tr.length);
        let estimates = if given.is_empty() {
            pipeline::fit_all(cfg, &dict, &data, tr.start, len)?
                .into_iter()
                .map(|f| (f.record.label, f.estimate))
                .collect()
        } else {
            given.clone()
        };
        let dir = run_dir(cfg, out, args.data, s);
        for (label, est) in &estimates {
            let p = pipeline::predict(cfg, &dict, &data, tr.start, len, est, horizon)?;
            let traj = dir.join(format!("{label}.prediction.csv"));
            write_trajectory(&traj, &p.predicted, data.truth.dt())?;
            let header = vec!["step".to_string(), "error".to_string()];
            let rows: Vec<Vec<String>> = p
                .error
                .per_step
                .iter()
                .enumerate()
                .map(|(i, e)| vec![(i + 1).to_string(), fmt_f64(*e)])
                .collect();
            let err = dir.join(format!("{label}.error.csv"));
            write(&err, csv_string(Some(&header), &rows)?.as_bytes())?;
            println!("seed {s} {label}: average error {:.6e}", p.error.average);
            written.push(traj);
            written.push(err);
        }
    }
    Ok(written)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String, CliError> {
    let header: Vec<String> = [
        "seed",
        "training_size",
        "estimator",
        "method",
        "reg_level",
        "spectral_radius",
        "unstable_count",
        "spectral_distance",
        "avg_error",
        "final_error",
        "failure",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.training_size.to_string(),
                r.label.clone(),
                r.method.name().to_string(),
                opt(r.reg_level),
                opt(r.spectral_radius),
                r.unstable_count.map(|c| c.to_string()).unwrap_or_default(),
                opt(r.spectral_distance),
                opt(r.avg_error),
                opt(r.final_error),
                r.failure.clone().unwrap_or_default(),
            ]
        })
        .collect();
    Ok(csv_string(Some(&header), &body)?)
}

fn reference_csv(reference: &[C64]) -> Result<String, CliError> {
    let header = vec!["re".to_string(), "im".to_string()];
    let rows: Vec<Vec<String>> = reference.iter().map(|z| vec![fmt_f64(z.re), fmt_f64(z.im)]).collect();
    Ok(csv_string(Some(&header), &rows)?)
}

pub fn bench(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let t = Instant::now();
    let rows = pipeline::bench(cfg)?;
    let failures = rows.iter().filter(|r| r.failure.is_some()).count();
    eprintln!(
        "bench: {} rows ({failures} failed estimator runs) in {:.2} s",
        rows.len(),
        t.elapsed().as_secs_f64()
    );
    let mut written = Vec::new();
    let p = out.join("bench.csv");
    write(&p, bench_csv(&rows)?.as_bytes())?;
    written.push(p);
    if !matches!(cfg.experiment, Experiment::FromCsv { .. }) {
        if let Some(reference) = pipeline::simulate(cfg, cfg.seeds[0])?.reference {
            let p = out.join("reference_spectrum.csv");
            write(&p, reference_csv(&reference)?.as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}
