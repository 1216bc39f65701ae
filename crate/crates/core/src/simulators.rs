//! Seeded generators for the benchmark systems.
//!
//! Every generator draws from `ChaCha20Rng::seed_from_u64(seed)`; process noise
//! uses stream 1 and observation noise stream 2, so changing one noise level
//! never shifts the other sequence.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::snapshots::SnapshotMatrix;
use crate::subspace::ObservationMatrix;

pub const PROCESS_STREAM: u64 = 1;
pub const OBSERVATION_STREAM: u64 = 2;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on `[-h, h]`; always consumes one variate.
fn uniform(rng: &mut ChaCha20Rng, h: f64) -> f64 {
    h * rng.random_range(-1.0..=1.0)
}

fn check_nonneg(v: f64, name: &str) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be >= 0, got {v}")))
    }
}

fn check_pos(v: f64, name: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

/// `x_{t+1} = x_t + theta + xi_t`, `xi_t ~ U[-h, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationParams {
    pub theta: f64,
    pub noise_halfwidth: f64,
    pub x0: f64,
}

impl Default for RotationParams {
    fn default() -> Self {
        RotationParams {
            theta: PI / 320.0,
            noise_halfwidth: 0.7,
            x0: 1.0,
        }
    }
}

/// `steps` snapshots `x_0 .. x_{steps-1}` (unit sampling period).
pub fn simulate_rotation(p: &RotationParams, steps: usize, seed: u64) -> Result<SnapshotMatrix> {
    check_nonneg(p.noise_halfwidth, "noise_halfwidth")?;
    if steps == 0 {
        return Err(Error::Config("steps must be positive".into()));
    }
    let mut rng = rng_for(seed, PROCESS_STREAM);
    let mut x = p.x0;
    let mut rows = Vec::with_capacity(steps);
    rows.push(vec![x]);
    for _ in 1..steps {
        x += p.theta + uniform(&mut rng, p.noise_halfwidth);
        rows.push(vec![x]);
    }
    Ok(SnapshotMatrix::from_rows(&rows, 1.0)?.with_meta(format!("rotation seed={seed}")))
}

/// Analytic Koopman eigenvalues `exp(2 pi i n theta / period)` of the clean rotation.
pub fn rotation_reference(theta: f64, period: f64, n_min: i32, n_max: i32) -> Vec<C64> {
    (n_min..=n_max)
        .map(|n| C64::from_polar(1.0, 2.0 * PI * n as f64 * theta / period))
        .collect()
}

/// Discretized Stuart–Landau oscillator in polar form:
///
/// ```text
/// r' = r + (mu r - r^3) dt + sigma_p dt xi_1
/// t' = t + (gamma - beta r^2) dt + sigma_p (dt / r) xi_2
/// y  = [exp(i n t)]_{n = n_min..n_max} + w,   w ~ U[-h_o, h_o] + i U[-h_o, h_o]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StuartLandauParams {
    pub mu: f64,
    pub gamma: f64,
    pub beta: f64,
    pub sigma_p: f64,
    pub proc_halfwidth: f64,
    pub obs_halfwidth: f64,
    pub dt: f64,
    pub r0: f64,
    pub theta0: f64,
    pub n_min: i32,
    pub n_max: i32,
}

impl Default for StuartLandauParams {
    fn default() -> Self {
        StuartLandauParams {
            mu: 1.0,
            gamma: 1.0,
            beta: 0.0,
            sigma_p: 1.0,
            proc_halfwidth: 0.3,
            obs_halfwidth: 0.1,
            dt: 0.01,
            r0: 1.0,
            theta0: -PI,
            n_min: -10,
            n_max: 10,
        }
    }
}

pub const MIN_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct StuartLandauRun {
    /// Rows `(r_t, theta_t)`.
    pub states: SnapshotMatrix,
    pub observations: ObservationMatrix,
    /// Number of steps where `r` was clamped to [`MIN_RADIUS`].
    pub clamped: usize,
}

pub fn simulate_stuart_landau(p: &StuartLandauParams, steps: usize, seed: u64) -> Result<StuartLandauRun> {
    check_pos(p.dt, "dt")?;
    check_pos(p.r0, "r0")?;
    check_nonneg(p.proc_halfwidth, "proc_halfwidth")?;
    check_nonneg(p.obs_halfwidth, "obs_halfwidth")?;
    check_nonneg(p.sigma_p, "sigma_p")?;
    if p.n_min > p.n_max {
        return Err(Error::Config("empty harmonic range".into()));
    }
    if steps < 4 {
        return Err(Error::Config("Stuart-Landau run needs at least 4 steps".into()));
    }
    let mut proc = rng_for(seed, PROCESS_STREAM);
    let mut obs = rng_for(seed, OBSERVATION_STREAM);
    let (mut r, mut th) = (p.r0, p.theta0);
    let mut rows = Vec::with_capacity(steps);
    let mut clamped = 0;
    for t in 0..steps {
        rows.push(vec![r, th]);
        if t + 1 == steps {
            break;
        }
        let xi1 = uniform(&mut proc, p.proc_halfwidth);
        let xi2 = uniform(&mut proc, p.proc_halfwidth);
        let r_next = r + (p.mu * r - r * r * r) * p.dt + p.sigma_p * p.dt * xi1;
        th += (p.gamma - p.beta * r * r) * p.dt + p.sigma_p * (p.dt / r) * xi2;
        r = if r_next < MIN_RADIUS {
            clamped += 1;
            MIN_RADIUS
        } else {
            r_next
        };
    }
    let k = (p.n_max - p.n_min + 1) as usize;
    let mut y = CMatrix::zeros(k, steps);
    for (t, row) in rows.iter().enumerate() {
        for i in 0..k {
            let n = (p.n_min + i as i32) as f64;
            let w = C64::new(uniform(&mut obs, p.obs_halfwidth), uniform(&mut obs, p.obs_halfwidth));
            y[(i, t)] = C64::from_polar(1.0, n * row[1]) + w;
        }
    }
    Ok(StuartLandauRun {
        states: SnapshotMatrix::from_rows(&rows, p.dt)?.with_meta(format!("stuart_landau seed={seed}")),
        observations: ObservationMatrix::new(y)?,
        clamped,
    })
}

/// Stochastic viscous Burgers equation on `(0, 1)` with `u = 0` at both ends
/// and `u(x, 0) = sin(2 pi x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersParams {
    pub k: f64,
    pub sigma_p: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for BurgersParams {
    fn default() -> Self {
        BurgersParams {
            k: 0.01,
            sigma_p: 0.2,
            dx: 0.01,
            dt: 0.02,
            t_end: 2.3,
        }
    }
}

pub const BURGERS_BLOWUP: f64 = 1e6;

impl BurgersParams {
    /// Number of grid nodes, `1 / dx`.
    pub fn nodes(&self) -> Result<usize> {
        check_pos(self.dx, "dx")?;
        let n = 1.0 / self.dx;
        if (n - n.round()).abs() > 1e-9 * n {
            return Err(Error::Config(format!("1/dx = {n} is not an integer")));
        }
        let n = n.round() as usize;
        if n < 3 {
            return Err(Error::Config("Burgers grid needs at least 3 nodes".into()));
        }
        Ok(n)
    }

    pub fn steps(&self) -> Result<usize> {
        check_pos(self.dt, "dt")?;
        check_nonneg(self.t_end, "t_end")?;
        Ok((self.t_end / self.dt + 1e-9).floor() as usize)
    }
}

/// Node positions `x_i = (i + 1/2) dx`.
pub fn burgers_grid(n: usize) -> Vec<f64> {
    let dx = 1.0 / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * dx).collect()
}

/// Thomas algorithm for a tridiagonal system with constant off-diagonals.
fn solve_tridiagonal(sub: f64, diag: &[f64], sup: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub * c[i - 1];
        c[i] = sup / m;
        d[i] = (rhs[i] - sub * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Cell-centered finite differences: Crank–Nicolson diffusion, explicit
/// central advection `u (u_{i+1} - u_{i-1}) / (2 dx)`, Dirichlet walls via
/// antisymmetric ghost nodes, and additive noise `sigma_p dt e_i`,
/// `e_i ~ U[-1, 1]`. Returns one row per time level `0, dt, .., t_end`.
pub fn simulate_burgers(p: &BurgersParams, seed: u64) -> Result<SnapshotMatrix> {
    check_pos(p.k, "k")?;
    check_nonneg(p.sigma_p, "sigma_p")?;
    let n = p.nodes()?;
    let steps = p.steps()?;
    let dx = 1.0 / n as f64;
    let mut rng = rng_for(seed, PROCESS_STREAM);
    let mut u: Vec<f64> = burgers_grid(n).iter().map(|x| (2.0 * PI * x).sin()).collect();
    let r = p.k * p.dt / (2.0 * dx * dx);
    let mut diag = vec![1.0 + 2.0 * r; n];
    diag[0] = 1.0 + 3.0 * r;
    diag[n - 1] = 1.0 + 3.0 * r;
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(u.clone());
    let mut rhs = vec![0.0; n];
    for _ in 0..steps {
        let ghost = |u: &[f64], i: isize| -> f64 {
            if i < 0 {
                -u[0]
            } else if i as usize >= n {
                -u[n - 1]
            } else {
                u[i as usize]
            }
        };
        for i in 0..n {
            let (l, c, rr) = (ghost(&u, i as isize - 1), u[i], ghost(&u, i as isize + 1));
            let lap = l - 2.0 * c + rr;
            let adv = c * (rr - l) / (2.0 * dx);
            rhs[i] = c + r * lap - p.dt * adv + p.sigma_p * p.dt * uniform(&mut rng, 1.0);
        }
        u = solve_tridiagonal(-r, &diag, -r, &rhs);
        let sup = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(sup <= BURGERS_BLOWUP) {
            return Err(Error::Numerical(format!("Burgers solver diverged (max |u| = {sup:.3e})")));
        }
        rows.push(u.clone());
    }
    Ok(SnapshotMatrix::from_rows(&rows, p.dt)?.with_meta(format!("burgers seed={seed}")))
}

/// `x_{t+1} = A x_t + xi_t`, observed as `y_t = x_t + w_t`, both uniform.
#[derive(Debug, Clone)]
pub struct LinearRun {
    pub states: SnapshotMatrix,
    pub observed: SnapshotMatrix,
}

pub fn simulate_linear(
    a: &DMatrix<f64>,
    x0: &[f64],
    steps: usize,
    dt: f64,
    proc_halfwidth: f64,
    obs_halfwidth: f64,
    seed: u64,
) -> Result<LinearRun> {
    let n = a.nrows();
    if !a.is_square() || x0.len() != n {
        return Err(Error::Dimension("system matrix and initial state disagree".into()));
    }
    check_nonneg(proc_halfwidth, "proc_halfwidth")?;
    check_nonneg(obs_halfwidth, "obs_halfwidth")?;
    if steps == 0 {
        return Err(Error::Config("steps must be positive".into()));
    }
    let mut proc = rng_for(seed, PROCESS_STREAM);
    let mut obs = rng_for(seed, OBSERVATION_STREAM);
    let mut x = nalgebra::DVector::from_column_slice(x0);
    let mut clean = Vec::with_capacity(steps);
    let mut noisy = Vec::with_capacity(steps);
    for t in 0..steps {
        clean.push(x.iter().copied().collect::<Vec<f64>>());
        noisy.push(x.iter().map(|v| v + uniform(&mut obs, obs_halfwidth)).collect());
        if t + 1 < steps {
            x = a * x;
            x.iter_mut().for_each(|v| *v += uniform(&mut proc, proc_halfwidth));
        }
    }
    Ok(LinearRun {
        states: SnapshotMatrix::from_rows(&clean, dt)?,
        observed: SnapshotMatrix::from_rows(&noisy, dt)?,
    })
}

/// Stable 21-state linear system: ten damped rotation blocks and one real
/// mode, discretized at `dt` and mixed by a seeded orthogonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticLinearParams {
    pub dt: f64,
    pub meas_halfwidth: f64,
    pub proc_halfwidth: f64,
    pub x0_halfwidth: f64,
    pub system_seed: u64,
}

impl Default for SyntheticLinearParams {
    fn default() -> Self {
        SyntheticLinearParams {
            dt: 0.2,
            meas_halfwidth: 0.4,
            proc_halfwidth: 0.0,
            x0_halfwidth: 3.0,
            system_seed: 2024,
        }
    }
}

pub const SYNTHETIC_DIM: usize = 21;

/// The system matrix and its exact eigenvalues.
pub fn synthetic_system(p: &SyntheticLinearParams) -> Result<(DMatrix<f64>, Vec<C64>)> {
    check_pos(p.dt, "dt")?;
    let n = SYNTHETIC_DIM;
    let mut b = DMatrix::zeros(n, n);
    let mut eigs = Vec::with_capacity(n);
    for j in 0..10 {
        let a = -0.05 - 0.3 * j as f64 / 9.0;
        let w = 0.5 + 4.5 * j as f64 / 9.0;
        let rho = (a * p.dt).exp();
        let (s, c) = (w * p.dt).sin_cos();
        let i = 2 * j;
        b[(i, i)] = rho * c;
        b[(i, i + 1)] = -rho * s;
        b[(i + 1, i)] = rho * s;
        b[(i + 1, i + 1)] = rho * c;
        eigs.push(C64::from_polar(rho, w * p.dt));
        eigs.push(C64::from_polar(rho, -w * p.dt));
    }
    b[(n - 1, n - 1)] = (-0.2 * p.dt).exp();
    eigs.push(C64::new((-0.2 * p.dt).exp(), 0.0));
    let mut rng = rng_for(p.system_seed, 0);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    Ok((&q * b * q.transpose(), eigs))
}

pub fn simulate_synthetic_linear(p: &SyntheticLinearParams, steps: usize, seed: u64) -> Result<LinearRun> {
    check_nonneg(p.x0_halfwidth, "x0_halfwidth")?;
    let (a, _) = synthetic_system(p)?;
    let mut init = rng_for(seed, 0);
    let x0: Vec<f64> = (0..SYNTHETIC_DIM).map(|_| uniform(&mut init, p.x0_halfwidth)).collect();
    simulate_linear(&a, &x0, steps, p.dt, p.proc_halfwidth, p.meas_halfwidth, seed)
}

/// Finite-state Markov chain with row-stochastic `transition`; states are
/// stored as their index.
pub fn simulate_markov_chain(transition: &DMatrix<f64>, x0: usize, steps: usize, seed: u64) -> Result<SnapshotMatrix> {
    let n = transition.nrows();
    if !transition.is_square() || x0 >= n {
        return Err(Error::Dimension("bad transition matrix or initial state".into()));
    }
    for row in transition.row_iter() {
        if row.iter().any(|&v| v < 0.0) || (row.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("transition rows must be probability vectors".into()));
        }
    }
    let mut rng = rng_for(seed, PROCESS_STREAM);
    let mut s = x0;
    let mut rows = Vec::with_capacity(steps);
    for t in 0..steps {
        rows.push(vec![s as f64]);
        if t + 1 == steps {
            break;
        }
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut next = n - 1;
        for j in 0..n {
            acc += transition[(s, j)];
            if u < acc {
                next = j;
                break;
            }
        }
        s = next;
    }
    SnapshotMatrix::from_rows(&rows, 1.0)
}
