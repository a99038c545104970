//! Coupled spot/variance simulation and the closed-form 30-day index proxy.
//!
//! The spot follows local-vol dynamics discretized in log space,
//!
//! ```text
//! S_{n+1} = S_n · exp((r − q − ½σ_n²)·Δt + σ_n·√Δt·Z_n),   σ_n = σloc(S_n, t_n),
//! ```
//!
//! which keeps S strictly positive and is exact in the Black-Scholes limit.
//! The variance factor is a mean-reverting square-root diffusion advanced by
//! full-truncation Euler, and maps to the 30-day index proxy in closed form:
//!
//! ```text
//! B = (1 − e^{−κτ})/(κτ),    V² = θ + (v − θ)·B,    VIX = 100·√max(V², floor).
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localvol::SpotVol;
use crate::rng::{self, channel};
use crate::vix::VARIANCE_FLOOR;

/// Mean-reverting square-root variance parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CirParams {
    pub kappa_mr: f64,
    pub theta_lr: f64,
    pub xi_volvol: f64,
    /// Spot-variance shock correlation.
    pub rho_sv: f64,
    pub v0: f64,
}

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_mr <= 0.0 || self.theta_lr <= 0.0 || self.v0 <= 0.0 {
            return Err(Error::invalid("kappa, theta and v0 must be positive"));
        }
        if self.xi_volvol < 0.0 {
            return Err(Error::invalid("xi must be nonnegative"));
        }
        if self.rho_sv.abs() > 1.0 {
            return Err(Error::invalid("|rho_sv| must be <= 1"));
        }
        Ok(())
    }

    /// Feller condition `2κθ ≥ ξ²` for strict positivity of the variance.
    pub fn feller_holds(&self) -> bool {
        2.0 * self.kappa_mr * self.theta_lr >= self.xi_volvol * self.xi_volvol
    }
}

/// One path's instantaneous state.
#[derive(Debug, Clone, Copy)]
pub struct PathState {
    pub s: f64,
    pub v: f64,
    pub t: f64,
}

/// Pool dimensions and time discretization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps_per_year: u32,
    pub horizon_days: u32,
    pub n_paths: u32,
    pub n_seeds: u32,
    /// First seed; seeds are consecutive from here.
    pub seed0: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_year == 0 || self.horizon_days == 0 || self.n_paths == 0 || self.n_seeds == 0
        {
            return Err(Error::invalid("all simulation counts must be >= 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }

    /// Number of controls over the horizon (ceil of the day count mapped to
    /// the trading clock).
    pub fn n_steps(&self) -> usize {
        (self.horizon_days as f64 * self.steps_per_year as f64 / 365.0).ceil() as usize
    }
}

/// Log-Euler spot update; strictly positive by construction.
pub fn step_log_euler(
    state: PathState,
    vol: &dyn SpotVol,
    r: f64,
    q: f64,
    dt: f64,
    z_spot: f64,
) -> PathState {
    let sigma = vol.vol(state.s, state.t);
    let s = state.s * ((r - q - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z_spot).exp();
    PathState { s, v: state.v, t: state.t + dt }
}

/// Full-truncation Euler step for the variance factor. Returns the updated
/// state and whether the truncation at zero was applied.
pub fn step_cir(state: PathState, p: &CirParams, dt: f64, z_var: f64) -> (PathState, bool) {
    let v_plus = state.v.max(0.0);
    let v_next = state.v
        + p.kappa_mr * (p.theta_lr - v_plus) * dt
        + p.xi_volvol * v_plus.sqrt() * dt.sqrt() * z_var;
    let truncated = v_next < 0.0;
    (PathState { s: state.s, v: v_next.max(0.0), t: state.t }, truncated)
}

/// Cholesky pairing of two independent standard normals.
pub fn correlate_draws(z1: f64, z2: f64, rho: f64) -> Result<(f64, f64)> {
    if rho.abs() > 1.0 {
        return Err(Error::invalid(format!("|rho| must be <= 1, got {rho}")));
    }
    Ok((z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2))
}

/// Closed-form 30-day proxy output.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VixProxy {
    /// Affine loading B = (1 − e^{−κτ})/(κτ) ∈ (0, 1].
    pub loading_b: f64,
    /// 30-day variance before flooring.
    pub variance_30: f64,
    pub vix: f64,
    /// Global Lipschitz constant 50·B/√θ of the v ↦ VIX map.
    pub lipschitz: f64,
}

/// Map instantaneous variance to the 30-day index proxy.
pub fn vix_proxy(v: f64, p: &CirParams, tau: f64) -> VixProxy {
    let kt = p.kappa_mr * tau;
    // B -> 1 as kappa*tau -> 0.
    let loading_b = if kt.abs() < 1e-12 { 1.0 } else { (1.0 - (-kt).exp()) / kt };
    let variance_30 = p.theta_lr + (v - p.theta_lr) * loading_b;
    VixProxy {
        loading_b,
        variance_30,
        vix: 100.0 * variance_30.max(VARIANCE_FLOOR).sqrt(),
        lipschitz: 50.0 * loading_b / p.theta_lr.sqrt(),
    }
}

/// Default proxy horizon: 30 calendar days.
pub const PROXY_TAU: f64 = 30.0 / 365.0;

/// One simulated path: levels per step, 0..=n_steps.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub seed: u64,
    pub path: u64,
    pub spot: Vec<f64>,
    pub variance: Vec<f64>,
    pub vix: Vec<f64>,
    pub truncations: u32,
    /// Order-independent digest of the normal draws this path consumed.
    pub draw_digest: u64,
}

/// Panel of simulated paths, `n_seeds × n_paths` in (seed, path) order.
#[derive(Debug, Clone)]
pub struct PathPanel {
    pub paths: Vec<PathRecord>,
    pub n_steps: usize,
    pub dt: f64,
}

/// Simulate the coupled pool. Deterministic given the config: every draw is
/// a pure function of (seed, path, step, channel), so the panel is identical
/// across thread counts and replays.
pub fn simulate_pool(
    cfg: &SimConfig,
    lv: &dyn SpotVol,
    cir: &CirParams,
    r: f64,
    q: f64,
    s0: f64,
) -> Result<PathPanel> {
    cfg.validate()?;
    cir.validate()?;
    let n_steps = cfg.n_steps();
    let total = cfg.n_seeds as usize * cfg.n_paths as usize;
    if total * (n_steps + 1) > 200_000_000 {
        return Err(Error::invalid(format!(
            "pool of {total} paths x {n_steps} steps exceeds the panel size limit"
        )));
    }
    let dt = cfg.dt();

    let keys: Vec<(u64, u64)> = (0..cfg.n_seeds as u64)
        .flat_map(|s| (0..cfg.n_paths as u64).map(move |p| (cfg.seed0 + s, p)))
        .collect();

    let paths: Vec<PathRecord> = keys
        .par_iter()
        .map(|&(seed, path)| simulate_path(seed, path, n_steps, dt, lv, cir, r, q, s0))
        .collect();

    Ok(PathPanel { paths, n_steps, dt })
}

#[allow(clippy::too_many_arguments)]
fn simulate_path(
    seed: u64,
    path: u64,
    n_steps: usize,
    dt: f64,
    lv: &dyn SpotVol,
    cir: &CirParams,
    r: f64,
    q: f64,
    s0: f64,
) -> PathRecord {
    let mut state = PathState { s: s0, v: cir.v0, t: 0.0 };
    let mut spot = Vec::with_capacity(n_steps + 1);
    let mut variance = Vec::with_capacity(n_steps + 1);
    let mut vix = Vec::with_capacity(n_steps + 1);
    let mut truncations = 0;
    let mut draws = Vec::with_capacity(2 * n_steps);

    spot.push(state.s);
    variance.push(state.v);
    vix.push(vix_proxy(state.v, cir, PROXY_TAU).vix);

    for step in 0..n_steps {
        let w1 = rng::word(seed, path, step as u64, channel::SPOT);
        let w2 = rng::word(seed, path, step as u64, channel::VARIANCE);
        draws.push(w1);
        draws.push(w2);
        let z1 = rng::normal_from_word(w1);
        let z2 = rng::normal_from_word(w2);
        let (z_spot, z_var) = correlate_draws(z1, z2, cir.rho_sv).expect("validated rho");

        state = step_log_euler(state, lv, r, q, dt, z_spot);
        let (next, trunc) = step_cir(state, cir, dt, z_var);
        state = next;
        if trunc {
            truncations += 1;
        }
        spot.push(state.s);
        variance.push(state.v);
        vix.push(vix_proxy(state.v, cir, PROXY_TAU).vix);
    }

    PathRecord {
        seed,
        path,
        spot,
        variance,
        vix,
        truncations,
        draw_digest: rng::digest_draws(draws),
    }
}
