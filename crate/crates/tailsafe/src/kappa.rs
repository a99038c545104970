//! Bump-and-invert estimate of the index-to-option-price sensitivity
//! κ(T_rem), with nonnegative smoothing and the expiry shrinker.
//!
//! A uniform vol bump of size ±ε is applied at the hedged maturity and the
//! two index expiries (with configurable masses). The raw sensitivity is the
//! central-difference quotient
//!
//! ```text
//! κ(T_rem) = ΔC_ATM(T_rem) / Δν₃₀
//! ```
//!
//! where ν₃₀ is the 30-day variance level recomputed on *frozen* retained
//! strike grids, so the denominator only moves through option vegas and is
//! strictly positive. The curve is then smoothed by a nonnegative kernel and
//! contracted toward zero near expiry:
//!
//! ```text
//! κ_eff = κ_sm / (1 + μ·(1 − w)),   w = clamp(T_rem/T0, 0, 1).
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::BsInputs;
use crate::vix::{self, OptionGrid};

/// Frozen pricing context for the sensitivity map: the two bracketing index
/// expiries with pruning decided once and reused for every bump.
pub struct VixContext {
    pub strikes: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub minutes1: u64,
    pub minutes2: u64,
    pub retained1: Vec<usize>,
    pub retained2: Vec<usize>,
    pub spot: f64,
    pub rate: f64,
    pub div: f64,
}

impl VixContext {
    /// Freeze grids and pruning from a base smile σ(k, T).
    pub fn freeze(
        strikes: Vec<f64>,
        t1_days: f64,
        t2_days: f64,
        spot: f64,
        rate: f64,
        div: f64,
        half_spread: f64,
        smile: &dyn Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let t1 = t1_days / 365.0;
        let t2 = t2_days / 365.0;
        let g1 = grid_for(&strikes, t1, spot, rate, div, half_spread, smile)?;
        let g2 = grid_for(&strikes, t2, spot, rate, div, half_spread, smile)?;
        Ok(Self {
            retained1: vix::prune_wings(&g1),
            retained2: vix::prune_wings(&g2),
            strikes,
            t1,
            t2,
            minutes1: (t1_days * vix::MINUTES_PER_DAY as f64).round() as u64,
            minutes2: (t2_days * vix::MINUTES_PER_DAY as f64).round() as u64,
            spot,
            rate,
            div,
        })
    }

    /// 30-day variance level ν₃₀ = σ²₃₀ under an arbitrary smile, on the
    /// frozen retained strikes.
    pub fn nu30(&self, smile: &dyn Fn(f64, f64) -> f64) -> Result<f64> {
        let g1 = grid_for(&self.strikes, self.t1, self.spot, self.rate, self.div, 0.0, smile)?;
        let g2 = grid_for(&self.strikes, self.t2, self.spot, self.rate, self.div, 0.0, smile)?;
        let res = vix::vix_30d_on(
            &g1,
            &g2,
            &self.retained1,
            &self.retained2,
            self.minutes1,
            self.minutes2,
        )?;
        Ok(res.sigma2_30)
    }
}

fn grid_for(
    strikes: &[f64],
    t: f64,
    spot: f64,
    rate: f64,
    div: f64,
    half_spread: f64,
    smile: &dyn Fn(f64, f64) -> f64,
) -> Result<OptionGrid> {
    let leg = |k: f64| smile(k, t);
    vix::grid_from_smile(strikes, t, spot, rate, div, half_spread, &leg)
}

/// Bump masses (β_rem, β₁, β₂) applied at T_rem, T₁, T₂.
pub type BumpMasses = (f64, f64, f64);

/// Raw bump-and-invert sensitivity at one remaining maturity.
///
/// `smile(k, T)` is the base (teacher) smile. The ATM numerator prices the
/// hedged call at strike F(T_rem); maturities closer than 1e-9 in year
/// fraction are treated as coincident so their bump masses add.
pub fn bump_and_invert(
    ctx: &VixContext,
    t_rem: f64,
    eps: f64,
    masses: BumpMasses,
    smile: &dyn Fn(f64, f64) -> f64,
) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::invalid("bump size must be positive"));
    }
    let (beta_rem, beta_1, beta_2) = masses;
    if beta_rem < 0.0 || beta_1 < 0.0 || beta_2 < 0.0 {
        return Err(Error::invalid("bump masses must be nonnegative"));
    }

    let mass_at = move |t: f64| {
        let mut m = 0.0;
        if (t - t_rem).abs() < 1e-9 {
            m += beta_rem;
        }
        if (t - ctx.t1).abs() < 1e-9 {
            m += beta_1;
        }
        if (t - ctx.t2).abs() < 1e-9 {
            m += beta_2;
        }
        m
    };

    let price_atm = |sign: f64| -> f64 {
        let vol = smile(0.0, t_rem) + sign * eps * mass_at(t_rem);
        let forward = ctx.spot * ((ctx.rate - ctx.div) * t_rem).exp();
        BsInputs {
            spot: ctx.spot,
            strike: forward,
            rate: ctx.rate,
            div_yield: ctx.div,
            expiry: t_rem,
            vol,
        }
        .call()
    };
    let d_price = price_atm(1.0) - price_atm(-1.0);

    let bumped = |sign: f64| {
        move |k: f64, t: f64| smile(k, t) + sign * eps * mass_at(t)
    };
    let d_nu = ctx.nu30(&bumped(1.0))? - ctx.nu30(&bumped(-1.0))?;
    if d_nu.abs() < 1e-14 {
        return Err(Error::DegenerateDenominator(d_nu.abs()));
    }
    Ok(d_price / d_nu)
}

/// Discrete convolution with a nonnegative kernel summing to one, with edge
/// renormalization. Positivity-preserving and sup-norm non-expansive.
pub fn smooth_curve(raw: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    if kernel.is_empty() || kernel.len() % 2 == 0 {
        return Err(Error::invalid("kernel must have odd length"));
    }
    if kernel.iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("kernel weights must be nonnegative"));
    }
    let total: f64 = kernel.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("kernel must sum to 1, got {total}")));
    }
    let half = kernel.len() / 2;
    let n = raw.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        let mut used = 0.0;
        for (j, &kw) in kernel.iter().enumerate() {
            let idx = i as isize + j as isize - half as isize;
            if idx >= 0 && (idx as usize) < n {
                acc += kw * raw[idx as usize];
                used += kw;
            }
        }
        out.push(acc / used);
    }
    Ok(out)
}

/// Expiry shrinker κ_eff = κ_sm / (1 + μ(1 − w)), w = clamp(T_rem/T0, 0, 1).
pub fn shrink_expiry(smoothed: f64, t_rem: f64, t0: f64, mu: f64) -> f64 {
    let w = (t_rem / t0).clamp(0.0, 1.0);
    smoothed / (1.0 + mu * (1.0 - w))
}

/// Full sensitivity curve over a grid of remaining maturities.
#[derive(Debug, Clone, Serialize)]
pub struct KappaCurve {
    pub maturities: Vec<f64>,
    pub kappa_raw: Vec<f64>,
    pub kappa_smoothed: Vec<f64>,
    pub kappa_eff: Vec<f64>,
    pub mu_shrink: f64,
    pub t0_ref: f64,
    pub bump_eps: f64,
    pub bump_masses: BumpMasses,
}

impl KappaCurve {
    /// Build raw/smoothed/effective values on `t_rems` (must be positive).
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        ctx: &VixContext,
        t_rems: &[f64],
        eps: f64,
        masses: BumpMasses,
        kernel: &[f64],
        mu: f64,
        t0: f64,
        smile: &dyn Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if t_rems.is_empty() {
            return Err(Error::invalid("kappa curve needs at least one maturity"));
        }
        let mut raw = Vec::with_capacity(t_rems.len());
        for &t in t_rems {
            raw.push(bump_and_invert(ctx, t, eps, masses, smile)?);
        }
        let smoothed = smooth_curve(&raw, kernel)?;
        let eff: Vec<f64> =
            smoothed.iter().zip(t_rems).map(|(&s, &t)| shrink_expiry(s, t, t0, mu)).collect();
        Ok(Self {
            maturities: t_rems.to_vec(),
            kappa_raw: raw,
            kappa_smoothed: smoothed,
            kappa_eff: eff,
            mu_shrink: mu,
            t0_ref: t0,
            bump_eps: eps,
            bump_masses: masses,
        })
    }

    /// Tabular rows (T_rem, raw, smoothed, eff).
    pub fn rows(&self) -> Vec<(f64, f64, f64, f64)> {
        (0..self.maturities.len())
            .map(|i| {
                (self.maturities[i], self.kappa_raw[i], self.kappa_smoothed[i], self.kappa_eff[i])
            })
            .collect()
    }
}
