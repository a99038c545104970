//! Cboe-style 30-day variance index.
//!
//! Per maturity, the estimator aggregates out-of-the-money option prices
//! through
//!
//! ```text
//! σ²(T) = (2/T) · Σᵢ (ΔKᵢ / Kᵢ²) · e^{rT} · Q(Kᵢ)  −  (1/T) · (F/K₀ − 1)²
//! ```
//!
//! where `Q` takes puts below `K₀`, calls above, and the put/call average at
//! `K₀`; `ΔKᵢ` are the half-interval quadrature weights (the nonuniform
//! composite trapezoid in disguise). Strikes beyond two consecutive zero
//! bids are pruned wing by wing. Two bracketing maturities interpolate to a
//! constant 30-day horizon in minute-weighted year-fraction total variance:
//!
//! ```text
//! w⋆ = λ₁·T₁σ²(T₁) + λ₂·T₂σ²(T₂),   σ²₃₀ = w⋆·365/30,   VIX = 100·√σ²₃₀.
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::BsInputs;
use crate::surface::VolSurface;

/// Minutes per calendar day.
pub const MINUTES_PER_DAY: u64 = 1440;
/// Constant-maturity target in minutes (30 calendar days).
pub const TARGET_MINUTES: u64 = 30 * MINUTES_PER_DAY;
/// Variance floor applied before the square root and reused by the
/// coherence bound's square-root Lipschitz factor.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A single option quote.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptionQuote {
    pub strike_k: f64,
    pub bid: f64,
    pub mid_price: f64,
    pub is_call: bool,
}

/// Put and call quotes sharing one strike.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuotePair {
    pub put: OptionQuote,
    pub call: OptionQuote,
}

impl QuotePair {
    pub fn strike(&self) -> f64 {
        self.put.strike_k
    }
}

/// Option chain for a single expiry, strikes strictly increasing.
#[derive(Debug, Clone)]
pub struct OptionGrid {
    pub maturity_t: f64,
    pub forward_f: f64,
    pub rate_r: f64,
    /// Index into `quotes` of K0, the largest strike at or below the forward.
    pub k0_index: usize,
    pub quotes: Vec<QuotePair>,
}

impl OptionGrid {
    pub fn new(
        maturity_t: f64,
        forward_f: f64,
        rate_r: f64,
        quotes: Vec<QuotePair>,
    ) -> Result<Self> {
        if quotes.len() < 2 {
            return Err(Error::InsufficientGrid("option grid needs >= 2 strikes".into()));
        }
        for pair in &quotes {
            if pair.strike() <= 0.0 {
                return Err(Error::invalid("strikes must be positive"));
            }
            if (pair.put.strike_k - pair.call.strike_k).abs() > 1e-9 {
                return Err(Error::invalid("put and call of a pair must share the strike"));
            }
        }
        for w in quotes.windows(2) {
            if w[1].strike() <= w[0].strike() {
                return Err(Error::invalid("strikes must be strictly increasing"));
            }
        }
        let k0_index = quotes
            .iter()
            .rposition(|q| q.strike() <= forward_f)
            .ok_or_else(|| Error::invalid("no strike at or below the forward (K0 missing)"))?;
        Ok(Self { maturity_t, forward_f, rate_r, k0_index, quotes })
    }

    pub fn k0(&self) -> f64 {
        self.quotes[self.k0_index].strike()
    }

    /// OTM aggregator Q(K): puts below K0, calls above, average at K0.
    pub fn aggregator(&self, idx: usize) -> f64 {
        let pair = &self.quotes[idx];
        if idx < self.k0_index {
            pair.put.mid_price
        } else if idx > self.k0_index {
            pair.call.mid_price
        } else {
            0.5 * (pair.call.mid_price + pair.put.mid_price)
        }
    }

    /// Bid on the OTM side used by wing pruning.
    fn otm_bid(&self, idx: usize) -> f64 {
        if idx < self.k0_index {
            self.quotes[idx].put.bid
        } else {
            self.quotes[idx].call.bid
        }
    }
}

/// Walk each wing outward from K0 and stop at two consecutive zero bids;
/// the double-zero pair and everything farther out is discarded. Isolated
/// zero bids are retained and traversal continues.
///
/// Returns retained indices into `grid.quotes`, sorted ascending.
pub fn prune_wings(grid: &OptionGrid) -> Vec<usize> {
    let mut retained = vec![grid.k0_index];

    // Put wing: walk strikes below K0, downward.
    let mut zeros = 0;
    let mut wing = Vec::new();
    for idx in (0..grid.k0_index).rev() {
        if grid.otm_bid(idx) == 0.0 {
            zeros += 1;
            if zeros >= 2 {
                // Drop this strike and its zero-bid predecessor.
                wing.pop();
                break;
            }
        } else {
            zeros = 0;
        }
        wing.push(idx);
    }
    retained.extend(wing);

    // Call wing: walk strikes above K0, upward.
    let mut zeros = 0;
    let mut wing = Vec::new();
    for idx in grid.k0_index + 1..grid.quotes.len() {
        if grid.otm_bid(idx) == 0.0 {
            zeros += 1;
            if zeros >= 2 {
                wing.pop();
                break;
            }
        } else {
            zeros = 0;
        }
        wing.push(idx);
    }
    retained.extend(wing);

    retained.sort_unstable();
    retained
}

/// Half-interval quadrature weights on an increasing strike list:
/// `Δ₀ = K₁−K₀`, `Δ_N = K_N−K_{N−1}`, interior `Δᵢ = (K_{i+1}−K_{i−1})/2`.
pub fn half_interval_weights(strikes: &[f64]) -> Result<Vec<f64>> {
    let n = strikes.len();
    if n < 2 {
        return Err(Error::InsufficientGrid("half-interval weights need >= 2 strikes".into()));
    }
    let mut w = Vec::with_capacity(n);
    w.push(strikes[1] - strikes[0]);
    for i in 1..n - 1 {
        w.push(0.5 * (strikes[i + 1] - strikes[i - 1]));
    }
    w.push(strikes[n - 1] - strikes[n - 2]);
    Ok(w)
}

/// One retained strike's contribution to the variance sum, for audit dumps.
#[derive(Debug, Clone, Serialize)]
pub struct StrikeContribution {
    pub strike: f64,
    pub weight: f64,
    pub aggregator_q: f64,
    pub contribution: f64,
}

/// Single-maturity estimator output with its audit breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct SingleMaturityVariance {
    pub maturity_t: f64,
    pub variance: f64,
    pub forward_correction: f64,
    pub k0: f64,
    pub contributions: Vec<StrikeContribution>,
}

/// Cboe-style single-maturity variance over pre-pruned retained strikes.
pub fn single_maturity_variance(
    grid: &OptionGrid,
    retained: &[usize],
) -> Result<SingleMaturityVariance> {
    if retained.is_empty() {
        return Err(Error::InsufficientGrid("no retained strikes".into()));
    }
    let strikes: Vec<f64> = retained.iter().map(|&i| grid.quotes[i].strike()).collect();
    let weights = half_interval_weights(&strikes)?;
    let t = grid.maturity_t;
    let disc = (grid.rate_r * t).exp();

    let mut sum = 0.0;
    let mut contributions = Vec::with_capacity(retained.len());
    for ((&idx, &k), &w) in retained.iter().zip(&strikes).zip(&weights) {
        let q = grid.aggregator(idx);
        let c = w / (k * k) * disc * q;
        sum += c;
        contributions.push(StrikeContribution { strike: k, weight: w, aggregator_q: q, contribution: c });
    }

    let k0 = grid.k0();
    let fc = (grid.forward_f / k0 - 1.0).powi(2) / t;
    Ok(SingleMaturityVariance {
        maturity_t: t,
        variance: 2.0 / t * sum - fc,
        forward_correction: fc,
        k0,
        contributions,
    })
}

/// 30-day index output.
#[derive(Debug, Clone, Serialize)]
pub struct VixResult {
    /// Single-maturity variances (near, next).
    pub variance_t: [f64; 2],
    /// Minute weights (λ₁, λ₂).
    pub lambda: [f64; 2],
    /// 30-day year-fraction total variance w⋆.
    pub w_star: f64,
    /// Annualized 30-day variance before flooring.
    pub sigma2_30: f64,
    /// Index level 100·√(max(σ²₃₀, floor)).
    pub vix_30: f64,
    /// Whether the variance floor was applied.
    pub floored: bool,
    /// Retained-strike audits per maturity.
    pub audits: [SingleMaturityVariance; 2],
}

/// 30-day interpolation over two bracketing expiries given their minute
/// counts. Requires `minutes1 < 30·1440 <= minutes2`.
pub fn vix_30d(
    grid1: &OptionGrid,
    grid2: &OptionGrid,
    minutes1: u64,
    minutes2: u64,
) -> Result<VixResult> {
    if !(minutes1 < TARGET_MINUTES && TARGET_MINUTES <= minutes2) {
        return Err(Error::Bracket { m1: minutes1, m2: minutes2 });
    }
    let retained1 = prune_wings(grid1);
    let retained2 = prune_wings(grid2);
    vix_30d_on(grid1, grid2, &retained1, &retained2, minutes1, minutes2)
}

/// Same as [`vix_30d`] but with caller-fixed retained strikes, so two
/// surfaces can be compared on identical grids.
pub fn vix_30d_on(
    grid1: &OptionGrid,
    grid2: &OptionGrid,
    retained1: &[usize],
    retained2: &[usize],
    minutes1: u64,
    minutes2: u64,
) -> Result<VixResult> {
    if !(minutes1 < TARGET_MINUTES && TARGET_MINUTES <= minutes2) {
        return Err(Error::Bracket { m1: minutes1, m2: minutes2 });
    }
    let a1 = single_maturity_variance(grid1, retained1)?;
    let a2 = single_maturity_variance(grid2, retained2)?;
    let (m1, m2, ms) = (minutes1 as f64, minutes2 as f64, TARGET_MINUTES as f64);
    let lam1 = (m2 - ms) / (m2 - m1);
    let lam2 = (ms - m1) / (m2 - m1);
    let w_star = lam1 * grid1.maturity_t * a1.variance + lam2 * grid2.maturity_t * a2.variance;
    let sigma2_30 = w_star * 365.0 / 30.0;
    let floored = sigma2_30 < VARIANCE_FLOOR;
    let vix_30 = 100.0 * sigma2_30.max(VARIANCE_FLOOR).sqrt();
    Ok(VixResult {
        variance_t: [a1.variance, a2.variance],
        lambda: [lam1, lam2],
        w_star,
        sigma2_30,
        vix_30,
        floored,
        audits: [a1, a2],
    })
}

/// Build a synthetic option grid by Black-Scholes pricing of a smile.
///
/// `smile(k)` returns annualized vol at log-moneyness `k = ln(K/F)`. Bids
/// are `max(mid − half_spread, 0)`, which makes the pruning rule exercisable
/// in synthetic worlds.
pub fn grid_from_smile(
    strikes: &[f64],
    maturity_t: f64,
    spot: f64,
    rate_r: f64,
    div_q: f64,
    half_spread: f64,
    smile: &dyn Fn(f64) -> f64,
) -> Result<OptionGrid> {
    let forward = spot * ((rate_r - div_q) * maturity_t).exp();
    let quotes = strikes
        .iter()
        .map(|&k_strike| {
            let k = (k_strike / forward).ln();
            let vol = smile(k);
            let bs = BsInputs {
                spot,
                strike: k_strike,
                rate: rate_r,
                div_yield: div_q,
                expiry: maturity_t,
                vol,
            };
            let (call_mid, put_mid) = (bs.call(), bs.put());
            QuotePair {
                put: OptionQuote {
                    strike_k: k_strike,
                    bid: (put_mid - half_spread).max(0.0),
                    mid_price: put_mid,
                    is_call: false,
                },
                call: OptionQuote {
                    strike_k: k_strike,
                    bid: (call_mid - half_spread).max(0.0),
                    mid_price: call_mid,
                    is_call: true,
                },
            }
        })
        .collect();
    OptionGrid::new(maturity_t, forward, rate_r, quotes)
}

/// Teacher-vs-surface index residual on shared retained strikes, plus the
/// coherence bound it must respect.
#[derive(Debug, Clone, Serialize)]
pub struct CoherenceReport {
    pub vix_a: f64,
    pub vix_b: f64,
    pub residual: f64,
    /// Sup-norm vol gap between the two smiles on the retained strikes.
    pub eps_shape: f64,
    pub bound_shape_term: f64,
    pub bound_quad_term: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Inputs per maturity for [`coherence_residual`]: the two smiles evaluated
/// on one shared strike grid.
pub struct CoherenceLeg<'a> {
    pub strikes: &'a [f64],
    pub maturity_t: f64,
    pub minutes: u64,
    pub smile_a: &'a dyn Fn(f64) -> f64,
    pub smile_b: &'a dyn Fn(f64) -> f64,
}

/// Compare two surfaces' 30-day indices on identical retained strikes and
/// identical pruning, and evaluate the coherence bound
/// `C_coh·ε_shape + C_quad·maxΔK²`.
pub fn coherence_residual(
    legs: [CoherenceLeg<'_>; 2],
    spot: f64,
    rate_r: f64,
    div_q: f64,
) -> Result<CoherenceReport> {
    if legs[0].strikes.len() < 2 || legs[1].strikes.len() < 2 {
        return Err(Error::GridMismatch("coherence needs >= 2 shared strikes per leg".into()));
    }

    let build = |leg: &CoherenceLeg<'_>, which_a: bool| -> Result<OptionGrid> {
        let smile: &dyn Fn(f64) -> f64 = if which_a { leg.smile_a } else { leg.smile_b };
        grid_from_smile(leg.strikes, leg.maturity_t, spot, rate_r, div_q, 0.0, smile)
    };
    let a1 = build(&legs[0], true)?;
    let a2 = build(&legs[1], true)?;
    let b1 = build(&legs[0], false)?;
    let b2 = build(&legs[1], false)?;

    // Shared retained set: prune on surface A's bids, reuse everywhere.
    let retained1 = prune_wings(&a1);
    let retained2 = prune_wings(&a2);
    let (m1, m2) = (legs[0].minutes, legs[1].minutes);
    let res_a = vix_30d_on(&a1, &a2, &retained1, &retained2, m1, m2)?;
    let res_b = vix_30d_on(&b1, &b2, &retained1, &retained2, m1, m2)?;
    let residual = (res_a.vix_30 - res_b.vix_30).abs();

    // Shape gap and bound ingredients on the retained strikes.
    let mut eps_shape: f64 = 0.0;
    let mut shape_term = 0.0;
    let mut quad_term: f64 = 0.0;
    let lambdas = res_a.lambda;
    let sqrt_floor_inv = 50.0 / VARIANCE_FLOOR.sqrt();
    for (leg, (retained, lam)) in
        legs.iter().zip([(&retained1, lambdas[0]), (&retained2, lambdas[1])])
    {
        let t = leg.maturity_t;
        let forward = spot * ((rate_r - div_q) * t).exp();
        let ks: Vec<f64> = retained.iter().map(|&i| leg.strikes[i]).collect();
        let weights = half_interval_weights(&ks)?;

        let mut vega_sup: f64 = 0.0;
        let mut weight_sum = 0.0;
        let mut max_dk: f64 = 0.0;
        let mut integrand = Vec::with_capacity(ks.len());
        for (&k_strike, &w) in ks.iter().zip(&weights) {
            let k = (k_strike / forward).ln();
            let va = (leg.smile_a)(k);
            let vb = (leg.smile_b)(k);
            eps_shape = eps_shape.max((va - vb).abs());
            let bs = BsInputs {
                spot,
                strike: k_strike,
                rate: rate_r,
                div_yield: div_q,
                expiry: t,
                vol: va,
            };
            vega_sup = vega_sup.max(bs.vega());
            weight_sum += w / (k_strike * k_strike) * (rate_r * t).exp();
            let q = if k_strike <= forward { bs.put() } else { bs.call() };
            integrand.push(q / (k_strike * k_strike) * (rate_r * t).exp());
        }
        for w in ks.windows(2) {
            max_dk = max_dk.max(w[1] - w[0]);
        }
        // |VIX_a - VIX_b| <= 50/sqrt(floor) * (365/30) * sum_i lam_i T_i * (2/T_i) * Vega_sup * S_w * eps
        shape_term += sqrt_floor_inv * (365.0 / 30.0) * lam.abs() * 2.0 * vega_sup * weight_sum;
        // Quadrature constant: (|I|/12)·||f''||_inf per maturity, f = Q/K²·e^{rT}.
        let f2_sup = second_difference_sup(&ks, &integrand);
        let corridor = ks.last().unwrap() - ks[0];
        quad_term = quad_term.max(
            sqrt_floor_inv * (365.0 / 30.0) * lam.abs() * t * (2.0 / t) * corridor / 12.0
                * f2_sup
                * max_dk
                * max_dk,
        );
    }

    let bound = shape_term * eps_shape + quad_term;
    Ok(CoherenceReport {
        vix_a: res_a.vix_30,
        vix_b: res_b.vix_30,
        residual,
        eps_shape,
        bound_shape_term: shape_term,
        bound_quad_term: quad_term,
        bound,
        pass: residual <= bound,
    })
}

/// Empirical sup of |f''| from second divided differences on a grid.
fn second_difference_sup(x: &[f64], f: &[f64]) -> f64 {
    let mut sup: f64 = 0.0;
    for i in 1..x.len() - 1 {
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        let d2 = 2.0 / (hm + hp) * ((f[i + 1] - f[i]) / hp - (f[i] - f[i - 1]) / hm);
        sup = sup.max(d2.abs());
    }
    sup
}

/// Convenience: build the two bracketing grids for a surface's own smile.
pub fn bracketing_grids_from_surface(
    surface: &VolSurface,
    strikes: &[f64],
    t1_days: f64,
    t2_days: f64,
    half_spread: f64,
) -> Result<(OptionGrid, OptionGrid, u64, u64)> {
    let t1 = t1_days / 365.0;
    let t2 = t2_days / 365.0;
    let smile1 = |k: f64| surface.implied_vol(k, t1).unwrap_or(f64::NAN);
    let smile2 = |k: f64| surface.implied_vol(k, t2).unwrap_or(f64::NAN);
    let g1 = grid_from_smile(
        strikes,
        t1,
        surface.spot_s0,
        surface.rate_r,
        surface.div_q,
        half_spread,
        &smile1,
    )?;
    let g2 = grid_from_smile(
        strikes,
        t2,
        surface.spot_s0,
        surface.rate_r,
        surface.div_q,
        half_spread,
        &smile2,
    )?;
    Ok((g1, g2, (t1_days * MINUTES_PER_DAY as f64) as u64, (t2_days * MINUTES_PER_DAY as f64) as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(strike: f64, put_bid: f64, call_bid: f64) -> QuotePair {
        QuotePair {
            put: OptionQuote { strike_k: strike, bid: put_bid, mid_price: put_bid + 0.5, is_call: false },
            call: OptionQuote { strike_k: strike, bid: call_bid, mid_price: call_bid + 0.5, is_call: true },
        }
    }

    fn grid_with_put_bids(bids_below_k0: &[f64]) -> OptionGrid {
        // K0 = 100; strikes below K0 walk outward in the listed order.
        let n = bids_below_k0.len();
        let mut quotes = Vec::new();
        for (i, &b) in bids_below_k0.iter().rev().enumerate() {
            quotes.push(pair(90.0 + i as f64, b, 1.0));
        }
        quotes.push(pair(90.0 + n as f64, 1.0, 1.0)); // K0
        quotes.push(pair(90.0 + n as f64 + 1.0, 1.0, 1.0)); // one call-side strike
        OptionGrid::new(30.0 / 365.0, 90.0 + n as f64 + 0.5, 0.02, quotes).unwrap()
    }

    #[test]
    fn prune_double_zero_discards_beyond() {
        // Bids walking outward: (1.2, 0, 0, 0.5) -> keep K0 plus first strike.
        let g = grid_with_put_bids(&[1.2, 0.0, 0.0, 0.5]);
        let retained = prune_wings(&g);
        let strikes: Vec<f64> = retained.iter().map(|&i| g.quotes[i].strike()).collect();
        // K0 = 94, first outward strike = 93, plus the call-side strike 95.
        assert_eq!(strikes, vec![93.0, 94.0, 95.0]);
    }

    #[test]
    fn prune_all_positive_keeps_everything() {
        let g = grid_with_put_bids(&[1.0, 0.8, 0.6, 0.4]);
        assert_eq!(prune_wings(&g).len(), g.quotes.len());
    }

    #[test]
    fn prune_single_zero_skipped_double_zero_stops() {
        // Outward bids (1.0, 0, 1.0, 0, 0): retain K0 + first three wing
        // strikes (the isolated zero is kept), stop at the trailing pair.
        let g = grid_with_put_bids(&[1.0, 0.0, 1.0, 0.0, 0.0]);
        let retained = prune_wings(&g);
        let strikes: Vec<f64> = retained.iter().map(|&i| g.quotes[i].strike()).collect();
        // K0 = 95; wing keeps 94, 93, 92; call side 96.
        assert_eq!(strikes, vec![92.0, 93.0, 94.0, 95.0, 96.0]);
    }

    #[test]
    fn half_interval_known_weights() {
        assert_eq!(half_interval_weights(&[100.0, 110.0, 125.0]).unwrap(), vec![10.0, 12.5, 15.0]);
        assert_eq!(
            half_interval_weights(&[90.0, 100.0, 101.0, 120.0]).unwrap(),
            vec![10.0, 5.5, 10.0, 19.0]
        );
    }

    #[test]
    fn half_interval_uniform_grid() {
        let w = half_interval_weights(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_interval_needs_two() {
        assert!(half_interval_weights(&[1.0]).is_err());
    }

    #[test]
    fn weights_match_panelwise_trapezoid() {
        // Identity with the nonuniform composite trapezoid rule.
        let strikes = [80.0, 93.0, 99.0, 112.0, 130.0];
        let f: Vec<f64> = strikes.iter().map(|k| (k / 100.0f64).sin() + 2.0).collect();
        let w = half_interval_weights(&strikes).unwrap();
        let weighted: f64 = w.iter().zip(&f).map(|(wi, fi)| wi * fi).sum();
        let mut trap = 0.0;
        for i in 0..strikes.len() - 1 {
            trap += 0.5 * (strikes[i + 1] - strikes[i]) * (f[i] + f[i + 1]);
        }
        assert_abs_diff_eq!(weighted, trap, epsilon = 1e-12);
    }

    #[test]
    fn forward_at_k0_kills_correction() {
        let quotes = vec![pair(95.0, 1.0, 1.0), pair(100.0, 1.0, 1.0), pair(105.0, 1.0, 1.0)];
        let g = OptionGrid::new(30.0 / 365.0, 100.0, 0.0, quotes).unwrap();
        let retained = prune_wings(&g);
        let out = single_maturity_variance(&g, &retained).unwrap();
        assert_eq!(out.forward_correction, 0.0);
    }

    #[test]
    fn variance_linear_in_aggregator() {
        let quotes = vec![pair(95.0, 1.0, 1.0), pair(100.0, 1.0, 1.0), pair(105.0, 1.0, 1.0)];
        let g = OptionGrid::new(30.0 / 365.0, 101.0, 0.0, quotes.clone()).unwrap();
        let doubled: Vec<QuotePair> = quotes
            .iter()
            .map(|p| {
                let mut q = *p;
                q.put.mid_price *= 2.0;
                q.call.mid_price *= 2.0;
                q
            })
            .collect();
        let g2 = OptionGrid::new(30.0 / 365.0, 101.0, 0.0, doubled).unwrap();
        let retained = prune_wings(&g);
        let a = single_maturity_variance(&g, &retained).unwrap();
        let b = single_maturity_variance(&g2, &retained).unwrap();
        let sum_a = a.variance + a.forward_correction;
        let sum_b = b.variance + b.forward_correction;
        assert_abs_diff_eq!(sum_b, 2.0 * sum_a, epsilon = 1e-12);
    }

    #[test]
    fn flat_bs_world_recovers_variance() {
        // Dense strikes over a wide corridor: estimator ~ sigma^2 = 0.04.
        let t = 30.0 / 365.0;
        let spot = 4800.0;
        let forward = spot; // r = q = 0 for the oracle check
        let strikes: Vec<f64> =
            (0..401).map(|i| forward * (-1.2 + 2.4 * i as f64 / 400.0).exp()).collect();
        let g = grid_from_smile(&strikes, t, spot, 0.0, 0.0, 0.0, &|_| 0.2).unwrap();
        let retained = prune_wings(&g);
        let out = single_maturity_variance(&g, &retained).unwrap();
        assert_abs_diff_eq!(out.variance, 0.04, epsilon = 2e-4);
    }

    #[test]
    fn degenerate_interpolation_at_target() {
        // sigma^2 equal on both legs and m1 at the target minus one day:
        // the affine weights still sum to one and reproduce 0.04.
        let t = |days: f64| days / 365.0;
        let spot = 4800.0;
        let strikes: Vec<f64> =
            (0..201).map(|i| spot * (-0.9 + 1.8 * i as f64 / 200.0).exp()).collect();
        let g1 = grid_from_smile(&strikes, t(29.0), spot, 0.0, 0.0, 0.0, &|_| 0.2).unwrap();
        let g2 = grid_from_smile(&strikes, t(31.0), spot, 0.0, 0.0, 0.0, &|_| 0.2).unwrap();
        let res = vix_30d(&g1, &g2, 29 * MINUTES_PER_DAY, 31 * MINUTES_PER_DAY).unwrap();
        assert_abs_diff_eq!(res.lambda[0] + res.lambda[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(res.vix_30, 20.0, epsilon = 0.05);
    }

    #[test]
    fn bracket_violation_rejected() {
        let spot = 4800.0;
        let strikes: Vec<f64> = (0..11).map(|i| spot * (0.9 + 0.02 * i as f64)).collect();
        let g1 = grid_from_smile(&strikes, 40.0 / 365.0, spot, 0.0, 0.0, 0.0, &|_| 0.2).unwrap();
        let g2 = grid_from_smile(&strikes, 60.0 / 365.0, spot, 0.0, 0.0, 0.0, &|_| 0.2).unwrap();
        assert!(vix_30d(&g1, &g2, 40 * MINUTES_PER_DAY, 60 * MINUTES_PER_DAY).is_err());
    }

    #[test]
    fn identical_surfaces_zero_residual() {
        let spot = 4800.0;
        let strikes: Vec<f64> =
            (0..41).map(|i| spot * (-0.35 + 0.61 * i as f64 / 40.0).exp()).collect();
        let smile = |k: f64| 0.2 + 0.05 * k * k;
        let legs = [
            CoherenceLeg {
                strikes: &strikes,
                maturity_t: 14.0 / 365.0,
                minutes: 14 * MINUTES_PER_DAY,
                smile_a: &smile,
                smile_b: &smile,
            },
            CoherenceLeg {
                strikes: &strikes,
                maturity_t: 30.0 / 365.0,
                minutes: 30 * MINUTES_PER_DAY,
                smile_a: &smile,
                smile_b: &smile,
            },
        ];
        let report = coherence_residual(legs, spot, 0.02, 0.015).unwrap();
        assert_eq!(report.residual, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn constant_shift_residual_grows_linearly() {
        let spot = 4800.0;
        let strikes: Vec<f64> =
            (0..41).map(|i| spot * (-0.35 + 0.61 * i as f64 / 40.0).exp()).collect();
        let base = |k: f64| 0.2 + 0.05 * k * k;
        let mut residuals = Vec::new();
        for &delta in &[1e-4, 1e-3, 1e-2] {
            let shifted = move |k: f64| base(k) + delta;
            let legs = [
                CoherenceLeg {
                    strikes: &strikes,
                    maturity_t: 14.0 / 365.0,
                    minutes: 14 * MINUTES_PER_DAY,
                    smile_a: &base,
                    smile_b: &shifted,
                },
                CoherenceLeg {
                    strikes: &strikes,
                    maturity_t: 30.0 / 365.0,
                    minutes: 30 * MINUTES_PER_DAY,
                    smile_a: &base,
                    smile_b: &shifted,
                },
            ];
            let report = coherence_residual(legs, spot, 0.02, 0.015).unwrap();
            residuals.push(report.residual);
        }
        // Growth ratio ~ 10 per decade of shift.
        assert!(residuals[1] / residuals[0] > 5.0 && residuals[1] / residuals[0] < 20.0);
        assert!(residuals[2] / residuals[1] > 5.0 && residuals[2] / residuals[1] < 20.0);
    }

    #[test]
    fn vix_scaling_in_variance() {
        // Multiplying sigma^2_30 by c^2 multiplies the index by c.
        let v = 0.05;
        let c: f64 = 1.7;
        let vix1 = 100.0 * v.max(VARIANCE_FLOOR).sqrt();
        let vix2 = 100.0 * (c * c * v).max(VARIANCE_FLOOR).sqrt();
        assert_abs_diff_eq!(vix2, c * vix1, epsilon = 1e-12);
    }
}
