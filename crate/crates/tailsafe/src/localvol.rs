//! Clipped Dupire local variance from a tensor grid of call prices.
//!
//! The estimator is the parabolic-operator quotient
//!
//! ```text
//! σ²loc(K,T) = [∂T C + (r−q)·K·∂K C + q·C] / [½·K²·max(∂KK C, χ̲)]
//! ```
//!
//! with all partials taken by second-order finite differences on the
//! (possibly nonuniform) strike/maturity mesh and the convexity denominator
//! floored at `χ̲ > 0`. The numerator is floored at zero before dividing;
//! both floors are recorded per node so clipping stays auditable.
//!
//! First derivatives use the exact three-point nonuniform stencil (second
//! order on any mesh); boundaries fall back to one-sided three-point forms.

use serde::Serialize;

use crate::error::{Error, Result};

/// Weights `[c_-, c_0, c_+]` for f'(x_i) from (f_{i-1}, f_i, f_{i+1}) on a
/// nonuniform mesh; exact for quadratics.
#[inline]
pub fn deriv1_weights(hm: f64, hp: f64) -> [f64; 3] {
    [-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))]
}

/// Weights for f''(x_i) from (f_{i-1}, f_i, f_{i+1}): the divided-difference
/// form `2/(hm+hp)·[(f_+−f_0)/hp − (f_0−f_-)/hm]`.
#[inline]
pub fn deriv2_weights(hm: f64, hp: f64) -> [f64; 3] {
    [2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))]
}

/// One-sided second-order weights for f'(x_0) from (f_0, f_1, f_2) with
/// spacings h1 = x1−x0, h2 = x2−x1.
#[inline]
pub fn deriv1_onesided(h1: f64, h2: f64) -> [f64; 3] {
    [
        -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
        (h1 + h2) / (h1 * h2),
        -h1 / (h2 * (h1 + h2)),
    ]
}

/// Call prices on the (K, T) tensor produced by a coherent teacher/surface.
#[derive(Debug, Clone)]
pub struct CallPriceGrid {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    /// Row-major `prices[j * strikes.len() + i]` = C(K_i, T_j).
    pub prices: Vec<f64>,
    pub rate_r: f64,
    pub div_q: f64,
    pub spot_s0: f64,
}

impl CallPriceGrid {
    pub fn new(
        strikes: Vec<f64>,
        maturities: Vec<f64>,
        prices: Vec<f64>,
        rate_r: f64,
        div_q: f64,
        spot_s0: f64,
    ) -> Result<Self> {
        if strikes.len() < 3 || maturities.len() < 3 {
            return Err(Error::InsufficientGrid(format!(
                "call grid needs >= 3 strikes and >= 3 maturities, got {}x{}",
                strikes.len(),
                maturities.len()
            )));
        }
        if prices.len() != strikes.len() * maturities.len() {
            return Err(Error::invalid("price array does not match grid dimensions"));
        }
        if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("call prices must be finite and nonnegative"));
        }
        for w in strikes.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("strikes must be strictly increasing"));
            }
        }
        for w in maturities.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("maturities must be strictly increasing"));
            }
        }
        Ok(Self { strikes, maturities, prices, rate_r, div_q, spot_s0 })
    }

    #[inline]
    pub fn price(&self, i: usize, j: usize) -> f64 {
        self.prices[j * self.strikes.len() + i]
    }

    /// Derivative of a triple along one axis, choosing centered or one-sided
    /// weights by position.
    fn axis_deriv1(xs: &[f64], f: impl Fn(usize) -> f64, idx: usize) -> f64 {
        let n = xs.len();
        if idx == 0 {
            let w = deriv1_onesided(xs[1] - xs[0], xs[2] - xs[1]);
            w[0] * f(0) + w[1] * f(1) + w[2] * f(2)
        } else if idx == n - 1 {
            // Mirror: one-sided from the right is the left formula with
            // negated spacings and reversed points.
            let w = deriv1_onesided(xs[n - 1] - xs[n - 2], xs[n - 2] - xs[n - 3]);
            -(w[0] * f(n - 1) + w[1] * f(n - 2) + w[2] * f(n - 3))
        } else {
            let w = deriv1_weights(xs[idx] - xs[idx - 1], xs[idx + 1] - xs[idx]);
            w[0] * f(idx - 1) + w[1] * f(idx) + w[2] * f(idx + 1)
        }
    }

    fn axis_deriv2(xs: &[f64], f: impl Fn(usize) -> f64, idx: usize) -> f64 {
        let n = xs.len();
        let base = if idx == 0 { 1 } else if idx == n - 1 { n - 2 } else { idx };
        let w = deriv2_weights(xs[base] - xs[base - 1], xs[base + 1] - xs[base]);
        w[0] * f(base - 1) + w[1] * f(base) + w[2] * f(base + 1)
    }

    /// Finite-difference partials (∂T C, ∂K C, ∂KK C) at node (i, j).
    pub fn fd_partials(&self, i: usize, j: usize) -> Result<(f64, f64, f64)> {
        if i >= self.strikes.len() || j >= self.maturities.len() {
            return Err(Error::OutOfDomain { what: format!("grid node ({i},{j})") });
        }
        let dt = Self::axis_deriv1(&self.maturities, |jj| self.price(i, jj), j);
        let dk = Self::axis_deriv1(&self.strikes, |ii| self.price(ii, j), i);
        let dkk = Self::axis_deriv2(&self.strikes, |ii| self.price(ii, j), i);
        Ok((dt, dk, dkk))
    }

    /// Dupire numerator `∂T C + (r−q)K·∂K C + qC` at a node.
    pub fn dupire_numerator(&self, i: usize, j: usize) -> Result<f64> {
        let (dt, dk, _) = self.fd_partials(i, j)?;
        Ok(dt + (self.rate_r - self.div_q) * self.strikes[i] * dk + self.div_q * self.price(i, j))
    }
}

/// Clipped local-variance tensor plus its audit masks.
#[derive(Debug, Clone, Serialize)]
pub struct LocalVolGrid {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    /// Row-major σ²loc(K_i, T_j).
    pub var_nodes: Vec<f64>,
    pub clip_floor_chi: f64,
    /// Nodes where the convexity denominator hit the floor.
    pub clip_mask: Vec<bool>,
    /// Nodes where a negative numerator was floored at zero.
    pub num_floor_mask: Vec<bool>,
    /// Observed maximum of σ²loc over the grid.
    pub c_max: f64,
}

impl LocalVolGrid {
    #[inline]
    pub fn var(&self, i: usize, j: usize) -> f64 {
        self.var_nodes[j * self.strikes.len() + i]
    }

    #[inline]
    pub fn clipped(&self, i: usize, j: usize) -> bool {
        self.clip_mask[j * self.strikes.len() + i]
    }

    #[inline]
    pub fn num_floored(&self, i: usize, j: usize) -> bool {
        self.num_floor_mask[j * self.strikes.len() + i]
    }

    /// Tabular dump rows (K, T, σloc, clipped) for inspection.
    pub fn dump_rows(&self) -> Vec<(f64, f64, f64, bool)> {
        let mut rows = Vec::with_capacity(self.var_nodes.len());
        for (j, &t) in self.maturities.iter().enumerate() {
            for (i, &k) in self.strikes.iter().enumerate() {
                rows.push((k, t, self.var(i, j).sqrt(), self.clipped(i, j)));
            }
        }
        rows
    }
}

/// Build the clipped Dupire local-variance grid.
pub fn dupire_local_variance(grid: &CallPriceGrid, chi_floor: f64) -> Result<LocalVolGrid> {
    if chi_floor <= 0.0 {
        return Err(Error::invalid("chi floor must be positive"));
    }
    let (nk, nt) = (grid.strikes.len(), grid.maturities.len());
    let mut var_nodes = vec![0.0; nk * nt];
    let mut clip_mask = vec![false; nk * nt];
    let mut num_floor_mask = vec![false; nk * nt];
    let mut c_max: f64 = 0.0;

    for j in 0..nt {
        for i in 0..nk {
            let (dt, dk, dkk) = grid.fd_partials(i, j)?;
            let k = grid.strikes[i];
            let mut num = dt + (grid.rate_r - grid.div_q) * k * dk + grid.div_q * grid.price(i, j);
            let idx = j * nk + i;
            if num < 0.0 {
                num = 0.0;
                num_floor_mask[idx] = true;
            }
            let clipped = dkk < chi_floor;
            clip_mask[idx] = clipped;
            let denom = 0.5 * k * k * dkk.max(chi_floor);
            let v = num / denom;
            var_nodes[idx] = v;
            c_max = c_max.max(v);
        }
    }

    Ok(LocalVolGrid {
        strikes: grid.strikes.clone(),
        maturities: grid.maturities.clone(),
        var_nodes,
        clip_floor_chi: chi_floor,
        clip_mask,
        num_floor_mask,
        c_max,
    })
}

fn bracket(xs: &[f64], x: f64) -> (usize, f64) {
    // Clamped cell lookup: returns lower index and in-cell weight in [0,1].
    if x <= xs[0] {
        return (0, 0.0);
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return (n - 2, 1.0);
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, (x - xs[lo]) / (xs[lo + 1] - xs[lo]))
}

/// Bilinear interpolation of local *vol* (not variance), clamped to edge
/// values outside the tensor.
pub fn interp_local_vol(lv: &LocalVolGrid, s: f64, t: f64) -> f64 {
    let (i, u) = bracket(&lv.strikes, s);
    let (j, v) = bracket(&lv.maturities, t);
    let f = |ii: usize, jj: usize| lv.var(ii, jj).sqrt();
    let lo = f(i, j) * (1.0 - u) + f(i + 1, j) * u;
    let hi = f(i, j + 1) * (1.0 - u) + f(i + 1, j + 1) * u;
    lo * (1.0 - v) + hi * v
}

/// Spot-volatility source for the simulation layer.
pub trait SpotVol: Sync {
    fn vol(&self, s: f64, t: f64) -> f64;
}

impl SpotVol for LocalVolGrid {
    fn vol(&self, s: f64, t: f64) -> f64 {
        interp_local_vol(self, s, t)
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync> SpotVol for F {
    fn vol(&self, s: f64, t: f64) -> f64 {
        self(s, t)
    }
}
