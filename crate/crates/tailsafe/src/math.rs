//! Scalar numerics shared across the stack: standard-normal functions and
//! Black-Scholes prices/greeks.
//!
//! Everything here is deterministic closed-form arithmetic; the simulation
//! and calibration layers build on these primitives.

/// Standard normal density φ(z).
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF Φ(z) via the complementary error function.
///
/// Uses the Abramowitz-Stegun 7.1.26 rational approximation for erf, which is
/// accurate to ~1.5e-7; adequate for pricing and quadrature at the tolerances
/// used in this crate's diagnostics.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    // A&S 7.1.26 on |x|, reflected for negative arguments.
    let ax = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * ax);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let e = poly * (-ax * ax).exp();
    if x >= 0.0 { e } else { 2.0 - e }
}

/// Inverse standard normal CDF (Acklam's rational approximation with one
/// Halley refinement step, ~1e-15 absolute accuracy on (0,1)).
///
/// The simulation layer draws normals exclusively through this map so that
/// uniform counter streams translate deterministically into Gaussian shocks.
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inv_norm_cdf requires p in (0,1), got {p}");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley step against the high-accuracy residual.
    let e = norm_cdf_hi(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Higher-accuracy Φ used only to polish `inv_norm_cdf`; continued-fraction
/// free variant based on the W. Cody-style split.
fn norm_cdf_hi(z: f64) -> f64 {
    // Symmetric tail handling with the series/asymptotic split at |z| = 8.
    if z < -8.0 {
        return 0.0;
    }
    if z > 8.0 {
        return 1.0;
    }
    // Taylor/continued sum: Φ(z) = 1/2 + φ(z)·Σ z^(2k+1)/(1·3·5···(2k+1)).
    let mut sum = z;
    let mut term = z;
    let mut k = 0u32;
    while term.abs() > 1e-17 * sum.abs().max(1.0) && k < 200 {
        k += 1;
        term *= z * z / (2 * k + 1) as f64;
        sum += term;
    }
    0.5 + sum * norm_pdf(z)
}

/// Black-Scholes inputs for a European option on a dividend-paying underlier.
#[derive(Debug, Clone, Copy)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub div_yield: f64,
    pub expiry: f64,
    pub vol: f64,
}

impl BsInputs {
    fn d1_d2(&self) -> (f64, f64) {
        let sig_sqrt_t = self.vol * self.expiry.sqrt();
        let d1 = ((self.spot / self.strike).ln()
            + (self.rate - self.div_yield + 0.5 * self.vol * self.vol) * self.expiry)
            / sig_sqrt_t;
        (d1, d1 - sig_sqrt_t)
    }

    /// Forward price `S·e^{(r-q)T}`.
    pub fn forward(&self) -> f64 {
        self.spot * ((self.rate - self.div_yield) * self.expiry).exp()
    }

    /// European call price. Degenerate expiries/vols collapse to discounted
    /// intrinsic value on the forward.
    pub fn call(&self) -> f64 {
        if self.expiry <= 0.0 || self.vol <= 0.0 {
            return ((-self.rate * self.expiry).exp() * (self.forward() - self.strike)).max(0.0);
        }
        let (d1, d2) = self.d1_d2();
        self.spot * (-self.div_yield * self.expiry).exp() * norm_cdf(d1)
            - self.strike * (-self.rate * self.expiry).exp() * norm_cdf(d2)
    }

    /// European put price via parity-consistent closed form.
    pub fn put(&self) -> f64 {
        if self.expiry <= 0.0 || self.vol <= 0.0 {
            return ((-self.rate * self.expiry).exp() * (self.strike - self.forward())).max(0.0);
        }
        let (d1, d2) = self.d1_d2();
        self.strike * (-self.rate * self.expiry).exp() * norm_cdf(-d2)
            - self.spot * (-self.div_yield * self.expiry).exp() * norm_cdf(-d1)
    }

    /// Call delta `e^{-qT}·Φ(d1)`.
    pub fn call_delta(&self) -> f64 {
        if self.expiry <= 0.0 || self.vol <= 0.0 {
            return if self.forward() > self.strike {
                (-self.div_yield * self.expiry).exp()
            } else {
                0.0
            };
        }
        let (d1, _) = self.d1_d2();
        (-self.div_yield * self.expiry).exp() * norm_cdf(d1)
    }

    /// Vega `S·e^{-qT}·√T·φ(d1)` (identical for calls and puts).
    pub fn vega(&self) -> f64 {
        if self.expiry <= 0.0 || self.vol <= 0.0 {
            return 0.0;
        }
        let (d1, _) = self.d1_d2();
        self.spot * (-self.div_yield * self.expiry).exp() * self.expiry.sqrt() * norm_pdf(d1)
    }
}

/// Ordinary least squares slope of `y` against `x`.
///
/// Used by the convergence studies for log-log order fits; panics on fewer
/// than two points because a slope is then meaningless.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert!(x.len() == y.len() && x.len() >= 2, "ols_slope needs >= 2 paired points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}
