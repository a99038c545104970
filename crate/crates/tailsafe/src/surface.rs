//! SSVI total-variance surface, static no-arbitrage validation, ATM-jet
//! extraction, and the shape-preserving teacher closure.
//!
//! Total implied variance at a calibrated maturity follows the slice form
//!
//! ```text
//! w(k) = (θ/2) · (1 + ρ·φ·k + √((φ·k + ρ)² + 1 − ρ²))
//! ```
//!
//! with level θ > 0, skew ρ ∈ (−1, 1), and wing parameter φ ≥ 0. Static
//! no-arbitrage holds per slice when
//!
//! ```text
//! g1 = 4 − φ·θ ≥ 0     and     g2 = 4·(1 − ρ²) − φ²·θ ≥ 0,
//! ```
//!
//! and across maturities when w(k; T) is non-decreasing in T at every fixed
//! log-moneyness k. Between calibrated maturities the surface interpolates w
//! linearly in T at fixed k, which preserves calendar monotonicity.
//!
//! The *teacher* is a quadratic jet closure around the money:
//! σ̂(k) = L + S·k + ½C·k² + Σ αⱼ·ψ̃ⱼ(k), where each auxiliary basis function
//! ψ̃ⱼ vanishes to second order at k = 0 so the closure reproduces the ATM
//! level/slope/curvature of the surface exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One calibrated SSVI maturity slice.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SsviSlice {
    /// Maturity as a year fraction, strictly positive.
    pub maturity_t: f64,
    /// Total ATM variance level θ(T) > 0.
    pub theta: f64,
    /// Skew ρ(T) ∈ (−1, 1).
    pub rho_skew: f64,
    /// Wing parameter φ(T) ≥ 0.
    pub phi_wing: f64,
}

impl SsviSlice {
    pub fn new(maturity_t: f64, theta: f64, rho_skew: f64, phi_wing: f64) -> Result<Self> {
        let slice = Self { maturity_t, theta, rho_skew, phi_wing };
        slice.validate()?;
        Ok(slice)
    }

    fn validate(&self) -> Result<()> {
        if !self.maturity_t.is_finite() || self.maturity_t <= 0.0 {
            return Err(Error::invalid(format!(
                "slice maturity must be positive, got {}",
                self.maturity_t
            )));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(Error::invalid(format!("theta must be positive, got {}", self.theta)));
        }
        if !self.rho_skew.is_finite() || self.rho_skew.abs() >= 1.0 {
            return Err(Error::invalid(format!("|rho| must be < 1, got {}", self.rho_skew)));
        }
        if !self.phi_wing.is_finite() || self.phi_wing < 0.0 {
            return Err(Error::invalid(format!("phi must be >= 0, got {}", self.phi_wing)));
        }
        Ok(())
    }

    /// Butterfly margin `g1 = 4 − φθ`.
    pub fn g1(&self) -> f64 {
        4.0 - self.phi_wing * self.theta
    }

    /// Butterfly margin `g2 = 4(1 − ρ²) − φ²θ`.
    pub fn g2(&self) -> f64 {
        4.0 * (1.0 - self.rho_skew * self.rho_skew) - self.phi_wing * self.phi_wing * self.theta
    }

    /// Slice total variance w(k).
    pub fn total_variance(&self, k: f64) -> f64 {
        let phi_k = self.phi_wing * k;
        let rho = self.rho_skew;
        0.5 * self.theta
            * (1.0 + rho * phi_k + ((phi_k + rho) * (phi_k + rho) + 1.0 - rho * rho).sqrt())
    }
}

/// Log-moneyness corridor on which calendar checks and teacher closures live.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Corridor {
    pub k_min: f64,
    pub k_max: f64,
}

impl Corridor {
    /// Default corridor, log of the 0.7..1.3 moneyness band.
    pub fn default_band() -> Self {
        Self { k_min: (0.7f64).ln(), k_max: (1.3f64).ln() }
    }

    pub fn contains(&self, k: f64) -> bool {
        k >= self.k_min && k <= self.k_max
    }

    /// Uniform grid of `n` points across the corridor.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2);
        (0..n)
            .map(|i| self.k_min + (self.k_max - self.k_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// The implied-volatility surface: ordered SSVI slices plus market scalars.
///
/// Immutable after construction; the adjustment pass returns a new surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolSurface {
    pub slices: Vec<SsviSlice>,
    pub spot_s0: f64,
    pub rate_r: f64,
    pub div_q: f64,
    pub corridor: Corridor,
    /// Optional teacher closure recipe (jet step, vol floor, auxiliary terms).
    pub teacher: Option<TeacherSpec>,
}

/// Number of corridor points scanned by the calendar check.
const CALENDAR_GRID: usize = 41;

impl VolSurface {
    pub fn new(
        slices: Vec<SsviSlice>,
        spot_s0: f64,
        rate_r: f64,
        div_q: f64,
        corridor: Corridor,
    ) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::invalid("surface needs at least one slice"));
        }
        for s in &slices {
            s.validate()?;
        }
        for pair in slices.windows(2) {
            if pair[1].maturity_t <= pair[0].maturity_t {
                return Err(Error::invalid(format!(
                    "maturities must be strictly increasing: {} then {}",
                    pair[0].maturity_t, pair[1].maturity_t
                )));
            }
        }
        if !spot_s0.is_finite() || spot_s0 <= 0.0 {
            return Err(Error::invalid(format!("spot must be positive, got {spot_s0}")));
        }
        if corridor.k_min >= corridor.k_max {
            return Err(Error::invalid("corridor must have k_min < k_max"));
        }
        Ok(Self { slices, spot_s0, rate_r, div_q, corridor, teacher: None })
    }

    pub fn with_teacher(mut self, teacher: TeacherSpec) -> Self {
        self.teacher = Some(teacher);
        self
    }

    pub fn min_maturity(&self) -> f64 {
        self.slices[0].maturity_t
    }

    pub fn max_maturity(&self) -> f64 {
        self.slices.last().unwrap().maturity_t
    }

    /// Forward at maturity `t`.
    pub fn forward(&self, t: f64) -> f64 {
        self.spot_s0 * ((self.rate_r - self.div_q) * t).exp()
    }

    /// Total variance w(k; T).
    ///
    /// At calibrated maturities this is the slice formula; between maturities
    /// it is linear-in-T interpolation of w at fixed k. Outside the
    /// calibrated range the query is rejected.
    pub fn total_variance(&self, k: f64, t: f64) -> Result<f64> {
        let (lo, hi) = (self.min_maturity(), self.max_maturity());
        if !(t >= lo - 1e-12 && t <= hi + 1e-12) {
            return Err(Error::OutOfDomain {
                what: format!("maturity {t} outside calibrated range [{lo}, {hi}]"),
            });
        }
        let t = t.clamp(lo, hi);
        // Exact slice hit?
        if let Some(s) = self.slices.iter().find(|s| (s.maturity_t - t).abs() < 1e-12) {
            return Ok(s.total_variance(k));
        }
        let hi_idx = self.slices.iter().position(|s| s.maturity_t > t).unwrap();
        let (a, b) = (&self.slices[hi_idx - 1], &self.slices[hi_idx]);
        let lam = (t - a.maturity_t) / (b.maturity_t - a.maturity_t);
        Ok((1.0 - lam) * a.total_variance(k) + lam * b.total_variance(k))
    }

    /// Implied volatility σ(k, T) = √(w/T).
    pub fn implied_vol(&self, k: f64, t: f64) -> Result<f64> {
        Ok((self.total_variance(k, t)? / t).sqrt())
    }

    /// Static no-arbitrage report: per-slice butterfly margins plus calendar
    /// violations scanned on the corridor grid. Report-only, never fails.
    pub fn validate_no_arbitrage(&self) -> ValidationReport {
        let slices = self
            .slices
            .iter()
            .map(|s| SliceCheck {
                maturity_t: s.maturity_t,
                g1: s.g1(),
                g2: s.g2(),
                butterfly_ok: s.g1() >= 0.0 && s.g2() >= 0.0,
            })
            .collect();

        let mut calendar_violations = Vec::new();
        for pair in self.slices.windows(2) {
            for &k in &self.corridor.grid(CALENDAR_GRID) {
                let w_short = pair[0].total_variance(k);
                let w_long = pair[1].total_variance(k);
                if w_long < w_short - 1e-12 {
                    calendar_violations.push(CalendarViolation {
                        k,
                        maturity_short: pair[0].maturity_t,
                        maturity_long: pair[1].maturity_t,
                        w_short,
                        w_long,
                    });
                }
            }
        }
        ValidationReport { slices, calendar_violations }
    }

    /// Calendar post-adjustment: replace θ(T) by its running maximum, then
    /// re-validate. Raising θ can break g1/g2, which is reported as an error
    /// naming the first offending slice.
    pub fn enforce_calendar_monotone(&self) -> Result<VolSurface> {
        let mut adjusted = self.clone();
        let mut running = f64::NEG_INFINITY;
        for s in &mut adjusted.slices {
            running = running.max(s.theta);
            s.theta = running;
        }
        for s in &adjusted.slices {
            if s.g1() < 0.0 || s.g2() < 0.0 {
                return Err(Error::Adjustment {
                    maturity: s.maturity_t,
                    g1: s.g1(),
                    g2: s.g2(),
                });
            }
        }
        Ok(adjusted)
    }

    /// Extract the ATM jet (level, slope, curvature of σ in k) at maturity
    /// `t` by second-order centered differences with step `h`.
    pub fn extract_atm_jet(&self, t: f64, h: f64) -> Result<AtmJet> {
        if h <= 0.0 {
            return Err(Error::invalid(format!("jet step must be positive, got {h}")));
        }
        if !self.corridor.contains(3.0 * h) || !self.corridor.contains(-3.0 * h) {
            return Err(Error::OutOfDomain {
                what: format!("jet step {h}: need 3h inside corridor"),
            });
        }
        let f = |k: f64| self.implied_vol(k, t);
        jet_from_fn(&f, h)
    }

    /// Build the teacher closure at maturity `t` from the surface's teacher
    /// spec (or a default pure-jet spec when none is attached).
    pub fn teacher_closure(&self, t: f64) -> Result<AslClosure> {
        let spec = self.teacher.clone().unwrap_or_default();
        let jet = self.extract_atm_jet(t, spec.fd_step_h)?;
        Ok(AslClosure { jet, aux: spec.aux, vol_floor: spec.vol_floor })
    }
}

/// Second-order centered jet of an arbitrary smile function.
pub fn jet_from_fn(f: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<AtmJet> {
    let (fm, f0, fp) = (f(-h)?, f(0.0)?, f(h)?);
    Ok(AtmJet {
        level_l: f0,
        slope_s: (fp - fm) / (2.0 * h),
        curvature_c: (fp - 2.0 * f0 + fm) / (h * h),
        fd_step_h: h,
    })
}

/// Per-slice butterfly margins.
#[derive(Debug, Clone, Serialize)]
pub struct SliceCheck {
    pub maturity_t: f64,
    pub g1: f64,
    pub g2: f64,
    pub butterfly_ok: bool,
}

/// A grid point where total variance decreased in maturity.
#[derive(Debug, Clone, Serialize)]
pub struct CalendarViolation {
    pub k: f64,
    pub maturity_short: f64,
    pub maturity_long: f64,
    pub w_short: f64,
    pub w_long: f64,
}

/// Output of [`VolSurface::validate_no_arbitrage`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub slices: Vec<SliceCheck>,
    pub calendar_violations: Vec<CalendarViolation>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.slices.iter().all(|s| s.butterfly_ok) && self.calendar_violations.is_empty()
    }

    /// Flat text rendering, one line per check, for the CLI `validate`
    /// subcommand and run logs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.slices {
            out.push_str(&format!(
                "slice T={:.6} g1={:+.6} g2={:+.6} butterfly={}\n",
                s.maturity_t,
                s.g1,
                s.g2,
                if s.butterfly_ok { "ok" } else { "VIOLATION" }
            ));
        }
        if self.calendar_violations.is_empty() {
            out.push_str("calendar ok\n");
        } else {
            for v in &self.calendar_violations {
                out.push_str(&format!(
                    "calendar VIOLATION k={:+.4} T {:.6}->{:.6} w {:.8}->{:.8}\n",
                    v.k, v.maturity_short, v.maturity_long, v.w_short, v.w_long
                ));
            }
        }
        out
    }
}

/// ATM level/slope/curvature of the smile plus the extraction step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AtmJet {
    pub level_l: f64,
    pub slope_s: f64,
    pub curvature_c: f64,
    pub fd_step_h: f64,
}

impl AtmJet {
    /// Quadratic jet value L + S·k + ½C·k².
    pub fn eval(&self, k: f64) -> f64 {
        self.level_l + self.slope_s * k + 0.5 * self.curvature_c * k * k
    }
}

/// Auxiliary basis functions for the teacher. Each must vanish to second
/// order at k = 0 so the closure keeps the ATM jet intact.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFn {
    /// k^degree with degree >= 3.
    Monomial { degree: u32 },
}

impl BasisFn {
    pub fn eval(&self, k: f64) -> f64 {
        match *self {
            BasisFn::Monomial { degree } => k.powi(degree as i32),
        }
    }

    /// Numerical check that value and first two k-derivatives vanish at 0.
    pub fn jet_vanishes(&self, tol: f64) -> bool {
        let h = 1e-4;
        let (fm, f0, fp) = (self.eval(-h), self.eval(0.0), self.eval(h));
        let d1 = (fp - fm) / (2.0 * h);
        let d2 = (fp - 2.0 * f0 + fm) / (h * h);
        f0.abs() <= tol && d1.abs() <= tol && d2.abs() <= tol
    }
}

/// Recipe for building teacher closures: jet step, clamp floor, and the
/// (by default empty) auxiliary expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub fd_step_h: f64,
    /// Annualized-vol floor applied when the closure goes negative.
    pub vol_floor: f64,
    pub aux: Vec<(f64, BasisFn)>,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        Self { fd_step_h: 5e-3, vol_floor: 1e-4, aux: Vec::new() }
    }
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fd_step_h <= 0.0 {
            return Err(Error::invalid("teacher fd step must be positive"));
        }
        for (_, b) in &self.aux {
            if !b.jet_vanishes(1e-12) {
                return Err(Error::invalid(format!(
                    "auxiliary basis {b:?} does not vanish to second order at k=0"
                )));
            }
        }
        Ok(())
    }
}

/// Teacher smile at one maturity: the extracted jet plus auxiliary terms.
#[derive(Debug, Clone)]
pub struct AslClosure {
    pub jet: AtmJet,
    pub aux: Vec<(f64, BasisFn)>,
    pub vol_floor: f64,
}

impl AslClosure {
    /// Teacher volatility σ̂(k), clamped at the configured floor.
    pub fn vol(&self, k: f64) -> f64 {
        self.vol_flagged(k).0
    }

    /// Teacher volatility plus a flag marking that the raw closure was
    /// negative and got clamped.
    pub fn vol_flagged(&self, k: f64) -> (f64, bool) {
        let mut v = self.jet.eval(k);
        for (alpha, basis) in &self.aux {
            v += alpha * basis.eval(k);
        }
        if v < self.vol_floor { (self.vol_floor, true) } else { (v, false) }
    }
}
