//! Per-step tail-safe hedging decision.
//!
//! Each step runs the pipeline
//!
//! ```text
//! EWMA update -> errors -> no-trade band (guarded) -> candidate + gate
//!            -> QP solve -> micro-thresholds -> cooldown -> telemetry
//! ```
//!
//! with tracking errors `e_Δ = Δ* − h_S`, `e_V = κ_eff − h_V`. The quadratic
//! risk and execution cost are
//!
//! ```text
//! R(e) = ½·e'W e,   W = [α_Δ, α_×ρ̂; α_×ρ̂, w_VIX_eff],
//! C(x) = x'·diag(η_S, η_V)·x + γ·‖x − x₋₁‖²,
//! ```
//!
//! where the VIX tracking weight is the correlation/expiry-aware schedule
//! `w_VIX_eff = w_VIX / (1 + λ_ρ(1−w)|ρ̂|)`, `w = T_rem/T0`. The QP minimizes
//! exactly `R(e−x) + ½·C(x)` over the labeled safety boxes, so a gate-accepted
//! feasible candidate forces the executed trade to strictly reduce risk
//! (the sufficient-descent argument); the step re-checks that inequality on
//! the executed trade and vetoes the trade if it ever fails.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qp::{self, ConstraintRow, QpProblem, SolveStatus};

/// Guard gains inflating the VIX band radius.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GuardGains {
    pub tau_tail: f64,
    pub tau_rho: f64,
    pub tau_pred: f64,
}

/// Hard box bounds (all strictly positive; each box contains the origin).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Boxes {
    /// Post-trade error bounds.
    pub delta_bar: f64,
    pub v_bar: f64,
    /// Inventory bounds.
    pub h_s_bar: f64,
    pub h_v_bar: f64,
    /// Per-step trade-size bounds.
    pub rate_s: f64,
    pub rate_v: f64,
    /// Soft tail boxes (violations absorbed by penalized slack).
    pub cvar_delta: f64,
    pub cvar_v: f64,
}

/// Static controller parameters.
#[derive(Debug, Clone, Serialize)]
pub struct ControllerParams {
    pub alpha_delta: f64,
    pub alpha_v: f64,
    pub alpha_cross: f64,
    pub eta_s: f64,
    pub eta_v: f64,
    pub gamma_smooth: f64,
    pub w_vix_base: f64,
    pub lambda_rho: f64,
    pub band_delta: f64,
    pub band_v: f64,
    pub guards: GuardGains,
    pub gate_tau0: f64,
    pub gate_tau1: f64,
    pub lambda_c: f64,
    pub boxes: Boxes,
    pub rho_soft: f64,
    /// Micro-threshold bases; the schedule is s̲(w) = s̲₀·(1 + (1−w)).
    pub threshold_s0: f64,
    pub threshold_v0: f64,
    pub cooldown_steps: u32,
    pub ewma_lambda: f64,
    /// Horizon normalizer T0 for w = T_rem/T0.
    pub t0_horizon: f64,
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("alpha_delta", self.alpha_delta),
            ("alpha_v", self.alpha_v),
            ("eta_s", self.eta_s),
            ("eta_v", self.eta_v),
            ("w_vix_base", self.w_vix_base),
            ("band_delta", self.band_delta),
            ("band_v", self.band_v),
            ("gate_tau0", self.gate_tau0),
            ("rho_soft", self.rho_soft),
            ("t0_horizon", self.t0_horizon),
            ("boxes.delta_bar", self.boxes.delta_bar),
            ("boxes.v_bar", self.boxes.v_bar),
            ("boxes.h_s_bar", self.boxes.h_s_bar),
            ("boxes.h_v_bar", self.boxes.h_v_bar),
            ("boxes.rate_s", self.boxes.rate_s),
            ("boxes.rate_v", self.boxes.rate_v),
            ("boxes.cvar_delta", self.boxes.cvar_delta),
            ("boxes.cvar_v", self.boxes.cvar_v),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda_rho", self.lambda_rho),
            ("gamma_smooth", self.gamma_smooth),
            ("gate_tau1", self.gate_tau1),
            ("guards.tau_tail", self.guards.tau_tail),
            ("guards.tau_rho", self.guards.tau_rho),
            ("guards.tau_pred", self.guards.tau_pred),
            ("threshold_s0", self.threshold_s0),
            ("threshold_v0", self.threshold_v0),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.lambda_c > 0.0 && self.lambda_c < self.gate_tau0) {
            return Err(Error::invalid("lambda_c must lie in (0, tau0)"));
        }
        if !(self.ewma_lambda > 0.0 && self.ewma_lambda < 1.0) {
            return Err(Error::invalid("ewma decay must lie in (0, 1)"));
        }
        // W(rho) PSD for every |rho| <= 1 requires alpha_x^2 <= alpha_d*alpha_v;
        // the per-step matrix with the dynamic weight is re-checked at build.
        if self.alpha_cross * self.alpha_cross > self.alpha_delta * self.alpha_v {
            return Err(Error::invalid("alpha_cross^2 must not exceed alpha_delta * alpha_v"));
        }
        Ok(())
    }

    /// Gate threshold τ(w) = τ₀ + τ₁(1 − w).
    pub fn tau_of(&self, w: f64) -> f64 {
        self.gate_tau0 + self.gate_tau1 * (1.0 - w)
    }

    /// Expiry-aware micro-thresholds (s̲(w), v̲(w)).
    pub fn thresholds(&self, w: f64) -> (f64, f64) {
        let scale = 1.0 + (1.0 - w);
        (self.threshold_s0 * scale, self.threshold_v0 * scale)
    }

    /// Execution cost C(x) = x'diag(η)x + γ‖x − x₋₁‖².
    pub fn cost(&self, x: [f64; 2], prev: [f64; 2]) -> f64 {
        self.eta_s * x[0] * x[0]
            + self.eta_v * x[1] * x[1]
            + self.gamma_smooth
                * ((x[0] - prev[0]) * (x[0] - prev[0]) + (x[1] - prev[1]) * (x[1] - prev[1]))
    }

    /// Safety channels in discrete-time barrier form, for the invariance
    /// margin diagnostics.
    pub fn cbf_channels(&self) -> Vec<CbfChannel> {
        vec![
            CbfChannel { label: "invS".into(), bound: self.boxes.h_s_bar, alpha_i: 0.0, sigma_i: 0.0 },
            CbfChannel { label: "invV".into(), bound: self.boxes.h_v_bar, alpha_i: 0.0, sigma_i: 0.0 },
        ]
    }
}

/// One barrier channel h(z) = bound − |z| with its decay and slack budget.
#[derive(Debug, Clone, Serialize)]
pub struct CbfChannel {
    pub label: String,
    pub bound: f64,
    /// Decay rate α_i ∈ [0, 1) in h(z⁺) ≥ (1−α_i)h(z) − σ_i.
    pub alpha_i: f64,
    pub sigma_i: f64,
}

impl CbfChannel {
    pub fn barrier(&self, value: f64) -> f64 {
        self.bound - value.abs()
    }
}

/// Mutable per-path controller state.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub h_s: f64,
    pub h_v: f64,
    pub prev_trade: [f64; 2],
    pub cooldown_v: u32,
    pub ewma_cov: f64,
    pub ewma_var_s: f64,
    pub ewma_var_v: f64,
    pub rho_hat: f64,
    pub kappa_eff_prev: Option<f64>,
}

impl ControllerState {
    pub fn new() -> Self {
        Self {
            h_s: 0.0,
            h_v: 0.0,
            prev_trade: [0.0; 2],
            cooldown_v: 0,
            ewma_cov: 0.0,
            ewma_var_s: 0.0,
            ewma_var_v: 0.0,
            rho_hat: 0.0,
            kappa_eff_prev: None,
        }
    }
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new()
    }
}

/// EWMA covariance/variance update and correlation refresh.
pub fn update_ewma(state: &mut ControllerState, d_s: f64, d_v: f64, lambda: f64) {
    state.ewma_cov = lambda * state.ewma_cov + (1.0 - lambda) * d_s * d_v;
    state.ewma_var_s = lambda * state.ewma_var_s + (1.0 - lambda) * d_s * d_s;
    state.ewma_var_v = lambda * state.ewma_var_v + (1.0 - lambda) * d_v * d_v;
    state.rho_hat = if state.ewma_var_s < 1e-16 || state.ewma_var_v < 1e-16 {
        0.0
    } else {
        (state.ewma_cov / (state.ewma_var_s * state.ewma_var_v).sqrt()).clamp(-1.0, 1.0)
    };
}

/// Correlation/expiry-aware VIX weight `w_VIX / (1 + λ_ρ(1−w)|ρ̂|)`.
pub fn dynamic_vix_weight(params: &ControllerParams, w: f64, rho_hat: f64) -> f64 {
    params.w_vix_base / (1.0 + params.lambda_rho * (1.0 - w) * rho_hat.abs())
}

/// Per-step risk matrix with the dynamic VIX weight in the (V,V) slot.
pub fn risk_matrix(params: &ControllerParams, rho_hat: f64, w_vix_eff: f64) -> Result<[[f64; 2]; 2]> {
    let off = params.alpha_cross * rho_hat;
    if params.alpha_delta * w_vix_eff - off * off < -1e-12 {
        return Err(Error::invalid(format!(
            "risk matrix not PSD: alpha_delta={} w_eff={w_vix_eff} cross={off}",
            params.alpha_delta
        )));
    }
    Ok([[params.alpha_delta, off], [off, w_vix_eff]])
}

/// Quadratic tracking risk R(e) = ½ e'We.
pub fn risk_of(w: &[[f64; 2]; 2], e: [f64; 2]) -> f64 {
    0.5 * (w[0][0] * e[0] * e[0] + 2.0 * w[0][1] * e[0] * e[1] + w[1][1] * e[1] * e[1])
}

/// No-trade-band outcome.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NtbOutcome {
    pub inside: bool,
    pub b_v_eff: f64,
}

/// Guarded elliptical inaction check. The VIX radius inflates near expiry,
/// under high |ρ̂|, and when the error sign disagrees with the κ trend.
pub fn ntb_check(
    e: [f64; 2],
    params: &ControllerParams,
    w: f64,
    rho_hat: f64,
    d_kappa: f64,
) -> NtbOutcome {
    let mismatch = e[1].signum() != d_kappa.signum() && e[1] != 0.0 && d_kappa != 0.0;
    let b_v_eff = params.band_v
        * (1.0 + params.guards.tau_tail * (1.0 - w))
        * (1.0 + params.guards.tau_rho * rho_hat.abs())
        * (if mismatch { 1.0 + params.guards.tau_pred } else { 1.0 });
    let quad = (e[0] / params.band_delta).powi(2) + (e[1] / b_v_eff).powi(2);
    NtbOutcome { inside: quad <= 1.0, b_v_eff }
}

/// Radial projection of the error to the guarded ellipse boundary; the
/// returned trade moves the post-trade error onto the boundary.
pub fn project_to_band(e: [f64; 2], b_delta: f64, b_v_eff: f64) -> Result<[f64; 2]> {
    let quad = (e[0] / b_delta).powi(2) + (e[1] / b_v_eff).powi(2);
    if quad <= 1.0 {
        return Err(Error::invalid("project_to_band called inside the band"));
    }
    let s = quad.sqrt();
    Ok([e[0] * (1.0 - 1.0 / s), e[1] * (1.0 - 1.0 / s)])
}

/// Gate outcome: execute only when the projected risk drop beats the
/// expiry-scaled execution cost.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GateOutcome {
    pub accept: bool,
    pub risk_drop: f64,
    pub cost: f64,
    pub tau_w: f64,
}

pub fn gate_check(
    e: [f64; 2],
    candidate: [f64; 2],
    w_matrix: &[[f64; 2]; 2],
    params: &ControllerParams,
    w: f64,
    prev_trade: [f64; 2],
) -> GateOutcome {
    let risk_drop =
        risk_of(w_matrix, e) - risk_of(w_matrix, [e[0] - candidate[0], e[1] - candidate[1]]);
    let cost = params.cost(candidate, prev_trade);
    let tau_w = params.tau_of(w);
    GateOutcome { accept: risk_drop > tau_w * cost, risk_drop, cost, tau_w }
}

/// Assemble the per-step QP: tracking Hessian plus impact and smoothing,
/// linear term from risk tracking, and the labeled safety rows.
pub fn build_step_qp(
    state: &ControllerState,
    e: [f64; 2],
    params: &ControllerParams,
    w_matrix: &[[f64; 2]; 2],
    cooldown_active: bool,
) -> QpProblem {
    let g = params.gamma_smooth;
    let trade_hessian = [
        [w_matrix[0][0] + params.eta_s + g, w_matrix[0][1]],
        [w_matrix[1][0], w_matrix[1][1] + params.eta_v + g],
    ];
    let linear = [
        -(w_matrix[0][0] * e[0] + w_matrix[0][1] * e[1]) - g * state.prev_trade[0],
        -(w_matrix[1][0] * e[0] + w_matrix[1][1] * e[1]) - g * state.prev_trade[1],
    ];

    let b = &params.boxes;
    let mut rows = vec![
        ConstraintRow::le("errS_upper", [-1.0, 0.0, 0.0, 0.0], b.delta_bar - e[0]),
        ConstraintRow::le("errS_lower", [1.0, 0.0, 0.0, 0.0], b.delta_bar + e[0]),
        ConstraintRow::le("errV_upper", [0.0, -1.0, 0.0, 0.0], b.v_bar - e[1]),
        ConstraintRow::le("errV_lower", [0.0, 1.0, 0.0, 0.0], b.v_bar + e[1]),
        ConstraintRow::le("invS_upper", [1.0, 0.0, 0.0, 0.0], b.h_s_bar - state.h_s),
        ConstraintRow::le("invS_lower", [-1.0, 0.0, 0.0, 0.0], b.h_s_bar + state.h_s),
        ConstraintRow::le("invV_upper", [0.0, 1.0, 0.0, 0.0], b.h_v_bar - state.h_v),
        ConstraintRow::le("invV_lower", [0.0, -1.0, 0.0, 0.0], b.h_v_bar + state.h_v),
        ConstraintRow::le("rate_S_upper", [1.0, 0.0, 0.0, 0.0], b.rate_s),
        ConstraintRow::le("rate_S_lower", [-1.0, 0.0, 0.0, 0.0], b.rate_s),
        ConstraintRow::le("rate_V_upper", [0.0, 1.0, 0.0, 0.0], b.rate_v),
        ConstraintRow::le("rate_V_lower", [0.0, -1.0, 0.0, 0.0], b.rate_v),
        ConstraintRow::le("cvarS_upper", [-1.0, 0.0, -1.0, 0.0], b.cvar_delta - e[0]),
        ConstraintRow::le("cvarS_lower", [1.0, 0.0, -1.0, 0.0], b.cvar_delta + e[0]),
        ConstraintRow::le("cvarV_upper", [0.0, -1.0, 0.0, -1.0], b.cvar_v - e[1]),
        ConstraintRow::le("cvarV_lower", [0.0, 1.0, 0.0, -1.0], b.cvar_v + e[1]),
        ConstraintRow::le("slackS_nonneg", [0.0, 0.0, -1.0, 0.0], 0.0),
        ConstraintRow::le("slackV_nonneg", [0.0, 0.0, 0.0, -1.0], 0.0),
    ];
    if cooldown_active {
        rows.push(ConstraintRow::eq("cooldown_V", [0.0, 1.0, 0.0, 0.0], 0.0));
    }

    QpProblem { trade_hessian, linear, slack_penalty_rho: params.rho_soft, rows }
}

/// Zero each leg below its expiry-aware micro-threshold (strict inequality).
pub fn apply_micro_thresholds(x: [f64; 2], w: f64, params: &ControllerParams) -> [f64; 2] {
    let (s_min, v_min) = params.thresholds(w);
    [
        if x[0].abs() < s_min { 0.0 } else { x[0] },
        if x[1].abs() < v_min { 0.0 } else { x[1] },
    ]
}

/// Step decision taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    NtbInaction,
    GateBlocked,
    Traded,
    CooldownHold,
}

/// Per-step audit row, serialized as one flat JSON object per line.
#[derive(Debug, Clone, Serialize)]
pub struct TelemetryRecord {
    pub step_index: usize,
    pub decision: Decision,
    pub trade: [f64; 2],
    pub risk_before: f64,
    pub risk_after: f64,
    pub cost: f64,
    pub active_set: Vec<String>,
    pub tightest_label: Option<String>,
    pub rate_util: f64,
    pub slack_sum: f64,
    pub solver_status: String,
    pub solve_time: f64,
}

/// Hedging targets for a step.
#[derive(Debug, Clone, Copy)]
pub struct Targets {
    pub delta_star: f64,
    pub kappa_eff: f64,
}

/// One-step market moves feeding the EWMA correlation.
#[derive(Debug, Clone, Copy)]
pub struct MarketMove {
    pub d_spot: f64,
    pub d_vix: f64,
}

/// Result of one controller step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub trade: [f64; 2],
    pub telemetry: TelemetryRecord,
    /// Executed-trade descent guard fired (trade was vetoed post-solve).
    pub descent_guard_tripped: bool,
}

/// Run the full per-step pipeline, mutating `state`.
pub fn controller_step(
    state: &mut ControllerState,
    targets: Targets,
    market: MarketMove,
    params: &ControllerParams,
    t_rem: f64,
    step_index: usize,
) -> Result<StepResult> {
    update_ewma(state, market.d_spot, market.d_vix, params.ewma_lambda);

    let w = (t_rem / params.t0_horizon).clamp(0.0, 1.0);
    let w_vix_eff = dynamic_vix_weight(params, w, state.rho_hat);
    let w_matrix = risk_matrix(params, state.rho_hat, w_vix_eff)?;

    let e = [targets.delta_star - state.h_s, targets.kappa_eff - state.h_v];
    let d_kappa = state.kappa_eff_prev.map_or(0.0, |prev| targets.kappa_eff - prev);
    let risk_before = risk_of(&w_matrix, e);
    let cooldown_active = state.cooldown_v > 0;
    let prev_trade = state.prev_trade;

    let ntb = ntb_check(e, params, w, state.rho_hat, d_kappa);
    if ntb.inside {
        let telemetry = hold_record(step_index, Decision::NtbInaction, risk_before, prev_trade, params);
        finalize(state, [0.0; 2], targets.kappa_eff, params.cooldown_steps);
        return Ok(StepResult { trade: [0.0; 2], telemetry, descent_guard_tripped: false });
    }

    // Candidate: radial projection, cooldown-aware, clamped into the hard
    // boxes so it is feasible for the QP (the descent argument needs that).
    let mut candidate = project_to_band(e, params.band_delta, ntb.b_v_eff)?;
    if cooldown_active {
        candidate[1] = 0.0;
    }
    candidate = clamp_to_boxes(candidate, e, state, params);

    let gate = gate_check(e, candidate, &w_matrix, params, w, prev_trade);
    if !gate.accept {
        let telemetry = hold_record(step_index, Decision::GateBlocked, risk_before, prev_trade, params);
        finalize(state, [0.0; 2], targets.kappa_eff, params.cooldown_steps);
        return Ok(StepResult { trade: [0.0; 2], telemetry, descent_guard_tripped: false });
    }

    let problem = build_step_qp(state, e, params, &w_matrix, cooldown_active);
    let solution = qp::solve(&problem)?;
    if solution.status != SolveStatus::Optimal {
        // Execute nothing; the record carries the solver status for audit.
        let mut telemetry =
            hold_record(step_index, Decision::GateBlocked, risk_before, prev_trade, params);
        telemetry.solver_status = format!("{:?}", solution.status);
        telemetry.solve_time = solution.solve_time_s;
        finalize(state, [0.0; 2], targets.kappa_eff, params.cooldown_steps);
        return Ok(StepResult { trade: [0.0; 2], telemetry, descent_guard_tripped: false });
    }

    let x_star = solution.x_star;
    let x_final = apply_micro_thresholds(x_star, w, params);
    let risk_after = risk_of(&w_matrix, [e[0] - x_final[0], e[1] - x_final[1]]);
    let cost_final = params.cost(x_final, prev_trade);

    // Executed-trade sufficient descent: R(e−x) <= R(e) − (τ−λ_c)·C(x).
    // The merit structure of the QP makes this hold with real margin; if a
    // threshold corner ever breaks it, the trade is vetoed like a gate block.
    let is_zero = x_final[0] == 0.0 && x_final[1] == 0.0;
    let descent_ok = risk_after
        <= risk_before - (gate.tau_w - params.lambda_c) * cost_final + 1e-12;
    if !is_zero && !descent_ok {
        let telemetry = hold_record(step_index, Decision::GateBlocked, risk_before, prev_trade, params);
        finalize(state, [0.0; 2], targets.kappa_eff, params.cooldown_steps);
        return Ok(StepResult { trade: [0.0; 2], telemetry, descent_guard_tripped: true });
    }

    let decision = if is_zero {
        if cooldown_active { Decision::CooldownHold } else { Decision::GateBlocked }
    } else {
        Decision::Traded
    };

    let rate_bar = params.boxes.rate_s.max(params.boxes.rate_v);
    let d0 = x_final[0] - prev_trade[0];
    let d1 = x_final[1] - prev_trade[1];
    let telemetry = TelemetryRecord {
        step_index,
        decision,
        trade: x_final,
        risk_before,
        risk_after: if is_zero { risk_before } else { risk_after },
        cost: if is_zero { 0.0 } else { cost_final },
        active_set: solution.active_set.clone(),
        tightest_label: solution.tightest_label(&problem),
        rate_util: (d0 * d0 + d1 * d1).sqrt() / rate_bar,
        slack_sum: solution.s_star[0].abs() + solution.s_star[1].abs(),
        solver_status: "optimal".into(),
        solve_time: solution.solve_time_s,
    };

    finalize(state, x_final, targets.kappa_eff, params.cooldown_steps);
    Ok(StepResult { trade: x_final, telemetry, descent_guard_tripped: false })
}

/// Clamp a candidate trade into the intersection of the hard per-leg boxes
/// (error, inventory, rate, and the slack-free tail boxes). Every interval
/// contains zero while the state invariants hold, so clamping preserves
/// feasibility.
fn clamp_to_boxes(
    x: [f64; 2],
    e: [f64; 2],
    state: &ControllerState,
    params: &ControllerParams,
) -> [f64; 2] {
    let b = &params.boxes;
    let lo_s = (-b.rate_s)
        .max(e[0] - b.delta_bar)
        .max(e[0] - b.cvar_delta)
        .max(-b.h_s_bar - state.h_s);
    let hi_s =
        b.rate_s.min(e[0] + b.delta_bar).min(e[0] + b.cvar_delta).min(b.h_s_bar - state.h_s);
    let lo_v = (-b.rate_v)
        .max(e[1] - b.v_bar)
        .max(e[1] - b.cvar_v)
        .max(-b.h_v_bar - state.h_v);
    let hi_v = b.rate_v.min(e[1] + b.v_bar).min(e[1] + b.cvar_v).min(b.h_v_bar - state.h_v);
    [x[0].clamp(lo_s.min(0.0), hi_s.max(0.0)), x[1].clamp(lo_v.min(0.0), hi_v.max(0.0))]
}

fn hold_record(
    step_index: usize,
    decision: Decision,
    risk: f64,
    prev_trade: [f64; 2],
    params: &ControllerParams,
) -> TelemetryRecord {
    let rate_bar = params.boxes.rate_s.max(params.boxes.rate_v);
    TelemetryRecord {
        step_index,
        decision,
        trade: [0.0; 2],
        risk_before: risk,
        risk_after: risk,
        cost: 0.0,
        active_set: Vec::new(),
        tightest_label: None,
        rate_util: (prev_trade[0] * prev_trade[0] + prev_trade[1] * prev_trade[1]).sqrt()
            / rate_bar,
        slack_sum: 0.0,
        solver_status: "not_solved".into(),
        solve_time: 0.0,
    }
}

/// Cooldown bookkeeping, inventory update, trade memory, κ memory.
fn finalize(state: &mut ControllerState, trade: [f64; 2], kappa_eff: f64, cooldown_steps: u32) {
    state.cooldown_v = if trade[1].abs() > 0.0 {
        cooldown_steps
    } else {
        state.cooldown_v.saturating_sub(1)
    };
    state.h_s += trade[0];
    state.h_v += trade[1];
    state.prev_trade = trade;
    state.kappa_eff_prev = Some(kappa_eff);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn test_params() -> ControllerParams {
        ControllerParams {
            alpha_delta: 1.0,
            alpha_v: 1.0,
            alpha_cross: 0.1,
            eta_s: 0.05,
            eta_v: 0.05,
            gamma_smooth: 0.01,
            w_vix_base: 1.0,
            lambda_rho: 1.5,
            band_delta: 0.02,
            band_v: 0.02,
            guards: GuardGains { tau_tail: 0.5, tau_rho: 0.25, tau_pred: 0.3 },
            gate_tau0: 1.0,
            gate_tau1: 2.0,
            lambda_c: 0.5,
            boxes: Boxes {
                delta_bar: 3.0,
                v_bar: 3.0,
                h_s_bar: 2.0,
                h_v_bar: 2.0,
                rate_s: 0.25,
                rate_v: 0.25,
                cvar_delta: 2.5,
                cvar_v: 2.5,
            },
            rho_soft: 100.0,
            threshold_s0: 0.002,
            threshold_v0: 0.002,
            cooldown_steps: 3,
            ewma_lambda: 0.94,
            t0_horizon: 60.0 / 365.0,
        }
    }

    #[test]
    fn ewma_limits() {
        let p = test_params();
        let mut state = ControllerState::new();
        // Identical series: rho -> 1.
        for _ in 0..200 {
            update_ewma(&mut state, 0.5, 0.5, p.ewma_lambda);
        }
        assert!(state.rho_hat > 0.999);
        // Degenerate series: rho = 0 by the fallback.
        let mut state = ControllerState::new();
        for _ in 0..50 {
            update_ewma(&mut state, 0.5, 0.0, p.ewma_lambda);
        }
        assert_eq!(state.rho_hat, 0.0);
    }

    #[test]
    fn ewma_independent_series_small_rho() {
        let p = test_params();
        let mut state = ControllerState::new();
        for i in 0..10_000u64 {
            let a = crate::rng::standard_normal(23, i, 0, 0);
            let b = crate::rng::standard_normal(23, i, 0, 1);
            update_ewma(&mut state, a, b, p.ewma_lambda);
        }
        assert!(state.rho_hat.abs() < 0.1, "rho_hat = {}", state.rho_hat);
    }

    #[test]
    fn dynamic_weight_values() {
        let mut p = test_params();
        p.w_vix_base = 0.8;
        p.lambda_rho = 1.5;
        assert_abs_diff_eq!(dynamic_vix_weight(&p, 1.0, 0.9), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(dynamic_vix_weight(&p, 0.3, 0.0), 0.8, epsilon = 1e-15);
        // w = 0.25, |rho| = 0.8: 0.8 / (1 + 1.5*0.75*0.8) = 0.8/1.9
        assert_abs_diff_eq!(dynamic_vix_weight(&p, 0.25, -0.8), 0.8 / 1.9, epsilon = 1e-15);
    }

    #[test]
    fn ntb_guard_product() {
        let mut p = test_params();
        p.band_v = 1.0;
        p.guards = GuardGains { tau_tail: 0.5, tau_rho: 0.25, tau_pred: 0.3 };
        // w=0, |rho|=0.4, sign mismatch: 1 * 1.5 * 1.1 * 1.3 = 2.145
        let out = ntb_check([0.0, 0.5], &p, 0.0, 0.4, -1.0);
        assert_abs_diff_eq!(out.b_v_eff, 2.145, epsilon = 1e-12);
    }

    #[test]
    fn ntb_origin_and_boundary_inside() {
        let p = test_params();
        assert!(ntb_check([0.0, 0.0], &p, 1.0, 0.0, 0.0).inside);
        // Exactly on the boundary along the delta axis counts as inaction.
        assert!(ntb_check([p.band_delta, 0.0], &p, 1.0, 0.0, 0.0).inside);
        assert!(!ntb_check([1.5 * p.band_delta, 0.0], &p, 1.0, 0.0, 0.0).inside);
    }

    #[test]
    fn projection_axis_and_diagonal() {
        let b = 0.02;
        let x = project_to_band([2.0 * b, 0.0], b, b).unwrap();
        assert_abs_diff_eq!(x[0], b, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-14);

        let x = project_to_band([0.0, 3.0 * b], b, b).unwrap();
        assert_abs_diff_eq!(x[1], 2.0 * b, epsilon = 1e-14);

        // 45 degrees with unit radii and |e| = 2: the scaling factor is 1/2.
        let e = [2.0f64.sqrt(), 2.0f64.sqrt()];
        let x = project_to_band(e, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(x[0], e[0] / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], e[1] / 2.0, epsilon = 1e-12);

        assert!(project_to_band([0.001, 0.0], b, b).is_err());
    }

    #[test]
    fn gate_accept_and_block() {
        let mut p = test_params();
        p.alpha_cross = 0.0;
        p.eta_s = 0.1;
        p.eta_v = 0.1;
        p.gamma_smooth = 0.0;
        p.gate_tau0 = 1.0;
        p.gate_tau1 = 0.0;
        let wm = [[1.0, 0.0], [0.0, 1.0]];
        // e = (2,0), candidate (2,0): drop = 2, cost = 0.4 -> accept.
        let out = gate_check([2.0, 0.0], [2.0, 0.0], &wm, &p, 1.0, [0.0; 2]);
        assert!(out.accept);
        assert_abs_diff_eq!(out.risk_drop, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.cost, 0.4, epsilon = 1e-12);
        // tau = 6: 2 < 2.4 -> block.
        p.gate_tau0 = 6.0;
        let out = gate_check([2.0, 0.0], [2.0, 0.0], &wm, &p, 1.0, [0.0; 2]);
        assert!(!out.accept);
        // Zero candidate never accepted (strict inequality).
        p.gate_tau0 = 1.0;
        let out = gate_check([2.0, 0.0], [0.0, 0.0], &wm, &p, 1.0, [0.0; 2]);
        assert!(!out.accept);
    }

    #[test]
    fn qp_reproduces_ridge_tracking() {
        let mut p = test_params();
        p.alpha_cross = 0.0;
        p.gamma_smooth = 0.0;
        p.boxes = Boxes {
            delta_bar: 100.0,
            v_bar: 100.0,
            h_s_bar: 100.0,
            h_v_bar: 100.0,
            rate_s: 100.0,
            rate_v: 100.0,
            cvar_delta: 100.0,
            cvar_v: 100.0,
        };
        let state = ControllerState::new();
        let e = [0.6, -0.4];
        let wm = risk_matrix(&p, 0.0, p.w_vix_base).unwrap();
        let problem = build_step_qp(&state, e, &p, &wm, false);
        let sol = qp::solve(&problem).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x_star[0], 1.0 * 0.6 / 1.05, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x_star[1], 1.0 * -0.4 / 1.05, epsilon = 1e-9);
    }

    #[test]
    fn qp_cooldown_forces_zero_v() {
        let p = test_params();
        let state = ControllerState::new();
        let wm = risk_matrix(&p, 0.0, p.w_vix_base).unwrap();
        let problem = build_step_qp(&state, [0.5, 0.8], &p, &wm, true);
        let sol = qp::solve(&problem).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x_star[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn micro_threshold_rules() {
        let p = test_params();
        let (s_min, _) = p.thresholds(1.0);
        // Below: zeroed. At exactly the threshold: kept (strict inequality).
        assert_eq!(apply_micro_thresholds([s_min / 2.0, 0.1], 1.0, &p)[0], 0.0);
        assert_eq!(apply_micro_thresholds([s_min, 0.1], 1.0, &p)[0], s_min);
        let x = apply_micro_thresholds([0.1, 0.2], 1.0, &p);
        assert_eq!(x, [0.1, 0.2]);
    }

    #[test]
    fn step_inaction_at_origin() {
        let p = test_params();
        let mut state = ControllerState::new();
        let res = controller_step(
            &mut state,
            Targets { delta_star: 0.0, kappa_eff: 0.0 },
            MarketMove { d_spot: 0.0, d_vix: 0.0 },
            &p,
            p.t0_horizon,
            0,
        )
        .unwrap();
        assert_eq!(res.telemetry.decision, Decision::NtbInaction);
        assert_eq!(res.trade, [0.0; 2]);
        assert_eq!(state.h_s, 0.0);
    }

    #[test]
    fn step_trades_toward_targets_with_descent() {
        let p = test_params();
        let mut state = ControllerState::new();
        let res = controller_step(
            &mut state,
            Targets { delta_star: 0.5, kappa_eff: 1.0 },
            MarketMove { d_spot: 0.0, d_vix: 0.0 },
            &p,
            p.t0_horizon,
            0,
        )
        .unwrap();
        assert_eq!(res.telemetry.decision, Decision::Traded);
        assert!(res.telemetry.risk_after < res.telemetry.risk_before);
        // Rate caps respected.
        assert!(res.trade[0].abs() <= p.boxes.rate_s + 1e-12);
        assert!(res.trade[1].abs() <= p.boxes.rate_v + 1e-12);
        assert!(state.h_s > 0.0 && state.h_v > 0.0);
    }

    #[test]
    fn cooldown_spacing_enforced() {
        let p = test_params();
        let mut state = ControllerState::new();
        let mut v_trade_steps = Vec::new();
        for step in 0..20 {
            let res = controller_step(
                &mut state,
                Targets { delta_star: 0.0, kappa_eff: 1.5 },
                MarketMove { d_spot: 0.0, d_vix: 0.0 },
                &p,
                p.t0_horizon,
                step,
            )
            .unwrap();
            if res.trade[1].abs() > 0.0 {
                v_trade_steps.push(step);
            }
        }
        assert!(v_trade_steps.len() >= 2, "expected repeated V trades");
        for w in v_trade_steps.windows(2) {
            assert!(
                w[1] - w[0] >= (p.cooldown_steps + 1) as usize,
                "dwell violated: {v_trade_steps:?}"
            );
        }
    }

    #[test]
    fn weight_monotonicity() {
        let p = test_params();
        // Non-increasing in |rho|.
        let mut prev = f64::INFINITY;
        for i in 0..=10 {
            let rho = i as f64 / 10.0;
            let w_eff = dynamic_vix_weight(&p, 0.3, rho);
            assert!(w_eff <= prev + 1e-15);
            prev = w_eff;
        }
        // Non-decreasing in w.
        let mut prev = 0.0;
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            let w_eff = dynamic_vix_weight(&p, w, 0.7);
            assert!(w_eff >= prev - 1e-15);
            prev = w_eff;
        }
    }
}
