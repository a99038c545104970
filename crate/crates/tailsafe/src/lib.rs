//! Tail-safe SPX-VIX hedging stack.
//!
//! The crate wires together five layers, each usable on its own:
//!
//! 1. [`surface`] — an arbitrage-free SSVI total-variance surface with static
//!    no-arbitrage validation, calendar post-adjustment, ATM-jet extraction,
//!    and a shape-preserving teacher closure.
//! 2. [`vix`] — a Cboe-style 30-day variance index: OTM aggregation, two-zero
//!    wing pruning, half-interval quadrature, minute-weighted interpolation,
//!    plus a teacher-vs-surface coherence diagnostic.
//! 3. [`localvol`] and [`dynamics`] — a clipped Dupire local-variance grid
//!    extracted from teacher call prices, a positivity-preserving log-Euler
//!    spot scheme, a full-truncation CIR variance factor, and the closed-form
//!    map from instantaneous variance to a 30-day index proxy.
//! 4. [`kappa`] and [`controller`] — a bump-and-invert estimate of the
//!    index-to-option-price sensitivity, and the per-step trading controller:
//!    EWMA correlation, dynamic VIX weight, guarded no-trade band,
//!    sufficient-descent gate, a small strictly convex QP ([`qp`]) with
//!    labeled safety boxes, micro-thresholds, and a VIX cooldown.
//! 5. [`risk`], [`verify`], [`harness`] — loss-convention VaR/ES with
//!    bootstrap intervals, the theorem-derived numerical diagnostics
//!    (convergence orders, error-constant tables, invariance audits), and the
//!    batch harness behind the `tailsafe` CLI.
//!
//! The guide under `book/` walks through each layer with runnable examples;
//! its code blocks are compiled as doc-tests (see the hidden `book` module at
//! the bottom of this file).

pub mod controller;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kappa;
pub mod localvol;
pub mod math;
pub mod qp;
pub mod risk;
pub mod rng;
pub mod surface;
pub mod verify;
pub mod vix;
pub mod world;

pub use error::{Error, Result};

// Compile the book's code samples as doc-tests so the guide can never drift
// from the library (`cargo test --doc`).
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/surface.md")]
    mod surface {}
    #[doc = include_str!("../../../book/src/vix.md")]
    mod vix {}
    #[doc = include_str!("../../../book/src/localvol.md")]
    mod localvol {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/kappa.md")]
    mod kappa {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/risk.md")]
    mod risk {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
