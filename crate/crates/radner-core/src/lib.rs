//! Numerical solver and verifier for multi-agent Radner equilibria under
//! proportional transaction costs with targeted (TWAP-style) trading.
//!
//! Agents enter the trading day `[0, T]` with endowments and trading targets
//! and pay a proportional cost `λ` per share traded, plus a quadratic
//! running penalty for deviating from their target schedule. In equilibrium
//! every agent follows a deterministic strategy that trades toward its
//! target until a stop-trade time and then freezes. This crate
//!
//! * constructs the rank-based agent ordering and the stop-trade times by
//!   backward induction ([`ranking`]),
//! * evaluates every equilibrium quantity — price drift, strategies,
//!   first-order-condition processes, initial price — in closed or
//!   quadrature form ([`equilibrium`]),
//! * certifies the solution numerically against the full list of proved
//!   equilibrium properties, including an independent discrete
//!   concave-optimization oracle for agent optimality ([`verification`]),
//! * computes comparative statics in the cost proportion `λ`
//!   ([`statics`]), and
//! * exposes everything through a scenario-file driven command line
//!   ([`cli`], binary `radner`).

// Validation guards throughout the crate use `!(x > 0.0)`-style
// comparisons deliberately: the negated form rejects NaN, which the
// lint's suggested `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
#[cfg(test)]
pub(crate) mod testutil;
pub mod equilibrium;
pub mod error;
pub mod ranking;
pub mod scenario;
pub mod statics;
pub mod trajectory;
pub mod verification;

pub use equilibrium::{EquilibriumSolution, MarketSpec};
pub use error::{Error, Result};
pub use ranking::{AgentSpec, RankOrdering};
pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use statics::{kink_points, lambda_sweep, slope_table, RegimeSlope, SweepResult};
pub use trajectory::{GammaModel, KappaModel, TrajectoryModel};
pub use verification::{
    deviation_oracle, run_all_checks, DiscreteStrategy, OracleOutcome, VerificationReport,
};
