//! Equilibrium assembly: price drift, optimal holdings, and first-order
//! processes built on top of a [`RankOrdering`].
//!
//! Between consecutive stop-trade times the equilibrium price drift is an
//! explicit function of the trajectory data. With ranks `1..=I` ordered by
//! stop-trade time and `τ⁽⁰⁾ = 0`, the drift on the *regime* `j` — the
//! interval `[τ⁽ʲ⁾, τ⁽ʲ⁺¹⁾)` for `j < I−2`, and `[τ⁽ᴵ⁻²⁾, T]` for the last
//! regime `j = I−2` — is
//!
//! ```text
//! μ_t = −κ(t) · ( γ(t) P_j + Q_j ),
//! P_j = a_Σ^{≥j+1} / (I−j),
//! Q_j = Q_{j−1} + γ(τ⁽ʲ⁾) A⁽ʲ⁾ / (I−j),   Q_0 = 0.
//! ```
//!
//! The times `τ⁽ᴵ⁻¹⁾ = τ⁽ᴵ⁾` of the final pair are not regime boundaries:
//! the same constants carry the drift through to the horizon. `μ/κ` is
//! continuous across boundaries and vanishes at `t = 0`.
//!
//! Rank `j`'s optimal holding tracks the frictionless target while active
//! and freezes at its stop-trade time:
//!
//! ```text
//! θ⁽ʲ⁾_t = θ_{j,0−} + μ_s/κ(s) + γ(s) a⁽ʲ⁾,   s = min(t, τ⁽ʲ⁾).
//! ```
//!
//! The first-order condition is carried by the processes
//! `Γ⁽ʲ⁾_t = A⁽ʲ⁾ G(t ∨ τ⁽ʲ⁾, τ⁽ʲ⁾)` and
//!
//! ```text
//! Y⁽ʲ⁾_t = (I−j+1)/(I−j) · Γ⁽ʲ⁾_t + Σ_{k=j+1}^{I−2} Γ⁽ᵏ⁾_t / (I−k)
//! ```
//!
//! (for `j ≤ I−2`; `Y⁽ᴵ⁻¹⁾ = Γ⁽ᴵ⁻¹⁾` and `Y⁽ᴵ⁾ = Γ⁽ᴵ⁾`). Optimality of the
//! stated holdings is equivalent to `|Y⁽ʲ⁾| ≤ λ` everywhere together with
//! `Y⁽ʲ⁾ = sign(A⁽ʲ⁾) λ` while rank `j` still trades.
//!
//! The initial price aggregates the drift over the horizon:
//! `S₀ = E[D] − ∫₀ᵀ μ_u du`, which the stop-time structure collapses to
//!
//! ```text
//! S₀ = E[D] + (a_Σ^{≥1}/I) ∫₀ᵀ κγ du − Σ_{j=1}^{I−2} A⁽ʲ⁾F(τ⁽ʲ⁾) / (I−j),
//! ```
//!
//! where `A⁽ʲ⁾F(τ⁽ʲ⁾) = c_j λ` for every trading rank.

use crate::error::{Error, Result};
use crate::ranking::{self, AgentSpec, RankOrdering};
use crate::trajectory::TrajectoryModel;

/// Market-level inputs: the agent roster plus the scalar market data.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    /// Agents in input order.
    pub agents: Vec<AgentSpec>,
    /// Proportional transaction cost λ.
    pub lambda: f64,
    /// Outstanding supply of the asset, `n`.
    pub supply: f64,
    /// Expected terminal dividend `E[D]`.
    pub dividend_mean: f64,
}

impl MarketSpec {
    /// Checks the scalar fields and the agent roster for well-formedness.
    pub fn validate(&self) -> Result<()> {
        if self.agents.len() < 2 {
            return Err(Error::Spec(format!(
                "need at least 2 agents, got {}",
                self.agents.len()
            )));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if !agent.target.is_finite() || !agent.endowment.is_finite() {
                return Err(Error::Spec(format!(
                    "agent {i} has a non-finite target or endowment"
                )));
            }
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::Spec(format!(
                "the cost proportion must be positive and finite, got {}",
                self.lambda
            )));
        }
        if !self.supply.is_finite() {
            return Err(Error::Spec("the supply must be finite".to_string()));
        }
        if !self.dividend_mean.is_finite() {
            return Err(Error::Spec(
                "the expected dividend must be finite".to_string(),
            ));
        }
        Ok(())
    }

    /// The same market at a different cost proportion.
    pub fn with_lambda(&self, lambda: f64) -> MarketSpec {
        MarketSpec {
            lambda,
            ..self.clone()
        }
    }

    /// `Σ_i θ_{i,0−} − n`: zero when initial positions add up to the supply.
    pub fn endowment_gap(&self) -> f64 {
        self.agents.iter().map(|a| a.endowment).sum::<f64>() - self.supply
    }

    /// Relative trading targets in input order.
    pub fn relative_targets(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.relative_target()).collect()
    }
}

/// A solved equilibrium: the rank ordering plus every constant needed to
/// evaluate drift, holdings, and first-order processes in O(1) per query.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    spec: MarketSpec,
    model: TrajectoryModel,
    ordering: RankOrdering,
    s0: f64,
    /// Distinct stop-trade times in the open interval `(0, T)`.
    breakpoints: Vec<f64>,
    /// Regime boundaries `τ⁽¹⁾, …, τ⁽ᴵ⁻²⁾` (possibly with repeats).
    regime_taus: Vec<f64>,
    /// `P_j` for regimes `j = 0, …, I−2`.
    p_const: Vec<f64>,
    /// `Q_j` for regimes `j = 0, …, I−2`.
    q_const: Vec<f64>,
}

impl EquilibriumSolution {
    /// Solves the market: runs the backward induction and assembles the
    /// regime constants and the initial price.
    pub fn solve(spec: MarketSpec, model: &TrajectoryModel) -> Result<Self> {
        spec.validate()?;
        let ordering = ranking::build_ordering(&spec.agents, spec.lambda, model)?;
        Self::with_ordering(spec, model, ordering)
    }

    /// Assembles the equilibrium quantities for an externally supplied
    /// ordering — from a forced permutation or a cost sweep.
    pub fn with_ordering(
        spec: MarketSpec,
        model: &TrajectoryModel,
        ordering: RankOrdering,
    ) -> Result<Self> {
        spec.validate()?;
        let count = spec.agents.len();
        if ordering.agent_count() != count {
            return Err(Error::Spec(format!(
                "ordering covers {} agents but the market has {count}",
                ordering.agent_count()
            )));
        }

        let horizon = model.horizon();
        let regime_taus: Vec<f64> = ordering.tau[..count - 2].to_vec();
        let mut breakpoints: Vec<f64> = ordering
            .tau
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < horizon)
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * horizon.max(1.0));

        let mut p_const = Vec::with_capacity(count - 1);
        let mut q_const = Vec::with_capacity(count - 1);
        let mut q = 0.0;
        for j in 0..=(count - 2) {
            if j >= 1 {
                q += model.gamma_at(ordering.tau[j - 1]) * ordering.a_cap[j - 1]
                    / (count - j) as f64;
            }
            p_const.push(ordering.a_sigma_geq[j] / (count - j) as f64);
            q_const.push(q);
        }

        // S₀ = E[D] + (a_Σ^{≥1}/I)∫₀ᵀκγ − Σ_j w_j/(I−j) with w_j = A⁽ʲ⁾F(τ⁽ʲ⁾),
        // taken in the exact form c_j λ whenever rank j trades.
        let mut correction = 0.0;
        for j in 1..=count - 2 {
            let w = match ordering.c[j - 1] {
                Some(c_j) => c_j * spec.lambda,
                None => ordering.a_cap[j - 1] * model.f0(),
            };
            correction += w / (count - j) as f64;
        }
        let s0 = spec.dividend_mean
            + ordering.a_sigma_geq[0] / count as f64 * model.integral_kappa_gamma(0.0, horizon)
            - correction;

        Ok(EquilibriumSolution {
            spec,
            model: model.clone(),
            ordering,
            s0,
            breakpoints,
            regime_taus,
            p_const,
            q_const,
        })
    }

    /// The market this equilibrium solves.
    pub fn spec(&self) -> &MarketSpec {
        &self.spec
    }

    /// The trajectory data the equilibrium was built on.
    pub fn model(&self) -> &TrajectoryModel {
        &self.model
    }

    /// The rank ordering with stop-trade times and constants.
    pub fn ordering(&self) -> &RankOrdering {
        &self.ordering
    }

    /// The equilibrium initial price `S₀`.
    pub fn initial_price(&self) -> f64 {
        self.s0
    }

    /// Distinct stop-trade times inside `(0, T)`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Per-regime drift constants `(P_j, Q_j)` with `μ_t/κ(t) = −(γ(t)P_j + Q_j)`.
    pub fn regime_constants(&self) -> (&[f64], &[f64]) {
        (&self.p_const, &self.q_const)
    }

    /// Regime boundaries: the stop-trade times `τ⁽¹⁾, …, τ⁽ᴵ⁻²⁾` (with
    /// repetitions), so regime `j` is active on `[τ⁽ʲ⁾, τ⁽ʲ⁺¹⁾)`.
    pub fn regime_boundaries(&self) -> &[f64] {
        &self.regime_taus
    }

    /// Number of agents.
    pub fn agent_count(&self) -> usize {
        self.ordering.agent_count()
    }

    /// The regime index `j(t) = #{ k ≤ I−2 : τ⁽ᵏ⁾ ≤ t }`; regimes switch
    /// exactly at their left endpoint.
    pub fn regime_index(&self, t: f64) -> usize {
        self.regime_taus.partition_point(|&tau| tau <= t)
    }

    /// `μ_t / κ(t)`, the drift normalized by the urgency weight.
    pub fn mu_over_kappa(&self, t: f64) -> Result<f64> {
        let t = self.model.check_time("t", t)?;
        let j = self.regime_index(t);
        Ok(-(self.model.gamma_at(t) * self.p_const[j] + self.q_const[j]))
    }

    /// The equilibrium price drift `μ_t`.
    pub fn drift(&self, t: f64) -> Result<f64> {
        Ok(self.model.kappa_at(t) * self.mu_over_kappa(t)?)
    }

    /// `∫_t^T μ_u du`, accumulated regime by regime with the exact segment
    /// integrals of `κ` and `κγ`.
    pub fn drift_integral(&self, t: f64) -> Result<f64> {
        let mut lo = self.model.check_time("t", t)?;
        let horizon = self.model.horizon();
        let mut j = self.regime_index(lo);
        let mut acc = 0.0;
        while lo < horizon {
            let hi = if j < self.regime_taus.len() {
                self.regime_taus[j].min(horizon)
            } else {
                horizon
            };
            if hi > lo {
                acc -= self.p_const[j] * self.model.integral_kappa_gamma(lo, hi)
                    + self.q_const[j] * self.model.integral_kappa(lo, hi);
                lo = hi;
            }
            if j >= self.regime_taus.len() {
                break;
            }
            j += 1;
        }
        Ok(acc)
    }

    /// Rank `j`'s optimal holding `θ⁽ʲ⁾_t` (ranks are 1-based).
    pub fn strategy(&self, rank: usize, t: f64) -> Result<f64> {
        let idx = self.rank_index(rank)?;
        let t = self.model.check_time("t", t)?;
        let s = t.min(self.ordering.tau[idx]);
        let endowment = self.spec.agents[self.ordering.perm[idx]].endowment;
        Ok(endowment
            + self.mu_over_kappa(s)?
            + self.model.gamma_at(s) * self.ordering.a_rank[idx])
    }

    /// Rank `j`'s process `Γ⁽ʲ⁾_t = A⁽ʲ⁾ G(t ∨ τ⁽ʲ⁾, τ⁽ʲ⁾)`.
    pub fn gamma_process(&self, rank: usize, t: f64) -> Result<f64> {
        let idx = self.rank_index(rank)?;
        let t = self.model.check_time("t", t)?;
        let tau = self.ordering.tau[idx];
        Ok(self.ordering.a_cap[idx] * self.model.kernel_g(t.max(tau), tau)?)
    }

    /// Rank `j`'s first-order process `Y⁽ʲ⁾_t`.
    pub fn foc_process(&self, rank: usize, t: f64) -> Result<f64> {
        let idx = self.rank_index(rank)?;
        let count = self.agent_count();
        if idx >= count - 2 {
            return self.gamma_process(rank, t);
        }
        let j = rank;
        let m = (count - j) as f64;
        let mut y = (m + 1.0) / m * self.gamma_process(rank, t)?;
        for k in (j + 1)..=(count - 2) {
            y += self.gamma_process(k, t)? / (count - k) as f64;
        }
        Ok(y)
    }

    /// All `Y⁽ʲ⁾_t` at one time, in rank order, sharing the suffix sums
    /// (O(I) total rather than O(I²)).
    pub fn foc_all(&self, t: f64) -> Result<Vec<f64>> {
        let count = self.agent_count();
        let gammas: Vec<f64> = (1..=count)
            .map(|rank| self.gamma_process(rank, t))
            .collect::<Result<_>>()?;
        let mut y = vec![0.0; count];
        y[count - 1] = gammas[count - 1];
        y[count - 2] = gammas[count - 2];
        let mut suffix = 0.0;
        for j in (1..=count - 2).rev() {
            let m = (count - j) as f64;
            y[j - 1] = (m + 1.0) / m * gammas[j - 1] + suffix;
            suffix += gammas[j - 1] / m;
        }
        Ok(y)
    }

    /// A time grid of `n` evenly spaced points joined with every breakpoint,
    /// sorted and deduplicated; endpoints `0` and `T` are always present.
    pub fn evaluation_grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let horizon = self.model.horizon();
        let mut grid: Vec<f64> = (0..n)
            .map(|i| {
                if i == n - 1 {
                    horizon
                } else {
                    i as f64 * horizon / (n - 1) as f64
                }
            })
            .collect();
        grid.extend(self.breakpoints.iter().copied());
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * horizon.max(1.0));
        grid
    }

    /// Test hook: shifts the final pair's stop-trade time by `delta` without
    /// recomputing anything else, deliberately breaking the equilibrium so
    /// downstream checks must notice. Never part of a real solve.
    pub fn inject_tau_fault(&mut self, delta: f64) {
        let count = self.agent_count();
        let horizon = self.model.horizon();
        for idx in [count - 2, count - 1] {
            self.ordering.tau[idx] = (self.ordering.tau[idx] + delta).clamp(0.0, horizon);
        }
        let mut breakpoints: Vec<f64> = self
            .ordering
            .tau
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < horizon)
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * horizon.max(1.0));
        self.breakpoints = breakpoints;
    }

    fn rank_index(&self, rank: usize) -> Result<usize> {
        let count = self.agent_count();
        if rank == 0 || rank > count {
            return Err(Error::Domain(format!(
                "rank {rank} is outside 1..={count}"
            )));
        }
        Ok(rank - 1)
    }
}
