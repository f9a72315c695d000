//! Rank-based agent ordering and stop-trade times by backward induction.
//!
//! Write `a_i = ã_i − θ_{i,0−}` for agent `i`'s relative trading target and
//! `I` for the number of agents. The construction assigns each agent a rank
//! `j ∈ {1, …, I}` — the order in which agents stop trading, latest ranks
//! stop last — together with a stop-trade time `τ⁽ʲ⁾`:
//!
//! * **Base case** (ranks `I−1` and `I`): the pair `(i*, l*)` maximizing
//!   `η = inf{ t : |a_i − a_l|/2 · F(t) ≤ λ }` over ordered pairs stops last,
//!   at the common time `τ⁽ᴵ⁻¹⁾ = τ⁽ᴵ⁾ = η`.
//! * **Induction** (rank `j` from `I−2` down to `1`): among the remaining
//!   agents, rank `j` goes to the maximizer of
//!
//!   ```text
//!   η_i = inf{ t : |(a_i − a_Σ^{≥j+1}/(I−j))·F(t)
//!                   + Σ_{k=j+1}^{I−2} A⁽ᵏ⁾/(I−k) · F(t ∨ τ⁽ᵏ⁾)| ≤ λ }
//!   ```
//!
//!   and `τ⁽ʲ⁾ = max_i η_i ≤ τ⁽ʲ⁺¹⁾`.
//!
//! Here `a_Σ^{≥j}` is the sum of the targets at ranks `j..I` and
//! `A⁽ʲ⁾ = a⁽ʲ⁾ − a_Σ^{≥j}/(I−j+1)` is rank `j`'s deviation from the running
//! average of the still-active targets. For `t ≤ τ⁽ʲ⁺¹⁾` every `F(t ∨ τ⁽ᵏ⁾)`
//! equals the constant `F(τ⁽ᵏ⁾)`, which reduces the inner expression to
//! "coefficient · F(t) + constant" and lets `F`'s inverse resolve the
//! infimum exactly; [`eta_full_expression`] keeps the unreduced form as an
//! independent check.
//!
//! Whenever `τ⁽ʲ⁾ > 0` the product `A⁽ʲ⁾ F(τ⁽ʲ⁾)` equals `c_j λ` for a
//! constant `c_j` that depends only on the signs along the recursion:
//!
//! ```text
//! c_j = (I−j)/(I−j+1) · ( sign A⁽ʲ⁾ − Σ_{k=j+1}^{I−2} c_k/(I−k) )
//! ```
//!
//! with `c_{I−1} = sign A⁽ᴵ⁻¹⁾ = −c_I`. The same recursion run "as if" every
//! rank had `τ > 0` yields a selection rule for the whole permutation that
//! involves neither `λ` nor `(κ, γ)` — implemented in [`fast_rank`] — so the
//! permutation can be computed once and reused across cost sweeps.

use crate::error::{Error, Result};
use crate::trajectory::TrajectoryModel;

/// One agent's primitive data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    /// Trading target ã in shares.
    pub target: f64,
    /// Initial position θ_{0−} in shares.
    pub endowment: f64,
}

impl AgentSpec {
    /// The relative trading target `a = ã − θ_{0−}`.
    pub fn relative_target(&self) -> f64 {
        self.target - self.endowment
    }
}

/// Tolerance scale used by every argmax tie-break: candidates within
/// `1e-10 · (1 + |max|)` of the maximum are deemed tied and the smallest
/// agent index wins. Any deterministic rule is sound because the drift is
/// unaffected by tie resolution; this one makes runs reproducible.
const TIE_TOLERANCE: f64 = 1e-10;

/// The complete output of the backward induction.
///
/// All vectors are indexed by rank: entry `j − 1` belongs to rank `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOrdering {
    /// `perm[j−1]` is the (0-based) input index of the agent at rank `j`.
    pub perm: Vec<usize>,
    /// Relative targets in rank order, `a⁽ʲ⁾`.
    pub a_rank: Vec<f64>,
    /// Deviations from the running average, `A⁽ʲ⁾ = a⁽ʲ⁾ − a_Σ^{≥j}/(I−j+1)`.
    pub a_cap: Vec<f64>,
    /// Suffix sums `a_Σ^{≥j} = a⁽ʲ⁾ + … + a⁽ᴵ⁾`.
    pub a_sigma_geq: Vec<f64>,
    /// Stop-trade times `τ⁽ʲ⁾`, nondecreasing with `τ⁽ᴵ⁻¹⁾ = τ⁽ᴵ⁾`.
    pub tau: Vec<f64>,
    /// Cost-free constants with `A⁽ʲ⁾F(τ⁽ʲ⁾) = c_j λ`; `None` for ranks that
    /// never trade (`τ⁽ʲ⁾ = 0`), where the constant is not defined.
    pub c: Vec<Option<f64>>,
}

impl RankOrdering {
    /// Number of agents `I`.
    pub fn agent_count(&self) -> usize {
        self.perm.len()
    }

    /// The 1-based rank held by the (0-based) input agent `agent`.
    pub fn rank_of_agent(&self, agent: usize) -> Option<usize> {
        self.perm.iter().position(|&p| p == agent).map(|r| r + 1)
    }

    /// Number of ranks that never trade (`τ = 0`); these are always the
    /// lowest ranks `1..=dead_count`.
    pub fn dead_count(&self) -> usize {
        self.tau.iter().filter(|&&t| t == 0.0).count()
    }
}

fn validate_agents(agents: &[AgentSpec]) -> Result<Vec<f64>> {
    if agents.len() < 2 {
        return Err(Error::Spec(format!(
            "need at least 2 agents, got {}",
            agents.len()
        )));
    }
    let mut a = Vec::with_capacity(agents.len());
    for (i, agent) in agents.iter().enumerate() {
        if !agent.target.is_finite() || !agent.endowment.is_finite() {
            return Err(Error::Spec(format!(
                "agent {i} has a non-finite target or endowment"
            )));
        }
        // Normalize -0.0 so downstream sign logic and deduplication treat
        // all zero targets identically.
        a.push(agent.relative_target() + 0.0);
    }
    Ok(a)
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Spec(format!(
            "the cost proportion must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Base-case stopping time for the pair `(a_i, a_l)`:
/// `inf{ t : |a_i − a_l|/2 · F(t) ≤ λ }`.
pub fn eta_base(a_i: f64, a_l: f64, lambda: f64, model: &TrajectoryModel) -> Result<f64> {
    validate_lambda(lambda)?;
    let coeff = (a_i - a_l).abs() / 2.0;
    if coeff == 0.0 {
        return Ok(0.0);
    }
    model.invert_f(lambda / coeff)
}

/// Selects the base pair `(i*, l*)` maximizing [`eta_base`] over ordered
/// pairs and returns it with the common stop-trade time.
///
/// Ties within `1e-10·(1+|τ|)` are broken toward the pair with the largest
/// gap `|a_i − a_l|`, then lexicographically. The gap tie-break matters when
/// the stopping times clamp at zero (costs high enough that nobody trades):
/// there every pair reports `η = 0`, but only the widest pair keeps the
/// constructed drift inside every agent's no-trade band, and it is the
/// selection the positive-η regime converges to as λ falls.
pub fn base_case(
    agents: &[AgentSpec],
    lambda: f64,
    model: &TrajectoryModel,
) -> Result<(usize, usize, f64)> {
    let a = validate_agents(agents)?;
    validate_lambda(lambda)?;
    let count = a.len();
    let mut eta_max = f64::NEG_INFINITY;
    for i in 0..count {
        for l in 0..count {
            if i == l {
                continue;
            }
            let eta = eta_base(a[i], a[l], lambda, model)?;
            if eta > eta_max {
                eta_max = eta;
            }
        }
    }
    let tol = TIE_TOLERANCE * (1.0 + eta_max.abs());
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for i in 0..count {
        for l in 0..count {
            if i == l {
                continue;
            }
            let eta = eta_base(a[i], a[l], lambda, model)?;
            if eta < eta_max - tol {
                continue;
            }
            let gap = (a[i] - a[l]).abs();
            if best.is_none_or(|(_, _, _, best_gap)| gap > best_gap) {
                best = Some((i, l, eta, gap));
            }
        }
    }
    let (i, l, eta, _) = best.expect("the maximizing pair is always revisited");
    Ok((i, l, eta))
}

/// One induction-step stopping time in the reduced (constant-tail) form.
///
/// `a_sigma_tail` is `a_Σ^{≥j+1}` and `tail_const` is
/// `Σ_{k=j+1}^{I−2} A⁽ᵏ⁾/(I−k) · F(τ⁽ᵏ⁾)`, which is valid as a constant for
/// `t ≤ t_cap = τ⁽ʲ⁺¹⁾`. The result is clamped to `t_cap`: in exact
/// arithmetic every candidate's stopping time is at most `τ⁽ʲ⁺¹⁾`, and the
/// clamp both absorbs floating-point spill and keeps the reduction valid
/// when later ranks never trade (then `t_cap = 0` forces `η = 0`).
#[allow(clippy::too_many_arguments)]
pub fn eta_step(
    a_i: f64,
    j: usize,
    i_total: usize,
    a_sigma_tail: f64,
    tail_const: f64,
    lambda: f64,
    model: &TrajectoryModel,
    t_cap: f64,
) -> Result<f64> {
    validate_lambda(lambda)?;
    if j == 0 || j + 2 > i_total {
        return Err(Error::Domain(format!(
            "induction rank {j} is outside 1..=I-2 for I = {i_total}"
        )));
    }
    if !(tail_const.abs() < lambda) {
        return Err(Error::Internal(format!(
            "tail constant {tail_const} must be smaller than lambda = {lambda} in magnitude; \
             the backward induction produced out-of-bound first-order terms"
        )));
    }
    let remaining = (i_total - j) as f64;
    let b = a_i - a_sigma_tail / remaining;
    let eta_hat = if b == 0.0 {
        0.0
    } else if b > 0.0 {
        if b * model.f0() + tail_const > lambda {
            model.invert_f((lambda - tail_const) / b)?
        } else {
            0.0
        }
    } else if b * model.f0() + tail_const < -lambda {
        model.invert_f((lambda + tail_const) / (-b))?
    } else {
        0.0
    };
    Ok(eta_hat.min(t_cap).max(0.0))
}

/// The unreduced induction-step expression
///
/// ```text
/// (I−j+1)/(I−j) · (a_i − (a_i + a_Σ^{≥j+1})/(I−j+1)) · F(t)
///   + Σ_{k=j+1}^{I−2} A⁽ᵏ⁾/(I−k) · F(t ∨ τ⁽ᵏ⁾)
/// ```
///
/// evaluated literally, with `suffix_a_cap[k − j − 1] = A⁽ᵏ⁾` and
/// `suffix_tau[k − j − 1] = τ⁽ᵏ⁾` for `k = j+1, …, I−2`. Its first crossing
/// of the band `[−λ, λ]` is what [`eta_step`] computes in reduced form, so
/// sampling this expression provides an independent brute-force check.
// Mirrors the formula's full parameter list on purpose; bundling the
// arguments into a struct would only obscure the correspondence.
#[allow(clippy::too_many_arguments)]
pub fn eta_full_expression(
    a_i: f64,
    j: usize,
    i_total: usize,
    a_sigma_tail: f64,
    suffix_a_cap: &[f64],
    suffix_tau: &[f64],
    model: &TrajectoryModel,
    t: f64,
) -> Result<f64> {
    if j == 0 || j + 2 > i_total {
        return Err(Error::Domain(format!(
            "induction rank {j} is outside 1..=I-2 for I = {i_total}"
        )));
    }
    let expected = i_total - 2 - j;
    if suffix_a_cap.len() != expected || suffix_tau.len() != expected {
        return Err(Error::Domain(format!(
            "expected {expected} resolved ranks after rank {j}, got {} and {}",
            suffix_a_cap.len(),
            suffix_tau.len()
        )));
    }
    let remaining = (i_total - j) as f64;
    let lead =
        (remaining + 1.0) / remaining * (a_i - (a_i + a_sigma_tail) / (remaining + 1.0));
    let mut value = lead * model.capital_f(t)?;
    for (offset, (&a_cap_k, &tau_k)) in suffix_a_cap.iter().zip(suffix_tau).enumerate() {
        let k = j + 1 + offset;
        value += a_cap_k / (i_total - k) as f64 * model.capital_f(t.max(tau_k))?;
    }
    Ok(value)
}

/// Runs the full backward induction and returns the complete ordering.
///
/// The constant tail entering each [`eta_step`] is assembled from the
/// `c_k` recursion (exact rational multiples of `λ`) rather than from
/// accumulated `F` evaluations, suppressing floating-point drift; the
/// `F`-based value is still computed in debug builds as a cross-check.
pub fn build_ordering(
    agents: &[AgentSpec],
    lambda: f64,
    model: &TrajectoryModel,
) -> Result<RankOrdering> {
    let a = validate_agents(agents)?;
    let (i_star, l_star, tau_base) = base_case(agents, lambda, model)?;
    build_with_selector(&a, lambda, model, tau_base, i_star, l_star, None)
}

/// Re-runs the induction with the agent at every rank dictated by `perm`
/// (same layout as [`RankOrdering::perm`]) instead of chosen by argmax.
///
/// Used for cost sweeps, which fix the permutation once, and for tie
/// experiments, which permute tied agents and compare the resulting drift.
pub fn solve_with_permutation(
    agents: &[AgentSpec],
    lambda: f64,
    model: &TrajectoryModel,
    perm: &[usize],
) -> Result<RankOrdering> {
    let a = validate_agents(agents)?;
    validate_lambda(lambda)?;
    let count = a.len();
    if perm.len() != count {
        return Err(Error::Spec(format!(
            "permutation length {} does not match agent count {count}",
            perm.len()
        )));
    }
    let mut seen = vec![false; count];
    for &p in perm {
        if p >= count || seen[p] {
            return Err(Error::Spec(
                "rank assignment is not a permutation of the agents".to_string(),
            ));
        }
        seen[p] = true;
    }
    let i_star = perm[count - 2];
    let l_star = perm[count - 1];
    let tau_base = eta_base(a[i_star], a[l_star], lambda, model)?;
    build_with_selector(&a, lambda, model, tau_base, i_star, l_star, Some(perm))
}

/// Shared induction engine: when `forced` is `None` each rank is chosen by
/// argmax with the deterministic tie-break, otherwise ranks follow `forced`.
fn build_with_selector(
    a: &[f64],
    lambda: f64,
    model: &TrajectoryModel,
    tau_base: f64,
    i_star: usize,
    l_star: usize,
    forced: Option<&[usize]>,
) -> Result<RankOrdering> {
    let count = a.len();
    let mut perm = vec![usize::MAX; count];
    let mut a_rank = vec![0.0; count];
    let mut a_cap = vec![0.0; count];
    let mut a_sigma_geq = vec![0.0; count];
    let mut tau = vec![0.0; count];
    let mut c: Vec<Option<f64>> = vec![None; count];

    // Base case: ranks I−1 and I.
    perm[count - 2] = i_star;
    perm[count - 1] = l_star;
    a_rank[count - 2] = a[i_star];
    a_rank[count - 1] = a[l_star];
    a_sigma_geq[count - 1] = a[l_star];
    a_sigma_geq[count - 2] = a[i_star] + a[l_star];
    a_cap[count - 2] = (a[i_star] - a[l_star]) / 2.0;
    a_cap[count - 1] = -a_cap[count - 2];
    tau[count - 2] = tau_base;
    tau[count - 1] = tau_base;
    if tau_base > 0.0 {
        let s = sign(a_cap[count - 2]);
        if s == 0.0 {
            return Err(Error::Internal(
                "base pair stops at a positive time with zero target spread".to_string(),
            ));
        }
        c[count - 2] = Some(s);
        c[count - 1] = Some(-s);
    }

    let mut remaining: Vec<usize> = (0..count).filter(|&i| i != i_star && i != l_star).collect();

    // Induction: ranks I−2 down to 1.
    for j in (1..count.saturating_sub(1)).rev() {
        let t_cap = tau[j]; // τ⁽ʲ⁺¹⁾: index j holds rank j+1.
        let a_sigma_tail = a_sigma_geq[j];

        let forced_pos = match forced {
            Some(perm_forced) => Some(
                remaining
                    .iter()
                    .position(|&r| r == perm_forced[j - 1])
                    .ok_or_else(|| {
                        Error::Internal("forced rank repeats an agent".to_string())
                    })?,
            ),
            None => None,
        };

        // Once the cap is zero every stopping time is zero, so the tail —
        // which would now contain time-dependent terms from dead ranks — is
        // never needed; the lexicographically smallest agent is selected
        // (`remaining` stays sorted ascending).
        let (chosen_pos, eta_chosen) = if t_cap <= 0.0 {
            (forced_pos.unwrap_or(0), 0.0)
        } else {
            // Σ_{k=j+1}^{I−2} A⁽ᵏ⁾F(τ⁽ᵏ⁾)/(I−k); every such rank has
            // τ⁽ᵏ⁾ ≥ τ⁽ʲ⁺¹⁾ > 0 here, so the c-form is exact.
            let mut tail = 0.0;
            for k in (j + 1)..count.saturating_sub(1) {
                let c_k = c[k - 1].ok_or_else(|| {
                    Error::Internal(format!(
                        "rank {k} stops after rank {} yet lacks a c constant",
                        j + 1
                    ))
                })?;
                tail += c_k * lambda / (count - k) as f64;
            }
            #[cfg(debug_assertions)]
            {
                let mut tail_f = 0.0;
                for k in (j + 1)..count.saturating_sub(1) {
                    tail_f += a_cap[k - 1] / (count - k) as f64
                        * model.capital_f(tau[k - 1])?;
                }
                debug_assert!(
                    (tail_f - tail).abs() <= 1e-9 * (1.0 + lambda),
                    "c-based tail {tail} and F-based tail {tail_f} disagree"
                );
            }
            if let Some(pos) = forced_pos {
                let agent = remaining[pos];
                let eta = eta_step(
                    a[agent], j, count, a_sigma_tail, tail, lambda, model, t_cap,
                )?;
                (pos, eta)
            } else {
                let mut etas = Vec::with_capacity(remaining.len());
                let mut eta_max = f64::NEG_INFINITY;
                for &i in &remaining {
                    let eta = eta_step(
                        a[i], j, count, a_sigma_tail, tail, lambda, model, t_cap,
                    )?;
                    if eta > eta_max {
                        eta_max = eta;
                    }
                    etas.push(eta);
                }
                let tol = TIE_TOLERANCE * (1.0 + eta_max.abs());
                let mut pos = 0;
                let mut best_agent = usize::MAX;
                for (p, (&i, &eta)) in remaining.iter().zip(&etas).enumerate() {
                    if eta >= eta_max - tol && i < best_agent {
                        best_agent = i;
                        pos = p;
                    }
                }
                (pos, etas[pos])
            }
        };

        let agent = remaining.remove(chosen_pos);
        let keep = (count - j) as f64; // I − j agents stay active after rank j stops
        perm[j - 1] = agent;
        a_rank[j - 1] = a[agent];
        a_sigma_geq[j - 1] = a[agent] + a_sigma_geq[j];
        a_cap[j - 1] = a[agent] - a_sigma_geq[j - 1] / (keep + 1.0);
        tau[j - 1] = eta_chosen;
        if eta_chosen > 0.0 {
            let s = sign(a_cap[j - 1]);
            if s == 0.0 {
                return Err(Error::Internal(format!(
                    "rank {j} stops at a positive time with zero average deviation"
                )));
            }
            let mut c_sum = 0.0;
            for k in (j + 1)..count.saturating_sub(1) {
                c_sum += c[k - 1].ok_or_else(|| {
                    Error::Internal(format!("missing c constant at rank {k}"))
                })? / (count - k) as f64;
            }
            c[j - 1] = Some(keep / (keep + 1.0) * (s - c_sum));
        }
    }

    Ok(RankOrdering {
        perm,
        a_rank,
        a_cap,
        a_sigma_geq,
        tau,
        c,
    })
}

/// The permutation together with the per-rank selection scores used by the
/// cost-free ranking rule; `scores[j−1]` belongs to rank `j`. A rank trades
/// at cost proportion `λ` exactly when `score · F(0) > λ`, so the scores
/// also hand comparative statics the activation thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct FastRank {
    pub perm: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Cost-free ranking rule: reproduces the [`build_ordering`] permutation for
/// every `(λ, κ, γ)` up to tie classes, using only the relative targets.
///
/// At each step the rule maximizes
///
/// ```text
/// s_i = (b_i)⁺ / (1 − c̄)  +  (b_i)⁻ / (1 + c̄),
///       b_i = a_i − a_Σ^{≥j+1}/(I−j),   c̄ = Σ_{k=j+1}^{I−2} c_k/(I−k)
/// ```
///
/// with the `c_k` recursion run as if every rank stopped at a positive
/// time. When every rank does trade, `F(η_i) = λ/s_i`, so maximizing the
/// score maximizes the stopping time; when some do not, any of them may
/// take the next rank without affecting the drift, and the score-maximal
/// one is a valid choice for every `λ` simultaneously.
pub fn fast_rank(a_values: &[f64]) -> Result<Vec<usize>> {
    fast_rank_detailed(a_values).map(|f| f.perm)
}

/// As [`fast_rank`], also returning the selection scores.
pub fn fast_rank_detailed(a_values: &[f64]) -> Result<FastRank> {
    let count = a_values.len();
    if count < 2 {
        return Err(Error::Spec(format!("need at least 2 agents, got {count}")));
    }
    let a: Vec<f64> = a_values
        .iter()
        .map(|v| {
            if v.is_finite() {
                Ok(*v + 0.0)
            } else {
                Err(Error::Spec("non-finite relative target".to_string()))
            }
        })
        .collect::<Result<_>>()?;

    let mut perm = vec![usize::MAX; count];
    let mut scores = vec![0.0; count];

    // Base pair: maximize |a_i − a_l| over ordered pairs, lexicographic
    // tie-break — the same tie class as maximizing the base stopping time.
    let mut coeff_max = f64::NEG_INFINITY;
    for i in 0..count {
        for l in 0..count {
            if i != l {
                coeff_max = coeff_max.max((a[i] - a[l]).abs() / 2.0);
            }
        }
    }
    let tol = TIE_TOLERANCE * (1.0 + coeff_max);
    let (mut i_star, mut l_star) = (usize::MAX, usize::MAX);
    'outer: for i in 0..count {
        for l in 0..count {
            if i != l && (a[i] - a[l]).abs() / 2.0 >= coeff_max - tol {
                (i_star, l_star) = (i, l);
                break 'outer;
            }
        }
    }
    perm[count - 2] = i_star;
    perm[count - 1] = l_star;
    scores[count - 2] = (a[i_star] - a[l_star]).abs() / 2.0;
    scores[count - 1] = scores[count - 2];

    let mut remaining: Vec<usize> = (0..count).filter(|&i| i != i_star && i != l_star).collect();
    let mut a_sigma = a[i_star] + a[l_star]; // a_Σ^{≥j+1} while assigning rank j
    let mut c_bar = 0.0f64; // Σ_{k=j+1}^{I−2} c_k/(I−k), all ranks treated as active

    for j in (1..count.saturating_sub(1)).rev() {
        let keep = (count - j) as f64;
        debug_assert!(c_bar.abs() < 1.0, "score denominators stay positive");
        let mut s_max = f64::NEG_INFINITY;
        let mut s_of: Vec<f64> = Vec::with_capacity(remaining.len());
        for &i in &remaining {
            let b = a[i] - a_sigma / keep;
            let s = if b > 0.0 {
                b / (1.0 - c_bar)
            } else if b < 0.0 {
                -b / (1.0 + c_bar)
            } else {
                0.0
            };
            s_max = s_max.max(s);
            s_of.push(s);
        }
        let tol = TIE_TOLERANCE * (1.0 + s_max);
        let mut pos = 0;
        let mut best_agent = usize::MAX;
        for (p, (&i, &s)) in remaining.iter().zip(&s_of).enumerate() {
            if s >= s_max - tol && i < best_agent {
                best_agent = i;
                pos = p;
            }
        }
        let agent = remaining.remove(pos);
        perm[j - 1] = agent;
        scores[j - 1] = s_of[pos];
        let a_cap_j = a[agent] - (a[agent] + a_sigma) / (keep + 1.0);
        let c_j = keep / (keep + 1.0) * (sign(a_cap_j) - c_bar);
        c_bar += c_j / keep;
        a_sigma += a[agent];
    }

    Ok(FastRank { perm, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{GammaModel, KappaModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model() -> TrajectoryModel {
        TrajectoryModel::new(1.0, KappaModel::Constant(0.1), GammaModel::Twap).unwrap()
    }

    fn agents_from(a: &[f64]) -> Vec<AgentSpec> {
        a.iter()
            .map(|&target| AgentSpec {
                target,
                endowment: 0.0,
            })
            .collect()
    }

    use crate::testutil::DEMO_TARGETS;

    #[test]
    fn eta_base_matches_closed_form() {
        let m = model();
        assert_abs_diff_eq!(eta_base(5.0, 5.0, 0.3, &m).unwrap(), 0.0, epsilon = 0.0);
        // 0.05 (1−t)² = 0.2/295
        let expected = 1.0 - (0.2_f64 / 295.0 / 0.05).sqrt();
        assert_abs_diff_eq!(
            eta_base(-300.0, 290.0, 0.2, &m).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            eta_base(1.0, -1.0, 0.0125, &m).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn base_case_picks_extreme_pair() {
        let m = model();
        let demo = agents_from(&DEMO_TARGETS);
        let (i, l, tau) = base_case(&demo, 0.2, &m).unwrap();
        assert_eq!((i, l), (0, 19));
        assert!(tau > 0.88 && tau < 0.89);

        let equal = agents_from(&[4.0, 4.0, 4.0]);
        let (i, l, tau) = base_case(&equal, 0.1, &m).unwrap();
        assert_eq!((i, l, tau), (0, 1, 0.0));

        let three = agents_from(&[-1.0, 0.0, 1.0]);
        let (i, l, tau) = base_case(&three, 0.0125, &m).unwrap();
        assert_eq!((i, l), (0, 2));
        assert_abs_diff_eq!(tau, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn eta_step_zero_coefficient_is_zero() {
        let m = model();
        let eta = eta_step(0.0, 1, 3, 0.0, 0.0, 0.05, &m, 0.5).unwrap();
        assert_eq!(eta, 0.0);
    }

    #[test]
    fn eta_step_rejects_oversized_tail() {
        let m = model();
        assert!(matches!(
            eta_step(1.0, 1, 4, 0.0, 0.06, 0.05, &m, 0.5),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn eta_step_agrees_with_brute_force_full_expression() {
        // Four agents: base case resolves ranks 3 and 4, then rank 2 is a
        // genuine induction step with an empty (I−2 < k) … here I = 4 so
        // k ranges over {3}? No: k ∈ {j+1, …, I−2} = {} for j = 2. Rank 1
        // then sees a singleton tail. Use I = 5 to exercise a real tail.
        let m = model();
        let lambda = 0.01;
        let agents = agents_from(&[-2.0, -1.0, 0.4, 1.0, 2.0]);
        let ordering = build_ordering(&agents, lambda, &m).unwrap();
        let count = 5usize;
        // Re-derive each induction rank's stopping time by bracketing the
        // first entry of the unreduced expression into [−λ, λ] on a grid and
        // bisecting the bracket down to floating-point resolution.
        for j in (1..=count - 2).rev() {
            let a_i = ordering.a_rank[j - 1];
            let a_sigma_tail = ordering.a_sigma_geq[j];
            let suffix_a_cap: Vec<f64> = ((j + 1)..=(count - 2))
                .map(|k| ordering.a_cap[k - 1])
                .collect();
            let suffix_tau: Vec<f64> = ((j + 1)..=(count - 2))
                .map(|k| ordering.tau[k - 1])
                .collect();
            let eval = |t: f64| {
                eta_full_expression(
                    a_i,
                    j,
                    count,
                    a_sigma_tail,
                    &suffix_a_cap,
                    &suffix_tau,
                    &m,
                    t,
                )
                .unwrap()
                .abs()
            };
            let n = 100_000;
            let mut brute = 0.0;
            if eval(0.0) > lambda {
                let mut hi = 1.0;
                for step in 1..=n {
                    let t = step as f64 / n as f64;
                    if eval(t) <= lambda {
                        hi = t;
                        break;
                    }
                }
                let mut lo = hi - 1.0 / n as f64;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if eval(mid) <= lambda {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                brute = hi;
            }
            assert!(
                (brute - ordering.tau[j - 1]).abs() <= 1e-6,
                "rank {j}: brute-force {brute} vs constructed {}",
                ordering.tau[j - 1]
            );
        }
    }

    #[test]
    fn full_expression_vanishes_at_horizon() {
        let m = model();
        let v = eta_full_expression(3.0, 1, 4, -1.0, &[0.5], &[0.3], &m, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn three_agent_antisymmetric_ordering() {
        let m = model();
        let ordering = build_ordering(&agents_from(&[-1.0, 0.0, 1.0]), 0.0125, &m).unwrap();
        assert_eq!(ordering.perm, vec![1, 0, 2]);
        assert_eq!(ordering.tau[0], 0.0);
        assert_abs_diff_eq!(ordering.tau[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ordering.tau[2], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ordering.a_cap[0], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(ordering.a_cap[1], -1.0, epsilon = 0.0);
        assert_abs_diff_eq!(ordering.a_cap[2], 1.0, epsilon = 0.0);
        assert_eq!(ordering.c[0], None);
        assert_eq!(ordering.c[1], Some(-1.0));
        assert_eq!(ordering.c[2], Some(1.0));
    }

    #[test]
    fn all_equal_targets_never_trade() {
        let m = model();
        let ordering = build_ordering(&agents_from(&[7.0; 4]), 0.05, &m).unwrap();
        assert!(ordering.tau.iter().all(|&t| t == 0.0));
        assert!(ordering.c.iter().all(|c| c.is_none()));
        assert_eq!(ordering.dead_count(), 4);
    }

    #[test]
    fn demo_scenario_ordering() {
        let m = model();
        let demo = agents_from(&DEMO_TARGETS);
        let ordering = build_ordering(&demo, 0.2, &m).unwrap();
        // Extreme targets hold the top ranks.
        assert_eq!(ordering.perm[18], 0);
        assert_eq!(ordering.perm[19], 19);
        assert_eq!(ordering.tau[18], ordering.tau[19]);
        // The zero-target agent (input index 9) never trades.
        let rank_9 = ordering.rank_of_agent(9).unwrap();
        assert_eq!(ordering.tau[rank_9 - 1], 0.0);
        // Stop-trade times are ordered.
        for w in ordering.tau.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // Every trading rank satisfies A⁽ʲ⁾F(τ⁽ʲ⁾) = c_j λ.
        for j in 1..=20usize {
            if ordering.tau[j - 1] > 0.0 {
                let lhs = ordering.a_cap[j - 1] * m.capital_f(ordering.tau[j - 1]).unwrap();
                let c_j = ordering.c[j - 1].unwrap();
                assert!(
                    (lhs - c_j * 0.2).abs() <= 1e-9 * 0.2,
                    "rank {j}: AF(τ) = {lhs} vs cλ = {}",
                    c_j * 0.2
                );
            }
        }
    }

    #[test]
    fn base_pair_c_is_sign_and_second_step_is_two_thirds() {
        let m = model();
        // Two agents: only the base case runs.
        let two = build_ordering(&agents_from(&[1.0, -1.0]), 0.025, &m).unwrap();
        assert_eq!(two.c[0], Some(1.0));
        assert_eq!(two.c[1], Some(-1.0));
        assert_abs_diff_eq!(two.tau[0], 1.0 - 0.5_f64.sqrt(), epsilon = 1e-12);
        // First induction step: c = ±2/3 whenever that rank trades.
        let four = build_ordering(&agents_from(&[-2.0, -1.0, 1.0, 2.0]), 1e-4, &m).unwrap();
        let c2 = four.c[1].unwrap();
        assert_abs_diff_eq!(c2.abs(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn fast_rank_matches_build_ordering_on_demo() {
        let m = model();
        let demo = agents_from(&DEMO_TARGETS);
        let fast = fast_rank(&DEMO_TARGETS).unwrap();
        for lambda in [0.1, 0.2] {
            let built = build_ordering(&demo, lambda, &m).unwrap();
            assert_eq!(fast, built.perm, "lambda = {lambda}");
        }
    }

    #[test]
    fn fast_rank_middle_agent_first() {
        let fast = fast_rank(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(fast, vec![1, 0, 2]);
        let equal = fast_rank(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(equal, vec![2, 0, 1]);
    }

    #[test]
    fn forced_permutation_reproduces_build() {
        let m = model();
        let demo = agents_from(&DEMO_TARGETS);
        let built = build_ordering(&demo, 0.2, &m).unwrap();
        let forced = solve_with_permutation(&demo, 0.2, &m, &built.perm).unwrap();
        assert_eq!(built, forced);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// λ-invariance and scaling invariance of the permutation, plus the
        /// stop-time ordering, on random target vectors.
        #[test]
        fn ordering_invariants_random(
            targets in proptest::collection::vec(-300.0..300.0f64, 2..9),
            lambda_log in -3.0..0.0f64,
            scale in 0.1..10.0f64,
        ) {
            let m = model();
            let lambda = 10f64.powf(lambda_log);
            let agents = agents_from(&targets);
            let ordering = build_ordering(&agents, lambda, &m).unwrap();
            for w in ordering.tau.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            let count = targets.len();
            prop_assert_eq!(ordering.tau[count - 2], ordering.tau[count - 1]);
            prop_assert!(ordering.tau[count - 1] < 1.0);
            // A⁽ᴵ⁾ = −A⁽ᴵ⁻¹⁾ exactly.
            prop_assert_eq!(ordering.a_cap[count - 1], -ordering.a_cap[count - 2]);
            // Suffix sums and deviations are mutually consistent.
            for j in 1..count {
                let diff = ordering.a_sigma_geq[j - 1]
                    - (ordering.a_rank[j - 1] + if j < count { ordering.a_sigma_geq[j] } else { 0.0 });
                prop_assert!(diff.abs() <= 1e-9);
            }
            // c-products match A F(τ).
            for j in 1..=count {
                if ordering.tau[j - 1] > 0.0 {
                    let lhs = ordering.a_cap[j - 1] * m.capital_f(ordering.tau[j - 1]).unwrap();
                    let c_j = ordering.c[j - 1].unwrap();
                    prop_assert!((lhs - c_j * lambda).abs() <= 1e-9 * lambda);
                } else {
                    prop_assert!(ordering.c[j - 1].is_none());
                }
            }
            // The permutation does not depend on λ (up to tie classes, which
            // the deterministic tie-break resolves identically when the tie
            // classes coincide; dead ranks are compared as sets).
            let other = build_ordering(&agents, lambda * 3.7, &m).unwrap();
            let dead_a = ordering.dead_count();
            let dead_b = other.dead_count();
            let alive_cut = dead_a.max(dead_b);
            prop_assert_eq!(&ordering.perm[alive_cut..], &other.perm[alive_cut..]);
            // Positive rescaling of the targets keeps the permutation.
            let scaled: Vec<f64> = targets.iter().map(|t| t * scale).collect();
            let scaled_rank = fast_rank(&scaled).unwrap();
            let base_rank = fast_rank(&targets).unwrap();
            prop_assert_eq!(scaled_rank, base_rank);
        }
    }
}
