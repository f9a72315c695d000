//! Comparative statics in the cost proportion λ.
//!
//! Three facts drive this module:
//!
//! * the rank ordering depends only on the targets, never on λ, so a sweep
//!   solves every λ under one fixed permutation (the [`fast_rank`] order);
//! * `λ ↦ S₀(λ)` is piecewise linear, with kinks exactly where some rank's
//!   stop-trade time hits zero — i.e. where the set of ranks that trade at
//!   all changes;
//! * within each drift regime, `d/dt[μ_t/κ(t)] = −γ′(t)·a_Σ^{≥j+1}/(I−j)`
//!   does not involve λ, so the per-regime slope table is invariant across
//!   the sweep.
//!
//! [`lambda_sweep`] records the curve, [`kink_points`] locates and refines
//! the activation changes by bisection, and [`slope_table`] extracts the
//! per-regime drift slopes.
//!
//! [`fast_rank`]: crate::ranking::fast_rank

use crate::equilibrium::{EquilibriumSolution, MarketSpec};
use crate::error::{Error, Result};
use crate::ranking::{fast_rank, solve_with_permutation};
use crate::trajectory::{GammaModel, TrajectoryModel};

/// Bisection width for refined kink locations.
const KINK_RESOLUTION: f64 = 1e-8;

/// The record of one λ sweep: per-λ equilibrium summaries under a single
/// canonical rank permutation.
#[derive(Debug, Clone)]
pub struct SweepResult {
    spec: MarketSpec,
    model: TrajectoryModel,
    /// The λ grid, strictly increasing and positive.
    pub lambdas: Vec<f64>,
    /// Equilibrium initial price per λ.
    pub s0: Vec<f64>,
    /// Stop-trade times `τ⁽¹⁾ ≤ … ≤ τ⁽ᴵ⁾` per λ.
    pub taus: Vec<Vec<f64>>,
    /// Boundary-contact constants `c_j` per λ (`None` for ranks that never
    /// trade).
    pub c: Vec<Vec<Option<f64>>>,
    /// Distinct rank permutations seen, in order of first appearance.
    pub permutations: Vec<Vec<usize>>,
    /// Index into `permutations` per λ.
    pub perm_ids: Vec<usize>,
    /// Number of ranks with `τ⁽ʲ⁾ > 0` (ranks that trade for a positive
    /// amount of time) per λ.
    pub active_counts: Vec<usize>,
}

impl SweepResult {
    /// Number of λ grid points.
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    /// Whether the sweep is empty (it never is after a successful
    /// [`lambda_sweep`]).
    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// The market this sweep varied.
    pub fn spec(&self) -> &MarketSpec {
        &self.spec
    }

    /// The trajectory data this sweep used.
    pub fn model(&self) -> &TrajectoryModel {
        &self.model
    }
}

/// Solves the market at every λ in `lambda_values` and collects the curve.
///
/// The rank permutation is computed once from the targets and reused across
/// the sweep; each λ only re-solves the stop-trade times and contact
/// constants under that fixed order. As a guard, every grid point is also
/// solved from scratch by the full backward induction, and the two routes
/// must agree on the price and the stop-time profile.
pub fn lambda_sweep(
    spec: &MarketSpec,
    model: &TrajectoryModel,
    lambda_values: &[f64],
) -> Result<SweepResult> {
    spec.validate()?;
    if lambda_values.is_empty() {
        return Err(Error::Spec("λ sweep needs at least one value".to_string()));
    }
    for (k, &lambda) in lambda_values.iter().enumerate() {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Spec(format!(
                "λ values must be positive and finite, got {lambda} at index {k}"
            )));
        }
        if k > 0 && lambda <= lambda_values[k - 1] {
            return Err(Error::Spec(format!(
                "λ values must be strictly increasing, got {lambda} after {} at index {k}",
                lambda_values[k - 1]
            )));
        }
    }

    let canonical = fast_rank(&spec.relative_targets())?;
    let count = spec.agents.len();
    let mut result = SweepResult {
        spec: spec.clone(),
        model: model.clone(),
        lambdas: lambda_values.to_vec(),
        s0: Vec::with_capacity(lambda_values.len()),
        taus: Vec::with_capacity(lambda_values.len()),
        c: Vec::with_capacity(lambda_values.len()),
        permutations: vec![canonical.clone()],
        perm_ids: Vec::with_capacity(lambda_values.len()),
        active_counts: Vec::with_capacity(lambda_values.len()),
    };

    for &lambda in lambda_values {
        let point = spec.with_lambda(lambda);
        let ordering = solve_with_permutation(&point.agents, lambda, model, &canonical)?;
        let solution = EquilibriumSolution::with_ordering(point.clone(), model, ordering)?;

        // Cross-route guard: the full induction must reproduce the same
        // equilibrium (stop times and price) at this λ. The permutations may
        // differ inside tie classes and the never-trading block, but the
        // equilibrium quantities may not.
        let built = EquilibriumSolution::solve(point, model)?;
        let scale = 1.0
            + built.initial_price().abs()
            + spec
                .relative_targets()
                .iter()
                .fold(0.0f64, |acc, a| acc.max(a.abs()));
        let price_mismatch = (solution.initial_price() - built.initial_price()).abs();
        let tau_mismatch = solution
            .ordering()
            .tau
            .iter()
            .zip(&built.ordering().tau)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        if price_mismatch > 1e-9 * scale || tau_mismatch > 1e-9 * (1.0 + model.horizon()) {
            return Err(Error::Internal(format!(
                "sweep ordering disagrees with full induction at λ={lambda}: \
                 price off by {price_mismatch:.3e}, stop times off by {tau_mismatch:.3e}"
            )));
        }

        let ordering = solution.ordering();
        result.s0.push(solution.initial_price());
        result.taus.push(ordering.tau.clone());
        result.c.push(ordering.c.clone());
        result
            .active_counts
            .push(ordering.tau.iter().filter(|&&t| t > 0.0).count());
        result.perm_ids.push(0);
        debug_assert_eq!(ordering.perm.len(), count);
    }
    Ok(result)
}

/// λ values where the set of ranks with positive stop-trade time changes,
/// refined by bisection to width `1e−8`.
///
/// Stop-trade times are nonincreasing in λ, so the active set only sheds
/// ranks as λ grows and each activation change is a single crossing. Kinks
/// are located between adjacent grid points whose active counts differ; if
/// one grid interval hides several crossings, they are peeled off in
/// increasing order.
pub fn kink_points(sweep: &SweepResult) -> Result<Vec<f64>> {
    if sweep.len() < 3 {
        return Err(Error::Spec(format!(
            "kink detection needs a sweep with at least 3 points, got {}",
            sweep.len()
        )));
    }
    let canonical = &sweep.permutations[0];
    let count_at = |lambda: f64| -> Result<usize> {
        let ordering =
            solve_with_permutation(&sweep.spec.agents, lambda, &sweep.model, canonical)?;
        Ok(ordering.tau.iter().filter(|&&t| t > 0.0).count())
    };

    let mut kinks = Vec::new();
    for i in 0..sweep.len() - 1 {
        let hi = sweep.lambdas[i + 1];
        let count_hi = sweep.active_counts[i + 1];
        let mut lo = sweep.lambdas[i];
        let mut count_lo = sweep.active_counts[i];
        // Active counts shrink as λ grows, so at most I crossings exist in
        // any interval.
        let mut rounds = sweep.taus[i].len() + 1;
        while count_lo != count_hi && rounds > 0 {
            rounds -= 1;
            let (mut a, mut b) = (lo, hi);
            while b - a > KINK_RESOLUTION {
                let mid = 0.5 * (a + b);
                if count_at(mid)? == count_lo {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            kinks.push(0.5 * (a + b));
            lo = b;
            count_lo = count_at(b)?;
        }
    }
    Ok(kinks)
}

/// One drift regime: the interval `[start, end)` between consecutive
/// stop-trade times and the constant value of `d/dt[μ_t/κ(t)]` on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSlope {
    /// Regime start (a stop-trade time, or 0 for the first regime).
    pub start: f64,
    /// Regime end (the next stop-trade time, or the horizon for the last).
    pub end: f64,
    /// `d/dt[μ_t/κ(t)] = −γ′·a_Σ^{≥j+1}/(I−j)` on the regime.
    pub slope: f64,
}

/// Per-regime slopes of `μ/κ` for a solved market.
///
/// Only differentiable trading targets admit the slope formula; tabulated
/// targets are piecewise linear and rejected. Degenerate regimes (equal
/// consecutive stop times) are kept so that tables from different λ line up
/// regime-by-regime.
pub fn slope_table(solution: &EquilibriumSolution) -> Result<Vec<RegimeSlope>> {
    let model = solution.model();
    match model.gamma() {
        GammaModel::Twap => {}
        GammaModel::Table(_) => {
            return Err(Error::Unsupported(
                "slope table requires a differentiable trading target; \
                 a tabulated target is only piecewise linear"
                    .to_string(),
            ));
        }
    }
    let horizon = model.horizon();
    let (p_const, _) = solution.regime_constants();
    let boundaries = solution.regime_boundaries();
    let table = p_const
        .iter()
        .enumerate()
        .map(|(j, &p)| RegimeSlope {
            start: if j == 0 { 0.0 } else { boundaries[j - 1] },
            end: if j == p_const.len() - 1 {
                horizon
            } else {
                boundaries[j]
            },
            slope: -p / horizon,
        })
        .collect();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::AgentSpec;
    use crate::testutil::DEMO_TARGETS;
    use crate::trajectory::KappaModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model() -> TrajectoryModel {
        TrajectoryModel::new(1.0, KappaModel::Constant(0.1), GammaModel::Twap).unwrap()
    }

    fn market(targets: &[f64], lambda: f64) -> MarketSpec {
        MarketSpec {
            agents: targets
                .iter()
                .map(|&target| AgentSpec {
                    target,
                    endowment: 0.0,
                })
                .collect(),
            lambda,
            supply: 0.0,
            dividend_mean: 0.0,
        }
    }

    fn uniform_lambdas(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        (1..=steps)
            .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
            .collect()
    }

    #[test]
    fn symmetric_market_price_never_moves() {
        let spec = market(&[-1.0, 0.0, 1.0], 0.0125);
        let grid = uniform_lambdas(0.0, 0.2, 40);
        let sweep = lambda_sweep(&spec, &model(), &grid).unwrap();
        for &s0 in &sweep.s0 {
            assert_eq!(s0, 0.0);
        }
        // One kink: above λ* = F(0)·1 = 0.05 nobody trades.
        let kinks = kink_points(&sweep).unwrap();
        assert_eq!(kinks.len(), 1);
        assert_abs_diff_eq!(kinks[0], 0.05, epsilon = 1e-7);
    }

    #[test]
    fn single_point_sweep_matches_direct_solve() {
        let spec = market(&DEMO_TARGETS, 0.2);
        let m = model();
        let sweep = lambda_sweep(&spec, &m, &[0.2]).unwrap();
        let direct = EquilibriumSolution::solve(spec, &m).unwrap();
        assert_abs_diff_eq!(sweep.s0[0], direct.initial_price(), epsilon = 1e-12);
        assert_eq!(sweep.perm_ids, vec![0]);
        assert_eq!(sweep.permutations.len(), 1);
    }

    #[test]
    fn demo_curve_is_piecewise_linear_between_kinks() {
        let spec = market(&DEMO_TARGETS, 0.2);
        let grid = uniform_lambdas(0.0, 2.0, 200);
        let sweep = lambda_sweep(&spec, &model(), &grid).unwrap();
        let kinks = kink_points(&sweep).unwrap();
        assert!(!kinks.is_empty());
        // At most I − 1 activation changes are possible.
        assert!(kinks.len() < DEMO_TARGETS.len());
        let scale = 1.0 + sweep.s0.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
        for i in 1..sweep.len() - 1 {
            let window = (sweep.lambdas[i - 1], sweep.lambdas[i + 1]);
            if kinks.iter().any(|&k| k > window.0 && k < window.1) {
                continue;
            }
            let second_diff = sweep.s0[i - 1] - 2.0 * sweep.s0[i] + sweep.s0[i + 1];
            assert!(
                second_diff.abs() <= 1e-9 * scale,
                "curvature {second_diff:.3e} at λ={}",
                sweep.lambdas[i]
            );
        }
    }

    #[test]
    fn stop_times_shrink_as_costs_grow() {
        let spec = market(&DEMO_TARGETS, 0.2);
        let grid = uniform_lambdas(0.0, 2.0, 100);
        let sweep = lambda_sweep(&spec, &model(), &grid).unwrap();
        for i in 1..sweep.len() {
            for (rank_idx, (&now, &before)) in
                sweep.taus[i].iter().zip(&sweep.taus[i - 1]).enumerate()
            {
                assert!(
                    now <= before + 1e-12,
                    "τ⁽{}⁾ grew from {before} to {now} between λ={} and λ={}",
                    rank_idx + 1,
                    sweep.lambdas[i - 1],
                    sweep.lambdas[i]
                );
            }
            assert!(sweep.active_counts[i] <= sweep.active_counts[i - 1]);
        }
    }

    #[test]
    fn all_equal_targets_have_no_kinks() {
        let spec = market(&[5.0; 4], 0.1);
        let sweep = lambda_sweep(&spec, &model(), &uniform_lambdas(0.0, 1.0, 10)).unwrap();
        assert!(kink_points(&sweep).unwrap().is_empty());
        assert!(sweep.active_counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn demo_slope_table_is_lambda_invariant() {
        let m = model();
        let low = EquilibriumSolution::solve(market(&DEMO_TARGETS, 0.1), &m).unwrap();
        let high = EquilibriumSolution::solve(market(&DEMO_TARGETS, 0.2), &m).unwrap();
        let table_low = slope_table(&low).unwrap();
        let table_high = slope_table(&high).unwrap();
        assert_eq!(table_low.len(), DEMO_TARGETS.len() - 1);
        assert_eq!(table_low.len(), table_high.len());
        for (a, b) in table_low.iter().zip(&table_high) {
            assert_abs_diff_eq!(a.slope, b.slope, epsilon = 1e-10);
        }
        // The final regime: d/dt[μ/κ] = −a_Σ^{≥I−1}/(2T) = 5.
        assert_abs_diff_eq!(table_low.last().unwrap().slope, 5.0, epsilon = 1e-12);
        assert_eq!(table_low.last().unwrap().end, 1.0);
    }

    #[test]
    fn symmetric_market_has_flat_drift_regimes() {
        let m = model();
        let sol = EquilibriumSolution::solve(market(&[-1.0, 0.0, 1.0], 0.0125), &m).unwrap();
        for regime in slope_table(&sol).unwrap() {
            assert_eq!(regime.slope, 0.0);
        }
    }

    #[test]
    fn tabulated_target_is_rejected() {
        let m = TrajectoryModel::new(
            1.0,
            KappaModel::Constant(0.1),
            GammaModel::Table(vec![0.0, 0.6, 1.0]),
        )
        .unwrap();
        let sol = EquilibriumSolution::solve(market(&[-1.0, 1.0], 0.01), &m).unwrap();
        assert!(matches!(slope_table(&sol), Err(Error::Unsupported(_))));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let spec = market(&[-1.0, 1.0], 0.1);
        let m = model();
        assert!(matches!(
            lambda_sweep(&spec, &m, &[]),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            lambda_sweep(&spec, &m, &[0.0, 0.1]),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            lambda_sweep(&spec, &m, &[0.2, 0.1]),
            Err(Error::Spec(_))
        ));
        let two_points = lambda_sweep(&spec, &m, &[0.1, 0.2]).unwrap();
        assert!(matches!(kink_points(&two_points), Err(Error::Spec(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_sweeps_are_monotone_and_consistent(
            targets in proptest::collection::vec(-300.0..300.0f64, 2..8),
            lo_log in -3.0..-1.0f64,
            steps in 3usize..12,
        ) {
            let spec = market(&targets, 0.1);
            let lo = 10f64.powf(lo_log);
            let grid: Vec<f64> = (0..steps).map(|i| lo * 1.7f64.powi(i as i32)).collect();
            let sweep = lambda_sweep(&spec, &model(), &grid).unwrap();
            for i in 1..sweep.len() {
                prop_assert!(sweep.active_counts[i] <= sweep.active_counts[i - 1]);
                for (now, before) in sweep.taus[i].iter().zip(&sweep.taus[i - 1]) {
                    prop_assert!(*now <= before + 1e-12);
                }
            }
            for s0 in &sweep.s0 {
                prop_assert!(s0.is_finite());
            }
        }
    }
}
