//! Acceptance gate: every release-blocking property, one test per
//! criterion, each printing a single `ACCEPTANCE <n> PASS|FAIL` line
//! (visible with `cargo test --test acceptance -- --nocapture`).

// `ensure!` expands to `if !(<condition>)`, which on float comparisons is
// deliberate: a NaN anywhere must fail the criterion, and the lint's
// suggested direct comparison would let it pass.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use radner_core::ranking::{fast_rank, solve_with_permutation};
use radner_core::{
    deviation_oracle, kink_points, lambda_sweep, load_scenario, run_all_checks, slope_table,
    AgentSpec, EquilibriumSolution, GammaModel, KappaModel, MarketSpec, TrajectoryModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

/// Fails the surrounding criterion with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn criterion(number: usize, name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("ACCEPTANCE {number} PASS ({name})"),
        Err(message) => {
            println!("ACCEPTANCE {number} FAIL ({name}): {message}");
            panic!("acceptance criterion {number} ({name}): {message}");
        }
    }
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn twap_model(horizon: f64, kappa: f64) -> TrajectoryModel {
    TrajectoryModel::new(horizon, KappaModel::Constant(kappa), GammaModel::Twap)
        .expect("constant/TWAP model is well-formed")
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

fn section3() -> (MarketSpec, TrajectoryModel) {
    let scenario =
        load_scenario(&scenario_path("section3.json")).expect("bundled scenario parses");
    (scenario.spec, scenario.model)
}

/// Criterion 1 — the 20-agent reference market: rank placement of the
/// extreme agents, the never-trading median agent, ordering consistency,
/// non-monotone drift, and monotone strategies.
#[test]
fn criterion_1_reference_market_reproduction() {
    criterion(1, "reference market reproduction", || {
        let (spec, model) = section3();
        let solution =
            EquilibriumSolution::solve(spec.clone(), &model).map_err(fail)?;
        let ordering = solution.ordering();
        let count = solution.agent_count();
        ensure!(count == 20, "expected 20 agents, got {count}");

        // (a) The two extreme agents fill the final pair of ranks and stop
        // trading at the same time.
        let rank_first = ordering.rank_of_agent(0).expect("agent 1 is ranked");
        let rank_last = ordering.rank_of_agent(19).expect("agent 20 is ranked");
        let (low, high) = (rank_first.min(rank_last), rank_first.max(rank_last));
        ensure!(
            (low, high) == (count - 1, count),
            "agents 1 and 20 hold ranks {rank_first} and {rank_last}, expected the final pair"
        );
        ensure!(
            ordering.tau[count - 2] == ordering.tau[count - 1],
            "final-pair stop times differ: {} vs {}",
            ordering.tau[count - 2],
            ordering.tau[count - 1]
        );

        // (b) Agent 10 (zero target) never trades: flat at its endowment.
        let rank_10 = ordering.rank_of_agent(9).expect("agent 10 is ranked");
        ensure!(
            ordering.tau[rank_10 - 1] == 0.0,
            "agent 10 has stop time {}, expected 0",
            ordering.tau[rank_10 - 1]
        );
        let grid = solution.evaluation_grid(2001);
        for &t in &grid {
            let theta = solution.strategy(rank_10, t).map_err(fail)?;
            ensure!(
                theta.abs() <= 1e-15,
                "agent 10 moved to {theta} at t = {t}"
            );
        }

        // (c) Stop times are ordered by rank and the induction agrees with
        // the direct score-based ranking.
        for j in 1..count {
            ensure!(
                ordering.tau[j - 1] <= ordering.tau[j],
                "stop times decrease between ranks {j} and {}",
                j + 1
            );
        }
        let scores_perm = fast_rank(&spec.relative_targets()).map_err(fail)?;
        ensure!(
            scores_perm == ordering.perm,
            "score ranking {scores_perm:?} disagrees with induction {:?}",
            ordering.perm
        );

        // (d) The drift changes slope direction at least once.
        let mu: Vec<f64> = grid
            .iter()
            .map(|&t| solution.drift(t))
            .collect::<Result<_, _>>()
            .map_err(fail)?;
        let scale = mu.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let tol = 1e-12 * (1.0 + scale);
        let mut rising = false;
        let mut falling = false;
        for pair in mu.windows(2) {
            let step = pair[1] - pair[0];
            rising |= step > tol;
            falling |= step < -tol;
        }
        ensure!(
            rising && falling,
            "drift slope never changes sign (rising={rising}, falling={falling})"
        );

        // (e) The spot-checked strategies move monotonically toward their
        // targets.
        for agent in [5usize, 7, 10, 11, 13] {
            let rank = ordering.rank_of_agent(agent).expect("agent is ranked");
            let direction = spec.agents[agent].target.signum();
            let mut previous = solution.strategy(rank, grid[0]).map_err(fail)?;
            for &t in &grid[1..] {
                let current = solution.strategy(rank, t).map_err(fail)?;
                ensure!(
                    direction * (current - previous) >= -1e-10,
                    "agent {} strategy reverses at t = {t}",
                    agent + 1
                );
                previous = current;
            }
        }
        Ok(())
    });
}

/// Criterion 2 — the seven structural invariants hold on 200 randomized
/// markets with zero failures.
#[test]
fn criterion_2_randomized_invariant_suite() {
    criterion(2, "randomized invariant suite", || {
        const INVARIANTS: [&str; 7] = [
            "tau_ordering",
            "y_bound",
            "market_clearing",
            "mu_kappa_continuity",
            "y_representation",
            "reflection",
            "ck_identity",
        ];
        let model = twap_model(1.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_2026);
        for case in 0..200 {
            let count = rng.gen_range(2..=12usize);
            let targets: Vec<f64> = (0..count).map(|_| rng.gen_range(-300.0..300.0)).collect();
            let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
            let spec = market(&targets, lambda);
            let solution = EquilibriumSolution::solve(spec, &model)
                .map_err(|e| format!("case {case} (λ={lambda:.6}): solve failed: {e}"))?;
            let report = run_all_checks(&solution, 401)
                .map_err(|e| format!("case {case}: verification errored: {e}"))?;
            for name in INVARIANTS {
                let check = report
                    .check(name)
                    .ok_or_else(|| format!("check {name} missing from report"))?;
                ensure!(
                    check.passed,
                    "case {case} (I={count}, λ={lambda:.6}): {name} violated by {:.3e} (threshold {:.3e})",
                    check.max_violation,
                    check.threshold
                );
            }
        }
        Ok(())
    });
}

/// Criterion 3 — closed-form cross-checks: the two-agent stop time
/// `F(τ) = λ/|A|` and the first induction coefficient `c = ±2/3`.
#[test]
fn criterion_3_closed_form_cross_checks() {
    criterion(3, "closed-form cross-checks", || {
        // Two agents under constant κ: F(τ) = λ/|A| with |A| = |a₁ − a₂|/2,
        // so τ = max(0, T − √(2Tλ / (κ|a₁ − a₂|/2))).
        let cases = [
            // (horizon, κ, targets, λ)
            (1.0, 0.1, [1.0, -1.0], 0.025),
            (1.0, 0.1, [3.0, -5.0], 0.1),
            (2.0, 0.3, [1.0, -1.0], 0.03),
            (1.0, 0.1, [0.4, -0.6], 0.05), // deep in the no-trade region
            (1.0, 0.1, [10.0, 2.0], 0.2),  // exactly at the no-trade boundary
        ];
        for (horizon, kappa, targets, lambda) in cases {
            let model = twap_model(horizon, kappa);
            let solution =
                EquilibriumSolution::solve(market(&targets, lambda), &model).map_err(fail)?;
            let half_gap = (targets[0] - targets[1]).abs() / 2.0;
            let expected =
                (horizon - (2.0 * horizon * lambda / (kappa * half_gap)).sqrt()).max(0.0);
            for (rank, &tau) in solution.ordering().tau.iter().enumerate() {
                ensure!(
                    (tau - expected).abs() <= 1e-10,
                    "τ for rank {} is {tau}, closed form gives {expected} \
                     (T={horizon}, κ={kappa}, λ={lambda})",
                    rank + 1
                );
            }
        }

        // Three agents: the first induction step always yields c₁ = ±2/3
        // when the rank-1 agent trades at all.
        for (targets, expected) in [
            ([-2.0, 0.5, 2.0], 2.0 / 3.0),
            ([-2.0, -0.5, 2.0], -2.0 / 3.0),
        ] {
            let model = twap_model(1.0, 0.1);
            let solution =
                EquilibriumSolution::solve(market(&targets, 0.01), &model).map_err(fail)?;
            let ordering = solution.ordering();
            ensure!(
                ordering.tau[0] > 0.0,
                "rank 1 unexpectedly never trades (τ = {})",
                ordering.tau[0]
            );
            let c1 = ordering.c[0].ok_or("c₁ undefined although rank 1 trades")?;
            ensure!(
                (c1 - expected).abs() <= 1e-12,
                "c₁ = {c1}, expected {expected}"
            );
            for j in [1, 2] {
                let c = ordering.c[j].ok_or("final-pair c undefined")?;
                ensure!(c.abs() == 1.0, "final-pair |c| = {}, expected 1", c.abs());
            }
        }
        Ok(())
    });
}

/// Criterion 4 — the coordinate-ascent oracle confirms each candidate
/// strategy: small max-norm deviation at N = 400 and an objective gap that
/// halves (±20%) as N doubles, unless the gap is already at round-off.
#[test]
fn criterion_4_optimality_oracle() {
    criterion(4, "optimality oracle", || {
        let started = Instant::now();
        let model = twap_model(1.0, 0.1);
        let scenarios = [
            (vec![1.0, -1.0], 0.025),
            (vec![-2.0, 0.5, 2.0], 0.01),
        ];
        for (targets, lambda) in scenarios {
            let solution =
                EquilibriumSolution::solve(market(&targets, lambda), &model).map_err(fail)?;
            for rank in 1..=solution.agent_count() {
                let o200 = deviation_oracle(&solution, rank, 200, 1e-12).map_err(fail)?;
                let o400 = deviation_oracle(&solution, rank, 400, 1e-12).map_err(fail)?;
                let o800 = deviation_oracle(&solution, rank, 800, 1e-12).map_err(fail)?;
                ensure!(
                    o400.max_norm_deviation <= 2.0 / 400.0,
                    "rank {rank}: oracle strategy deviates by {} at N = 400",
                    o400.max_norm_deviation
                );
                // The candidate is exactly optimal for the discretized
                // problem (the sampled path satisfies the discrete
                // first-order conditions), so gaps sit at round-off rather
                // than shrinking like a truncation error. "Halving" is then
                // vacuous; only a gap clearly above round-off must halve.
                let floor = |o: &radner_core::OracleOutcome| {
                    1e-12 * (1.0 + o.candidate_objective.abs())
                };
                let at_roundoff = o200.gap.abs() <= floor(&o200)
                    && o400.gap.abs() <= floor(&o400)
                    && o800.gap.abs() <= floor(&o800);
                if !at_roundoff {
                    for (coarse, fine) in [(&o200, &o400), (&o400, &o800)] {
                        let ratio = fine.gap / coarse.gap;
                        ensure!(
                            (0.4..=0.6).contains(&ratio),
                            "rank {rank}: gap ratio {ratio} outside [0.4, 0.6] \
                             ({} → {})",
                            coarse.gap,
                            fine.gap
                        );
                    }
                }
            }
        }
        let elapsed = started.elapsed();
        ensure!(
            elapsed.as_secs_f64() <= 30.0,
            "oracle runs took {elapsed:?}, budget is 30 s"
        );
        Ok(())
    });
}

/// Criterion 5 — comparative statics: S₀(λ) is piecewise linear between
/// detected kinks, drift slopes are λ-invariant, and the rank permutation
/// never changes across the sweep.
#[test]
fn criterion_5_comparative_statics() {
    criterion(5, "comparative statics", || {
        let (spec, model) = section3();
        let lambdas: Vec<f64> = (1..=200)
            .map(|i| if i == 200 { 2.0 } else { 2.0 * i as f64 / 200.0 })
            .collect();
        let sweep = lambda_sweep(&spec, &model, &lambdas).map_err(fail)?;
        let kinks = kink_points(&sweep).map_err(fail)?;

        let scale = 1.0 + sweep.s0.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let mut tested = 0usize;
        for i in 1..sweep.s0.len() - 1 {
            let window = (sweep.lambdas[i - 1], sweep.lambdas[i + 1]);
            if kinks.iter().any(|&k| k > window.0 && k < window.1) {
                continue;
            }
            let second = sweep.s0[i + 1] - 2.0 * sweep.s0[i] + sweep.s0[i - 1];
            ensure!(
                second.abs() <= 1e-9 * scale,
                "second difference {second:.3e} at λ = {} exceeds 1e-9·scale",
                sweep.lambdas[i]
            );
            tested += 1;
        }
        ensure!(tested > 100, "only {tested} interior triples were testable");

        // Drift slopes per regime do not depend on λ.
        let slopes_at = |lambda: f64| -> Result<Vec<f64>, String> {
            let solution =
                EquilibriumSolution::solve(spec.with_lambda(lambda), &model).map_err(fail)?;
            Ok(slope_table(&solution)
                .map_err(fail)?
                .iter()
                .map(|entry| entry.slope)
                .collect())
        };
        let table_01 = slopes_at(0.1)?;
        let table_02 = slopes_at(0.2)?;
        ensure!(
            table_01.len() == table_02.len(),
            "slope tables have {} vs {} rows",
            table_01.len(),
            table_02.len()
        );
        for (i, (a, b)) in table_01.iter().zip(&table_02).enumerate() {
            ensure!(
                (a - b).abs() <= 1e-10,
                "slope {i} differs between λ = 0.1 and 0.2: {a} vs {b}"
            );
        }

        // One permutation for the entire sweep.
        ensure!(
            sweep.permutations.windows(2).all(|w| w[0] == w[1]),
            "rank permutation changed during the sweep"
        );
        ensure!(
            sweep.perm_ids.iter().all(|&id| id == sweep.perm_ids[0]),
            "permutation ids changed during the sweep"
        );
        Ok(())
    });
}

/// Criterion 6 — markets with duplicated targets yield the same drift no
/// matter how the ties are resolved.
#[test]
fn criterion_6_uniqueness_under_ties() {
    criterion(6, "uniqueness under ties", || {
        let model = twap_model(1.0, 0.1);
        let scenarios = [
            (vec![-120.0, -40.0, -40.0, -40.0, 35.0, 35.0, 200.0], 0.05),
            (vec![-50.0, -50.0, 80.0, 80.0], 0.03),
        ];
        for (targets, lambda) in scenarios {
            let spec = market(&targets, lambda);
            let solution =
                EquilibriumSolution::solve(spec.clone(), &model).map_err(fail)?;
            let ordering = solution.ordering();

            // Reverse every block of ranks that holds the same target,
            // producing a genuinely different but equally valid resolution.
            let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (slot, &value) in ordering.a_rank.iter().enumerate() {
                groups.entry((value + 0.0).to_bits()).or_default().push(slot);
            }
            let mut permuted = ordering.perm.clone();
            for slots in groups.values().filter(|slots| slots.len() >= 2) {
                for (&a, &b) in slots.iter().zip(slots.iter().rev()) {
                    if a < b {
                        permuted.swap(a, b);
                    }
                }
            }
            ensure!(
                permuted != ordering.perm,
                "tie permutation is trivial; the scenario has no usable ties"
            );

            let alternative = solve_with_permutation(
                &spec.agents,
                spec.lambda,
                &model,
                &permuted,
            )
            .map_err(fail)?;
            let alternative =
                EquilibriumSolution::with_ordering(spec.clone(), &model, alternative)
                    .map_err(fail)?;

            let grid = solution.evaluation_grid(2001);
            let mut worst = 0.0f64;
            for &t in &grid {
                let delta =
                    (solution.drift(t).map_err(fail)? - alternative.drift(t).map_err(fail)?).abs();
                worst = worst.max(delta);
            }
            ensure!(
                worst <= 1e-10,
                "drift differs by {worst:.3e} under permuted tie resolution \
                 (targets {targets:?})"
            );
        }
        Ok(())
    });
}

/// Criterion 7 — repeated figure runs are byte-identical.
#[test]
fn criterion_7_figure_determinism() {
    criterion(7, "figure determinism", || {
        let run = |dir: &std::path::Path| -> Result<(), String> {
            let output = std::process::Command::new(env!("CARGO_BIN_EXE_radner"))
                .arg("figures")
                .arg(scenario_path("section3.json"))
                .arg(dir)
                .env_remove("RADNER_GRID")
                .output()
                .map_err(fail)?;
            ensure!(
                output.status.code() == Some(0),
                "figures exited with {:?}: {}",
                output.status.code(),
                String::from_utf8_lossy(&output.stderr)
            );
            Ok(())
        };
        let first = tempfile::tempdir().map_err(fail)?;
        let second = tempfile::tempdir().map_err(fail)?;
        run(first.path())?;
        run(second.path())?;
        for name in [
            "fig1_stop_times.csv",
            "fig2_drift.csv",
            "fig3_strategies.csv",
            "fig4_drift_pair.csv",
            "fig5_s0_vs_lambda.csv",
        ] {
            let a = std::fs::read(first.path().join(name)).map_err(fail)?;
            let b = std::fs::read(second.path().join(name)).map_err(fail)?;
            ensure!(!a.is_empty(), "{name} is empty");
            ensure!(a == b, "{name} differs between runs");
        }
        Ok(())
    });
}
