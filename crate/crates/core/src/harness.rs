//! Batch experiment runner: plays N games for a strategy matrix and compares
//! empirical gains against the analytic predictions.
//!
//! Per-game randomness is derived from (seed, game index), so results are
//! identical regardless of the parallelism setting or scheduling.

use crate::analysis;
use crate::protocol::{
    run_game, session_monitor, AliceStrategy, BobStrategy, GameOutcome, GameParams, SessionVerdict,
};
use crate::quantum::Preparation;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// One batch of N independent games.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub reward_ratio: f64,
    pub games: u64,
    pub alice: AliceStrategy,
    pub bob: BobStrategy,
    pub p_err: f64,
    pub seed: u64,
    pub parallelism: usize,
}

/// Aggregated statistics for one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentStats {
    pub spec_label: String,
    pub reward_ratio: f64,
    pub games: u64,
    pub settled: u64,
    /// Mean gains over settled games only.
    pub mean_bob_gain: f64,
    pub mean_alice_gain: f64,
    /// Empirical standard deviation of Bob's per-game gain (settled games).
    pub stddev_bob_gain: f64,
    /// Standard error of the settled-game mean.
    pub stderr: f64,
    /// Sum of Bob's settled gains (exact accumulation).
    pub total_bob_gain: f64,
    pub outcome_counts: BTreeMap<&'static str, u64>,
    pub canceled_rate: f64,
    pub disputed_rate: f64,
    /// Analytic expectation of Bob's mean gain, where one exists for the
    /// strategy pair.
    pub analytic_reference: Option<f64>,
    pub z_score: Option<f64>,
    pub verdict: SessionVerdict,
    /// N * delta(R)^2: keep playing only while this stays << 1, or the
    /// accumulated house edge swamps the sqrt-N fluctuations.
    pub games_over_advisory: f64,
}

/// Analytic mean Bob gain for strategy pairs with a closed form.
pub fn analytic_mean(r: f64, alice: &AliceStrategy, bob: &BobStrategy) -> Option<f64> {
    let eps = match alice {
        AliceStrategy::Honest => 0.0,
        AliceStrategy::Biased(eps) => *eps,
        AliceStrategy::General(_) => return None,
    };
    match bob {
        BobStrategy::Honest { eta } => Some(analysis::gain_bob(analysis::GainParams {
            reward_ratio: r,
            eta: *eta,
            eps,
        })),
        // Concedes every lost round: wins P_b, loses otherwise.
        BobStrategy::NeverVerify { eta } => Some(2.0 * analysis::prob_b_eps(*eta, eps) - 1.0),
        BobStrategy::Liar { .. } => None,
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Play the N games of `spec` and aggregate. Reproducible under a fixed
/// seed; the parallelism setting changes scheduling only.
pub fn run_experiment(spec: &ExperimentSpec) -> ExperimentStats {
    let play = |i: u64| {
        let params = GameParams {
            reward_ratio: spec.reward_ratio,
            game_id: format!("g{i}"),
            seed: crate::protocol::derive_seed(spec.seed, i),
        };
        let rec = run_game(&params, &spec.alice, &spec.bob, spec.p_err)
            .expect("session violation in harness game");
        (rec.outcome, rec.bob_gain)
    };
    let results: Vec<(GameOutcome, f64)> = if spec.parallelism > 1 {
        (0..spec.games).into_par_iter().map(play).collect()
    } else {
        (0..spec.games).map(play).collect()
    };
    aggregate(spec, &results)
}

fn aggregate(spec: &ExperimentSpec, results: &[(GameOutcome, f64)]) -> ExperimentStats {
    let mut outcome_counts: BTreeMap<&'static str, u64> = BTreeMap::new();
    for (outcome, _) in results {
        *outcome_counts.entry(outcome.tag()).or_insert(0) += 1;
    }
    let settled_gains: Vec<f64> = results
        .iter()
        .filter(|(o, _)| o.is_settled())
        .map(|&(_, g)| g)
        .collect();
    let settled = settled_gains.len() as u64;
    let total = kahan_sum(settled_gains.iter().copied());
    let mean = if settled > 0 { total / settled as f64 } else { 0.0 };
    let var = if settled > 1 {
        kahan_sum(settled_gains.iter().map(|g| (g - mean) * (g - mean))) / (settled as f64 - 1.0)
    } else {
        0.0
    };
    let stddev = var.sqrt();
    let stderr = if settled > 0 {
        stddev / (settled as f64).sqrt()
    } else {
        f64::INFINITY
    };
    let n = spec.games as f64;
    let canceled = *outcome_counts.get(GameOutcome::Canceled.tag()).unwrap_or(&0);
    let disputed = *outcome_counts.get(GameOutcome::Disputed.tag()).unwrap_or(&0);
    let analytic_reference = analytic_mean(spec.reward_ratio, &spec.alice, &spec.bob);
    let z_score = analytic_reference
        .filter(|_| settled > 1 && stderr > 0.0)
        .map(|a| (mean - a) / stderr);
    let verdict = session_monitor(results.iter().map(|&(o, _)| o), spec.p_err, 4.0);
    let delta = analysis::delta_closed(spec.reward_ratio);
    ExperimentStats {
        spec_label: format!(
            "R={} N={} alice={:?} bob={:?} p_err={}",
            spec.reward_ratio, spec.games, spec.alice, spec.bob, spec.p_err
        ),
        reward_ratio: spec.reward_ratio,
        games: spec.games,
        settled,
        mean_bob_gain: mean,
        mean_alice_gain: -mean,
        stddev_bob_gain: stddev,
        stderr,
        total_bob_gain: total,
        outcome_counts,
        canceled_rate: canceled as f64 / n,
        disputed_rate: disputed as f64 / n,
        analytic_reference,
        z_score,
        verdict,
        games_over_advisory: n * delta * delta,
    }
}

/// Cross-product sweep over reward ratios and strategy pairs; stable row
/// order (R outer, strategy pair inner).
pub fn sweep(
    r_values: &[f64],
    strategy_grid: &[(AliceStrategy, BobStrategy)],
    games: u64,
    seed: u64,
) -> Vec<ExperimentStats> {
    let mut rows = Vec::with_capacity(r_values.len() * strategy_grid.len());
    for (ri, &r) in r_values.iter().enumerate() {
        for (si, (alice, bob)) in strategy_grid.iter().enumerate() {
            let spec = ExperimentSpec {
                reward_ratio: r,
                games,
                alice: alice.clone(),
                bob: bob.clone(),
                p_err: 0.0,
                seed: crate::protocol::derive_seed(seed, (ri * strategy_grid.len() + si) as u64),
                parallelism: rayon::current_num_threads(),
            };
            rows.push(run_experiment(&spec));
        }
    }
    rows
}

/// Run an experiment with channel errors enabled and report, including the
/// session verdict. `p_err` must be in (0, 1).
pub fn error_injection_report(spec: &ExperimentSpec) -> ExperimentStats {
    assert!(spec.p_err > 0.0 && spec.p_err < 1.0);
    run_experiment(spec)
}

/// Resolve the "worst-case" Alice bias for a given R: the eps minimizing
/// Bob's gain at his optimal splitting parameter.
pub fn worst_eps(r: f64) -> f64 {
    analysis::min_gain_over_eps(r, analysis::eta_tilde(r), 1e-9).0
}

/// Draw a random general preparation (complex amplitudes over boxes A, B,
/// C_0..C_1 with an ancilla) for adversarial sampling.
pub fn random_general_preparation(rng: &mut impl rand::Rng, ancilla_dim: usize) -> Preparation {
    use crate::quantum::ModeLabel;
    let modes = [ModeLabel::A, ModeLabel::B, ModeLabel::C(0), ModeLabel::C(1)];
    let amplitudes = modes
        .iter()
        .flat_map(|&m| (0..ancilla_dim).map(move |k| (m, k)))
        .map(|key| {
            (
                key,
                num_complex::Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
            )
        })
        .collect();
    Preparation::General {
        amplitudes,
        ancilla_dim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honest_spec(r: f64, n: u64, seed: u64, parallelism: usize) -> ExperimentSpec {
        ExperimentSpec {
            reward_ratio: r,
            games: n,
            alice: AliceStrategy::Honest,
            bob: BobStrategy::Honest {
                eta: analysis::eta_tilde(r),
            },
            p_err: 0.0,
            seed,
            parallelism,
        }
    }

    #[test]
    fn reproducible_across_parallelism() {
        let a = run_experiment(&honest_spec(10.0, 4000, 7, 1));
        let b = run_experiment(&honest_spec(10.0, 4000, 7, 8));
        assert_eq!(a.total_bob_gain, b.total_bob_gain);
        assert_eq!(a.outcome_counts, b.outcome_counts);
        assert_eq!(a.mean_bob_gain, b.mean_bob_gain);
    }

    #[test]
    fn conservation_is_exact() {
        let stats = run_experiment(&honest_spec(10.0, 5000, 3, 4));
        assert_eq!(stats.mean_bob_gain, -stats.mean_alice_gain);
        let counted: u64 = stats.outcome_counts.values().sum();
        assert_eq!(counted, stats.games);
    }

    #[test]
    fn honest_play_matches_eta_tilde() {
        let r = 10.0;
        let stats = run_experiment(&honest_spec(r, 50_000, 11, 8));
        let z = stats.z_score.unwrap();
        assert!(z.abs() < 4.0, "z={z} mean={}", stats.mean_bob_gain);
        assert!((stats.analytic_reference.unwrap() - analysis::honest_play_gain(r)).abs() < 1e-12);
    }

    #[test]
    fn fair_coin_against_never_verify() {
        let spec = ExperimentSpec {
            reward_ratio: 10.0,
            games: 10_000,
            alice: AliceStrategy::Honest,
            bob: BobStrategy::NeverVerify { eta: 0.0 },
            p_err: 0.0,
            seed: 5,
            parallelism: 8,
        };
        let stats = run_experiment(&spec);
        assert_eq!(stats.analytic_reference, Some(0.0));
        assert!(stats.z_score.unwrap().abs() < 4.0);
    }

    #[test]
    fn error_injection_rates_and_verdicts() {
        let mut spec = honest_spec(5.0, 10_000, 9, 8);
        spec.p_err = 0.01;
        let stats = error_injection_report(&spec);
        let sigma = (0.01f64 * 0.99 / 10_000.0).sqrt();
        assert!((stats.canceled_rate - 0.01).abs() < 4.0 * sigma);
        assert_eq!(stats.verdict, SessionVerdict::Clean);

        let liar = ExperimentSpec {
            reward_ratio: 5.0,
            games: 500,
            alice: AliceStrategy::Honest,
            bob: BobStrategy::Liar {
                eta: analysis::eta_tilde(5.0),
                lie_prob: 1.0,
            },
            p_err: 0.0,
            seed: 1,
            parallelism: 4,
        };
        let stats = run_experiment(&liar);
        assert_eq!(stats.verdict, SessionVerdict::CheatingSuspected);
        assert!(stats.disputed_rate > 0.0);
    }

    #[test]
    fn sweep_rows_are_stable() {
        let grid = vec![
            (AliceStrategy::Honest, BobStrategy::Honest { eta: 0.3 }),
            (AliceStrategy::Biased(0.1), BobStrategy::Honest { eta: 0.3 }),
        ];
        let a = sweep(&[2.0, 5.0], &grid, 500, 42);
        let b = sweep(&[2.0, 5.0], &grid, 500, 42);
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.total_bob_gain, y.total_bob_gain);
        }
    }

    #[test]
    fn worst_eps_is_interior_for_moderate_r() {
        let eps = worst_eps(10.0);
        assert!(eps > 0.0 && eps < 0.5);
    }
}
