//! Exact oracles, efficiency figures and Monte Carlo aggregation.
//!
//! The oracles are computed on an independent route from the simulator: the
//! detection probability comes from a small density-matrix calculation
//! rather than from sampled runs, the expected key from a plain XOR fold,
//! and the efficiency figures from exact rational arithmetic. Empirical
//! counterparts drive the production code paths so the two routes can be
//! compared against each other.

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AttackScenario, InterceptResend};
use crate::bits::BitString;
use crate::config::{ratio_serde, ScenarioConfig};
use crate::protocol::{
    data_slots, run_detection, run_protocol, ParticleSlot, PrepRecord, RunError, RunReport,
    SequenceInTransit, SlotKind,
};
use crate::qubit::{Basis, PureState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no sub-secret keys to fold")]
    EmptyKeyList,
    #[error("sub-secret key length mismatch: expected {expected} bits, got {got}")]
    KeyLengthMismatch { expected: usize, got: usize },
    #[error("efficiency needs at least two participants, got {participants}")]
    TooFewParticipants { participants: usize },
    #[error("decoy rate must be nonnegative, got {k}")]
    NegativeDecoyRate { k: Ratio<i64> },
}

/// Expected agreed key: the XOR of all sub-secret keys.
pub fn xor_oracle(subkeys: &[BitString]) -> Result<BitString, AnalysisError> {
    let first = subkeys.first().ok_or(AnalysisError::EmptyKeyList)?;
    let mut folded = BitString::zeros(first.len());
    for subkey in subkeys {
        if subkey.len() != first.len() {
            return Err(AnalysisError::KeyLengthMismatch {
                expected: first.len(),
                got: subkey.len(),
            });
        }
        folded = folded.xor(subkey);
    }
    Ok(folded)
}

/// 2x2 density matrix, the exact route for disturbance calculations.
#[derive(Debug, Clone, Copy)]
struct Density([[Complex64; 2]; 2]);

impl Density {
    fn from_pure(state: &PureState) -> Self {
        let amps = [state.amp0, state.amp1];
        let mut matrix = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (row, matrix_row) in matrix.iter_mut().enumerate() {
            for (column, entry) in matrix_row.iter_mut().enumerate() {
                *entry = amps[row] * amps[column].conj();
            }
        }
        Density(matrix)
    }

    /// State after a measurement in `basis` whose outcome nobody looks at:
    /// the mixture of both eigenstate projections.
    fn measured_in(&self, basis: Basis) -> Density {
        let mut matrix = [[Complex64::new(0.0, 0.0); 2]; 2];
        for outcome in [false, true] {
            let eigen = basis.eigenstate(outcome);
            let probability = self.expectation(&eigen);
            let projector = Density::from_pure(&eigen);
            for (matrix_row, projector_row) in matrix.iter_mut().zip(&projector.0) {
                for (entry, projection) in matrix_row.iter_mut().zip(projector_row) {
                    *entry += probability * projection;
                }
            }
        }
        Density(matrix)
    }

    /// ⟨state| self |state⟩, the probability of projecting onto `state`.
    fn expectation(&self, state: &PureState) -> Complex64 {
        let amps = [state.amp0, state.amp1];
        let mut total = Complex64::new(0.0, 0.0);
        for row in 0..2 {
            for column in 0..2 {
                total += amps[row].conj() * self.0[row][column] * amps[column];
            }
        }
        total
    }
}

/// Exact probability that one decoy prepared in `decoy_basis` fails its
/// check after an intercept-resend measurement in `tap_basis`, averaged
/// over the two decoy eigenstates.
pub fn detection_probability_oracle(decoy_basis: Basis, tap_basis: Basis) -> f64 {
    assert!(
        Basis::DECOY.contains(&decoy_basis),
        "decoys are prepared in the X or Y basis only"
    );
    let mut total = 0.0;
    for index in [false, true] {
        let prepared = decoy_basis.eigenstate(index);
        let tapped = Density::from_pure(&prepared).measured_in(tap_basis);
        let survives = tapped.expectation(&prepared).re;
        total += 1.0 - survives;
    }
    (total / 2.0).clamp(0.0, 1.0)
}

/// Empirical counterpart of [`detection_probability_oracle`], driving the
/// production tap and detection paths: one hop carrying `samples` decoys
/// prepared in `decoy_basis` is tapped slot by slot in `tap_basis`, and the
/// observed per-decoy error rate is returned.
pub fn empirical_detection_error(
    decoy_basis: Basis,
    tap_basis: Basis,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    assert!(
        Basis::DECOY.contains(&decoy_basis),
        "decoys are prepared in the X or Y basis only"
    );
    assert!(samples >= 1, "need at least one decoy to sample");
    let mut slots = data_slots(&BitString::zeros(1));
    let mut decoy_positions = Vec::with_capacity(samples);
    for offset in 0..samples {
        let index = rng.gen::<bool>();
        slots.push(ParticleSlot {
            kind: SlotKind::Decoy,
            state: decoy_basis.eigenstate(index),
            prep: PrepRecord {
                basis: decoy_basis,
                index,
            },
        });
        decoy_positions.push(1 + offset);
    }
    let mut seq = SequenceInTransit {
        owner: 0,
        hop_sender: 0,
        slots,
        decoy_positions,
    };
    let mut tap = InterceptResend::new(tap_basis);
    for slot in &mut seq.slots {
        tap.tap(&mut slot.state, rng);
    }
    run_detection(&mut seq, 1, 0.0, rng).error_rate
}

/// Which protocol variant an efficiency figure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolLabel {
    /// The travelling-mode single-particle protocol simulated here: per
    /// participant, n data particles plus k*n decoys yield n key bits.
    #[serde(rename = "SMQKA")]
    Smqka,
    /// The pairwise-exchange baseline, which repeats that cost once per
    /// other participant.
    #[serde(rename = "LiuMQKA")]
    LiuMqka,
}

impl std::fmt::Display for ProtocolLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolLabel::Smqka => "SMQKA",
            ProtocolLabel::LiuMqka => "LiuMQKA",
        })
    }
}

/// Exact qubit efficiency of one protocol variant: agreed key bits per
/// transmitted particle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyFigure {
    pub label: ProtocolLabel,
    pub participants: usize,
    #[serde(with = "ratio_serde")]
    pub k: Ratio<i64>,
    #[serde(with = "ratio_serde")]
    pub value: Ratio<i64>,
}

/// Computes the qubit efficiency 1 / ((k + 1) N) for the travelling-mode
/// protocol and 1 / ((k + 1) N (N - 1)) for the pairwise baseline, exactly.
pub fn qubit_efficiency(
    label: ProtocolLabel,
    participants: usize,
    k: Ratio<i64>,
) -> Result<EfficiencyFigure, AnalysisError> {
    if participants < 2 {
        return Err(AnalysisError::TooFewParticipants { participants });
    }
    if k < Ratio::zero() {
        return Err(AnalysisError::NegativeDecoyRate { k });
    }
    let count = Ratio::from_integer(participants as i64);
    let per_participant = (k + Ratio::one()) * count;
    let value = match label {
        ProtocolLabel::Smqka => Ratio::one() / per_participant,
        ProtocolLabel::LiuMqka => Ratio::one() / (per_participant * (count - Ratio::one())),
    };
    Ok(EfficiencyFigure {
        label,
        participants,
        k,
        value,
    })
}

/// Aggregated Monte Carlo statistics for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub trials: u64,
    /// Fraction of trials in which every participant ended with its
    /// expected key: the XOR of all sub-secret keys, or the forced key for
    /// honest targets of a fairness collusion.
    pub correctness_rate: f64,
    /// Fraction of trials in which the configured attack reached its goal;
    /// zero when no attack is configured.
    pub attack_success_rate: f64,
    pub abort_rate: f64,
    /// Mean decoy error rate over every detection of every trial.
    pub mean_error_rate: f64,
    /// 95% half-width for the scenario's headline rate: correctness without
    /// an attack, attack success for participant attacks, abort rate for
    /// the outside eavesdropper. Exact binomial bounds below 100 trials,
    /// normal approximation from there.
    pub confidence_halfwidth: f64,
}

/// Per-trial reports plus their aggregate.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub aggregate: TrialAggregate,
    pub reports: Vec<RunReport>,
}

/// Generator for one trial: stream `trial` of the master seed, so trials
/// are independent and each one is reproducible in isolation.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Runs `trials` independent protocol instances and aggregates them.
pub fn monte_carlo(
    config: &ScenarioConfig,
    trials: u64,
    master_seed: u64,
) -> Result<MonteCarloRun, RunError> {
    config.validate()?;
    let mut reports = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let mut rng = trial_rng(master_seed, trial);
        reports.push(run_protocol(config, &mut rng)?);
    }
    let aggregate = aggregate_reports(config, &reports);
    Ok(MonteCarloRun { aggregate, reports })
}

fn aggregate_reports(config: &ScenarioConfig, reports: &[RunReport]) -> TrialAggregate {
    let trials = reports.len() as u64;
    let correct = reports
        .iter()
        .filter(|report| trial_is_correct(report))
        .count() as u64;
    let succeeded = reports
        .iter()
        .filter(|report| attack_succeeded(report))
        .count() as u64;
    let aborted = reports.iter().filter(|report| report.aborted).count() as u64;
    let mut rate_sum = 0.0;
    let mut rate_count = 0u64;
    for report in reports {
        for record in &report.detections {
            rate_sum += record.error_rate;
            rate_count += 1;
        }
    }
    let rate = |count: u64| {
        if trials == 0 {
            0.0
        } else {
            count as f64 / trials as f64
        }
    };
    let headline = match config.attack {
        AttackScenario::None => correct,
        AttackScenario::Privacy
        | AttackScenario::FairnessAllButOne
        | AttackScenario::FairnessNonadjacent => succeeded,
        AttackScenario::OutsideInterceptResend => aborted,
    };
    TrialAggregate {
        trials,
        correctness_rate: rate(correct),
        attack_success_rate: rate(succeeded),
        abort_rate: rate(aborted),
        mean_error_rate: if rate_count == 0 {
            0.0
        } else {
            rate_sum / rate_count as f64
        },
        confidence_halfwidth: binomial_halfwidth(headline, trials),
    }
}

/// Whether every participant of a completed run ended with its expected
/// key. Honest targets of a fairness collusion are expected to hold the
/// forced key; everybody else the XOR of all sub-secret keys.
fn trial_is_correct(report: &RunReport) -> bool {
    let Some(finals) = &report.final_keys else {
        return false;
    };
    let Ok(folded) = xor_oracle(&report.subkeys) else {
        return false;
    };
    let forced_ids: Vec<usize> = match report.config.attack {
        AttackScenario::FairnessAllButOne => vec![report.config.participants - 1],
        AttackScenario::FairnessNonadjacent => report.config.honest_set.clone().unwrap_or_default(),
        _ => Vec::new(),
    };
    finals.iter().enumerate().all(|(id, key)| {
        if forced_ids.contains(&id) {
            report.desired_key.as_ref() == Some(key)
        } else {
            key == &folded
        }
    })
}

fn attack_succeeded(report: &RunReport) -> bool {
    let flag = |name: &str| report.attack_flags.get(name).copied().unwrap_or(false);
    match report.config.attack {
        AttackScenario::None => false,
        AttackScenario::Privacy => flag("privacy"),
        AttackScenario::FairnessAllButOne | AttackScenario::FairnessNonadjacent => flag("fairness"),
        AttackScenario::OutsideInterceptResend => flag("intercept_escaped"),
    }
}

/// 95% half-width of a binomial proportion estimate: exact bounds below 100
/// trials, normal approximation from there.
fn binomial_halfwidth(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let total = trials as f64;
    let proportion = successes as f64 / total;
    if trials >= 100 {
        const Z_95: f64 = 1.959963984540054;
        return Z_95 * (proportion * (1.0 - proportion) / total).sqrt();
    }
    use statrs::distribution::{Beta, ContinuousCDF};
    let hits = successes as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(hits, total - hits + 1.0)
            .expect("positive shape parameters")
            .inverse_cdf(0.025)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(hits + 1.0, total - hits)
            .expect("positive shape parameters")
            .inverse_cdf(0.975)
    };
    (proportion - lower).max(upper - proportion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn bits(text: &str) -> BitString {
        text.parse().unwrap()
    }

    #[test]
    fn folding_subkeys_matches_worked_examples() {
        let folded = xor_oracle(&[bits("111"), bits("101"), bits("010")]).unwrap();
        assert_eq!(folded.to_string(), "000");
        let folded = xor_oracle(&[bits("1100"), bits("1010")]).unwrap();
        assert_eq!(folded.to_string(), "0110");
        let single = xor_oracle(&[bits("0101")]).unwrap();
        assert_eq!(single.to_string(), "0101");
    }

    #[test]
    fn folding_rejects_empty_and_ragged_input() {
        assert_eq!(xor_oracle(&[]).unwrap_err(), AnalysisError::EmptyKeyList);
        assert_eq!(
            xor_oracle(&[bits("11"), bits("101")]).unwrap_err(),
            AnalysisError::KeyLengthMismatch {
                expected: 2,
                got: 3
            }
        );
    }

    #[test]
    fn oracle_matches_the_frozen_disturbance_table() {
        let cases = [
            (Basis::X, Basis::Z, 0.5),
            (Basis::X, Basis::X, 0.0),
            (Basis::X, Basis::Y, 0.5),
            (Basis::Y, Basis::Z, 0.5),
            (Basis::Y, Basis::X, 0.5),
            (Basis::Y, Basis::Y, 0.0),
        ];
        for (decoy, tap, expected) in cases {
            let probability = detection_probability_oracle(decoy, tap);
            assert!(
                (probability - expected).abs() < 1e-12,
                "decoy {decoy}, tap {tap}: expected {expected}, got {probability}"
            );
        }
    }

    #[test]
    #[should_panic(expected = "X or Y basis only")]
    fn oracle_rejects_computational_decoys() {
        detection_probability_oracle(Basis::Z, Basis::Z);
    }

    #[test]
    fn empirical_rates_track_the_oracle() {
        let mut rng = trial_rng(31, 0);
        for decoy in Basis::DECOY {
            for tap in [Basis::Z, Basis::X, Basis::Y] {
                let expected = detection_probability_oracle(decoy, tap);
                let observed = empirical_detection_error(decoy, tap, 2000, &mut rng);
                assert!(
                    (observed - expected).abs() < 0.05,
                    "decoy {decoy}, tap {tap}: oracle {expected}, observed {observed}"
                );
            }
        }
    }

    #[test]
    fn same_basis_taps_are_never_detected() {
        let mut rng = trial_rng(32, 0);
        assert_eq!(
            empirical_detection_error(Basis::X, Basis::X, 5000, &mut rng),
            0.0
        );
        assert_eq!(
            empirical_detection_error(Basis::Y, Basis::Y, 5000, &mut rng),
            0.0
        );
    }

    #[test]
    fn efficiency_matches_worked_figures() {
        let figure = qubit_efficiency(ProtocolLabel::Smqka, 5, Ratio::one()).unwrap();
        assert_eq!(figure.value, Ratio::new(1, 10));
        let baseline = qubit_efficiency(ProtocolLabel::LiuMqka, 5, Ratio::one()).unwrap();
        assert_eq!(baseline.value, Ratio::new(1, 40));
        let fractional = qubit_efficiency(ProtocolLabel::Smqka, 4, Ratio::new(1, 2)).unwrap();
        assert_eq!(fractional.value, Ratio::new(1, 6));
        let no_decoys = qubit_efficiency(ProtocolLabel::Smqka, 2, Ratio::zero()).unwrap();
        assert_eq!(no_decoys.value, Ratio::new(1, 2));
    }

    #[test]
    fn efficiency_gain_over_the_baseline_is_one_less_than_the_ring() {
        for participants in 2..12 {
            for k in [Ratio::zero(), Ratio::one(), Ratio::new(3, 2)] {
                let ours = qubit_efficiency(ProtocolLabel::Smqka, participants, k).unwrap();
                let baseline = qubit_efficiency(ProtocolLabel::LiuMqka, participants, k).unwrap();
                assert_eq!(
                    ours.value / baseline.value,
                    Ratio::from_integer(participants as i64 - 1)
                );
            }
        }
    }

    #[test]
    fn efficiency_decreases_with_ring_size_and_decoy_rate() {
        let mut previous = Ratio::one();
        for participants in 2..10 {
            let value = qubit_efficiency(ProtocolLabel::Smqka, participants, Ratio::one())
                .unwrap()
                .value;
            assert!(value < previous);
            previous = value;
        }
        let lighter = qubit_efficiency(ProtocolLabel::Smqka, 5, Ratio::new(1, 2)).unwrap();
        let heavier = qubit_efficiency(ProtocolLabel::Smqka, 5, Ratio::new(2, 1)).unwrap();
        assert!(heavier.value < lighter.value);
    }

    #[test]
    fn efficiency_rejects_degenerate_input() {
        assert_eq!(
            qubit_efficiency(ProtocolLabel::Smqka, 1, Ratio::one()).unwrap_err(),
            AnalysisError::TooFewParticipants { participants: 1 }
        );
        assert_eq!(
            qubit_efficiency(ProtocolLabel::Smqka, 5, Ratio::new(-1, 2)).unwrap_err(),
            AnalysisError::NegativeDecoyRate {
                k: Ratio::new(-1, 2)
            }
        );
    }

    #[test]
    fn honest_monte_carlo_is_fully_correct() {
        let config = parse_config("N = 3\nn = 16\nk = 1\n").unwrap();
        let run = monte_carlo(&config, 50, 7).unwrap();
        assert_eq!(run.aggregate.trials, 50);
        assert_eq!(run.aggregate.correctness_rate, 1.0);
        assert_eq!(run.aggregate.attack_success_rate, 0.0);
        assert_eq!(run.aggregate.abort_rate, 0.0);
        assert_eq!(run.aggregate.mean_error_rate, 0.0);
        assert_eq!(run.reports.len(), 50);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_seed_sensitive() {
        let config = parse_config("N = 4\nn = 8\nk = 1\n").unwrap();
        let first = monte_carlo(&config, 10, 3).unwrap();
        let second = monte_carlo(&config, 10, 3).unwrap();
        assert_eq!(first.aggregate, second.aggregate);
        for (left, right) in first.reports.iter().zip(&second.reports) {
            assert_eq!(left.subkeys, right.subkeys);
            assert_eq!(left.final_keys, right.final_keys);
        }
        let other = monte_carlo(&config, 10, 4).unwrap();
        assert_ne!(first.reports[0].subkeys, other.reports[0].subkeys);
    }

    #[test]
    fn trial_streams_are_independent() {
        let mut first = trial_rng(9, 0);
        let mut second = trial_rng(9, 1);
        let a: Vec<u64> = (0..4).map(|_| first.gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| second.gen()).collect();
        assert_ne!(a, b);
        let mut repeat = trial_rng(9, 1);
        let c: Vec<u64> = (0..4).map(|_| repeat.gen()).collect();
        assert_eq!(b, c);
    }

    #[test]
    fn halfwidth_uses_the_normal_approximation_for_large_runs() {
        let halfwidth = binomial_halfwidth(5000, 10_000);
        assert!((halfwidth - 0.0098).abs() < 1e-4, "got {halfwidth}");
        assert_eq!(binomial_halfwidth(10_000, 10_000), 0.0);
    }

    #[test]
    fn halfwidth_uses_exact_bounds_for_small_runs() {
        // zero successes in 50 trials: upper bound 1 - (alpha/2)^(1/50),
        // reproduced here to the numerical accuracy of the quantile inversion
        let expected_upper = 1.0 - 0.025f64.powf(1.0 / 50.0);
        let halfwidth = binomial_halfwidth(0, 50);
        assert!(
            (halfwidth - expected_upper).abs() < 1e-4,
            "expected {expected_upper}, got {halfwidth}"
        );
        let symmetric = binomial_halfwidth(25, 50);
        assert!(symmetric > 0.1 && symmetric < 0.2, "got {symmetric}");
    }

    #[test]
    fn halfwidth_handles_empty_input() {
        assert_eq!(binomial_halfwidth(0, 0), 0.0);
    }
}
