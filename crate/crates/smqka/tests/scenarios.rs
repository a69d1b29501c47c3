//! Cross-module integration coverage: rings of every size, every legal
//! spread-out honest set, replay of the public encoding log, and the shape
//! of aborted versus escaped tapped runs.

use std::collections::BTreeSet;

use smqka::analysis::{monte_carlo, trial_rng};
use smqka::bits::BitString;
use smqka::config::parse_config;
use smqka::protocol::{run_protocol, RunReport};

fn fold_keys(subkeys: &[BitString]) -> BitString {
    let mut folded = BitString::zeros(subkeys[0].len());
    for subkey in subkeys {
        folded = folded.xor(subkey);
    }
    folded
}

#[test]
fn honest_rings_of_every_size_agree() {
    for participants in 3usize..=10 {
        let config = parse_config(&format!(
            "N = {participants}\nn = 8\nk = 1\nthreshold = 0\n"
        ))
        .expect("honest scenario parses");
        let mut rng = trial_rng(900, participants as u64);
        let report = run_protocol(&config, &mut rng).expect("honest run completes");
        assert!(!report.aborted, "honest ring of {participants} aborted");
        assert_eq!(
            report.detections.len(),
            participants * participants,
            "one detection per hop: ring of {participants}"
        );
        let expected = fold_keys(&report.subkeys);
        let finals = report.final_keys.as_ref().expect("completed run has keys");
        for (id, key) in finals.iter().enumerate() {
            assert_eq!(
                key, &expected,
                "participant {id} of {participants} disagrees with the folded key"
            );
        }
    }
}

#[test]
fn every_spread_out_honest_set_is_forced() {
    for participants in 3usize..=8 {
        for mask in 1u32..(1 << participants) {
            let honest: Vec<usize> = (0..participants)
                .filter(|id| mask & (1 << id) != 0)
                .collect();
            let adjacent = honest.iter().any(|&a| {
                honest
                    .iter()
                    .any(|&b| a != b && (a + 1) % participants == b)
            });
            if adjacent {
                continue;
            }
            let list = honest
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let config = parse_config(&format!(
                "N = {participants}\nn = 8\nk = 1\nthreshold = 0\nattack = fairness_nonadjacent\nhonest_set = {list}\ndesired_key = random\n"
            ))
            .unwrap_or_else(|err| {
                panic!("N={participants} honest {{{list}}} must be accepted: {err}")
            });
            let mut rng = trial_rng(u64::from(mask), participants as u64);
            let report = run_protocol(&config, &mut rng).expect("fairness run completes");
            assert!(
                !report.aborted,
                "N={participants} honest {{{list}}} aborted"
            );
            for record in &report.detections {
                assert_eq!(
                    record.errors, 0,
                    "N={participants} honest {{{list}}}: the collusion tripped a decoy"
                );
            }
            assert_eq!(
                report.attack_flags.get("fairness"),
                Some(&true),
                "N={participants} honest {{{list}}}: attack did not succeed"
            );
            let desired = report.desired_key.as_ref().expect("fairness draws a key");
            let folded = fold_keys(&report.subkeys);
            let finals = report.final_keys.as_ref().expect("completed run has keys");
            for (id, key) in finals.iter().enumerate() {
                if honest.binary_search(&id).is_ok() {
                    assert_eq!(
                        key, desired,
                        "N={participants} honest {{{list}}}: participant {id} was not forced"
                    );
                } else {
                    assert_eq!(
                        key, &folded,
                        "N={participants} honest {{{list}}}: colluder {id} lost the real key"
                    );
                }
            }
        }
    }
}

#[test]
fn the_public_encoding_log_replays_every_final_key() {
    let scenarios = [
        ("honest ring", "N = 5\nn = 16\nk = 1\nthreshold = 0\nseed = 21\n"),
        (
            "privacy attack",
            "N = 5\nn = 16\nk = 1\nthreshold = 0\nattack = privacy\nseed = 22\n",
        ),
        (
            "lone honest participant",
            "N = 5\nn = 16\nk = 1\nthreshold = 0\nattack = fairness_all_but_one\ndesired_key = random\nseed = 23\n",
        ),
        (
            "spread-out honest trio",
            "N = 7\nn = 16\nk = 1\nthreshold = 0\nattack = fairness_nonadjacent\nhonest_set = 0,2,4\ndesired_key = random\nseed = 24\n",
        ),
    ];
    for (label, text) in scenarios {
        let config = parse_config(text).expect("scenario parses");
        let mut rng = trial_rng(config.seed, 0);
        let report = run_protocol(&config, &mut rng).expect("run completes");
        assert!(!report.aborted, "{label}: run aborted");
        replay_encoding_log(label, &report);
    }
}

/// Checks that the log holds exactly one entry per sequence and round, that
/// each entry names the participant holding the sequence at that round, and
/// that XOR-ing a sequence's logged bits onto its owner's sub-key reproduces
/// the key the owner extracted.
fn replay_encoding_log(label: &str, report: &RunReport) {
    let count = report.config.participants;
    let n = report.config.n;
    let mut seen = BTreeSet::new();
    for event in &report.encoding_log {
        assert!(
            event.round >= 1 && event.round < count,
            "{label}: encoding round {} out of range",
            event.round
        );
        assert_eq!(event.bits.len(), n, "{label}: logged bit string length");
        assert_eq!(
            event.encoder,
            (event.sequence_owner + event.round) % count,
            "{label}: encoder is not the holder at round {}",
            event.round
        );
        assert!(
            seen.insert((event.sequence_owner, event.round)),
            "{label}: sequence {} logged twice for round {}",
            event.sequence_owner,
            event.round
        );
    }
    assert_eq!(
        report.encoding_log.len(),
        count * (count - 1),
        "{label}: every sequence is encoded once per intermediate round"
    );
    let finals = report.final_keys.as_ref().expect("completed run has keys");
    for (owner, key) in finals.iter().enumerate() {
        let mut travelled = BitString::zeros(n);
        for event in report
            .encoding_log
            .iter()
            .filter(|event| event.sequence_owner == owner)
        {
            travelled = travelled.xor(&event.bits);
        }
        assert_eq!(
            key,
            &report.subkeys[owner].xor(&travelled),
            "{label}: replaying sequence {owner} does not give the extracted key"
        );
    }
}

#[test]
fn tapped_runs_abort_cleanly_or_finish_correctly() {
    let config = parse_config(
        "N = 4\nn = 2\nk = 1\nthreshold = 0\nattack = outside_intercept_resend\ntap_basis = Z\nseed = 31\ntrials = 200\n",
    )
    .expect("tap scenario parses");
    let run = monte_carlo(&config, config.trials, config.seed).expect("runs complete");
    let mut aborted = 0usize;
    let mut escaped = 0usize;
    for report in &run.reports {
        if report.aborted {
            aborted += 1;
            assert!(report.final_keys.is_none(), "aborted runs publish no keys");
            let failed = report
                .failed_detection
                .expect("aborted runs record the failing hop");
            assert_eq!(
                failed,
                report.detections.len() - 1,
                "the failing detection is the last one recorded"
            );
            assert!(!report.detections[failed].passed);
            assert!(report.detections[failed].errors > 0);
            assert_eq!(report.attack_flags.get("intercept_escaped"), Some(&false));
        } else {
            escaped += 1;
            assert!(report.failed_detection.is_none());
            assert_eq!(report.attack_flags.get("intercept_escaped"), Some(&true));
            let expected = fold_keys(&report.subkeys);
            for key in report.final_keys.as_ref().expect("completed run has keys") {
                assert_eq!(
                    key, &expected,
                    "a computational-basis tap must leave escaped runs correct"
                );
            }
        }
    }
    assert!(
        aborted > 0,
        "with 2 decoys on the tapped hop, 200 runs must raise at least one alarm"
    );
    assert!(
        escaped > 0,
        "each run escapes with chance 1/4, so 200 runs must include escapes"
    );
}

#[test]
fn participant_attacks_never_touch_the_decoys() {
    let scenarios = [
        (
            "privacy attack",
            "N = 5\nn = 16\nk = 1\nthreshold = 0\nattack = privacy\nseed = 41\ntrials = 20\n",
        ),
        (
            "lone honest participant",
            "N = 5\nn = 16\nk = 1\nthreshold = 0\nattack = fairness_all_but_one\ndesired_key = random\nseed = 42\ntrials = 20\n",
        ),
        (
            "spread-out honest pair",
            "N = 6\nn = 16\nk = 1\nthreshold = 0\nattack = fairness_nonadjacent\nhonest_set = 1,4\ndesired_key = random\nseed = 43\ntrials = 20\n",
        ),
    ];
    for (label, text) in scenarios {
        let config = parse_config(text).expect("scenario parses");
        let run = monte_carlo(&config, config.trials, config.seed).expect("runs complete");
        assert_eq!(run.aggregate.abort_rate, 0.0, "{label}: a trial aborted");
        for (trial, report) in run.reports.iter().enumerate() {
            assert_eq!(
                report.detections.len(),
                config.participants * config.participants,
                "{label} trial {trial}: a hop skipped its detection"
            );
            for record in &report.detections {
                assert_eq!(
                    record.decoys_checked, config.n,
                    "{label} trial {trial}: hop {} -> {} checked the wrong number of decoys",
                    record.sender, record.receiver
                );
                assert_eq!(
                    record.errors, 0,
                    "{label} trial {trial}: hop {} -> {} saw decoy errors",
                    record.sender, record.receiver
                );
            }
        }
    }
}
