//! Participant collusions and the outside eavesdropper.
//!
//! Three attack families are modelled. In the privacy attack the two ring
//! neighbours of a target cooperate: the predecessor prepares the data
//! particles of its own sequence all |0⟩ instead of uniformly random, and
//! after the target has encoded its sub-secret key onto that sequence the
//! successor reads the key out of a computational-basis measurement. Decoys
//! are handled honestly throughout, so every detection round passes.
//!
//! The fairness attacks build on the same read-out: the colluders steal the
//! sub-secret key of every honest participant early in the run, keep
//! honest-owned sequences free of net colluder encodings by re-applying any
//! honest encoding they want cancelled, and on the final inbound hop of each
//! honest participant's own sequence encode the desired key masked with that
//! participant's stolen sub-secret key. Every honest participant then
//! extracts exactly the key the collusion chose, with no detection alarm.
//! This works whenever no two honest participants sit next to each other on
//! the ring, so up to ⌊N/2⌋ honest participants can be cheated at once.
//!
//! The outside eavesdropper is an intercept-resend tap on one transit hop:
//! every passing particle is measured in a fixed basis and the collapsed
//! state travels on. Decoys prepared in a conjugate basis are disturbed
//! with probability 1/2 each, which is what hop detection catches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::protocol::{data_slots, ParticipantId, ParticleSlot};
use crate::qubit::{Basis, PureState};

/// Named attack scenarios understood by the engine and the scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackScenario {
    /// Everybody follows the protocol.
    None,
    /// Two colluders read the sub-secret key of the participant between
    /// them.
    Privacy,
    /// All participants but one collude to force the agreed key.
    FairnessAllButOne,
    /// A collusion forces the agreed key on a nonadjacent set of honest
    /// participants.
    FairnessNonadjacent,
    /// An outside intercept-resend tap on one transit hop.
    OutsideInterceptResend,
}

impl AttackScenario {
    pub const ALL: [AttackScenario; 5] = [
        AttackScenario::None,
        AttackScenario::Privacy,
        AttackScenario::FairnessAllButOne,
        AttackScenario::FairnessNonadjacent,
        AttackScenario::OutsideInterceptResend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackScenario::None => "none",
            AttackScenario::Privacy => "privacy",
            AttackScenario::FairnessAllButOne => "fairness_all_but_one",
            AttackScenario::FairnessNonadjacent => "fairness_nonadjacent",
            AttackScenario::OutsideInterceptResend => "outside_intercept_resend",
        }
    }

    pub fn is_fairness(self) -> bool {
        matches!(
            self,
            AttackScenario::FairnessAllButOne | AttackScenario::FairnessNonadjacent
        )
    }
}

impl fmt::Display for AttackScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackScenario::ALL
            .into_iter()
            .find(|scenario| scenario.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = AttackScenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown attack {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("need at least three participants, got {participants}")]
    TooFewParticipants { participants: usize },
    #[error("honest participant {id} is outside the ring 0..{participants}")]
    HonestIdOutOfRange { id: usize, participants: usize },
    #[error("honest participant {id} listed twice")]
    DuplicateHonestId { id: usize },
    #[error("honest participants {first} and {second} are ring neighbours, so the collusion cannot surround both")]
    AdjacentHonestPair { first: usize, second: usize },
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Checks that `honest` holds distinct ids of which no two are neighbours
/// on the ring of `participants`, wrap-around included. The largest set
/// that can pass is [`max_nonadjacent_honest`] ids.
pub fn validate_honest_set(
    participants: usize,
    honest: &[ParticipantId],
) -> Result<(), AdversaryError> {
    if participants < 3 {
        return Err(AdversaryError::TooFewParticipants { participants });
    }
    let mut seen = BTreeSet::new();
    for &id in honest {
        if id >= participants {
            return Err(AdversaryError::HonestIdOutOfRange { id, participants });
        }
        if !seen.insert(id) {
            return Err(AdversaryError::DuplicateHonestId { id });
        }
    }
    for &first in honest {
        for &second in honest {
            if first < second
                && ((first + 1) % participants == second || (second + 1) % participants == first)
            {
                return Err(AdversaryError::AdjacentHonestPair { first, second });
            }
        }
    }
    Ok(())
}

/// Largest number of pairwise nonadjacent participants on a ring.
pub fn max_nonadjacent_honest(participants: usize) -> usize {
    participants / 2
}

/// Role a colluder plays during the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColluderAction {
    /// Apply no net encoding when handling an honest-owned sequence.
    PassThrough,
    /// Prepare the own data sequence all |0⟩ so the successor's encoding
    /// becomes readable.
    StealViaAllZero,
    /// Measure the all-zero sequence right after `target` encoded it and
    /// post the recovered sub-secret key to the blackboard.
    MeasureAndReport { target: ParticipantId },
    /// On the final inbound hop of `target`'s own sequence, encode the
    /// desired key XOR `target`'s stolen sub-secret key.
    EncodeMasked { target: ParticipantId },
}

/// Assignment of colluder roles for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackPlan {
    pub participants: usize,
    /// Ids that play the protocol honestly, sorted ascending.
    pub honest: Vec<ParticipantId>,
    /// Key the collusion wants to force, when the attack controls one.
    pub target_key: Option<BitString>,
    /// Special roles per colluder; colluders absent from the map only pass
    /// honest-owned sequences through.
    pub actions: BTreeMap<ParticipantId, Vec<ColluderAction>>,
}

impl AttackPlan {
    pub fn is_honest(&self, id: ParticipantId) -> bool {
        self.honest.binary_search(&id).is_ok()
    }

    /// All dishonest ids, ascending.
    pub fn colluders(&self) -> Vec<ParticipantId> {
        (0..self.participants)
            .filter(|&id| !self.is_honest(id))
            .collect()
    }

    /// Whether `id` prepares its own data sequence all |0⟩.
    pub fn prepares_all_zero(&self, id: ParticipantId) -> bool {
        self.actions
            .get(&id)
            .is_some_and(|actions| actions.contains(&ColluderAction::StealViaAllZero))
    }

    /// Target whose sub-secret key `receiver` reads out of the sequence
    /// owned by `sequence_owner`, if any. The match requires the sequence
    /// to be the one prepared all |0⟩ by the target's predecessor.
    pub fn steal_target(
        &self,
        receiver: ParticipantId,
        sequence_owner: ParticipantId,
    ) -> Option<ParticipantId> {
        self.actions
            .get(&receiver)?
            .iter()
            .find_map(|action| match action {
                ColluderAction::MeasureAndReport { target }
                    if (target + self.participants - 1) % self.participants == sequence_owner =>
                {
                    Some(*target)
                }
                _ => None,
            })
    }

    /// Target for the masked encoding `receiver` performs on
    /// `sequence_owner`'s final inbound hop, if any; the target is the
    /// owner itself.
    pub fn masked_target(
        &self,
        receiver: ParticipantId,
        sequence_owner: ParticipantId,
    ) -> Option<ParticipantId> {
        self.actions
            .get(&receiver)?
            .iter()
            .find_map(|action| match action {
                ColluderAction::EncodeMasked { target }
                    if *target == sequence_owner
                        && (target + self.participants - 1) % self.participants == receiver =>
                {
                    Some(*target)
                }
                _ => None,
            })
    }
}

/// Builds the collusion's role assignment against a nonadjacent honest set.
///
/// For every honest participant h the plan stations the reader pair around
/// it: the predecessor prepares its own data sequence all |0⟩, the
/// successor measures that sequence right after h encoded onto it, and the
/// predecessor later encodes `desired XOR stolen sub-key of h` on the final
/// inbound hop of h's own sequence. Colluders leave honest-owned sequences
/// otherwise free of net encodings, so each honest participant extracts
/// exactly the desired key.
pub fn plan_generalized_attack(
    participants: usize,
    honest: &[ParticipantId],
    desired_key: BitString,
) -> Result<AttackPlan, AdversaryError> {
    validate_honest_set(participants, honest)?;
    let mut sorted = honest.to_vec();
    sorted.sort_unstable();
    let mut actions: BTreeMap<ParticipantId, Vec<ColluderAction>> = BTreeMap::new();
    for &target in &sorted {
        let predecessor = (target + participants - 1) % participants;
        let successor = (target + 1) % participants;
        actions
            .entry(predecessor)
            .or_default()
            .push(ColluderAction::StealViaAllZero);
        actions
            .entry(successor)
            .or_default()
            .push(ColluderAction::MeasureAndReport { target });
        actions
            .entry(predecessor)
            .or_default()
            .push(ColluderAction::EncodeMasked { target });
    }
    Ok(AttackPlan {
        participants,
        honest: sorted,
        target_key: Some(desired_key),
        actions,
    })
}

/// Role assignment for the bare privacy attack: participant 0 prepares its
/// sequence all |0⟩ and participant 2 reads participant 1's sub-secret key
/// out of it two hops later. Everybody encodes honestly, so the run still
/// completes with correct final keys while the sub-secret key leaks.
pub fn plan_privacy_attack(participants: usize) -> Result<AttackPlan, AdversaryError> {
    if participants < 3 {
        return Err(AdversaryError::TooFewParticipants { participants });
    }
    let honest = (0..participants).filter(|&id| id != 0 && id != 2).collect();
    let actions = BTreeMap::from([
        (0, vec![ColluderAction::StealViaAllZero]),
        (2, vec![ColluderAction::MeasureAndReport { target: 1 }]),
    ]);
    Ok(AttackPlan {
        participants,
        honest,
        target_key: None,
        actions,
    })
}

/// Data particles for an attacker's own sequence: every particle |0⟩, so
/// whatever the successor encodes is directly readable. Decoys are added by
/// the normal insertion step afterwards and keep detection clean.
pub fn privacy_attack_prepare(n: usize) -> Vec<ParticleSlot> {
    assert!(n >= 1, "a sequence needs at least one data particle");
    data_slots(&BitString::zeros(n))
}

/// Reads a stolen sub-secret key out of computational-basis outcomes taken
/// on an all-|0⟩ sequence carrying exactly one encoding: outcome |1⟩ means
/// the encoded bit was 1.
pub fn privacy_attack_extract(
    outcomes: &[bool],
    expected_len: usize,
) -> Result<BitString, AdversaryError> {
    if outcomes.len() != expected_len {
        return Err(AdversaryError::LengthMismatch {
            expected: expected_len,
            got: outcomes.len(),
        });
    }
    Ok(BitString::new(outcomes.to_vec()))
}

/// Mask the final-hop encoder applies so the honest target extracts
/// `desired` instead of an honestly agreed key: `desired XOR stolen`.
pub fn fairness_mask(stolen: &BitString, desired: &BitString) -> Result<BitString, AdversaryError> {
    if stolen.len() != desired.len() {
        return Err(AdversaryError::LengthMismatch {
            expected: desired.len(),
            got: stolen.len(),
        });
    }
    Ok(desired.xor(stolen))
}

/// Classical side channel shared by the colluders.
///
/// Posting and reading require naming the acting participant; honest
/// participants have no access, and passing an honest id is a programming
/// error that panics.
#[derive(Debug, Clone)]
pub struct Blackboard {
    colluders: BTreeSet<ParticipantId>,
    desired_key: Option<BitString>,
    stolen: BTreeMap<ParticipantId, BitString>,
}

impl Blackboard {
    pub fn new(colluders: impl IntoIterator<Item = ParticipantId>) -> Self {
        Blackboard {
            colluders: colluders.into_iter().collect(),
            desired_key: None,
            stolen: BTreeMap::new(),
        }
    }

    fn check_access(&self, actor: ParticipantId) {
        assert!(
            self.colluders.contains(&actor),
            "participant {actor} is not part of the collusion"
        );
    }

    pub fn set_desired_key(&mut self, actor: ParticipantId, key: BitString) {
        self.check_access(actor);
        self.desired_key = Some(key);
    }

    pub fn desired_key(&self, actor: ParticipantId) -> Option<&BitString> {
        self.check_access(actor);
        self.desired_key.as_ref()
    }

    pub fn post_stolen(&mut self, actor: ParticipantId, target: ParticipantId, key: BitString) {
        self.check_access(actor);
        self.stolen.insert(target, key);
    }

    pub fn stolen(&self, actor: ParticipantId, target: ParticipantId) -> Option<&BitString> {
        self.check_access(actor);
        self.stolen.get(&target)
    }

    /// Out-of-band view for reports and tests, not part of the in-protocol
    /// interface.
    pub fn reveal_stolen(&self) -> &BTreeMap<ParticipantId, BitString> {
        &self.stolen
    }
}

/// Outside intercept-resend eavesdropper attached to one transit hop.
#[derive(Debug, Clone)]
pub struct InterceptResend {
    pub basis: Basis,
    /// Outcomes observed so far, in tap order.
    pub outcomes: Vec<bool>,
}

impl InterceptResend {
    pub fn new(basis: Basis) -> Self {
        InterceptResend {
            basis,
            outcomes: Vec::new(),
        }
    }

    /// Measures one passing particle and forwards the collapsed eigenstate.
    pub fn tap(&mut self, state: &mut PureState, rng: &mut impl Rng) {
        let outcome = state.measure(self.basis, rng);
        *state = outcome.collapsed;
        self.outcomes.push(outcome.index);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{insert_decoys, run_detection, SlotKind};
    use num_rational::Ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scenario_names_round_trip() {
        for scenario in AttackScenario::ALL {
            assert_eq!(scenario.name().parse::<AttackScenario>().unwrap(), scenario);
        }
        assert!("sidechannel".parse::<AttackScenario>().is_err());
    }

    #[test]
    fn prepared_attack_sequence_is_all_zeros() {
        let slots = privacy_attack_prepare(6);
        assert_eq!(slots.len(), 6);
        for slot in &slots {
            assert_eq!(slot.kind, SlotKind::Data);
            assert_eq!(slot.prep.basis, Basis::Z);
            assert!(!slot.prep.index);
            assert!((slot.state.amp0.re - 1.0).abs() < 1e-12);
            assert!(slot.state.amp1.norm() < 1e-12);
        }
    }

    #[test]
    fn attack_sequence_passes_a_clean_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seq = insert_decoys(
            privacy_attack_prepare(8),
            0,
            0,
            Ratio::from_integer(2),
            &mut rng,
        )
        .unwrap();
        let record = run_detection(&mut seq, 1, 0.0, &mut rng);
        assert!(record.passed);
        assert_eq!(record.errors, 0);
        assert_eq!(record.decoys_checked, 16);
    }

    #[test]
    fn extraction_maps_outcomes_to_bits() {
        let key = privacy_attack_extract(&[false, true, true, false], 4).unwrap();
        assert_eq!(key.to_string(), "0110");
        assert_eq!(
            privacy_attack_extract(&[true, true], 4).unwrap_err(),
            AdversaryError::LengthMismatch {
                expected: 4,
                got: 2
            }
        );
    }

    #[test]
    fn mask_forces_the_desired_key() {
        let stolen: BitString = "1010".parse().unwrap();
        let desired: BitString = "1100".parse().unwrap();
        let mask = fairness_mask(&stolen, &desired).unwrap();
        assert_eq!(mask.to_string(), "0110");
        // the target XORs its own sub-key onto the travelled encodings, so
        // stolen XOR mask must reproduce the desired key
        assert_eq!(stolen.xor(&mask), desired);
        assert!(fairness_mask(&stolen, &"11".parse().unwrap()).is_err());
    }

    #[test]
    fn honest_set_validation_accepts_spread_out_ids() {
        assert!(validate_honest_set(7, &[0, 2, 4]).is_ok());
        assert!(validate_honest_set(5, &[1, 3]).is_ok());
        assert!(validate_honest_set(3, &[1]).is_ok());
        assert!(validate_honest_set(8, &[]).is_ok());
    }

    #[test]
    fn honest_set_validation_rejects_bad_sets() {
        assert_eq!(
            validate_honest_set(4, &[0, 1]).unwrap_err(),
            AdversaryError::AdjacentHonestPair {
                first: 0,
                second: 1
            }
        );
        assert_eq!(
            validate_honest_set(5, &[0, 4]).unwrap_err(),
            AdversaryError::AdjacentHonestPair {
                first: 0,
                second: 4
            }
        );
        assert_eq!(
            validate_honest_set(5, &[9]).unwrap_err(),
            AdversaryError::HonestIdOutOfRange {
                id: 9,
                participants: 5
            }
        );
        assert_eq!(
            validate_honest_set(5, &[2, 2]).unwrap_err(),
            AdversaryError::DuplicateHonestId { id: 2 }
        );
        assert_eq!(
            validate_honest_set(2, &[0]).unwrap_err(),
            AdversaryError::TooFewParticipants { participants: 2 }
        );
    }

    #[test]
    fn validation_matches_a_brute_force_pairwise_check() {
        fn brute_force_ok(participants: usize, subset: &[usize]) -> bool {
            subset.iter().all(|&a| {
                subset.iter().all(|&b| {
                    a == b || ((a + 1) % participants != b && (b + 1) % participants != a)
                })
            })
        }
        for participants in 3..=8 {
            for mask in 0u32..(1 << participants) {
                let subset: Vec<usize> = (0..participants)
                    .filter(|&id| mask & (1 << id) != 0)
                    .collect();
                let validated = validate_honest_set(participants, &subset).is_ok();
                assert_eq!(
                    validated,
                    brute_force_ok(participants, &subset),
                    "ring of {participants}, honest {subset:?}"
                );
                if validated {
                    assert!(subset.len() <= max_nonadjacent_honest(participants));
                }
            }
        }
    }

    #[test]
    fn largest_valid_honest_sets_match_the_ring_bound() {
        for participants in 3..=10 {
            let mut best = 0;
            for mask in 0u32..(1 << participants) {
                let subset: Vec<usize> = (0..participants)
                    .filter(|&id| mask & (1 << id) != 0)
                    .collect();
                if validate_honest_set(participants, &subset).is_ok() {
                    best = best.max(subset.len());
                }
            }
            assert_eq!(best, max_nonadjacent_honest(participants));
        }
    }

    #[test]
    fn generalized_plan_surrounds_every_honest_target() {
        let desired: BitString = "1011".parse().unwrap();
        let plan = plan_generalized_attack(7, &[4, 0, 2], desired.clone()).unwrap();
        assert_eq!(plan.honest, vec![0, 2, 4]);
        assert_eq!(plan.target_key.as_ref(), Some(&desired));
        assert_eq!(plan.colluders(), vec![1, 3, 5, 6]);
        for &target in &[0usize, 2, 4] {
            let predecessor = (target + 6) % 7;
            let successor = (target + 1) % 7;
            assert!(plan.prepares_all_zero(predecessor), "target {target}");
            assert_eq!(plan.steal_target(successor, predecessor), Some(target));
            assert_eq!(plan.masked_target(predecessor, target), Some(target));
        }
        // no colluder touches a sequence it has no role on
        assert_eq!(plan.steal_target(3, 0), None);
        assert_eq!(plan.masked_target(3, 2), None);
    }

    #[test]
    fn all_but_one_is_the_single_target_plan() {
        let desired: BitString = "01".parse().unwrap();
        let plan = plan_generalized_attack(5, &[4], desired).unwrap();
        assert_eq!(plan.honest, vec![4]);
        assert_eq!(plan.colluders(), vec![0, 1, 2, 3]);
        assert!(plan.prepares_all_zero(3));
        assert_eq!(plan.steal_target(0, 3), Some(4));
        assert_eq!(plan.masked_target(3, 4), Some(4));
    }

    #[test]
    fn privacy_plan_targets_the_middle_participant() {
        let plan = plan_privacy_attack(5).unwrap();
        assert_eq!(plan.honest, vec![1, 3, 4]);
        assert!(plan.prepares_all_zero(0));
        assert_eq!(plan.steal_target(2, 0), Some(1));
        assert_eq!(plan.target_key, None);
        assert!(plan_privacy_attack(2).is_err());
    }

    #[test]
    fn blackboard_is_gated_to_colluders() {
        let mut board = Blackboard::new([0, 2]);
        let key: BitString = "101".parse().unwrap();
        board.post_stolen(2, 1, key.clone());
        assert_eq!(board.stolen(0, 1), Some(&key));
        assert_eq!(board.stolen(2, 3), None);
        board.set_desired_key(0, key.clone());
        assert_eq!(board.desired_key(2), Some(&key));
        assert_eq!(board.reveal_stolen().len(), 1);
    }

    #[test]
    #[should_panic(expected = "not part of the collusion")]
    fn blackboard_rejects_honest_readers() {
        let board = Blackboard::new([0, 2]);
        board.stolen(1, 1);
    }

    #[test]
    fn tap_forwards_collapsed_eigenstates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tap = InterceptResend::new(Basis::Z);
        let mut ones = 0;
        for _ in 0..10_000 {
            let mut state = Basis::X.eigenstate(false);
            tap.tap(&mut state, &mut rng);
            let recorded = *tap.outcomes.last().unwrap();
            assert!(state.equal_up_to_phase(&Basis::Z.eigenstate(recorded), 1e-12));
            if recorded {
                ones += 1;
            }
        }
        assert_eq!(tap.outcomes.len(), 10_000);
        let frequency = ones as f64 / 10_000.0;
        assert!(
            (frequency - 0.5).abs() < 0.02,
            "|+⟩ tapped in Z should split evenly, got {frequency}"
        );
    }

    #[test]
    fn same_basis_tap_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tap = InterceptResend::new(Basis::Y);
        for index in [false, true] {
            let original = Basis::Y.eigenstate(index);
            let mut state = original;
            tap.tap(&mut state, &mut rng);
            assert_eq!(tap.outcomes.last(), Some(&index));
            assert!(state.equal_up_to_phase(&original, 1e-12));
        }
    }
}
