//! Sequence preparation, hop-by-hop detection and the ring protocol engine.
//!
//! N participants sit on a ring, each holding an n-bit sub-secret key, and
//! agree on the XOR of all sub-secret keys. Every participant prepares a
//! sequence of n data particles, each uniformly |0⟩ or |1⟩, and the N
//! sequences travel the ring in lockstep rounds: in round r the sequence
//! owned by participant i moves from participant (i + r - 1) mod N to
//! participant (i + r) mod N. On every hop the sender protects the data
//! with freshly drawn conjugate-basis decoys at random positions; the
//! receiver first runs eavesdropping detection on those decoys with the
//! sender and the run aborts if the observed error rate exceeds the
//! threshold. On intermediate hops the receiver then encodes its sub-secret
//! key onto the data particles, flipping each computational state for a 1
//! bit, and inserts fresh decoys for the next hop. After N - 1 rounds every
//! sequence sits one hop before its owner; the final round returns it, a
//! last detection runs, and the owner measures the data particles to read
//! the travelled encodings and XORs its own sub-secret key on top.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::Zero;
use rand::Rng;

use crate::adversary::{
    fairness_mask, plan_generalized_attack, plan_privacy_attack, privacy_attack_extract,
    privacy_attack_prepare, AdversaryError, AttackPlan, AttackScenario, Blackboard,
    InterceptResend,
};
use crate::bits::BitString;
use crate::config::{ConfigError, DesiredKey, ScenarioConfig};
use crate::qubit::{Basis, PureState};

pub type ParticipantId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Data,
    Decoy,
}

/// How one particle was prepared, known only to whoever prepared it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepRecord {
    pub basis: Basis,
    pub index: bool,
}

/// One particle position in a travelling sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSlot {
    pub kind: SlotKind,
    pub state: PureState,
    pub prep: PrepRecord,
}

/// A particle sequence on its way between two ring neighbours.
#[derive(Debug, Clone)]
pub struct SequenceInTransit {
    /// Participant whose key agreement this sequence serves.
    pub owner: ParticipantId,
    /// Participant that inserted the current decoys and sent the sequence.
    pub hop_sender: ParticipantId,
    pub slots: Vec<ParticleSlot>,
    /// Positions of the decoys among `slots`, ascending.
    pub decoy_positions: Vec<usize>,
}

/// Outcome of the decoy comparison on one hop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionRecord {
    pub sender: ParticipantId,
    pub receiver: ParticipantId,
    pub decoys_checked: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Honest,
    Colluding,
}

/// Per-participant view of the run.
#[derive(Debug, Clone)]
pub struct ParticipantState {
    pub id: ParticipantId,
    pub subkey: BitString,
    pub strategy: Strategy,
    /// Computational-basis indices this participant prepared its own data
    /// particles in; needed to read the travelled encodings at the end.
    pub prep_log: Option<BitString>,
    pub extracted_key: Option<BitString>,
}

impl ParticipantState {
    pub fn new(id: ParticipantId, subkey: BitString) -> Self {
        ParticipantState {
            id,
            subkey,
            strategy: Strategy::Honest,
            prep_log: None,
            extracted_key: None,
        }
    }
}

/// One encoding applied to a sequence, as the engine logged it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingEvent {
    pub sequence_owner: ParticipantId,
    pub round: usize,
    pub encoder: ParticipantId,
    pub bits: BitString,
}

/// Everything observable about one protocol run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub subkeys: Vec<BitString>,
    /// Key a fairness collusion tried to force, drawn or fixed per run.
    pub desired_key: Option<BitString>,
    /// Sub-secret keys the collusion stole, by target id.
    pub stolen_keys: BTreeMap<ParticipantId, BitString>,
    /// Final keys by participant id; `None` when the run aborted.
    pub final_keys: Option<Vec<BitString>>,
    pub detections: Vec<DetectionRecord>,
    /// Index into `detections` of the failing record, when aborted.
    pub failed_detection: Option<usize>,
    pub aborted: bool,
    /// Scenario-specific outcome flags: `privacy` (target sub-key
    /// recovered), `fairness` (every honest participant got the desired
    /// key), `intercept_escaped` (tapped run finished without an alarm).
    pub attack_flags: BTreeMap<String, bool>,
    pub encoding_log: Vec<EncodingEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("a sequence needs at least one data particle")]
    EmptySequence,
    #[error("decoy count k*n = {k}*{n} is not a nonnegative integer")]
    FractionalDecoyCount { k: Ratio<i64>, n: usize },
    #[error("length mismatch: sequence has {expected} data particles, got {got} bits")]
    LengthMismatch { expected: usize, got: usize },
    #[error("participant {participant} has no preparation log to read encodings against")]
    MissingPrepLog { participant: ParticipantId },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

/// Number of decoys per hop, `k * n`, which must be a nonnegative integer.
pub fn decoy_count(k: Ratio<i64>, n: usize) -> Result<usize, ProtocolError> {
    let total = k * Ratio::from_integer(n as i64);
    if k < Ratio::zero() || !total.is_integer() {
        return Err(ProtocolError::FractionalDecoyCount { k, n });
    }
    Ok(total.to_integer() as usize)
}

pub(crate) fn data_slots(indices: &BitString) -> Vec<ParticleSlot> {
    indices
        .iter()
        .map(|index| ParticleSlot {
            kind: SlotKind::Data,
            state: Basis::Z.eigenstate(index),
            prep: PrepRecord {
                basis: Basis::Z,
                index,
            },
        })
        .collect()
}

/// Draws the n data particles of `participant`'s own sequence, each
/// uniformly |0⟩ or |1⟩, and stores the drawn indices in the participant's
/// preparation log.
pub fn init_sequence(
    participant: &mut ParticipantState,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ParticleSlot>, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::EmptySequence);
    }
    let indices = BitString::random(n, rng);
    let slots = data_slots(&indices);
    participant.prep_log = Some(indices);
    Ok(slots)
}

/// Shields `data` with `k * n` freshly drawn decoys, each uniformly one of
/// the four conjugate-basis eigenstates, at uniformly random distinct
/// positions. The returned sequence is in transit from `hop_sender` to its
/// ring successor.
pub fn insert_decoys(
    data: Vec<ParticleSlot>,
    owner: ParticipantId,
    hop_sender: ParticipantId,
    k: Ratio<i64>,
    rng: &mut impl Rng,
) -> Result<SequenceInTransit, ProtocolError> {
    let n = data.len();
    if n == 0 {
        return Err(ProtocolError::EmptySequence);
    }
    let decoys = decoy_count(k, n)?;
    let total = n + decoys;
    let mut positions = rand::seq::index::sample(rng, total, decoys).into_vec();
    positions.sort_unstable();
    let mut slots = Vec::with_capacity(total);
    let mut data_iter = data.into_iter();
    let mut next_decoy = positions.iter().copied().peekable();
    for slot_index in 0..total {
        if next_decoy.peek() == Some(&slot_index) {
            next_decoy.next();
            let basis = Basis::DECOY[rng.gen_range(0..2)];
            let index = rng.gen::<bool>();
            slots.push(ParticleSlot {
                kind: SlotKind::Decoy,
                state: basis.eigenstate(index),
                prep: PrepRecord { basis, index },
            });
        } else {
            slots.push(
                data_iter
                    .next()
                    .expect("one data slot per non-decoy position"),
            );
        }
    }
    Ok(SequenceInTransit {
        owner,
        hop_sender,
        slots,
        decoy_positions: positions,
    })
}

/// Runs the decoy comparison for the hop ending at `receiver`.
///
/// The classical exchange is simulated directly: the sender announces the
/// decoy positions and bases, the receiver measures each announced decoy in
/// its announced basis and reports the outcome, and the sender counts
/// outcomes that differ from its preparation records. The decoys are
/// consumed; afterwards the sequence holds only the data particles. The hop
/// passes when the observed error rate is at most `threshold`; with no
/// decoys to check the error rate is zero.
pub fn run_detection(
    seq: &mut SequenceInTransit,
    receiver: ParticipantId,
    threshold: f64,
    rng: &mut impl Rng,
) -> DetectionRecord {
    let mut errors = 0;
    for &position in &seq.decoy_positions {
        let slot = &mut seq.slots[position];
        debug_assert_eq!(slot.kind, SlotKind::Decoy);
        let outcome = slot.state.measure(slot.prep.basis, rng);
        slot.state = outcome.collapsed;
        if outcome.index != slot.prep.index {
            errors += 1;
        }
    }
    let checked = seq.decoy_positions.len();
    let error_rate = if checked == 0 {
        0.0
    } else {
        errors as f64 / checked as f64
    };
    seq.slots.retain(|slot| slot.kind == SlotKind::Data);
    seq.decoy_positions.clear();
    DetectionRecord {
        sender: seq.hop_sender,
        receiver,
        decoys_checked: checked,
        errors,
        error_rate,
        passed: error_rate <= threshold,
    }
}

/// Applies `bits` to the data particles, one flip-or-identity per particle.
/// The decoys must already be consumed so that positions line up.
pub fn encode_sequence(seq: &mut SequenceInTransit, bits: &BitString) -> Result<(), ProtocolError> {
    if seq.slots.len() != bits.len() {
        return Err(ProtocolError::LengthMismatch {
            expected: seq.slots.len(),
            got: bits.len(),
        });
    }
    for (slot, bit) in seq.slots.iter_mut().zip(bits.iter()) {
        slot.state = slot.state.apply_encoding(bit);
    }
    Ok(())
}

/// Final step for the sequence owner: measures every returned data particle
/// in the computational basis, reads the travelled encodings by comparing
/// against the preparation log, and XORs the own sub-secret key on top.
pub fn extract_key(
    owner: &ParticipantState,
    seq: &SequenceInTransit,
    rng: &mut impl Rng,
) -> Result<BitString, ProtocolError> {
    let log = owner
        .prep_log
        .as_ref()
        .ok_or(ProtocolError::MissingPrepLog {
            participant: owner.id,
        })?;
    if seq.slots.len() != log.len() {
        return Err(ProtocolError::LengthMismatch {
            expected: log.len(),
            got: seq.slots.len(),
        });
    }
    let travelled: Vec<bool> = seq
        .slots
        .iter()
        .zip(log.iter())
        .map(|(slot, prepared)| slot.state.measure(Basis::Z, rng).index != prepared)
        .collect();
    Ok(owner.subkey.xor(&BitString::new(travelled)))
}

/// Runs one full protocol instance under the configured attack scenario.
///
/// The random stream drives, in order: sub-secret keys, the desired key of
/// a fairness collusion if any, sequence preparation, and then every
/// quantum draw hop by hop. Reusing a seed reproduces the run exactly.
pub fn run_protocol(config: &ScenarioConfig, rng: &mut impl Rng) -> Result<RunReport, RunError> {
    config.validate()?;
    let mut run = Run::new(config, rng)?;
    run.execute(rng)
}

struct Run<'c> {
    config: &'c ScenarioConfig,
    count: usize,
    n: usize,
    scenario: AttackScenario,
    plan: Option<AttackPlan>,
    blackboard: Option<Blackboard>,
    desired_key: Option<BitString>,
    participants: Vec<ParticipantState>,
    sequences: Vec<SequenceInTransit>,
    detections: Vec<DetectionRecord>,
    encoding_log: Vec<EncodingEvent>,
}

impl<'c> Run<'c> {
    fn new(config: &'c ScenarioConfig, rng: &mut impl Rng) -> Result<Self, RunError> {
        let count = config.participants;
        let n = config.n;
        let mut participants: Vec<ParticipantState> = (0..count)
            .map(|id| ParticipantState::new(id, BitString::random(n, rng)))
            .collect();

        let desired_key = if config.attack.is_fairness() {
            Some(match &config.desired_key {
                Some(DesiredKey::Bits(bits)) => bits.clone(),
                _ => BitString::random(n, rng),
            })
        } else {
            None
        };

        let plan = match config.attack {
            AttackScenario::Privacy => Some(plan_privacy_attack(count)?),
            AttackScenario::FairnessAllButOne => Some(plan_generalized_attack(
                count,
                &[count - 1],
                desired_key.clone().expect("fairness draws a desired key"),
            )?),
            AttackScenario::FairnessNonadjacent => Some(plan_generalized_attack(
                count,
                config
                    .honest_set
                    .as_ref()
                    .expect("validation requires an honest set"),
                desired_key.clone().expect("fairness draws a desired key"),
            )?),
            _ => None,
        };

        let blackboard = plan.as_ref().map(|plan| {
            let colluders = plan.colluders();
            let speaker = colluders[0];
            let mut board = Blackboard::new(colluders);
            if let Some(desired) = &desired_key {
                board.set_desired_key(speaker, desired.clone());
            }
            board
        });

        if let Some(plan) = &plan {
            for participant in &mut participants {
                if !plan.is_honest(participant.id) {
                    participant.strategy = Strategy::Colluding;
                }
            }
        }

        let mut sequences = Vec::with_capacity(count);
        for (id, participant) in participants.iter_mut().enumerate() {
            let data = if plan.as_ref().is_some_and(|plan| plan.prepares_all_zero(id)) {
                participant.prep_log = Some(BitString::zeros(n));
                privacy_attack_prepare(n)
            } else {
                init_sequence(participant, n, rng)?
            };
            sequences.push(insert_decoys(data, id, id, config.k, rng)?);
        }

        Ok(Run {
            config,
            count,
            n,
            scenario: config.attack,
            plan,
            blackboard,
            desired_key,
            participants,
            sequences,
            detections: Vec::new(),
            encoding_log: Vec::new(),
        })
    }

    fn execute(&mut self, rng: &mut impl Rng) -> Result<RunReport, RunError> {
        for round in 1..=self.count {
            // transit, detection and any attack read-outs
            for owner in 0..self.count {
                let receiver = (owner + round) % self.count;
                {
                    let seq = &mut self.sequences[owner];
                    debug_assert_eq!(seq.hop_sender, (owner + round - 1) % self.count);
                    if self.scenario == AttackScenario::OutsideInterceptResend
                        && owner == 0
                        && round == 1
                    {
                        let mut tap = InterceptResend::new(self.config.tap_basis);
                        for slot in &mut seq.slots {
                            tap.tap(&mut slot.state, rng);
                        }
                    }
                    let record = run_detection(seq, receiver, self.config.threshold, rng);
                    let passed = record.passed;
                    self.detections.push(record);
                    if !passed {
                        return Ok(self.abort());
                    }
                    debug_assert_eq!(seq.slots.len(), self.n);
                }
                if round < self.count {
                    self.maybe_steal(owner, receiver, rng)?;
                } else {
                    debug_assert_eq!(receiver, owner);
                    let key = extract_key(&self.participants[owner], &self.sequences[owner], rng)?;
                    self.participants[owner].extracted_key = Some(key);
                }
            }
            // encoding and fresh decoys for the next hop
            if round < self.count {
                for owner in 0..self.count {
                    let receiver = (owner + round) % self.count;
                    let bits = self.encoding_bits(owner, round, receiver);
                    let seq = &mut self.sequences[owner];
                    encode_sequence(seq, &bits)?;
                    let data = std::mem::take(&mut seq.slots);
                    self.sequences[owner] =
                        insert_decoys(data, owner, receiver, self.config.k, rng)?;
                    self.encoding_log.push(EncodingEvent {
                        sequence_owner: owner,
                        round,
                        encoder: receiver,
                        bits,
                    });
                }
            }
        }
        Ok(self.finish())
    }

    /// Reads a just-encoded all-|0⟩ sequence if the plan stations the
    /// receiver as the reader here. The data particles are computational
    /// basis states, so the measurement is invisible to every later hop.
    fn maybe_steal(
        &mut self,
        owner: ParticipantId,
        receiver: ParticipantId,
        rng: &mut impl Rng,
    ) -> Result<(), RunError> {
        let Some(target) = self
            .plan
            .as_ref()
            .and_then(|plan| plan.steal_target(receiver, owner))
        else {
            return Ok(());
        };
        let seq = &mut self.sequences[owner];
        let outcomes: Vec<bool> = seq
            .slots
            .iter_mut()
            .map(|slot| {
                let outcome = slot.state.measure(Basis::Z, rng);
                slot.state = outcome.collapsed;
                outcome.index
            })
            .collect();
        let stolen = privacy_attack_extract(&outcomes, self.n)?;
        self.blackboard
            .as_mut()
            .expect("plans come with a blackboard")
            .post_stolen(receiver, target, stolen);
        Ok(())
    }

    /// Bits `receiver` encodes onto the sequence owned by `owner` in this
    /// round. Honest participants and every participant outside a fairness
    /// collusion encode their sub-secret key. Fairness colluders treat
    /// honest-owned sequences specially: no net encoding, except that the
    /// successor of an honest encoder re-applies that participant's stolen
    /// sub-key to cancel it, and the owner's predecessor encodes the
    /// desired key masked with the owner's stolen sub-key on the final
    /// inbound hop.
    fn encoding_bits(
        &self,
        owner: ParticipantId,
        round: usize,
        receiver: ParticipantId,
    ) -> BitString {
        let honest_bits = || self.participants[receiver].subkey.clone();
        if !self.scenario.is_fairness() {
            return honest_bits();
        }
        let plan = self.plan.as_ref().expect("fairness scenarios carry a plan");
        if plan.is_honest(receiver) || !plan.is_honest(owner) {
            return honest_bits();
        }
        let board = self
            .blackboard
            .as_ref()
            .expect("plans come with a blackboard");
        let mut bits = BitString::zeros(self.n);
        let sender = (owner + round - 1) % self.count;
        if plan.is_honest(sender) && sender != owner {
            let stolen = board
                .stolen(receiver, sender)
                .expect("an honest encoding is cancelled only after its key was stolen");
            // re-applying the same bits flips each state back, up to a
            // global phase
            bits = bits.xor(stolen);
        }
        if let Some(target) = plan.masked_target(receiver, owner) {
            debug_assert_eq!(target, owner);
            debug_assert_eq!(round, self.count - 1);
            let stolen = board
                .stolen(receiver, target)
                .expect("the masked encoding needs the stolen sub-key first");
            let desired = board
                .desired_key(receiver)
                .expect("a fairness collusion fixes a desired key");
            let mask = fairness_mask(stolen, desired)
                .expect("stolen and desired keys share the sequence length");
            bits = bits.xor(&mask);
        }
        bits
    }

    fn attack_flags(&self, completed: bool) -> BTreeMap<String, bool> {
        let mut flags = BTreeMap::new();
        match self.scenario {
            AttackScenario::None => {}
            AttackScenario::Privacy => {
                let recovered = completed
                    && self
                        .blackboard
                        .as_ref()
                        .and_then(|board| board.reveal_stolen().get(&1))
                        == Some(&self.participants[1].subkey);
                flags.insert("privacy".into(), recovered);
            }
            AttackScenario::FairnessAllButOne | AttackScenario::FairnessNonadjacent => {
                let plan = self.plan.as_ref().expect("fairness scenarios carry a plan");
                let desired = self
                    .desired_key
                    .as_ref()
                    .expect("fairness draws a desired key");
                let forced = completed
                    && plan
                        .honest
                        .iter()
                        .all(|&id| self.participants[id].extracted_key.as_ref() == Some(desired));
                flags.insert("fairness".into(), forced);
            }
            AttackScenario::OutsideInterceptResend => {
                flags.insert("intercept_escaped".into(), completed);
            }
        }
        flags
    }

    fn report(
        &self,
        final_keys: Option<Vec<BitString>>,
        failed_detection: Option<usize>,
    ) -> RunReport {
        RunReport {
            config: self.config.clone(),
            subkeys: self
                .participants
                .iter()
                .map(|participant| participant.subkey.clone())
                .collect(),
            desired_key: self.desired_key.clone(),
            stolen_keys: self
                .blackboard
                .as_ref()
                .map(|board| board.reveal_stolen().clone())
                .unwrap_or_default(),
            aborted: final_keys.is_none(),
            attack_flags: self.attack_flags(final_keys.is_some()),
            final_keys,
            detections: self.detections.clone(),
            failed_detection,
            encoding_log: self.encoding_log.clone(),
        }
    }

    fn abort(&self) -> RunReport {
        self.report(None, Some(self.detections.len() - 1))
    }

    fn finish(&self) -> RunReport {
        let final_keys = self
            .participants
            .iter()
            .map(|participant| {
                participant
                    .extracted_key
                    .clone()
                    .expect("a completed run extracts every key")
            })
            .collect();
        self.report(Some(final_keys), None)
    }
}
