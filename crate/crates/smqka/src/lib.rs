//! Simulation and cryptanalysis of a travelling-mode multiparty quantum key
//! agreement protocol built on single particles.
//!
//! N participants sit on a ring. Each one holds an n-bit sub-secret key and
//! circulates a sequence of single particles through every other participant.
//! Receivers encode their sub-secret keys onto the data particles with the
//! identity or the flip operation, and decoy particles guard every hop
//! against eavesdropping. When a sequence returns to its owner, measuring it
//! in the computational basis recovers the XOR of everyone else's sub-secret
//! key, so all participants end up with the same agreed key.
//!
//! Besides honest runs, the crate models the attacks that break the protocol:
//! a dishonest pair can read a participant's sub-secret key without touching
//! any decoy (privacy attack), and a collusion of dishonest participants can
//! force the final key onto the honest minority (fairness attacks). An
//! outside intercept-resend eavesdropper is modelled too, together with the
//! detection statistics that catch it.
//!
//! Module map:
//! * [`qubit`] single-qubit states, bases, encoding and measurement
//! * [`bits`] classical bit strings combined with XOR
//! * [`protocol`] sequences, hop detection and the full protocol engine
//! * [`adversary`] attack plans, the collusion blackboard and channel taps
//! * [`analysis`] oracles, efficiency figures and Monte Carlo aggregation
//! * [`config`] scenario files and their validation
//! * [`report`] line-delimited report documents

pub mod adversary;
pub mod analysis;
pub mod bits;
pub mod config;
pub mod protocol;
pub mod qubit;
pub mod report;

pub use bits::BitString;
pub use qubit::{Basis, MeasurementOutcome, PureState};
