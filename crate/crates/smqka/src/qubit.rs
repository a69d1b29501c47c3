//! Single-qubit pure states, preparation bases and projective measurement.
//!
//! Everything the protocol touches is a single particle: data particles are
//! prepared in the computational basis, decoy particles in one of the two
//! conjugate bases. States are immutable value types, and every operation
//! that needs randomness takes an explicit generator so runs stay
//! reproducible. Global phase is deliberately not tracked as meaningful;
//! comparisons go through [`PureState::equal_up_to_phase`].

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Complex amplitude of a basis component.
pub type Amplitude = Complex64;

/// Numeric tolerance for normalization and phase comparisons.
pub const STATE_TOLERANCE: f64 = 1e-9;

/// Measurement basis of a single qubit.
///
/// `Z` is the computational basis holding data bits, `X` and `Y` are the
/// conjugate bases the decoy particles are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
    Y,
}

impl Basis {
    /// The two bases decoy particles are prepared in.
    pub const DECOY: [Basis; 2] = [Basis::X, Basis::Y];

    /// Eigenstate of this basis selected by `index` (`false` picks the first
    /// eigenstate, `true` the second).
    ///
    /// The eigenstates are |0>, |1> for Z, (|0> +/- |1>)/sqrt(2) for X and
    /// (|0> +/- i|1>)/sqrt(2) for Y.
    pub fn eigenstate(self, index: bool) -> PureState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (amp0, amp1) = match (self, index) {
            (Basis::Z, false) => (Amplitude::new(1.0, 0.0), Amplitude::new(0.0, 0.0)),
            (Basis::Z, true) => (Amplitude::new(0.0, 0.0), Amplitude::new(1.0, 0.0)),
            (Basis::X, false) => (Amplitude::new(s, 0.0), Amplitude::new(s, 0.0)),
            (Basis::X, true) => (Amplitude::new(s, 0.0), Amplitude::new(-s, 0.0)),
            (Basis::Y, false) => (Amplitude::new(s, 0.0), Amplitude::new(0.0, s)),
            (Basis::Y, true) => (Amplitude::new(s, 0.0), Amplitude::new(0.0, -s)),
        };
        PureState { amp0, amp1 }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
            Basis::Y => "Y",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown basis {0:?}, expected Z, X or Y")]
pub struct ParseBasisError(String);

impl FromStr for Basis {
    type Err = ParseBasisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            "Y" | "y" => Ok(Basis::Y),
            other => Err(ParseBasisError(other.to_string())),
        }
    }
}

/// Normalized single-qubit state `amp0 |0> + amp1 |1>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    pub amp0: Amplitude,
    pub amp1: Amplitude,
}

impl PureState {
    /// Builds a state from raw amplitudes. Panics on non-finite components;
    /// normalization is the caller's responsibility and can be checked with
    /// [`PureState::is_normalized`].
    pub fn new(amp0: Amplitude, amp1: Amplitude) -> Self {
        assert!(
            amp0.re.is_finite()
                && amp0.im.is_finite()
                && amp1.re.is_finite()
                && amp1.im.is_finite(),
            "state amplitudes must be finite"
        );
        PureState { amp0, amp1 }
    }

    /// Inner product `<self|other>` (conjugate-linear in `self`).
    pub fn overlap(&self, other: &PureState) -> Complex64 {
        self.amp0.conj() * other.amp0 + self.amp1.conj() * other.amp1
    }

    /// Squared norm `|amp0|^2 + |amp1|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.amp0.norm_sqr() + self.amp1.norm_sqr()
    }

    /// True when the squared norm is within `tol` of one.
    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    /// Applies the key-bit encoding: bit 0 leaves the state alone, bit 1
    /// applies the flip `(amp0, amp1) -> (amp1, -amp0)`, which exchanges the
    /// computational basis states up to sign.
    pub fn apply_encoding(self, bit: bool) -> PureState {
        if bit {
            PureState {
                amp0: self.amp1,
                amp1: -self.amp0,
            }
        } else {
            self
        }
    }

    /// Projective measurement in `basis`, sampling the outcome from the Born
    /// rule with `rng`. The state collapses to the selected eigenstate
    /// exactly, so a relative phase accumulated before the measurement is
    /// not carried along.
    pub fn measure(&self, basis: Basis, rng: &mut impl Rng) -> MeasurementOutcome {
        let p0 = basis.eigenstate(false).overlap(self).norm_sqr();
        let index = rng.gen::<f64>() >= p0;
        MeasurementOutcome {
            index,
            collapsed: basis.eigenstate(index),
        }
    }

    /// True when the states differ by at most a global phase:
    /// `|<self|other>| >= 1 - tol`.
    pub fn equal_up_to_phase(&self, other: &PureState, tol: f64) -> bool {
        self.overlap(other).norm() >= 1.0 - tol
    }
}

/// Result of a projective measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    /// Which eigenstate was observed (`false` for the first, `true` for the
    /// second).
    pub index: bool,
    /// Post-measurement state, exactly the selected eigenstate.
    pub collapsed: PureState,
}
