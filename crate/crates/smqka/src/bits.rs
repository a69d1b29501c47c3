//! Classical bit strings.
//!
//! Sub-secret keys, encoding choices and extracted keys are all bit strings
//! of a common length n, combined with bitwise XOR.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Fixed-length string of classical bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        BitString(bits)
    }

    /// All-zero string of length `n`.
    pub fn zeros(n: usize) -> Self {
        BitString(vec![false; n])
    }

    /// Uniformly random string of length `n` drawn from `rng`.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        BitString((0..n).map(|_| rng.gen::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// Bitwise XOR with `other`. Panics if the lengths differ; callers that
    /// face untrusted lengths should check them first.
    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(
            self.len(),
            other.len(),
            "xor of bit strings with different lengths"
        );
        BitString(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a ^ b)
                .collect(),
        )
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        BitString(bits)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in &self.0 {
            f.write_str(if *bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitStringError {
    #[error("empty bit string")]
    Empty,
    #[error("invalid bit character {found:?} at position {position}")]
    InvalidCharacter { found: char, position: usize },
}

impl FromStr for BitString {
    type Err = BitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(BitStringError::Empty);
        }
        s.chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                found => Err(BitStringError::InvalidCharacter { found, position }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xor_combines_bitwise() {
        let a: BitString = "1010".parse().unwrap();
        let b: BitString = "1100".parse().unwrap();
        assert_eq!(a.xor(&b).to_string(), "0110");
    }

    #[test]
    fn xor_with_self_is_zero() {
        let a: BitString = "10110".parse().unwrap();
        assert_eq!(a.xor(&a), BitString::zeros(5));
    }

    #[test]
    #[should_panic(expected = "different lengths")]
    fn xor_rejects_length_mismatch() {
        let a: BitString = "101".parse().unwrap();
        let b: BitString = "10".parse().unwrap();
        let _ = a.xor(&b);
    }

    #[test]
    fn parse_round_trips_display() {
        let a: BitString = "0100111".parse().unwrap();
        assert_eq!(a.to_string().parse::<BitString>().unwrap(), a);
    }

    #[test]
    fn parse_rejects_bad_characters() {
        let err = "01a1".parse::<BitString>().unwrap_err();
        assert_eq!(
            err,
            BitStringError::InvalidCharacter {
                found: 'a',
                position: 2
            }
        );
        assert_eq!("".parse::<BitString>().unwrap_err(), BitStringError::Empty);
    }

    #[test]
    fn random_is_seed_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            BitString::random(64, &mut r1),
            BitString::random(64, &mut r2)
        );
    }
}
