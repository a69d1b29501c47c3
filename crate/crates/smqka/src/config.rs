//! Scenario files: a plain `key = value` format describing one run setup.
//!
//! ```text
//! # five honest participants, one decoy per data particle
//! N = 5
//! n = 64
//! k = 1
//! threshold = 0
//! attack = none
//! seed = 42
//! trials = 100
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Recognised keys:
//!
//! * `N` number of participants on the ring, at least 3 (required)
//! * `n` data bits per sequence, at least 1 (required)
//! * `k` decoys inserted per data particle; a rational written as an
//!   integer, a fraction or a decimal (`1`, `1/2`, `0.25`), with `k * n` a
//!   nonnegative integer (required)
//! * `threshold` decoy error rate above which a hop aborts, in `[0, 1]`
//!   (default 0)
//! * `attack` one of `none`, `privacy`, `fairness_all_but_one`,
//!   `fairness_nonadjacent`, `outside_intercept_resend` (default `none`)
//! * `honest_set` comma-separated participant ids that stay honest; required
//!   for `fairness_nonadjacent` and not allowed elsewhere
//! * `desired_key` `random` or an n-bit string the collusion forces;
//!   fairness attacks only (default `random`)
//! * `tap_basis` `Z`, `X` or `Y`; `outside_intercept_resend` only
//!   (default `Z`)
//! * `seed` master seed for the run, an unsigned 64-bit integer (default 0)
//! * `trials` Monte Carlo trial count, at least 1 (default 1)

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adversary::{validate_honest_set, AttackScenario};
use crate::bits::BitString;
use crate::protocol::decoy_count;
use crate::qubit::Basis;

/// Key the fairness collusion wants every honest participant to end up
/// with, either fixed bits or drawn freshly per trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesiredKey {
    Random,
    Bits(BitString),
}

impl fmt::Display for DesiredKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesiredKey::Random => f.write_str("random"),
            DesiredKey::Bits(bits) => write!(f, "{bits}"),
        }
    }
}

impl FromStr for DesiredKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "random" {
            return Ok(DesiredKey::Random);
        }
        s.parse()
            .map(DesiredKey::Bits)
            .map_err(|err| format!("expected `random` or a bit string ({err})"))
    }
}

impl Serialize for DesiredKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DesiredKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// One run setup: ring size, sequence shape, detection parameters, the
/// configured attack and the Monte Carlo controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of participants on the ring.
    pub participants: usize,
    /// Data bits per sequence, which is also the key length.
    pub n: usize,
    /// Decoys inserted per data particle on every hop.
    #[serde(with = "ratio_serde")]
    pub k: Ratio<i64>,
    /// Detection error rate above which a hop aborts the run.
    pub threshold: f64,
    pub attack: AttackScenario,
    /// Participants that stay honest under `fairness_nonadjacent`.
    pub honest_set: Option<Vec<usize>>,
    /// Key forced by a fairness collusion.
    pub desired_key: Option<DesiredKey>,
    /// Basis the outside eavesdropper measures in.
    pub tap_basis: Basis,
    /// Master seed; trial i runs on stream i of this seed.
    pub seed: u64,
    pub trials: u64,
}

impl ScenarioConfig {
    /// Checks every cross-field invariant. [`parse_config`] runs this on
    /// every parse; run it again after overriding fields programmatically.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.participants < 3 {
            return Err(ConfigError::InvalidValue {
                key: "N",
                message: format!(
                    "need at least three participants, got {}",
                    self.participants
                ),
            });
        }
        if self.n < 1 {
            return Err(ConfigError::InvalidValue {
                key: "n",
                message: "need at least one data bit per sequence".into(),
            });
        }
        decoy_count(self.k, self.n).map_err(|err| ConfigError::InvalidValue {
            key: "k",
            message: err.to_string(),
        })?;
        if !self.threshold.is_finite() || !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::InvalidValue {
                key: "threshold",
                message: format!("must lie in [0, 1], got {}", self.threshold),
            });
        }
        if self.trials < 1 {
            return Err(ConfigError::InvalidValue {
                key: "trials",
                message: "need at least one trial".into(),
            });
        }
        match (&self.honest_set, self.attack) {
            (Some(honest), AttackScenario::FairnessNonadjacent) => {
                if honest.is_empty() {
                    return Err(ConfigError::InvalidValue {
                        key: "honest_set",
                        message: "need at least one honest participant".into(),
                    });
                }
                validate_honest_set(self.participants, honest).map_err(|err| {
                    ConfigError::InvalidValue {
                        key: "honest_set",
                        message: err.to_string(),
                    }
                })?;
            }
            (None, AttackScenario::FairnessNonadjacent) => {
                return Err(ConfigError::MissingKey { key: "honest_set" });
            }
            (Some(_), _) => {
                return Err(ConfigError::InvalidValue {
                    key: "honest_set",
                    message: "only valid for attack = fairness_nonadjacent".into(),
                });
            }
            (None, _) => {}
        }
        if let Some(desired) = &self.desired_key {
            if !self.attack.is_fairness() {
                return Err(ConfigError::InvalidValue {
                    key: "desired_key",
                    message: "only valid for fairness attacks".into(),
                });
            }
            if let DesiredKey::Bits(bits) = desired {
                if bits.len() != self.n {
                    return Err(ConfigError::InvalidValue {
                        key: "desired_key",
                        message: format!("has {} bits, expected n = {}", bits.len(), self.n),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {content:?}")]
    Syntax { line: usize, content: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("{key}: {message}")]
    InvalidValue { key: &'static str, message: String },
    #[error("missing required key {key:?}")]
    MissingKey { key: &'static str },
}

const KEYS: [&str; 10] = [
    "N",
    "n",
    "k",
    "threshold",
    "attack",
    "honest_set",
    "desired_key",
    "tap_basis",
    "seed",
    "trials",
];

/// Parses and validates a scenario document in the format described in the
/// module docs.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut raw: BTreeMap<&str, String> = BTreeMap::new();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                content: trimmed.to_string(),
            });
        };
        let key = key.trim();
        let Some(known) = KEYS.iter().copied().find(|&k| k == key) else {
            return Err(ConfigError::UnknownKey {
                line: line_no,
                key: key.to_string(),
            });
        };
        if raw.insert(known, value.trim().to_string()).is_some() {
            return Err(ConfigError::DuplicateKey {
                line: line_no,
                key: key.to_string(),
            });
        }
    }

    fn required<'a>(
        raw: &'a BTreeMap<&str, String>,
        key: &'static str,
    ) -> Result<&'a str, ConfigError> {
        raw.get(key)
            .map(String::as_str)
            .ok_or(ConfigError::MissingKey { key })
    }
    fn parse<T: FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        value.parse().map_err(|err| ConfigError::InvalidValue {
            key,
            message: format!("cannot parse {value:?}: {err}"),
        })
    }

    let participants = parse("N", required(&raw, "N")?)?;
    let n = parse("n", required(&raw, "n")?)?;
    let k = parse_rational(required(&raw, "k")?).map_err(|err| ConfigError::InvalidValue {
        key: "k",
        message: err.to_string(),
    })?;
    let threshold = match raw.get("threshold") {
        Some(value) => parse("threshold", value)?,
        None => 0.0,
    };
    let attack = match raw.get("attack") {
        Some(value) => parse("attack", value)?,
        None => AttackScenario::None,
    };
    let honest_set = match raw.get("honest_set") {
        Some(value) => Some(parse_id_list("honest_set", value)?),
        None => None,
    };
    let mut desired_key = match raw.get("desired_key") {
        Some(value) => Some(parse("desired_key", value)?),
        None => None,
    };
    if attack.is_fairness() && desired_key.is_none() {
        desired_key = Some(DesiredKey::Random);
    }
    if raw.contains_key("tap_basis") && attack != AttackScenario::OutsideInterceptResend {
        return Err(ConfigError::InvalidValue {
            key: "tap_basis",
            message: "only valid for attack = outside_intercept_resend".into(),
        });
    }
    let tap_basis = match raw.get("tap_basis") {
        Some(value) => parse("tap_basis", value)?,
        None => Basis::Z,
    };
    let seed = match raw.get("seed") {
        Some(value) => parse("seed", value)?,
        None => 0,
    };
    let trials = match raw.get("trials") {
        Some(value) => parse("trials", value)?,
        None => 1,
    };

    let config = ScenarioConfig {
        participants,
        n,
        k,
        threshold,
        attack,
        honest_set,
        desired_key,
        tap_basis,
        seed,
        trials,
    };
    config.validate()?;
    Ok(config)
}

fn parse_id_list(key: &'static str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|err| ConfigError::InvalidValue {
                    key,
                    message: format!("cannot parse id {:?}: {err}", part.trim()),
                })
        })
        .collect()
}

/// Renders a config back into the file format; `parse_config` accepts the
/// result and reproduces an equal config.
pub fn serialize_config(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("N = {}\n", config.participants));
    out.push_str(&format!("n = {}\n", config.n));
    out.push_str(&format!("k = {}\n", config.k));
    out.push_str(&format!("threshold = {}\n", config.threshold));
    out.push_str(&format!("attack = {}\n", config.attack));
    if let Some(honest) = &config.honest_set {
        let ids: Vec<String> = honest.iter().map(|id| id.to_string()).collect();
        out.push_str(&format!("honest_set = {}\n", ids.join(",")));
    }
    if let Some(desired) = &config.desired_key {
        out.push_str(&format!("desired_key = {desired}\n"));
    }
    if config.attack == AttackScenario::OutsideInterceptResend {
        out.push_str(&format!("tap_basis = {}\n", config.tap_basis));
    }
    out.push_str(&format!("seed = {}\n", config.seed));
    out.push_str(&format!("trials = {}\n", config.trials));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct RationalParseError(String);

/// Parses an exact rational from integer (`2`), fraction (`3/4`) or decimal
/// (`0.25`) notation.
pub fn parse_rational(text: &str) -> Result<Ratio<i64>, RationalParseError> {
    let text = text.trim();
    let bad = |message: &str| RationalParseError(format!("{message} in {text:?}"));
    if let Some((numer, denom)) = text.split_once('/') {
        let numer: i64 = numer.trim().parse().map_err(|_| bad("invalid numerator"))?;
        let denom: i64 = denom
            .trim()
            .parse()
            .map_err(|_| bad("invalid denominator"))?;
        if denom == 0 {
            return Err(bad("zero denominator"));
        }
        return Ok(Ratio::new(numer, denom));
    }
    let (sign, digits) = match text.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, text),
    };
    if let Some((int_part, frac_part)) = digits.split_once('.') {
        if int_part.is_empty() || frac_part.is_empty() {
            return Err(bad("incomplete decimal"));
        }
        if frac_part.len() > 18 {
            return Err(bad("too many decimal places"));
        }
        let int_value: i64 = int_part.parse().map_err(|_| bad("invalid integer part"))?;
        let frac_value: i64 = frac_part
            .parse()
            .map_err(|_| bad("invalid fractional part"))?;
        let denom = 10i64
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(|| bad("too many decimal places"))?;
        let numer = int_value
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac_value))
            .ok_or_else(|| bad("value out of range"))?;
        return Ok(Ratio::new(sign * numer, denom));
    }
    let value: i64 = digits.parse().map_err(|_| bad("invalid integer"))?;
    Ok(Ratio::from_integer(sign * value))
}

/// Serde adapter rendering rationals in the same notation the scenario
/// files use.
pub mod ratio_serde {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Ratio<i64>, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Ratio<i64>, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}
