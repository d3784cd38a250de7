//! Simulation scenarios: the full description of one run.
//!
//! A scenario fixes the processor count, the fault bound, the ground-truth
//! faulty set, every processor's input value, the adversary strategy and the
//! seed. Scenario files are TOML (flat keys plus an `[inputs]` section) or
//! JSON with the same field names.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {err}")]
    Io { path: String, err: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Adversary strategy selector. Every strategy only ever controls processors
/// in the scenario's faulty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Faulty processors follow the protocol exactly.
    Honest,
    /// Faulty processors never send anything.
    Silent,
    /// Send different symbols to different peers during the value exchange.
    EquivocateMatching,
    /// Announce a detected inconsistency even when the received symbols are
    /// consistent.
    FalseDetect,
    /// Lie inside broadcast instances.
    CorruptBsb,
    /// Seeded random misbehavior at every opportunity.
    Randomized,
    /// Misbehave every generation until isolated.
    Persistent,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Honest,
        Strategy::Silent,
        Strategy::EquivocateMatching,
        Strategy::FalseDetect,
        Strategy::CorruptBsb,
        Strategy::Randomized,
        Strategy::Persistent,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Honest => "honest",
            Strategy::Silent => "silent",
            Strategy::EquivocateMatching => "equivocate_matching",
            Strategy::FalseDetect => "false_detect",
            Strategy::CorruptBsb => "corrupt_bsb",
            Strategy::Randomized => "randomized",
            Strategy::Persistent => "persistent",
        }
    }

    pub fn parse(name: &str) -> Option<Strategy> {
        Strategy::ALL.iter().copied().find(|s| s.name() == name)
    }
}

/// How per-processor inputs are produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputSpec {
    /// Every processor holds the same value.
    AllSame { hex: String },
    /// Explicit per-processor hex values.
    Explicit { values: Vec<String> },
    /// The first half of the processors hold `hex_a`, the rest `hex_b`.
    Split { hex_a: String, hex_b: String },
    /// Independent per-processor values drawn from `seed`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub t: usize,
    /// Value length in bits.
    pub l_bits: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub faulty: Vec<usize>,
    pub strategy: Strategy,
    pub inputs: InputSpec,
    /// Optional override for the per-generation bit count; must be a
    /// positive multiple of (n - 2t) * c.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_bits: Option<usize>,
    /// Free-form scenario name used in reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n < 4 {
            return Err(ScenarioError::Invalid(format!("n must be at least 4, got {}", self.n)));
        }
        if 3 * self.t >= self.n {
            return Err(ScenarioError::Invalid(format!(
                "the fault bound requires 3t < n, got n={} t={}",
                self.n, self.t
            )));
        }
        if self.l_bits == 0 {
            return Err(ScenarioError::Invalid("l_bits must be positive".into()));
        }
        if self.faulty.len() > self.t {
            return Err(ScenarioError::Invalid(format!(
                "faulty set has {} processors but t={}",
                self.faulty.len(),
                self.t
            )));
        }
        let mut seen = vec![false; self.n];
        for &f in &self.faulty {
            if f >= self.n {
                return Err(ScenarioError::Invalid(format!("faulty id {f} out of range (n={})", self.n)));
            }
            if seen[f] {
                return Err(ScenarioError::Invalid(format!("duplicate faulty id {f}")));
            }
            seen[f] = true;
        }
        if let InputSpec::Explicit { values } = &self.inputs {
            if values.len() != self.n {
                return Err(ScenarioError::Invalid(format!(
                    "explicit inputs list {} values for {} processors",
                    values.len(),
                    self.n
                )));
            }
        }
        // materialization also validates hex strings
        self.materialize_inputs().map(|_| ())
    }

    /// Produces the concrete L-bit input value of every processor.
    pub fn materialize_inputs(&self) -> Result<Vec<Bits>, ScenarioError> {
        let l = self.l_bits;
        let hex_err = |e| ScenarioError::Invalid(format!("bad input value: {e}"));
        match &self.inputs {
            InputSpec::AllSame { hex } => {
                let v = Bits::from_hex(hex, l).map_err(hex_err)?;
                Ok(vec![v; self.n])
            }
            InputSpec::Explicit { values } => {
                if values.len() != self.n {
                    return Err(ScenarioError::Invalid(format!(
                        "explicit inputs list {} values for {} processors",
                        values.len(),
                        self.n
                    )));
                }
                values.iter().map(|h| Bits::from_hex(h, l).map_err(hex_err)).collect()
            }
            InputSpec::Split { hex_a, hex_b } => {
                let a = Bits::from_hex(hex_a, l).map_err(hex_err)?;
                let b = Bits::from_hex(hex_b, l).map_err(hex_err)?;
                Ok((0..self.n).map(|i| if i < self.n / 2 { a.clone() } else { b.clone() }).collect())
            }
            InputSpec::Random { seed } => {
                use rand::{Rng, SeedableRng};
                use rand_chacha::ChaCha12Rng;
                let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                Ok((0..self.n)
                    .map(|_| {
                        let mut v = Bits::zeros(l);
                        for i in 0..l {
                            v.set(i, rng.gen());
                        }
                        v
                    })
                    .collect())
            }
        }
    }

    pub fn display_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!(
                "n{}t{}L{}-{}-seed{}",
                self.n,
                self.t,
                self.l_bits,
                self.strategy.name(),
                self.seed
            ),
        }
    }

    /// Loads a scenario from TOML (default) or JSON (by `.json` extension).
    pub fn load(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|err| ScenarioError::Io {
            path: path.display().to_string(),
            err,
        })?;
        let scenario = if path.extension().is_some_and(|e| e == "json") {
            Scenario::from_json(&text).map_err(|msg| ScenarioError::Parse {
                path: path.display().to_string(),
                msg,
            })?
        } else {
            Scenario::from_toml(&text).map_err(|msg| ScenarioError::Parse {
                path: path.display().to_string(),
                msg,
            })?
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Parses TOML, reporting the offending line on error.
    pub fn from_toml(text: &str) -> Result<Scenario, String> {
        toml::from_str(text).map_err(|e| {
            match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].lines().count().max(1);
                    format!("line {line}: {}", e.message())
                }
                None => e.message().to_string(),
            }
        })
    }

    /// Parses JSON (serde reports line and column itself).
    pub fn from_json(text: &str) -> Result<Scenario, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
n = 4
t = 1
l_bits = 12
seed = 7
faulty = [3]
strategy = "equivocate_matching"

[inputs]
kind = "all_same"
hex = "abc0"
"#;

    #[test]
    fn toml_round_trip() {
        let s = Scenario::from_toml(EXAMPLE).unwrap();
        s.validate().unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.strategy, Strategy::EquivocateMatching);
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_parses_too() {
        let s = Scenario::from_toml(EXAMPLE).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::from_json(&json).unwrap(), s);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let bad = "n = 4\nt = \"one\"\nl_bits = 8\n";
        let err = Scenario::from_toml(bad).unwrap_err();
        assert!(err.contains("line 2"), "got: {err}");
    }

    #[test]
    fn validation_catches_bad_bounds() {
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.t = 2;
        assert!(s.validate().is_err(), "3t >= n");
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.faulty = vec![1, 2];
        assert!(s.validate().is_err(), "too many faulty");
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.faulty = vec![4];
        assert!(s.validate().is_err(), "id out of range");
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.inputs = InputSpec::AllSame { hex: "ab".into() };
        assert!(s.validate().is_err(), "wrong hex length");
    }

    #[test]
    fn input_generators_materialize() {
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        let same = s.materialize_inputs().unwrap();
        assert!(same.iter().all(|v| v == &same[0]));

        s.inputs = InputSpec::Split { hex_a: "fff0".into(), hex_b: "0000".into() };
        let split = s.materialize_inputs().unwrap();
        assert_ne!(split[0], split[3]);
        assert_eq!(split[0], split[1]);

        s.inputs = InputSpec::Random { seed: 3 };
        let r1 = s.materialize_inputs().unwrap();
        let r2 = s.materialize_inputs().unwrap();
        assert_eq!(r1, r2, "generator is deterministic");

        s.inputs = InputSpec::Explicit {
            values: vec!["aaa0".into(), "bbb0".into(), "ccc0".into(), "ddd0".into()],
        };
        let ex = s.materialize_inputs().unwrap();
        assert_eq!(ex[2].to_hex(), "ccc0");
    }
}
