//! Scenario execution: the deterministic synchronous harness.
//!
//! `run_scenario` wires a scenario to its adversary, runs the consensus
//! engine, and then checks the end-to-end guarantees against ground truth:
//! all fault-free processors produced bit-identical outputs, and when their
//! inputs were identical the common output equals that input. A run is a
//! pure function of the scenario; replaying it yields the same transcript
//! byte for byte (apart from the metadata timestamp).

use crate::adversary::{make_adversary, Adversary};
use crate::engine::{self, RunOutcome, SimError};
use crate::scenario::Scenario;

/// Runs a scenario with its builtin strategy.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, SimError> {
    let mut adversary = make_adversary(scenario);
    run_scenario_with(scenario, adversary.as_mut())
}

/// Runs a scenario under a caller-supplied adversary (used for adaptive
/// takeover strategies and tests).
pub fn run_scenario_with(
    scenario: &Scenario,
    adversary: &mut dyn Adversary,
) -> Result<RunOutcome, SimError> {
    let outcome = engine::run_consensus(scenario, adversary)?;

    // Final harness checks against ground truth (the final faulty set, so
    // adaptive takeovers are accounted for).
    let ff: Vec<usize> = (0..scenario.n).filter(|p| !outcome.faulty.contains(p)).collect();
    let first = ff[0];
    let reference = outcome.outputs[first]
        .as_ref()
        .ok_or_else(|| SimError::Invariant {
            name: "output_consistency",
            detail: "a fault-free processor produced no output".into(),
        })?;
    for &p in &ff {
        if outcome.outputs[p].as_ref() != Some(reference) {
            return Err(SimError::Invariant {
                name: "output_consistency",
                detail: format!("outputs of processors {first} and {p} differ"),
            });
        }
    }

    let inputs = scenario.materialize_inputs()?;
    let ff_inputs: Vec<_> = ff.iter().map(|&p| &inputs[p]).collect();
    if ff_inputs.windows(2).all(|w| w[0] == w[1]) {
        let expected = ff_inputs[0];
        if &reference.value != expected {
            return Err(SimError::Invariant {
                name: "output_validity",
                detail: format!(
                    "identical fault-free inputs {} but output {}",
                    expected.to_hex(),
                    reference.value.to_hex()
                ),
            });
        }
        if reference.terminated_default {
            return Err(SimError::Invariant {
                name: "output_validity",
                detail: "default termination despite identical fault-free inputs".into(),
            });
        }
    }

    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::View;
    use crate::scenario::{InputSpec, Strategy};
    use crate::transcript::Stage;

    fn base(n: usize, t: usize, l: usize) -> Scenario {
        Scenario {
            n,
            t,
            l_bits: l,
            seed: 1,
            faulty: vec![],
            strategy: Strategy::Honest,
            inputs: InputSpec::AllSame { hex: hex_of_len(l) },
            d_bits: None,
            name: None,
        }
    }

    fn hex_of_len(l: usize) -> String {
        let mut v = crate::bits::Bits::zeros(l);
        for i in 0..l {
            v.set(i, i % 2 == 0);
        }
        v.to_hex()
    }

    #[test]
    fn honest_run_reaches_consensus_on_the_input() {
        let s = base(4, 1, 12);
        let out = run_scenario(&s).unwrap();
        let o = out.outputs[0].as_ref().unwrap();
        assert!(!o.terminated_default);
        assert_eq!(o.value.to_hex(), hex_of_len(12));
        assert_eq!(out.diagnosis_count, 0);
    }

    #[test]
    fn split_inputs_terminate_with_default() {
        let mut s = base(4, 1, 12);
        s.inputs = InputSpec::Split { hex_a: "fff0".into(), hex_b: "0000".into() };
        let out = run_scenario(&s).unwrap();
        let o = out.outputs[0].as_ref().unwrap();
        assert!(o.terminated_default);
        assert_eq!(o.value.to_hex(), "0000");
    }

    #[test]
    fn equivocation_is_survived() {
        let mut s = base(7, 2, 18);
        s.faulty = vec![5, 6];
        s.strategy = Strategy::EquivocateMatching;
        for seed in 0..20 {
            s.seed = seed;
            let out = run_scenario(&s).unwrap();
            assert_eq!(out.outputs[0].as_ref().unwrap().value.to_hex(), hex_of_len(18));
        }
    }

    #[test]
    fn replay_is_byte_identical() {
        let mut s = base(7, 2, 18);
        s.faulty = vec![1, 4];
        s.strategy = Strategy::Randomized;
        s.seed = 99;
        let a = run_scenario(&s).unwrap();
        let b = run_scenario(&s).unwrap();
        assert_eq!(a.transcript.comparable_jsonl(), b.transcript.comparable_jsonl());
    }

    /// Adaptive takeover: corrupt an honest processor at a later stage.
    struct Takeover {
        done: bool,
    }

    impl Adversary for Takeover {
        fn name(&self) -> &'static str {
            "takeover"
        }

        fn corrupt_now(&mut self, view: &View) -> Vec<usize> {
            if !self.done && view.generation == 1 && view.stage == Stage::Matching {
                return vec![2];
            }
            Vec::new()
        }

        fn matching_symbols(
            &mut self,
            _view: &View,
            _from: usize,
            honest: &[u16],
            targets: &[usize],
            _ff: &[crate::adversary::FfSend],
        ) -> Vec<Option<Vec<u16>>> {
            self.done = true;
            let mut out: Vec<Option<Vec<u16>>> = vec![Some(honest.to_vec()); targets.len()];
            let mut corrupted = honest.to_vec();
            corrupted[0] ^= 1;
            out[0] = Some(corrupted);
            out
        }
    }

    #[test]
    fn adaptive_takeover_is_capped_and_survived() {
        let mut s = base(4, 1, 18);
        s.d_bits = Some(6);
        let mut adv = Takeover { done: false };
        let out = run_scenario_with(&s, &mut adv).unwrap();
        assert_eq!(out.outputs[0].as_ref().unwrap().value.to_hex(), hex_of_len(18));
    }
}
