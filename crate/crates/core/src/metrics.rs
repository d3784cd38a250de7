//! Exact communication-cost accounting.
//!
//! Every protocol payload bit is tallied while a scenario runs: value-symbol
//! bits exchanged point to point, and the bits inside every broadcast
//! instance, grouped by stage. Validation compares the measured counts with
//! closed-form predictions: invocation counts must match exactly in every
//! run, full bit counts must match exactly when nobody misbehaves, and the
//! grand total must stay within the worst-case budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsb;
use crate::scenario::Strategy;
use crate::transcript::{Record, Transcript};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("transcript has no metadata record")]
    MissingMeta,
    #[error("transcript has no summary record")]
    MissingSummary,
}

/// Broadcast usage of one stage of one generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub invocations: u64,
    pub bits: u64,
}

impl StageCount {
    pub fn add(&mut self, bits: u64) {
        self.invocations += 1;
        self.bits += bits;
    }
}

/// Measured communication of a single generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenStats {
    pub generation: usize,
    /// Point-to-point symbol bits sent in the value exchange.
    pub data_bits: u64,
    pub matching: StageCount,
    pub checking: StageCount,
    pub diagnosis_value: StageCount,
    pub diagnosis_trust: StageCount,
    pub diagnosed: bool,
}

impl GenStats {
    pub fn bsb_invocations(&self) -> u64 {
        self.matching.invocations
            + self.checking.invocations
            + self.diagnosis_value.invocations
            + self.diagnosis_trust.invocations
    }

    pub fn bsb_bits(&self) -> u64 {
        self.matching.bits + self.checking.bits + self.diagnosis_value.bits + self.diagnosis_trust.bits
    }

    pub fn total_bits(&self) -> u64 {
        self.data_bits + self.bsb_bits()
    }
}

/// Whole-run totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    pub generations: u64,
    pub data_bits: u64,
    pub bsb_invocations: u64,
    pub bsb_bits: u64,
    pub diagnosis_stage_count: u64,
}

impl CommStats {
    pub fn accumulate(&mut self, g: &GenStats) {
        self.generations += 1;
        self.data_bits += g.data_bits;
        self.bsb_invocations += g.bsb_invocations();
        self.bsb_bits += g.bsb_bits();
        if g.diagnosed {
            self.diagnosis_stage_count += 1;
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.data_bits + self.bsb_bits
    }
}

/// Closed-form per-generation costs for given parameters. `b_bits` is the
/// measured cost of one broadcast instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub data_bits: u64,
    pub matching_invocations: u64,
    pub checking_invocations: u64,
    pub diagnosis_value_invocations: u64,
    pub diagnosis_trust_invocations: u64,
    pub b_bits: u64,
}

impl Prediction {
    pub fn fault_free_invocations(&self) -> u64 {
        self.matching_invocations + self.checking_invocations
    }

    pub fn diagnosis_invocations(&self) -> u64 {
        self.diagnosis_value_invocations + self.diagnosis_trust_invocations
    }

    /// Full bit cost of a generation without a diagnosis stage.
    pub fn fault_free_bits(&self) -> u64 {
        self.data_bits + self.fault_free_invocations() * self.b_bits
    }
}

/// Stage costs per generation: every processor sends its symbol (D/k bits)
/// to n-1 peers and broadcasts n-1 match bits; the t outsiders broadcast one
/// flag each; under diagnosis the n-t members broadcast their D/k symbol
/// bits and everyone broadcasts n-t trust bits.
pub fn predict_per_generation(n: usize, t: usize, d_bits: usize, b_bits: u64) -> Prediction {
    let k = n - 2 * t;
    assert!(d_bits % k == 0, "generation size must be a whole number of symbols");
    let symbol_bits = (d_bits / k) as u64;
    let n64 = n as u64;
    let t64 = t as u64;
    Prediction {
        data_bits: n64 * (n64 - 1) * symbol_bits,
        matching_invocations: n64 * (n64 - 1),
        checking_invocations: t64,
        diagnosis_value_invocations: (n64 - t64) * symbol_bits,
        diagnosis_trust_invocations: n64 * (n64 - t64),
        b_bits,
    }
}

/// Worst-case total cost over a whole run: every generation pays the
/// fault-free cost and at most t(t+1) generations add a diagnosis stage.
pub fn worst_case_total(n: usize, t: usize, d_bits: usize, generations: u64, b_bits: u64) -> u64 {
    let p = predict_per_generation(n, t, d_bits, b_bits);
    let per_gen = p.data_bits + p.fault_free_invocations() * b_bits;
    let t64 = t as u64;
    per_gen * generations + t64 * (t64 + 1) * p.diagnosis_invocations() * b_bits
}

pub fn diagnosis_bound(t: usize) -> u64 {
    let t = t as u64;
    t * (t + 1)
}

/// Measured-versus-predicted comparison for one generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenComparison {
    pub generation: usize,
    pub diagnosed: bool,
    pub measured: GenStats,
    pub predicted_invocations: u64,
    pub predicted_bits: u64,
    pub invocations_match: bool,
    pub exact_match: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub strategy: Strategy,
    pub n: usize,
    pub t: usize,
    pub d_bits: usize,
    pub generations: u64,
    /// Largest per-instance broadcast cost observed in the run.
    pub b_measured: u64,
    /// Cost of one instance when every processor participates honestly.
    pub b_formula: u64,
    pub per_generation: Vec<GenComparison>,
    pub diagnosis_stage_count: u64,
    pub diagnosis_bound: u64,
    pub bound_ok: bool,
    pub measured_total_bits: u64,
    pub worst_case_bits: u64,
    pub ratio: f64,
    /// Invocation counts are schedule-determined and must match in every run.
    pub all_invocations_match: bool,
    /// Exact bit-for-bit match, required when the strategy is honest.
    pub all_exact: bool,
    pub strict: bool,
    pub passed: bool,
}

/// Checks a finished transcript against the cost model.
pub fn validate(transcript: &Transcript) -> Result<ValidationReport, MetricsError> {
    let meta = transcript.meta().ok_or(MetricsError::MissingMeta)?;
    let summary = transcript.summary().ok_or(MetricsError::MissingSummary)?;
    let scenario = &meta.scenario;
    let (n, t) = (scenario.n, scenario.t);
    let d_bits = summary.d_bits;

    let b_measured = transcript
        .records()
        .iter()
        .filter_map(|r| match r {
            Record::BsbOutcome { bits_sent, .. } => Some(*bits_sent),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let b_formula = bsb::honest_bit_cost(n, t);
    let prediction = predict_per_generation(n, t, d_bits, b_measured);

    let mut per_generation = Vec::new();
    for r in transcript.records() {
        let Record::GenerationStats { stats } = r else { continue };
        let predicted_invocations = prediction.fault_free_invocations()
            + if stats.diagnosed { prediction.diagnosis_invocations() } else { 0 };
        let predicted_bits = prediction.data_bits + predicted_invocations * b_measured;
        let invocations_match = stats.bsb_invocations() == predicted_invocations;
        let exact_match = invocations_match
            && stats.data_bits == prediction.data_bits
            && stats.total_bits() == predicted_bits;
        per_generation.push(GenComparison {
            generation: stats.generation,
            diagnosed: stats.diagnosed,
            measured: *stats,
            predicted_invocations,
            predicted_bits,
            invocations_match,
            exact_match,
        });
    }

    let totals = &summary.totals;
    let worst_case_bits = worst_case_total(n, t, d_bits, totals.generations, b_measured);
    let ratio = if worst_case_bits == 0 {
        0.0
    } else {
        totals.total_bits() as f64 / worst_case_bits as f64
    };
    let bound_ok = totals.diagnosis_stage_count <= diagnosis_bound(t);
    let all_invocations_match = per_generation.iter().all(|g| g.invocations_match);
    let all_exact = per_generation.iter().all(|g| g.exact_match);
    let strict = scenario.strategy == Strategy::Honest || scenario.faulty.is_empty();
    let passed = bound_ok
        && ratio <= 1.0
        && all_invocations_match
        && (!strict || (all_exact && b_measured == b_formula));

    Ok(ValidationReport {
        scenario: scenario.display_name(),
        strategy: scenario.strategy,
        n,
        t,
        d_bits,
        generations: totals.generations,
        b_measured,
        b_formula,
        per_generation,
        diagnosis_stage_count: totals.diagnosis_stage_count,
        diagnosis_bound: diagnosis_bound(t),
        bound_ok,
        measured_total_bits: totals.total_bits(),
        worst_case_bits,
        ratio,
        all_invocations_match,
        all_exact,
        strict,
        passed,
    })
}

impl ValidationReport {
    /// Plain-text comparison table, aligned for reading.
    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {}  (n={} t={} D={} strategy={})",
            self.scenario,
            self.n,
            self.t,
            self.d_bits,
            self.strategy.name()
        );
        let _ = writeln!(
            out,
            "broadcast cost per instance: measured {}  formula {}",
            self.b_measured, self.b_formula
        );
        let _ = writeln!(
            out,
            "{:>4} {:>5} {:>10} {:>8} {:>8} {:>10} {:>10} {:>6}",
            "gen", "diag", "data_bits", "bsb_inv", "pred_inv", "bits", "pred_bits", "match"
        );
        for g in &self.per_generation {
            let _ = writeln!(
                out,
                "{:>4} {:>5} {:>10} {:>8} {:>8} {:>10} {:>10} {:>6}",
                g.generation,
                if g.diagnosed { "yes" } else { "no" },
                g.measured.data_bits,
                g.measured.bsb_invocations(),
                g.predicted_invocations,
                g.measured.total_bits(),
                g.predicted_bits,
                if g.exact_match { "exact" } else if g.invocations_match { "inv" } else { "NO" },
            );
        }
        let _ = writeln!(
            out,
            "diagnosis stages {} / bound {}   total bits {} / worst case {}   ratio {:.6}",
            self.diagnosis_stage_count,
            self.diagnosis_bound,
            self.measured_total_bits,
            self.worst_case_bits,
            self.ratio
        );
        let _ = writeln!(out, "verdict: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }

    /// One CSV row per generation.
    pub fn render_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from(
            "generation,diagnosed,data_bits,matching_inv,matching_bits,checking_inv,checking_bits,\
             diagnosis_value_inv,diagnosis_value_bits,diagnosis_trust_inv,diagnosis_trust_bits,\
             predicted_inv,predicted_bits,invocations_match,exact_match\n",
        );
        for g in &self.per_generation {
            let m = &g.measured;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                g.generation,
                g.diagnosed,
                m.data_bits,
                m.matching.invocations,
                m.matching.bits,
                m.checking.invocations,
                m.checking.bits,
                m.diagnosis_value.invocations,
                m.diagnosis_value.bits,
                m.diagnosis_trust.invocations,
                m.diagnosis_trust.bits,
                g.predicted_invocations,
                g.predicted_bits,
                g.invocations_match,
                g.exact_match
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_formulas_at_small_sizes() {
        // n=4, t=1, one codeword per generation: c = 3, D = 2*3 = 6
        let p = predict_per_generation(4, 1, 6, 81);
        assert_eq!(p.data_bits, 4 * 3 * 3);
        assert_eq!(p.matching_invocations, 12);
        assert_eq!(p.checking_invocations, 1);
        assert_eq!(p.fault_free_invocations(), 13);
        assert_eq!(p.diagnosis_value_invocations, 3 * 3);
        assert_eq!(p.diagnosis_trust_invocations, 4 * 3);

        // n=7, t=2, D = 3*3 = 9
        let p = predict_per_generation(7, 2, 9, 402);
        assert_eq!(p.data_bits, 7 * 6 * 3);
        assert_eq!(p.fault_free_invocations(), 44);
        assert_eq!(p.diagnosis_invocations(), 5 * 3 + 7 * 5);
    }

    #[test]
    fn degenerate_t_zero_has_no_checking_term() {
        let p = predict_per_generation(4, 0, 12, 50);
        assert_eq!(p.checking_invocations, 0);
        assert_eq!(p.diagnosis_trust_invocations, 16);
    }

    #[test]
    fn worst_case_adds_bounded_diagnosis_cost() {
        let b = 402;
        let per_gen_ff = predict_per_generation(7, 2, 9, b).fault_free_bits();
        let diag = predict_per_generation(7, 2, 9, b).diagnosis_invocations() * b;
        assert_eq!(worst_case_total(7, 2, 9, 10, b), per_gen_ff * 10 + 6 * diag);
    }

    #[test]
    fn larger_d_reduces_per_bit_broadcast_overhead() {
        // the matching-stage broadcast overhead per value bit is
        // n(n-1) * B / D, strictly decreasing in D
        let b = 402;
        let overhead = |d: usize| {
            let p = predict_per_generation(7, 2, d, b);
            (p.matching_invocations * b) as f64 / d as f64
        };
        assert!(overhead(9) > overhead(18));
        assert!(overhead(18) > overhead(90));
    }
}
