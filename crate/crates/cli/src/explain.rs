//! Human-readable narrative of one transcript.

use std::fmt::Write;

use anyhow::{bail, Result};
use mvbc_core::graph::RemovalCause;
use mvbc_core::transcript::{DecisionPath, Record, Stage, Transcript};

fn cause_text(cause: RemovalCause) -> &'static str {
    match cause {
        RemovalCause::TrustMismatch => "trust-vector mismatch",
        RemovalCause::FalseAccusation => "false accusation",
        RemovalCause::DegreeThreshold => "removed-edge threshold",
    }
}

fn ids(list: &[usize]) -> String {
    let inner = list.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ");
    format!("{{{inner}}}")
}

/// Renders the narrative: stage entries, detections, edge removals with
/// their causes, isolations, and per-generation decisions.
pub fn explain(transcript: &Transcript) -> Result<String> {
    let Some(meta) = transcript.meta() else {
        bail!("transcript has no metadata record");
    };
    let mut out = String::new();
    let s = &meta.scenario;
    let _ = writeln!(
        out,
        "run {}: n={} t={} L={} strategy={} seed={} faulty={}",
        s.display_name(),
        s.n,
        s.t,
        s.l_bits,
        s.strategy.name(),
        s.seed,
        ids(&s.faulty),
    );

    for r in transcript.records() {
        match r {
            Record::GenerationStart { generation, active } => {
                let _ = writeln!(out, "generation {generation}: active {}", ids(active));
            }
            Record::StageEnter { stage: Stage::Diagnosis, .. } => {
                let _ = writeln!(out, "  entering diagnosis");
            }
            Record::MatchSet { members, .. } => match members {
                Some(m) => {
                    let _ = writeln!(out, "  match set {}", ids(m));
                }
                None => {
                    let _ = writeln!(out, "  no match set exists");
                }
            },
            Record::DetectFlags { flags, .. } => {
                let accusers: Vec<usize> =
                    flags.iter().filter(|(_, f)| *f).map(|(p, _)| *p).collect();
                if accusers.is_empty() {
                    let _ = writeln!(out, "  no inconsistency reported");
                } else {
                    let _ = writeln!(out, "  inconsistency reported by {}", ids(&accusers));
                }
            }
            Record::BroadcastView { consistent, .. } => {
                let _ = writeln!(
                    out,
                    "  broadcast symbols are {}",
                    if *consistent { "consistent" } else { "not consistent" }
                );
            }
            Record::EdgeRemoval(e) => {
                let _ = writeln!(
                    out,
                    "  removed edge ({}, {}) [{}]",
                    e.a,
                    e.b,
                    cause_text(e.cause)
                );
            }
            Record::Isolation { processor, .. } => {
                let _ = writeln!(out, "  processor {processor} isolated");
            }
            Record::Decision { via, value_hex, .. } => {
                let how = match via {
                    DecisionPath::Checking => "from received symbols",
                    DecisionPath::Diagnosis => "from broadcast symbols",
                    DecisionPath::Default => "default value, run terminates",
                };
                let _ = writeln!(out, "  decided 0x{value_hex} ({how})");
            }
            _ => {}
        }
    }

    if let Some(summary) = transcript.summary() {
        let _ = writeln!(
            out,
            "final output 0x{} after {} generations; {} diagnosis stage(s); isolated {}; \
             {} data bits + {} broadcast bits in {} invocations",
            summary.output_hex,
            summary.generations_run,
            summary.totals.diagnosis_stage_count,
            ids(&summary.isolated),
            summary.totals.data_bits,
            summary.totals.bsb_bits,
            summary.totals.bsb_invocations,
        );
    }
    Ok(out)
}
