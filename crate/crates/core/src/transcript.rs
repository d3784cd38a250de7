//! The audited record of one run.
//!
//! A transcript is an ordered list of events: value-symbol messages, every
//! broadcast invocation with its outcome, stage entries, trust-graph edge
//! removals, per-generation decisions and statistics, and a closing summary.
//! It is a deterministic function of the scenario (the metadata timestamp is
//! the one exception and is kept out of comparisons). Transcripts serialize
//! as JSON lines, one record per line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsb::InstanceKind;
use crate::graph::EdgeRemovalEvent;
use crate::metrics::{CommStats, GenStats};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("transcript is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Matching,
    Checking,
    Diagnosis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPath {
    Checking,
    Diagnosis,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    /// Wall-clock seconds when the run started. Excluded from determinism
    /// comparisons; everything else in a transcript is reproducible.
    pub timestamp_unix_secs: u64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Number of bits actually agreed on (the original length, before
    /// padding).
    pub l_bits: usize,
    pub d_bits: usize,
    pub symbol_bits: u32,
    pub generations_run: u64,
    pub terminated_default: bool,
    /// Common output of the fault-free processors, hex, `l_bits` long.
    pub output_hex: String,
    pub totals: CommStats,
    pub isolated: Vec<usize>,
    pub invariants_checked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Record {
    Meta(Meta),
    GenerationStart {
        generation: usize,
        active: Vec<usize>,
    },
    StageEnter {
        generation: usize,
        stage: Stage,
    },
    /// One point-to-point symbol message of the value exchange.
    SymbolSend {
        generation: usize,
        from: usize,
        to: usize,
        symbols: Vec<u16>,
    },
    /// One completed broadcast instance.
    BsbOutcome {
        generation: usize,
        stage: Stage,
        #[serde(flatten)]
        kind: InstanceKind,
        source: usize,
        bit: bool,
        bits_sent: u64,
        rounds: u32,
    },
    MatchMatrix {
        generation: usize,
        rows: Vec<Vec<bool>>,
    },
    MatchSet {
        generation: usize,
        members: Option<Vec<usize>>,
    },
    DetectFlags {
        generation: usize,
        /// (outsider id, flag) pairs in id order.
        flags: Vec<(usize, bool)>,
    },
    /// The symbols the match-set members broadcast during diagnosis,
    /// identical at every fault-free processor.
    BroadcastView {
        generation: usize,
        symbols: Vec<(usize, Vec<u16>)>,
        consistent: bool,
    },
    TrustMatrix {
        generation: usize,
        rows: Vec<Vec<bool>>,
    },
    EdgeRemoval(EdgeRemovalEvent),
    Isolation {
        generation: usize,
        processor: usize,
    },
    Decision {
        generation: usize,
        via: DecisionPath,
        value_hex: String,
    },
    GenerationStats {
        stats: GenStats,
    },
    Summary(Summary),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn meta(&self) -> Option<&Meta> {
        self.records.iter().find_map(|r| match r {
            Record::Meta(m) => Some(m),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&Summary> {
        self.records.iter().find_map(|r| match r {
            Record::Summary(s) => Some(s),
            _ => None,
        })
    }

    pub fn edge_removals(&self) -> impl Iterator<Item = &EdgeRemovalEvent> {
        self.records.iter().filter_map(|r| match r {
            Record::EdgeRemoval(e) => Some(e),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Transcript, TranscriptError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line)
                .map_err(|e| TranscriptError::Parse { line: i + 1, msg: e.to_string() })?;
            records.push(r);
        }
        if records.is_empty() {
            return Err(TranscriptError::Empty);
        }
        Ok(Transcript { records })
    }

    /// The JSONL form with the metadata timestamp normalized to zero, for
    /// byte comparisons between runs.
    pub fn comparable_jsonl(&self) -> String {
        let mut copy = self.clone();
        for r in &mut copy.records {
            if let Record::Meta(m) = r {
                m.timestamp_unix_secs = 0;
            }
        }
        copy.to_jsonl()
    }
}
