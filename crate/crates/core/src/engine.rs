//! The consensus engine: one generation at a time, three stages deep.
//!
//! Consensus on an L-bit value runs as a sequence of generations, each
//! agreeing on a D-bit slice. Within a generation every processor encodes
//! its slice with the Reed-Solomon code and sends the codeword position it
//! owns to the peers it trusts (matching). The processors then broadcast
//! match bits, carve out a match set of n - t processors whose fault-free
//! members provably hold the same slice, and let the outsiders check whether
//! the symbols they received from the match set lie on a codeword
//! (checking). If anyone announces an inconsistency, the match-set members
//! broadcast their symbols bit by bit, everyone broadcasts trust vectors,
//! and the trust graph sheds at least one edge touching a faulty processor
//! before the decision is taken from the broadcast symbols (diagnosis).
//!
//! Every processor keeps its own replica of all shared state; the engine
//! asserts at each stage boundary that the fault-free replicas are
//! identical, which is exactly what the broadcast primitive is supposed to
//! guarantee. The engine also checks the ground-truth invariants the design
//! promises: removed edges always touch a faulty processor, fault-free
//! processors never lose trust in each other, every diagnosis makes
//! progress, and at most t(t+1) diagnosis stages ever run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{Adversary, FfSend, View};
use crate::bits::Bits;
use crate::bsb::{self, BsbMsg, Instance, InstanceKind, Interference, RoundKind};
use crate::field::{Fe, Field};
use crate::graph::TrustGraph;
use crate::metrics::{CommStats, GenStats};
use crate::rs::{CodeSpec, Codeword, DataBlock, PartialView};
use crate::scenario::Scenario;
use crate::transcript::{DecisionPath, Meta, Record, Stage, Summary, Transcript};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant '{name}' violated: {detail}")]
    Invariant { name: &'static str, detail: String },
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

/// Smallest symbol width c with n <= 2^c - 1 (and at least 2).
pub fn symbol_width_for(n: usize) -> u32 {
    let mut c = 2u32;
    while (1usize << c) - 1 < n {
        c += 1;
    }
    c
}

/// Resolved parameters of one consensus run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub n: usize,
    pub t: usize,
    /// Code dimension, n - 2t.
    pub k: usize,
    /// Symbol width in bits.
    pub c: u32,
    /// Original value length in bits.
    pub l_bits: usize,
    /// Value length after zero-padding to a whole number of generations.
    pub padded_bits: usize,
    /// Bits agreed per generation; a multiple of k * c.
    pub d_bits: usize,
    /// Codewords per generation, d_bits / (k * c).
    pub blocks: usize,
    pub generations: usize,
}

fn round_up_multiple(v: usize, unit: usize) -> usize {
    v.div_ceil(unit) * unit
}

/// Picks the per-generation size D. Without an override, D balances the
/// per-generation broadcast overhead against the worst-case diagnosis cost:
/// D = sqrt((n^2 - n + t)(n - 2t) L / (t(t+1)(n - t))), rounded up to a
/// whole number of codewords and clamped to [one codeword, L].
pub fn choose_parameters(
    n: usize,
    t: usize,
    l_bits: usize,
    d_override: Option<usize>,
) -> Result<ConsensusConfig, SimError> {
    if n < 4 {
        return Err(SimError::Config(format!("need at least 4 processors, got {n}")));
    }
    if 3 * t >= n {
        return Err(SimError::Config(format!("fault bound requires 3t < n, got n={n} t={t}")));
    }
    if l_bits == 0 {
        return Err(SimError::Config("value length must be positive".into()));
    }
    let c = symbol_width_for(n);
    if c > 16 {
        return Err(SimError::Config(format!("n={n} needs symbols wider than 16 bits")));
    }
    let k = n - 2 * t;
    let unit = k * c as usize;
    let max_d = round_up_multiple(l_bits, unit);
    let d_bits = match d_override {
        Some(d) => {
            if d == 0 || d % unit != 0 {
                return Err(SimError::Config(format!(
                    "d_bits must be a positive multiple of (n-2t)*c = {unit}, got {d}"
                )));
            }
            d
        }
        None if t == 0 => max_d,
        None => {
            let num = ((n * n - n + t) * k) as f64 * l_bits as f64;
            let den = (t * (t + 1) * (n - t)) as f64;
            let raw = (num / den).sqrt().ceil() as usize;
            round_up_multiple(raw.max(1), unit).min(max_d)
        }
    };
    let generations = l_bits.div_ceil(d_bits);
    Ok(ConsensusConfig {
        n,
        t,
        k,
        c,
        l_bits,
        padded_bits: generations * d_bits,
        d_bits,
        blocks: d_bits / unit,
        generations,
    })
}

/// Lexicographically smallest subset of size n - t whose members pairwise
/// vouch for each other in the broadcast match matrix.
pub fn find_match_set(matrix: &[Vec<bool>], n: usize, t: usize) -> Option<Vec<usize>> {
    use itertools::Itertools;
    let size = n - t;
    (0..n).combinations(size).find(|ids| {
        ids.iter().enumerate().all(|(x, &a)| {
            ids[x + 1..].iter().all(|&b| matrix[a][b] && matrix[b][a])
        })
    })
}

/// Lexicographically smallest subset of `members` of size k that still
/// pairwise trusts each other in the updated graph.
fn find_decide_set(members: &[usize], k: usize, graph: &TrustGraph) -> Option<Vec<usize>> {
    use itertools::Itertools;
    members.iter().copied().combinations(k).find(|ids| {
        ids.iter()
            .enumerate()
            .all(|(x, &a)| ids[x + 1..].iter().all(|&b| graph.trusts(a, b)))
    })
}

/// Final result at one processor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutput {
    /// The agreed L-bit value (original length).
    pub value: Bits,
    /// Hex of each generation's D-bit decision, in order.
    pub per_generation: Vec<String>,
    pub terminated_default: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub config: ConsensusConfig,
    /// Per-processor outputs. Fault-free entries are always present and
    /// identical; a faulty processor's entry may be missing.
    pub outputs: Vec<Option<ConsensusOutput>>,
    pub transcript: Transcript,
    pub totals: CommStats,
    pub isolated: Vec<usize>,
    /// Final ground-truth faulty set, including adaptive takeovers.
    pub faulty: Vec<usize>,
    pub diagnosis_count: u64,
}

struct Proc {
    graph: TrustGraph,
    input: Bits,
    decisions: Vec<Option<Bits>>,
    /// Codewords (one per block) for the current generation.
    codewords: Vec<Codeword>,
    /// Symbol vectors received in the value exchange, by sender.
    recv: Vec<Option<Vec<Fe>>>,
}

enum GenerationResult {
    Decided,
    DefaultTermination,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    config: ConsensusConfig,
    field: Field,
    code: CodeSpec,
    procs: Vec<Proc>,
    faulty: BTreeSet<usize>,
    transcript: Transcript,
    totals: CommStats,
    diagnosis_count: u64,
    invariants_checked: u64,
    terminated_default: bool,
}

/// Adapter that lets the scenario adversary tamper inside broadcast batches.
struct BatchHooks<'a, 'v> {
    adv: &'a mut dyn Adversary,
    view: View<'v>,
}

impl Interference for BatchHooks<'_, '_> {
    fn corrupt(
        &mut self,
        instance: usize,
        kind: &InstanceKind,
        round: RoundKind,
        from: usize,
        honest: BsbMsg,
        targets: &[usize],
        ff_round: &[(usize, usize, BsbMsg)],
    ) -> Vec<Option<BsbMsg>> {
        self.adv
            .bsb_round(&self.view, instance, kind, round, from, honest, targets, ff_round)
    }
}

/// Runs the full L-bit consensus for a scenario under the given adversary.
pub fn run_consensus(
    scenario: &Scenario,
    adversary: &mut dyn Adversary,
) -> Result<RunOutcome, SimError> {
    scenario.validate()?;
    let config = choose_parameters(scenario.n, scenario.t, scenario.l_bits, scenario.d_bits)?;
    let field = Field::new(config.c).map_err(|e| SimError::Config(e.to_string()))?;
    let code = CodeSpec::new(field, config.n, config.k).map_err(|e| SimError::Config(e.to_string()))?;
    let inputs = scenario.materialize_inputs()?;

    let procs = inputs
        .into_iter()
        .map(|input| {
            Ok(Proc {
                graph: TrustGraph::complete(config.n).map_err(|e| SimError::Config(e.to_string()))?,
                input: input.resized(config.padded_bits),
                decisions: Vec::new(),
                codewords: Vec::new(),
                recv: vec![None; config.n],
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let mut engine = Engine {
        scenario,
        config,
        field,
        code,
        procs,
        faulty: scenario.faulty.iter().copied().collect(),
        transcript: Transcript::new(),
        totals: CommStats::default(),
        diagnosis_count: 0,
        invariants_checked: 0,
        terminated_default: false,
    };
    engine.transcript.push(Record::Meta(Meta {
        tool: "mvbc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp_unix_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        scenario: scenario.clone(),
    }));

    for g in 0..engine.config.generations {
        match engine.run_generation(g, adversary)? {
            GenerationResult::Decided => {}
            GenerationResult::DefaultTermination => break,
        }
    }
    engine.finish()
}

impl Engine<'_> {
    fn check(
        &mut self,
        cond: bool,
        name: &'static str,
        detail: impl FnOnce() -> String,
    ) -> Result<(), SimError> {
        self.invariants_checked += 1;
        if cond {
            Ok(())
        } else {
            Err(SimError::Invariant { name, detail: detail() })
        }
    }

    fn ff_ids(&self) -> Vec<usize> {
        (0..self.config.n).filter(|p| !self.faulty.contains(p)).collect()
    }

    /// First fault-free processor; its replica is used for records after
    /// replica equality has been asserted.
    fn canon(&self) -> usize {
        (0..self.config.n)
            .find(|p| !self.faulty.contains(p))
            .expect("at most t < n/3 faulty processors")
    }

    fn adopt_corruptions(&mut self, requested: Vec<usize>) {
        for p in requested {
            if self.faulty.len() >= self.config.t {
                break;
            }
            if p < self.config.n {
                self.faulty.insert(p);
            }
        }
    }

    fn run_generation(
        &mut self,
        g: usize,
        adversary: &mut dyn Adversary,
    ) -> Result<GenerationResult, SimError> {
        let n = self.config.n;
        let t = self.config.t;
        let canon = self.canon();
        let isolated = self.procs[canon].graph.isolated();
        let active: Vec<usize> = (0..n).filter(|p| !isolated.contains(p)).collect();
        self.transcript.push(Record::GenerationStart { generation: g, active: active.clone() });

        let mut stats = GenStats { generation: g, ..GenStats::default() };

        // ---- matching stage --------------------------------------------
        self.transcript.push(Record::StageEnter { generation: g, stage: Stage::Matching });
        {
            let view = View {
                scenario: self.scenario,
                generation: g,
                stage: Stage::Matching,
                faulty: &self.faulty,
                isolated: &isolated,
                own_symbols: &[],
                match_set: None,
            };
            self.adopt_corruptions(adversary.corrupt_now(&view));
        }

        // Encode this generation's slice everywhere (the honest baseline for
        // faulty processors too).
        for proc in &mut self.procs {
            proc.codewords = slice_blocks(&proc.input, g, &self.config)
                .into_iter()
                .map(|block| self.code.encode(&block))
                .collect();
            proc.recv = vec![None; n];
        }
        let own_symbols: Vec<Vec<u16>> = (0..n)
            .map(|p| self.procs[p].codewords.iter().map(|cw| cw.0[p].0).collect())
            .collect();

        // Value exchange: one symbol vector per trusted ordered pair.
        let symbol_bits = self.config.blocks as u64 * self.config.c as u64;
        let mut deliveries: Vec<(usize, usize, Vec<u16>)> = Vec::new();
        let mut ff_sends_store: Vec<(usize, usize, Vec<u16>)> = Vec::new();
        for &from in &active {
            if self.faulty.contains(&from) {
                continue;
            }
            for &to in &active {
                if to != from && self.procs[canon].graph.trusts(from, to) {
                    ff_sends_store.push((from, to, own_symbols[from].clone()));
                }
            }
        }
        let ff_sends: Vec<FfSend> =
            ff_sends_store.iter().map(|(f, t_, s)| (*f, *t_, s.as_slice())).collect();
        for &from in &active {
            if !self.faulty.contains(&from) {
                for (f, t_, s) in &ff_sends_store {
                    if *f == from {
                        deliveries.push((*f, *t_, s.clone()));
                    }
                }
                continue;
            }
            let targets: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&to| to != from && self.procs[canon].graph.trusts(from, to))
                .collect();
            let chosen = {
                let view = View {
                    scenario: self.scenario,
                    generation: g,
                    stage: Stage::Matching,
                    faulty: &self.faulty,
                    isolated: &isolated,
                    own_symbols: &own_symbols,
                    match_set: None,
                };
                adversary.matching_symbols(&view, from, &own_symbols[from], &targets, &ff_sends)
            };
            assert_eq!(chosen.len(), targets.len(), "one choice per target");
            for (&to, symbols) in targets.iter().zip(chosen) {
                if let Some(symbols) = symbols {
                    assert_eq!(symbols.len(), self.config.blocks, "one symbol per block");
                    assert!(
                        symbols.iter().all(|&s| (s as u32) < self.field.order()),
                        "adversary symbols must live in the field"
                    );
                    deliveries.push((from, to, symbols));
                }
            }
        }
        for (from, to, symbols) in &deliveries {
            self.transcript.push(Record::SymbolSend {
                generation: g,
                from: *from,
                to: *to,
                symbols: symbols.clone(),
            });
            stats.data_bits += symbol_bits;
            // receiver ignores senders it does not trust
            if self.procs[*to].graph.trusts(*from, *to) {
                self.procs[*to].recv[*from] = Some(symbols.iter().map(|&s| Fe(s)).collect());
            }
        }
        for &p in &active {
            self.procs[p].recv[p] = Some(self.procs[p].codewords.iter().map(|cw| cw.0[p]).collect());
        }

        // Match vectors, broadcast entry by entry.
        let match_rows: Vec<Vec<bool>> = (0..n)
            .map(|p| {
                (0..n)
                    .map(|j| {
                        if p == j {
                            return true;
                        }
                        if isolated.contains(&p) || isolated.contains(&j) {
                            return false;
                        }
                        if !self.procs[p].graph.trusts(p, j) {
                            return false;
                        }
                        let expected: Vec<Fe> =
                            self.procs[p].codewords.iter().map(|cw| cw.0[j]).collect();
                        self.procs[p].recv[j].as_deref() == Some(expected.as_slice())
                    })
                    .collect()
            })
            .collect();

        let mut instances = Vec::with_capacity(n * (n - 1));
        for owner in 0..n {
            for about in 0..n {
                if about == owner {
                    continue;
                }
                let kind = InstanceKind::MatchBit { owner, about };
                let honest = match_rows[owner][about];
                let input = self.resolve_input(adversary, g, Stage::Matching, &isolated, &own_symbols, None, owner, &kind, honest);
                instances.push(Instance { source: owner, input, kind });
            }
        }
        let batch = self.run_batch_stage(
            adversary,
            g,
            Stage::Matching,
            &active,
            &isolated,
            &own_symbols,
            None,
            instances,
        );
        for inst in &batch.instances {
            stats.matching.add(inst.bits_sent);
            self.transcript.push(Record::BsbOutcome {
                generation: g,
                stage: Stage::Matching,
                kind: inst.kind,
                source: inst.source,
                bit: inst.delivered[canon],
                bits_sent: inst.bits_sent,
                rounds: batch.rounds,
            });
        }

        // Each processor assembles the matrix from its own delivered bits.
        let matrices: Vec<Vec<Vec<bool>>> = (0..n)
            .map(|p| {
                let mut m = vec![vec![false; n]; n];
                for inst in &batch.instances {
                    if let InstanceKind::MatchBit { owner, about } = inst.kind {
                        m[owner][about] = if isolated.contains(&owner) {
                            false // ignored row
                        } else {
                            inst.delivered[p]
                        };
                    }
                }
                for (owner, row) in m.iter_mut().enumerate() {
                    row[owner] = !isolated.contains(&owner);
                }
                m
            })
            .collect();
        let ff = self.ff_ids();
        self.check(
            ff.iter().all(|&p| matrices[p] == matrices[canon]),
            "broadcast_equality",
            || format!("fault-free match matrices diverge in generation {g}"),
        )?;
        self.transcript.push(Record::MatchMatrix { generation: g, rows: matrices[canon].clone() });

        let match_sets: Vec<Option<Vec<usize>>> =
            (0..n).map(|p| find_match_set(&matrices[p], n, t)).collect();
        self.check(
            ff.iter().all(|&p| match_sets[p] == match_sets[canon]),
            "matching_state_equality",
            || format!("fault-free match sets diverge in generation {g}"),
        )?;
        self.transcript.push(Record::MatchSet { generation: g, members: match_sets[canon].clone() });

        let Some(match_set) = match_sets[canon].clone() else {
            // No qualifying set exists, which proves the fault-free inputs
            // differ; everyone decides the default value and the whole run
            // terminates.
            self.transcript.push(Record::Decision {
                generation: g,
                via: DecisionPath::Default,
                value_hex: Bits::zeros(self.config.l_bits).to_hex(),
            });
            self.terminated_default = true;
            self.totals.accumulate(&stats);
            self.transcript.push(Record::GenerationStats { stats });
            return Ok(GenerationResult::DefaultTermination);
        };

        // Ground truth: the fault-free members of the match set really do
        // hold one identical slice this generation.
        {
            let slices: Vec<Bits> = match_set
                .iter()
                .filter(|p| !self.faulty.contains(p))
                .map(|&p| self.procs[p].input.slice(g * self.config.d_bits, self.config.d_bits))
                .collect();
            self.check(
                slices.windows(2).all(|w| w[0] == w[1]),
                "match_set_shared_input",
                || format!("fault-free match-set members disagree on input in generation {g}"),
            )?;
        }

        // ---- checking stage --------------------------------------------
        self.transcript.push(Record::StageEnter { generation: g, stage: Stage::Checking });
        {
            let view = View {
                scenario: self.scenario,
                generation: g,
                stage: Stage::Checking,
                faulty: &self.faulty,
                isolated: &isolated,
                own_symbols: &own_symbols,
                match_set: Some(&match_set),
            };
            self.adopt_corruptions(adversary.corrupt_now(&view));
        }
        let in_match: Vec<bool> = (0..n).map(|p| match_set.contains(&p)).collect();
        let outsiders: Vec<usize> = (0..n).filter(|p| !in_match[*p]).collect();

        let honest_detect: Vec<bool> = (0..n)
            .map(|p| {
                if in_match[p] || isolated.contains(&p) {
                    return false;
                }
                !self.view_consistent(p, &match_set)
            })
            .collect();
        let mut instances = Vec::with_capacity(outsiders.len());
        for &owner in &outsiders {
            let kind = InstanceKind::DetectFlag { owner };
            let input = self.resolve_input(
                adversary,
                g,
                Stage::Checking,
                &isolated,
                &own_symbols,
                Some(&match_set),
                owner,
                &kind,
                honest_detect[owner],
            );
            instances.push(Instance { source: owner, input, kind });
        }
        let batch = self.run_batch_stage(
            adversary,
            g,
            Stage::Checking,
            &active,
            &isolated,
            &own_symbols,
            Some(&match_set),
            instances,
        );
        for inst in &batch.instances {
            stats.checking.add(inst.bits_sent);
            self.transcript.push(Record::BsbOutcome {
                generation: g,
                stage: Stage::Checking,
                kind: inst.kind,
                source: inst.source,
                bit: inst.delivered[canon],
                bits_sent: inst.bits_sent,
                rounds: batch.rounds,
            });
        }
        // Flags as seen by each processor; isolated accusers read as false.
        let flags_per_proc: Vec<Vec<(usize, bool)>> = (0..n)
            .map(|p| {
                batch
                    .instances
                    .iter()
                    .map(|inst| {
                        let flag = !isolated.contains(&inst.source) && inst.delivered[p];
                        (inst.source, flag)
                    })
                    .collect()
            })
            .collect();
        self.check(
            ff.iter().all(|&p| flags_per_proc[p] == flags_per_proc[canon]),
            "checking_state_equality",
            || format!("fault-free detect flags diverge in generation {g}"),
        )?;
        self.transcript.push(Record::DetectFlags {
            generation: g,
            flags: flags_per_proc[canon].clone(),
        });

        let any_detected = flags_per_proc[canon].iter().any(|&(_, f)| f);
        if !any_detected {
            // All clear: everyone decodes the symbols it received from the
            // match set.
            let decisions: Vec<Option<Bits>> = (0..n)
                .map(|p| {
                    if isolated.contains(&p) {
                        return None;
                    }
                    self.decode_from_recv(p, &match_set).ok()
                })
                .collect();
            self.record_decisions(g, DecisionPath::Checking, decisions, &ff, canon)?;
            self.totals.accumulate(&stats);
            self.transcript.push(Record::GenerationStats { stats });
            return Ok(GenerationResult::Decided);
        }

        // ---- diagnosis stage -------------------------------------------
        self.transcript.push(Record::StageEnter { generation: g, stage: Stage::Diagnosis });
        {
            let view = View {
                scenario: self.scenario,
                generation: g,
                stage: Stage::Diagnosis,
                faulty: &self.faulty,
                isolated: &isolated,
                own_symbols: &own_symbols,
                match_set: Some(&match_set),
            };
            self.adopt_corruptions(adversary.corrupt_now(&view));
        }
        stats.diagnosed = true;
        self.diagnosis_count += 1;

        // Match-set members broadcast their own symbols bit by bit.
        let value_bits = self.config.blocks * self.config.c as usize;
        let mut instances = Vec::with_capacity(match_set.len() * value_bits);
        for &member in &match_set {
            for bit_index in 0..value_bits {
                let kind = InstanceKind::ValueBit { member, bit_index };
                let honest = symbol_bit(&own_symbols[member], bit_index, self.config.c);
                let input = self.resolve_input(
                    adversary,
                    g,
                    Stage::Diagnosis,
                    &isolated,
                    &own_symbols,
                    Some(&match_set),
                    member,
                    &kind,
                    honest,
                );
                instances.push(Instance { source: member, input, kind });
            }
        }
        let batch = self.run_batch_stage(
            adversary,
            g,
            Stage::Diagnosis,
            &active,
            &isolated,
            &own_symbols,
            Some(&match_set),
            instances,
        );
        for inst in &batch.instances {
            stats.diagnosis_value.add(inst.bits_sent);
            self.transcript.push(Record::BsbOutcome {
                generation: g,
                stage: Stage::Diagnosis,
                kind: inst.kind,
                source: inst.source,
                bit: inst.delivered[canon],
                bits_sent: inst.bits_sent,
                rounds: batch.rounds,
            });
        }
        // Reassemble each member's broadcast symbols, per receiving processor.
        let bcast_views: Vec<Vec<Option<Vec<Fe>>>> = (0..n)
            .map(|p| {
                let mut view: Vec<Option<Vec<Fe>>> = vec![None; n];
                for &member in &match_set {
                    view[member] = Some(vec![Fe(0); self.config.blocks]);
                }
                for inst in &batch.instances {
                    if let InstanceKind::ValueBit { member, bit_index } = inst.kind {
                        if inst.delivered[p] {
                            let c = self.config.c as usize;
                            let block = bit_index / c;
                            let bit = bit_index % c;
                            if let Some(symbols) = view[member].as_mut() {
                                symbols[block].0 |= 1 << (c - 1 - bit);
                            }
                        }
                    }
                }
                view
            })
            .collect();
        self.check(
            ff.iter().all(|&p| bcast_views[p] == bcast_views[canon]),
            "diagnosis_state_equality",
            || format!("fault-free broadcast views diverge in generation {g}"),
        )?;
        let bcast = bcast_views[canon].clone();
        let bcast_consistent = self.partial_views(&bcast, &match_set)
            .iter()
            .all(|v| self.code.is_consistent(v));
        self.transcript.push(Record::BroadcastView {
            generation: g,
            symbols: match_set
                .iter()
                .map(|&m| (m, bcast[m].as_ref().unwrap().iter().map(|fe| fe.0).collect()))
                .collect(),
            consistent: bcast_consistent,
        });

        // Trust vectors over the match set, broadcast entry by entry.
        let trust_rows: Vec<Vec<bool>> = (0..n)
            .map(|p| {
                (0..n)
                    .map(|j| {
                        if !in_match[j] || isolated.contains(&p) {
                            return false;
                        }
                        let bcast_j = bcast_views[p][j].as_ref();
                        if p == j {
                            let own: Vec<Fe> =
                                self.procs[p].codewords.iter().map(|cw| cw.0[p]).collect();
                            return bcast_j == Some(&own);
                        }
                        self.procs[p].graph.trusts(p, j)
                            && self.procs[p].recv[j].as_ref() == bcast_j
                    })
                    .collect()
            })
            .collect();
        let mut instances = Vec::with_capacity(n * match_set.len());
        for owner in 0..n {
            for &about in &match_set {
                let kind = InstanceKind::TrustBit { owner, about };
                let input = self.resolve_input(
                    adversary,
                    g,
                    Stage::Diagnosis,
                    &isolated,
                    &own_symbols,
                    Some(&match_set),
                    owner,
                    &kind,
                    trust_rows[owner][about],
                );
                instances.push(Instance { source: owner, input, kind });
            }
        }
        let batch = self.run_batch_stage(
            adversary,
            g,
            Stage::Diagnosis,
            &active,
            &isolated,
            &own_symbols,
            Some(&match_set),
            instances,
        );
        for inst in &batch.instances {
            stats.diagnosis_trust.add(inst.bits_sent);
            self.transcript.push(Record::BsbOutcome {
                generation: g,
                stage: Stage::Diagnosis,
                kind: inst.kind,
                source: inst.source,
                bit: inst.delivered[canon],
                bits_sent: inst.bits_sent,
                rounds: batch.rounds,
            });
        }
        let trust_matrices: Vec<Vec<Vec<bool>>> = (0..n)
            .map(|p| {
                let mut m = vec![vec![true; n]; n];
                for inst in &batch.instances {
                    if let InstanceKind::TrustBit { owner, about } = inst.kind {
                        // vectors of isolated processors are ignored
                        m[owner][about] =
                            isolated.contains(&inst.source) || inst.delivered[p];
                    }
                }
                m
            })
            .collect();
        self.check(
            ff.iter().all(|&p| trust_matrices[p] == trust_matrices[canon]),
            "diagnosis_state_equality",
            || format!("fault-free trust matrices diverge in generation {g}"),
        )?;
        self.transcript.push(Record::TrustMatrix {
            generation: g,
            rows: trust_matrices[canon].clone(),
        });

        let accusers: Vec<usize> = flags_per_proc[canon]
            .iter()
            .filter(|&&(_, f)| f)
            .map(|&(p, _)| p)
            .collect();

        // Graph updates, replicated at every non-isolated processor.
        let before_isolated = isolated.clone();
        let mut canon_events = Vec::new();
        for p in 0..n {
            if isolated.contains(&p) {
                continue;
            }
            let graph = &mut self.procs[p].graph;
            let mut events = graph.apply_trust_vectors(g, &in_match, &trust_matrices[p]);
            let ev2 = graph.isolate_false_accusers(g, bcast_consistent, &accusers, &events);
            events.extend(ev2);
            events.extend(graph.apply_degree_rule(g, t));
            if p == canon {
                canon_events = events;
            }
        }
        self.check(
            ff.iter().all(|&p| self.procs[p].graph == self.procs[canon].graph),
            "diagnosis_state_equality",
            || format!("fault-free trust graphs diverge in generation {g}"),
        )?;
        for e in &canon_events {
            self.transcript.push(Record::EdgeRemoval(*e));
        }
        for v in self.procs[canon].graph.isolated() {
            if !before_isolated.contains(&v) {
                self.transcript.push(Record::Isolation { generation: g, processor: v });
            }
        }

        // Ground-truth soundness of the diagnosis.
        self.check(!canon_events.is_empty(), "diagnosis_progress", || {
            format!("diagnosis stage of generation {g} removed no edge")
        })?;
        let faulty = self.faulty.clone();
        self.check(
            canon_events.iter().all(|e| faulty.contains(&e.a) || faulty.contains(&e.b)),
            "removal_soundness",
            || format!("an edge between two fault-free processors was removed in generation {g}"),
        )?;
        let ff_clique = ff
            .iter()
            .enumerate()
            .all(|(x, &a)| ff[x + 1..].iter().all(|&b| self.procs[canon].graph.trusts(a, b)));
        self.check(ff_clique, "fault_free_clique", || {
            format!("fault-free processors lost mutual trust in generation {g}")
        })?;
        let diag_count = self.diagnosis_count;
        let diag_bound = crate::metrics::diagnosis_bound(t);
        self.check(diag_count <= diag_bound, "diagnosis_bound", || {
            format!("diagnosis ran {diag_count} times, bound is {diag_bound}")
        })?;

        // Decide from the broadcast symbols of a still-trusting subset.
        let decide_sets: Vec<Option<Vec<usize>>> = (0..n)
            .map(|p| {
                if isolated.contains(&p) {
                    return None;
                }
                find_decide_set(&match_set, self.config.k, &self.procs[p].graph)
            })
            .collect();
        self.check(decide_sets[canon].is_some(), "decide_set_exists", || {
            format!("no pairwise-trusting decide set exists in generation {g}")
        })?;
        self.check(
            ff.iter().all(|&p| decide_sets[p] == decide_sets[canon]),
            "diagnosis_state_equality",
            || format!("fault-free decide sets diverge in generation {g}"),
        )?;

        let decisions: Vec<Option<Bits>> = (0..n)
            .map(|p| {
                let ds = decide_sets[p].as_ref()?;
                let views = self.partial_views(&bcast_views[p], ds);
                self.decode_views(&views).ok()
            })
            .collect();
        self.record_decisions(g, DecisionPath::Diagnosis, decisions, &ff, canon)?;
        self.totals.accumulate(&stats);
        self.transcript.push(Record::GenerationStats { stats });
        Ok(GenerationResult::Decided)
    }

    /// Whether the symbols processor `p` received from the match-set members
    /// it trusts lie on a codeword (in every block).
    fn view_consistent(&self, p: usize, match_set: &[usize]) -> bool {
        let views = self.partial_views(&self.procs[p].recv, match_set);
        views.iter().all(|v| self.code.is_consistent(v))
    }

    /// Per-block partial views over `positions`, reading from a symbol table.
    fn partial_views(&self, table: &[Option<Vec<Fe>>], positions: &[usize]) -> Vec<PartialView> {
        (0..self.config.blocks)
            .map(|b| {
                let mut view = PartialView::unknown(self.config.n);
                for &j in positions {
                    if let Some(symbols) = &table[j] {
                        view.0[j] = Some(symbols[b]);
                    }
                }
                view
            })
            .collect()
    }

    fn decode_views(&self, views: &[PartialView]) -> Result<Bits, crate::rs::CodeError> {
        let c = self.config.c as usize;
        let mut out = Bits::zeros(self.config.d_bits);
        for (b, view) in views.iter().enumerate() {
            let block: DataBlock = self.code.erasure_decode(view)?;
            for (s, fe) in block.0.iter().enumerate() {
                out.write_uint(b * self.config.k * c + s * c, c, fe.0 as u64);
            }
        }
        Ok(out)
    }

    fn decode_from_recv(&self, p: usize, match_set: &[usize]) -> Result<Bits, crate::rs::CodeError> {
        let views = self.partial_views(&self.procs[p].recv, match_set);
        self.decode_views(&views)
    }

    fn record_decisions(
        &mut self,
        g: usize,
        via: DecisionPath,
        decisions: Vec<Option<Bits>>,
        ff: &[usize],
        canon: usize,
    ) -> Result<(), SimError> {
        self.check(
            ff.iter().all(|&p| decisions[p].is_some()),
            "decode_failure",
            || format!("a fault-free processor failed to decode in generation {g}"),
        )?;
        self.check(
            ff.iter().all(|&p| decisions[p] == decisions[canon]),
            "decision_equality",
            || format!("fault-free decisions diverge in generation {g}"),
        )?;
        self.transcript.push(Record::Decision {
            generation: g,
            via,
            value_hex: decisions[canon].as_ref().unwrap().to_hex(),
        });
        for (p, d) in decisions.into_iter().enumerate() {
            self.procs[p].decisions.push(d);
        }
        Ok(())
    }

    /// Resolves the input bit of a broadcast instance: honest value for
    /// fault-free sources, adversary's choice for faulty ones.
    #[allow(clippy::too_many_arguments)]
    fn resolve_input(
        &mut self,
        adversary: &mut dyn Adversary,
        g: usize,
        stage: Stage,
        isolated: &[usize],
        own_symbols: &[Vec<u16>],
        match_set: Option<&[usize]>,
        source: usize,
        kind: &InstanceKind,
        honest: bool,
    ) -> bool {
        if isolated.contains(&source) || !self.faulty.contains(&source) {
            return honest;
        }
        let view = View {
            scenario: self.scenario,
            generation: g,
            stage,
            faulty: &self.faulty,
            isolated,
            own_symbols,
            match_set,
        };
        adversary.bsb_input(&view, kind, honest)
    }

    /// Runs one broadcast batch among the active processors and normalizes
    /// the results of instances with an isolated source to false.
    #[allow(clippy::too_many_arguments)]
    fn run_batch_stage(
        &mut self,
        adversary: &mut dyn Adversary,
        g: usize,
        stage: Stage,
        active: &[usize],
        isolated: &[usize],
        own_symbols: &[Vec<u16>],
        match_set: Option<&[usize]>,
        instances: Vec<Instance>,
    ) -> bsb::BatchResult {
        let mut hooks = BatchHooks {
            adv: adversary,
            view: View {
                scenario: self.scenario,
                generation: g,
                stage,
                faulty: &self.faulty,
                isolated,
                own_symbols,
                match_set,
            },
        };
        let mut batch = bsb::run_batch(
            self.config.n,
            self.config.t,
            active,
            &self.faulty,
            &instances,
            &mut hooks,
        );
        for inst in batch.instances.iter_mut() {
            if isolated.contains(&inst.source) {
                inst.delivered = vec![false; self.config.n];
            }
        }
        batch
    }

    fn finish(mut self) -> Result<RunOutcome, SimError> {
        let canon = self.canon();
        let ff = self.ff_ids();
        let outputs: Vec<Option<ConsensusOutput>> = (0..self.config.n)
            .map(|p| {
                let proc = &self.procs[p];
                if self.terminated_default {
                    return Some(ConsensusOutput {
                        value: Bits::zeros(self.config.l_bits),
                        per_generation: proc
                            .decisions
                            .iter()
                            .map(|d| d.as_ref().map(|b| b.to_hex()).unwrap_or_default())
                            .collect(),
                        terminated_default: true,
                    });
                }
                let mut value = Bits::zeros(0);
                let mut per_generation = Vec::new();
                for d in &proc.decisions {
                    let d = d.as_ref()?;
                    per_generation.push(d.to_hex());
                    value.extend(d);
                }
                Some(ConsensusOutput {
                    value: value.resized(self.config.l_bits),
                    per_generation,
                    terminated_default: false,
                })
            })
            .collect();

        self.check(
            ff.iter().all(|&p| outputs[p].is_some() && outputs[p] == outputs[canon]),
            "output_consistency",
            || "fault-free outputs diverge".into(),
        )?;

        let isolated = self.procs[canon].graph.isolated();
        let summary = Summary {
            l_bits: self.config.l_bits,
            d_bits: self.config.d_bits,
            symbol_bits: self.config.c,
            generations_run: self.totals.generations,
            terminated_default: self.terminated_default,
            output_hex: outputs[canon].as_ref().unwrap().value.to_hex(),
            totals: self.totals,
            isolated: isolated.clone(),
            invariants_checked: self.invariants_checked,
        };
        self.transcript.push(Record::Summary(summary));

        Ok(RunOutcome {
            config: self.config,
            outputs,
            transcript: self.transcript,
            totals: self.totals,
            isolated,
            faulty: self.faulty.iter().copied().collect(),
            diagnosis_count: self.diagnosis_count,
        })
    }
}

/// Splits generation g of the padded input into data blocks.
fn slice_blocks(input: &Bits, g: usize, config: &ConsensusConfig) -> Vec<DataBlock> {
    let c = config.c as usize;
    let base = g * config.d_bits;
    (0..config.blocks)
        .map(|b| {
            let symbols = (0..config.k)
                .map(|s| Fe(input.read_uint(base + b * config.k * c + s * c, c) as u16))
                .collect();
            DataBlock(symbols)
        })
        .collect()
}

/// Bit `bit_index` (block-major, MSB first within a symbol) of a symbol
/// vector.
fn symbol_bit(symbols: &[u16], bit_index: usize, c: u32) -> bool {
    let c = c as usize;
    let block = bit_index / c;
    let bit = bit_index % c;
    symbols[block] >> (c - 1 - bit) & 1 == 1
}
