//! Byzantine single-bit broadcast (BSB).
//!
//! A source disseminates one bit so that every fault-free processor outputs
//! the same bit, and that bit equals the source's input whenever the source
//! is fault-free. The contract holds for t < n/3 in every execution,
//! whatever the faulty processors do.
//!
//! The reference implementation relays the source bit and then runs t + 1
//! phases of king-arbitrated agreement on it. Each phase has three rounds:
//! an all-to-all exchange of current bits with a threshold test at n - t, an
//! all-to-all exchange of the threshold results with a second test at t + 1,
//! and a broadcast by the phase king which every processor without n - t
//! support adopts. The round-level transition logic is exposed so that tests
//! can drive it exhaustively and the engine can advance many instances in
//! lockstep.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BsbError {
    #[error("broadcast tolerates only t < n/3 faults, got n={n}, t={t}")]
    BoundViolated { n: usize, t: usize },
    #[error("source {id} is not a valid processor id (n={n})")]
    BadSource { id: usize, n: usize },
}

/// What a broadcast instance carries, for transcripts and adversaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InstanceKind {
    /// Entry `about` of the owner's match vector.
    MatchBit { owner: usize, about: usize },
    /// The owner's inconsistency-detected flag.
    DetectFlag { owner: usize },
    /// Bit `bit_index` of a match-set member's own codeword symbol.
    ValueBit { member: usize, bit_index: usize },
    /// Entry `about` of the owner's trust vector.
    TrustBit { owner: usize, about: usize },
    /// A broadcast outside the consensus engine.
    Raw,
}

/// A message inside a broadcast instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BsbMsg {
    Bit(bool),
    /// Threshold-test result: may be "no value reached the threshold".
    Vote(Option<bool>),
}

impl BsbMsg {
    pub fn bit_len(&self) -> u64 {
        match self {
            BsbMsg::Bit(_) => 1,
            BsbMsg::Vote(_) => 2,
        }
    }
}

/// The fixed round schedule of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundKind {
    Relay,
    Exchange { phase: usize },
    Vote { phase: usize },
    King { phase: usize },
}

pub fn round_schedule(t: usize) -> Vec<RoundKind> {
    let mut rounds = vec![RoundKind::Relay];
    for phase in 0..=t {
        rounds.push(RoundKind::Exchange { phase });
        rounds.push(RoundKind::Vote { phase });
        rounds.push(RoundKind::King { phase });
    }
    rounds
}

pub fn round_count(t: usize) -> u32 {
    1 + 3 * (t as u32 + 1)
}

/// Point-to-point bits a single instance costs when all `q` participants
/// follow the protocol.
pub fn honest_bit_cost(q: usize, t: usize) -> u64 {
    let q = q as u64;
    let t = t as u64;
    (q - 1) * (1 + (t + 1) * (3 * q + 1))
}

/// Per-processor state of one instance. Entries for processors outside the
/// participant set stay at their initial values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsbState {
    pub cur: Vec<bool>,
    pub vote: Vec<Option<bool>>,
    pub strong: Vec<bool>,
}

impl BsbState {
    pub fn new(n: usize, source: usize, input: bool) -> Self {
        let mut cur = vec![false; n];
        cur[source] = input;
        BsbState { cur, vote: vec![None; n], strong: vec![false; n] }
    }
}

/// One delivered message within an instance round.
#[derive(Debug, Clone, Copy)]
pub struct Delivery {
    pub from: usize,
    pub to: usize,
    pub msg: BsbMsg,
}

/// The message a protocol-following `sender` emits in `round`, or None if it
/// does not send in this round.
pub fn honest_message(
    state: &BsbState,
    round: RoundKind,
    sender: usize,
    source: usize,
) -> Option<BsbMsg> {
    match round {
        RoundKind::Relay => (sender == source).then(|| BsbMsg::Bit(state.cur[source])),
        RoundKind::Exchange { .. } => Some(BsbMsg::Bit(state.cur[sender])),
        RoundKind::Vote { .. } => Some(BsbMsg::Vote(state.vote[sender])),
        RoundKind::King { phase } => (sender == phase).then(|| BsbMsg::Bit(state.cur[sender])),
    }
}

/// Advances every participant's state through one round, given the messages
/// actually delivered. A missing message is simply not counted, except that a
/// missing relay or king bit reads as 0.
pub fn apply_round(
    state: &mut BsbState,
    n: usize,
    t: usize,
    participants: &[usize],
    round: RoundKind,
    deliveries: &[Delivery],
) {
    match round {
        RoundKind::Relay => {
            // Non-source participants start at 0, so an absent relay bit
            // already reads as 0; the source keeps its own input.
            for d in deliveries {
                if let BsbMsg::Bit(b) = d.msg {
                    state.cur[d.to] = b;
                }
            }
        }
        RoundKind::Exchange { .. } => {
            let mut ones = vec![0usize; n];
            let mut zeros = vec![0usize; n];
            for d in deliveries {
                if let BsbMsg::Bit(b) = d.msg {
                    if b {
                        ones[d.to] += 1;
                    } else {
                        zeros[d.to] += 1;
                    }
                }
            }
            for &r in participants {
                if state.cur[r] {
                    ones[r] += 1;
                } else {
                    zeros[r] += 1;
                }
                state.vote[r] = if ones[r] >= n - t {
                    Some(true)
                } else if zeros[r] >= n - t {
                    Some(false)
                } else {
                    None
                };
            }
        }
        RoundKind::Vote { .. } => {
            let mut yes = vec![0usize; n];
            let mut no = vec![0usize; n];
            for d in deliveries {
                if let BsbMsg::Vote(v) = d.msg {
                    match v {
                        Some(true) => yes[d.to] += 1,
                        Some(false) => no[d.to] += 1,
                        None => {}
                    }
                }
            }
            for &r in participants {
                match state.vote[r] {
                    Some(true) => yes[r] += 1,
                    Some(false) => no[r] += 1,
                    None => {}
                }
                if yes[r] >= t + 1 {
                    state.cur[r] = true;
                    state.strong[r] = yes[r] >= n - t;
                } else if no[r] >= t + 1 {
                    state.cur[r] = false;
                    state.strong[r] = no[r] >= n - t;
                } else {
                    state.strong[r] = false;
                }
            }
        }
        RoundKind::King { phase } => {
            let mut king_bit = vec![false; n];
            for d in deliveries {
                if let BsbMsg::Bit(b) = d.msg {
                    king_bit[d.to] = b;
                }
            }
            for &r in participants {
                if r != phase && !state.strong[r] {
                    state.cur[r] = king_bit[r];
                }
            }
        }
    }
}

/// A logical broadcast to run in a batch.
#[derive(Debug, Clone, Copy)]
pub struct Instance {
    pub source: usize,
    /// The bit the source starts from. For a faulty source this is the value
    /// the adversary chose to inject.
    pub input: bool,
    pub kind: InstanceKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceResult {
    pub kind: InstanceKind,
    pub source: usize,
    /// Output bit at each processor; entries of non-participants are false.
    pub delivered: Vec<bool>,
    pub bits_sent: u64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub instances: Vec<InstanceResult>,
    pub rounds: u32,
}

/// Hook through which faulty participants tamper with instance messages.
///
/// For each faulty sender due to send in a round, `corrupt` receives the
/// message the protocol would send plus the fault-free messages of the same
/// round (the adversary is rushing), and returns what to send to each target
/// (None = stay silent toward that target).
pub trait Interference {
    fn corrupt(
        &mut self,
        instance: usize,
        kind: &InstanceKind,
        round: RoundKind,
        from: usize,
        honest: BsbMsg,
        targets: &[usize],
        ff_round: &[(usize, usize, BsbMsg)],
    ) -> Vec<Option<BsbMsg>>;
}

/// No tampering: every faulty processor follows the protocol.
pub struct NoInterference;

impl Interference for NoInterference {
    fn corrupt(
        &mut self,
        _instance: usize,
        _kind: &InstanceKind,
        _round: RoundKind,
        _from: usize,
        honest: BsbMsg,
        targets: &[usize],
        _ff_round: &[(usize, usize, BsbMsg)],
    ) -> Vec<Option<BsbMsg>> {
        vec![Some(honest); targets.len()]
    }
}

/// Runs a batch of instances in lockstep over the shared round schedule.
///
/// `participants` are the processors taking part (sorted ids); isolated
/// processors are excluded by the caller. An instance whose source is not a
/// participant runs with an absent source and deterministically delivers 0.
pub fn run_batch(
    n: usize,
    t: usize,
    participants: &[usize],
    faulty: &BTreeSet<usize>,
    instances: &[Instance],
    interference: &mut dyn Interference,
) -> BatchResult {
    assert!(n > 3 * t, "broadcast requires n > 3t");
    let schedule = round_schedule(t);
    let mut states: Vec<BsbState> = instances
        .iter()
        .map(|inst| BsbState::new(n, inst.source, inst.input))
        .collect();
    let mut bits = vec![0u64; instances.len()];

    let mut deliveries: Vec<Vec<Delivery>> = vec![Vec::new(); instances.len()];
    let mut ff_round: Vec<(usize, usize, BsbMsg)> = Vec::new();
    for &round in &schedule {
        for d in deliveries.iter_mut() {
            d.clear();
        }
        ff_round.clear();

        // Fault-free senders first: the adversary gets to see them.
        for (idx, inst) in instances.iter().enumerate() {
            for &s in participants {
                if faulty.contains(&s) {
                    continue;
                }
                if let Some(msg) = honest_message(&states[idx], round, s, inst.source) {
                    for &r in participants {
                        if r != s {
                            deliveries[idx].push(Delivery { from: s, to: r, msg });
                            bits[idx] += msg.bit_len();
                        }
                    }
                    ff_round.push((idx, s, msg));
                }
            }
        }
        for (idx, inst) in instances.iter().enumerate() {
            for &s in participants {
                if !faulty.contains(&s) {
                    continue;
                }
                if let Some(honest) = honest_message(&states[idx], round, s, inst.source) {
                    let targets: Vec<usize> =
                        participants.iter().copied().filter(|&r| r != s).collect();
                    let chosen =
                        interference.corrupt(idx, &inst.kind, round, s, honest, &targets, &ff_round);
                    assert_eq!(chosen.len(), targets.len(), "one choice per target");
                    for (&r, msg) in targets.iter().zip(chosen) {
                        if let Some(msg) = msg {
                            deliveries[idx].push(Delivery { from: s, to: r, msg });
                            bits[idx] += msg.bit_len();
                        }
                    }
                }
            }
        }
        for (idx, _) in instances.iter().enumerate() {
            apply_round(&mut states[idx], n, t, participants, round, &deliveries[idx]);
        }
    }

    let instances = instances
        .iter()
        .zip(states.iter())
        .zip(bits.iter())
        .map(|((inst, state), &bits_sent)| {
            let mut delivered = vec![false; n];
            for &p in participants {
                delivered[p] = state.cur[p];
            }
            InstanceResult { kind: inst.kind, source: inst.source, delivered, bits_sent }
        })
        .collect();
    BatchResult { instances, rounds: round_count(t) }
}

/// Broadcasts one bit from `source` among all n processors.
pub fn broadcast_bit(
    n: usize,
    t: usize,
    source: usize,
    bit: bool,
    faulty: &BTreeSet<usize>,
    interference: &mut dyn Interference,
) -> Result<InstanceResult, BsbError> {
    if n <= 3 * t {
        return Err(BsbError::BoundViolated { n, t });
    }
    if source >= n {
        return Err(BsbError::BadSource { id: source, n });
    }
    let participants: Vec<usize> = (0..n).collect();
    let batch = run_batch(
        n,
        t,
        &participants,
        faulty,
        &[Instance { source, input: bit, kind: InstanceKind::Raw }],
        interference,
    );
    Ok(batch.instances.into_iter().next().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn no_faults() -> BTreeSet<usize> {
        BTreeSet::new()
    }

    #[test]
    fn rejects_bound_violation() {
        assert_eq!(
            broadcast_bit(6, 2, 0, true, &no_faults(), &mut NoInterference),
            Err(BsbError::BoundViolated { n: 6, t: 2 })
        );
        assert_eq!(
            broadcast_bit(4, 1, 9, true, &no_faults(), &mut NoInterference),
            Err(BsbError::BadSource { id: 9, n: 4 })
        );
    }

    #[test]
    fn fault_free_run_delivers_source_bit_at_formula_cost() {
        for (n, t) in [(4usize, 1usize), (7, 2), (5, 1), (10, 3)] {
            for bit in [false, true] {
                let res = broadcast_bit(n, t, n - 1, bit, &no_faults(), &mut NoInterference).unwrap();
                assert_eq!(res.delivered, vec![bit; n]);
                assert_eq!(res.bits_sent, honest_bit_cost(n, t), "n={n} t={t}");
            }
        }
    }

    #[test]
    fn round_count_matches_schedule() {
        for t in 0..4 {
            assert_eq!(round_schedule(t).len() as u32, round_count(t));
        }
    }

    /// Sends nothing at all from faulty processors.
    struct Mute;
    impl Interference for Mute {
        fn corrupt(
            &mut self,
            _i: usize,
            _k: &InstanceKind,
            _r: RoundKind,
            _f: usize,
            _h: BsbMsg,
            targets: &[usize],
            _ff: &[(usize, usize, BsbMsg)],
        ) -> Vec<Option<BsbMsg>> {
            vec![None; targets.len()]
        }
    }

    #[test]
    fn silent_faulty_source_agrees_on_default() {
        let faulty: BTreeSet<usize> = [0].into();
        let res = broadcast_bit(4, 1, 0, true, &faulty, &mut Mute).unwrap();
        assert_eq!(&res.delivered[1..], &[false, false, false]);
    }

    #[test]
    fn silent_faulty_bystander_preserves_validity() {
        let faulty: BTreeSet<usize> = [2].into();
        for bit in [false, true] {
            let res = broadcast_bit(4, 1, 0, bit, &faulty, &mut Mute).unwrap();
            assert_eq!(res.delivered[0], bit);
            assert_eq!(res.delivered[1], bit);
            assert_eq!(res.delivered[3], bit);
        }
    }

    /// Randomized per-target lies for every faulty sender.
    struct Chaotic(ChaCha12Rng);
    impl Interference for Chaotic {
        fn corrupt(
            &mut self,
            _i: usize,
            _k: &InstanceKind,
            round: RoundKind,
            _f: usize,
            _h: BsbMsg,
            targets: &[usize],
            _ff: &[(usize, usize, BsbMsg)],
        ) -> Vec<Option<BsbMsg>> {
            targets
                .iter()
                .map(|_| match self.0.gen_range(0..4u8) {
                    0 => None,
                    1 => Some(match round {
                        RoundKind::Vote { .. } => BsbMsg::Vote(None),
                        _ => BsbMsg::Bit(false),
                    }),
                    2 => Some(match round {
                        RoundKind::Vote { .. } => BsbMsg::Vote(Some(false)),
                        _ => BsbMsg::Bit(false),
                    }),
                    _ => Some(match round {
                        RoundKind::Vote { .. } => BsbMsg::Vote(Some(true)),
                        _ => BsbMsg::Bit(true),
                    }),
                })
                .collect()
        }
    }

    #[test]
    fn randomized_adversary_sweep_small() {
        // broader n=7 sweep lives in the acceptance suite
        for seed in 0..200u64 {
            let faulty: BTreeSet<usize> = [seed as usize % 4].into();
            let source = (seed as usize / 4) % 4;
            let bit = seed % 2 == 0;
            let mut adv = Chaotic(ChaCha12Rng::seed_from_u64(seed));
            let res = broadcast_bit(4, 1, source, bit, &faulty, &mut adv).unwrap();
            let outs: Vec<bool> = (0..4)
                .filter(|p| !faulty.contains(p))
                .map(|p| res.delivered[p])
                .collect();
            assert!(outs.windows(2).all(|w| w[0] == w[1]), "agreement, seed {seed}");
            if !faulty.contains(&source) {
                assert_eq!(outs[0], bit, "validity, seed {seed}");
            }
        }
    }

    #[test]
    fn batch_runs_instances_independently() {
        let participants: Vec<usize> = (0..4).collect();
        let instances = [
            Instance { source: 0, input: true, kind: InstanceKind::Raw },
            Instance { source: 1, input: false, kind: InstanceKind::Raw },
            Instance { source: 2, input: true, kind: InstanceKind::Raw },
        ];
        let batch = run_batch(4, 1, &participants, &no_faults(), &instances, &mut NoInterference);
        assert_eq!(batch.instances[0].delivered, vec![true; 4]);
        assert_eq!(batch.instances[1].delivered, vec![false; 4]);
        assert_eq!(batch.instances[2].delivered, vec![true; 4]);
        assert_eq!(batch.rounds, round_count(1));
    }

    #[test]
    fn absent_source_instance_delivers_zero() {
        // participant set without processor 3; instance sourced at 3
        let participants = [0usize, 1, 2];
        let faulty: BTreeSet<usize> = [3].into();
        let batch = run_batch(
            4,
            1,
            &participants,
            &faulty,
            &[Instance { source: 3, input: true, kind: InstanceKind::Raw }],
            &mut NoInterference,
        );
        assert_eq!(batch.instances[0].delivered, vec![false; 4]);
    }

    /// Once every fault-free processor holds the same bit at a phase
    /// boundary, that bit is the final output.
    #[test]
    fn persistence_from_unanimous_state() {
        let n = 7;
        let t = 2;
        let participants: Vec<usize> = (0..n).collect();
        let faulty: BTreeSet<usize> = [5, 6].into();
        for bit in [false, true] {
            for seed in 0..50u64 {
                let mut state = BsbState::new(n, 0, bit);
                for p in 0..n {
                    state.cur[p] = bit; // unanimous fault-free boundary state
                }
                let mut adv = Chaotic(ChaCha12Rng::seed_from_u64(seed));
                // drive the phase rounds only, skipping the relay
                for round in round_schedule(t).into_iter().skip(1) {
                    let mut deliveries = Vec::new();
                    let mut ff = Vec::new();
                    for &s in &participants {
                        if faulty.contains(&s) {
                            if let Some(h) = honest_message(&state, round, s, 0) {
                                let targets: Vec<usize> =
                                    participants.iter().copied().filter(|&r| r != s).collect();
                                for (&r, m) in targets
                                    .iter()
                                    .zip(adv.corrupt(0, &InstanceKind::Raw, round, s, h, &targets, &ff))
                                {
                                    if let Some(m) = m {
                                        deliveries.push(Delivery { from: s, to: r, msg: m });
                                    }
                                }
                            }
                        } else if let Some(m) = honest_message(&state, round, s, 0) {
                            for &r in &participants {
                                if r != s {
                                    deliveries.push(Delivery { from: s, to: r, msg: m });
                                }
                            }
                            ff.push((0, s, m));
                        }
                    }
                    apply_round(&mut state, n, t, &participants, round, &deliveries);
                }
                for p in 0..n {
                    if !faulty.contains(&p) {
                        assert_eq!(state.cur[p], bit, "persistence broken at seed {seed}");
                    }
                }
            }
        }
    }
}
