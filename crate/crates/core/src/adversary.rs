//! Byzantine adversaries.
//!
//! An adversary controls the processors in the scenario's faulty set and
//! nothing else. It is omniscient — it sees the whole scenario including all
//! inputs and the current protocol state — and rushing: within a round it
//! sees the fault-free messages before choosing the faulty ones. Hooks are
//! organized by protocol send point; the default implementation of every
//! hook follows the protocol, so a strategy only overrides the sends it
//! wants to tamper with.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bsb::{BsbMsg, InstanceKind, RoundKind};
use crate::scenario::{Scenario, Strategy};
use crate::transcript::Stage;

/// What the adversary sees when a hook runs.
pub struct View<'a> {
    pub scenario: &'a Scenario,
    pub generation: usize,
    pub stage: Stage,
    /// Processors currently under adversary control.
    pub faulty: &'a BTreeSet<usize>,
    pub isolated: &'a [usize],
    /// The symbol vector each processor honestly sends in the value
    /// exchange of this generation (its own codeword position).
    pub own_symbols: &'a [Vec<u16>],
    pub match_set: Option<&'a [usize]>,
}

impl View<'_> {
    pub fn is_fault_free(&self, p: usize) -> bool {
        !self.faulty.contains(&p)
    }
}

/// A fault-free send of the current round, visible to a rushing adversary.
pub type FfSend<'a> = (usize, usize, &'a [u16]);

pub trait Adversary {
    fn name(&self) -> &'static str;

    /// Adaptive takeover hook, called at every stage start. Returned ids are
    /// corrupted from now on; the engine enforces the cap of t in total.
    fn corrupt_now(&mut self, _view: &View) -> Vec<usize> {
        Vec::new()
    }

    /// Symbols faulty `from` sends in the value exchange, one entry per
    /// target (None = silent toward that target). `honest` is the symbol
    /// vector the protocol would send to everyone.
    fn matching_symbols(
        &mut self,
        _view: &View,
        _from: usize,
        honest: &[u16],
        targets: &[usize],
        _ff_sends: &[FfSend],
    ) -> Vec<Option<Vec<u16>>> {
        vec![Some(honest.to_vec()); targets.len()]
    }

    /// Input bit of a broadcast instance whose source is faulty. `honest` is
    /// the bit the protocol state machine would broadcast.
    fn bsb_input(&mut self, _view: &View, _kind: &InstanceKind, honest: bool) -> bool {
        honest
    }

    /// In-instance message corruption for a faulty participant; one entry
    /// per target, None = silent.
    #[allow(clippy::too_many_arguments)]
    fn bsb_round(
        &mut self,
        _view: &View,
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

/// Builds the adversary for a scenario's builtin strategy.
pub fn make_adversary(scenario: &Scenario) -> Box<dyn Adversary> {
    let seed = scenario.seed;
    match scenario.strategy {
        Strategy::Honest => Box::new(Honest),
        Strategy::Silent => Box::new(SilentAdv),
        Strategy::EquivocateMatching => Box::new(Equivocate::new(seed)),
        Strategy::FalseDetect => Box::new(FalseDetect),
        Strategy::CorruptBsb => Box::new(CorruptBroadcast::new(seed)),
        Strategy::Randomized => Box::new(RandomizedAdv::new(seed)),
        Strategy::Persistent => Box::new(Persistent::new(seed)),
    }
}

fn strategy_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub struct Honest;

impl Adversary for Honest {
    fn name(&self) -> &'static str {
        "honest"
    }
}

pub struct SilentAdv;

impl Adversary for SilentAdv {
    fn name(&self) -> &'static str {
        "silent"
    }

    fn matching_symbols(
        &mut self,
        _view: &View,
        _from: usize,
        _honest: &[u16],
        targets: &[usize],
        _ff: &[FfSend],
    ) -> Vec<Option<Vec<u16>>> {
        vec![None; targets.len()]
    }

    fn bsb_round(
        &mut self,
        _view: &View,
        _instance: usize,
        _kind: &InstanceKind,
        _round: RoundKind,
        _from: usize,
        _honest: BsbMsg,
        targets: &[usize],
        _ff: &[(usize, usize, BsbMsg)],
    ) -> Vec<Option<BsbMsg>> {
        vec![None; targets.len()]
    }
}

/// Sends a corrupted symbol to a seeded subset of peers in the value
/// exchange, behaving honestly everywhere else.
pub struct Equivocate {
    rng: ChaCha12Rng,
}

impl Equivocate {
    pub fn new(seed: u64) -> Self {
        Equivocate { rng: strategy_rng(seed, 1) }
    }
}

impl Adversary for Equivocate {
    fn name(&self) -> &'static str {
        "equivocate_matching"
    }

    fn matching_symbols(
        &mut self,
        _view: &View,
        _from: usize,
        honest: &[u16],
        targets: &[usize],
        _ff: &[FfSend],
    ) -> Vec<Option<Vec<u16>>> {
        targets
            .iter()
            .map(|_| {
                if self.rng.gen() {
                    let mut corrupted = honest.to_vec();
                    corrupted[0] ^= 1;
                    Some(corrupted)
                } else {
                    Some(honest.to_vec())
                }
            })
            .collect()
    }
}

/// Announces a detected inconsistency even when its received symbols are
/// consistent.
pub struct FalseDetect;

impl Adversary for FalseDetect {
    fn name(&self) -> &'static str {
        "false_detect"
    }

    fn bsb_input(&mut self, _view: &View, kind: &InstanceKind, honest: bool) -> bool {
        match kind {
            InstanceKind::DetectFlag { .. } => true,
            _ => honest,
        }
    }
}

/// Lies inside broadcast instances: each outgoing in-instance message is
/// randomly kept, flipped, or dropped.
pub struct CorruptBroadcast {
    rng: ChaCha12Rng,
}

impl CorruptBroadcast {
    pub fn new(seed: u64) -> Self {
        CorruptBroadcast { rng: strategy_rng(seed, 2) }
    }
}

fn random_msg(rng: &mut ChaCha12Rng, round: RoundKind) -> Option<BsbMsg> {
    match round {
        RoundKind::Vote { .. } => match rng.gen_range(0..4u8) {
            0 => None,
            1 => Some(BsbMsg::Vote(None)),
            2 => Some(BsbMsg::Vote(Some(false))),
            _ => Some(BsbMsg::Vote(Some(true))),
        },
        _ => match rng.gen_range(0..3u8) {
            0 => None,
            1 => Some(BsbMsg::Bit(false)),
            _ => Some(BsbMsg::Bit(true)),
        },
    }
}

impl Adversary for CorruptBroadcast {
    fn name(&self) -> &'static str {
        "corrupt_bsb"
    }

    fn bsb_round(
        &mut self,
        _view: &View,
        _instance: usize,
        _kind: &InstanceKind,
        round: RoundKind,
        _from: usize,
        honest: BsbMsg,
        targets: &[usize],
        _ff: &[(usize, usize, BsbMsg)],
    ) -> Vec<Option<BsbMsg>> {
        targets
            .iter()
            .map(|_| {
                if self.rng.gen() {
                    Some(honest)
                } else {
                    random_msg(&mut self.rng, round)
                }
            })
            .collect()
    }
}

/// Seeded random misbehavior at every send point.
pub struct RandomizedAdv {
    rng: ChaCha12Rng,
}

impl RandomizedAdv {
    pub fn new(seed: u64) -> Self {
        RandomizedAdv { rng: strategy_rng(seed, 3) }
    }
}

impl Adversary for RandomizedAdv {
    fn name(&self) -> &'static str {
        "randomized"
    }

    fn matching_symbols(
        &mut self,
        view: &View,
        _from: usize,
        honest: &[u16],
        targets: &[usize],
        _ff: &[FfSend],
    ) -> Vec<Option<Vec<u16>>> {
        let order = 1u32 << symbol_width(view.scenario);
        targets
            .iter()
            .map(|_| match self.rng.gen_range(0..3u8) {
                0 => None,
                1 => Some(honest.to_vec()),
                _ => Some(
                    honest
                        .iter()
                        .map(|_| self.rng.gen_range(0..order) as u16)
                        .collect(),
                ),
            })
            .collect()
    }

    fn bsb_input(&mut self, _view: &View, _kind: &InstanceKind, _honest: bool) -> bool {
        self.rng.gen()
    }

    fn bsb_round(
        &mut self,
        _view: &View,
        _instance: usize,
        _kind: &InstanceKind,
        round: RoundKind,
        _from: usize,
        honest: BsbMsg,
        targets: &[usize],
        _ff: &[(usize, usize, BsbMsg)],
    ) -> Vec<Option<BsbMsg>> {
        targets
            .iter()
            .map(|_| {
                if self.rng.gen() {
                    Some(honest)
                } else {
                    random_msg(&mut self.rng, round)
                }
            })
            .collect()
    }
}

/// Misbehaves every generation until isolated: corrupts the symbol sent to
/// one fault-free victim in the value exchange and, when left outside the
/// match set, falsely announces a detection. Both moves reliably force the
/// diagnosis stage while the processor still has edges.
pub struct Persistent {
    rng: ChaCha12Rng,
}

impl Persistent {
    pub fn new(seed: u64) -> Self {
        Persistent { rng: strategy_rng(seed, 4) }
    }
}

impl Adversary for Persistent {
    fn name(&self) -> &'static str {
        "persistent"
    }

    fn matching_symbols(
        &mut self,
        view: &View,
        _from: usize,
        honest: &[u16],
        targets: &[usize],
        _ff: &[FfSend],
    ) -> Vec<Option<Vec<u16>>> {
        let ff_targets: Vec<usize> = targets
            .iter()
            .copied()
            .filter(|&p| view.is_fault_free(p))
            .collect();
        let victim = ff_targets[self.rng.gen_range(0..ff_targets.len())];
        targets
            .iter()
            .map(|&p| {
                if p == victim {
                    let mut corrupted = honest.to_vec();
                    corrupted[0] ^= 1;
                    Some(corrupted)
                } else {
                    Some(honest.to_vec())
                }
            })
            .collect()
    }

    fn bsb_input(&mut self, _view: &View, kind: &InstanceKind, honest: bool) -> bool {
        match kind {
            InstanceKind::DetectFlag { .. } => true,
            _ => honest,
        }
    }
}

fn symbol_width(scenario: &Scenario) -> u32 {
    crate::engine::symbol_width_for(scenario.n)
}
