//! The trust graph used for fault diagnosis.
//!
//! Vertices are processors; an edge means the two processors still trust each
//! other. The graph starts complete and edges are only ever removed, based on
//! information every fault-free processor received identically, so all
//! fault-free replicas of the graph evolve in lockstep. A vertex that loses
//! more edges than the fault bound allows is provably faulty and is isolated
//! outright.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("a trust graph needs at least 4 vertices, got {0}")]
    TooFewVertices(usize),
}

/// Why an edge was removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalCause {
    /// One endpoint announced a value mismatch for the other.
    TrustMismatch,
    /// The vertex reported an inconsistency that the broadcast values disprove.
    FalseAccusation,
    /// The vertex exceeded the removed-edge threshold and is proven faulty.
    DegreeThreshold,
}

/// A single audited edge removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRemovalEvent {
    pub generation: usize,
    pub a: usize,
    pub b: usize,
    pub cause: RemovalCause,
}

impl EdgeRemovalEvent {
    pub fn touches(&self, v: usize) -> bool {
        self.a == v || self.b == v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustGraph {
    n: usize,
    adj: Vec<Vec<bool>>,
    removed: Vec<usize>,
}

impl TrustGraph {
    /// A complete graph on n vertices: everyone trusts everyone.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        if n < 4 {
            return Err(GraphError::TooFewVertices(n));
        }
        let mut adj = vec![vec![true; n]; n];
        for (v, row) in adj.iter_mut().enumerate() {
            row[v] = false;
        }
        Ok(TrustGraph { n, adj, removed: vec![0; n] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trusts(&self, i: usize, j: usize) -> bool {
        assert!(i != j, "trust between a processor and itself is undefined");
        self.adj[i][j]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&e| e).count()
    }

    pub fn removed_count(&self, v: usize) -> usize {
        self.removed[v]
    }

    pub fn is_isolated(&self, v: usize) -> bool {
        self.degree(v) == 0
    }

    pub fn isolated(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.is_isolated(v)).collect()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).sum::<usize>() / 2
    }

    fn remove(&mut self, i: usize, j: usize) -> bool {
        if !self.adj[i][j] {
            return false;
        }
        self.adj[i][j] = false;
        self.adj[j][i] = false;
        self.removed[i] += 1;
        self.removed[j] += 1;
        true
    }

    /// Removes every still-present edge that either endpoint distrusts
    /// according to the broadcast trust vectors. `trust[i][j]` is only
    /// meaningful when j is in the match set, so an edge is judged in each
    /// direction that has a defined entry.
    pub fn apply_trust_vectors(
        &mut self,
        generation: usize,
        in_match_set: &[bool],
        trust: &[Vec<bool>],
    ) -> Vec<EdgeRemovalEvent> {
        let mut events = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if !self.adj[a][b] {
                    continue;
                }
                let accused = (in_match_set[b] && !trust[a][b]) || (in_match_set[a] && !trust[b][a]);
                if accused && self.remove(a, b) {
                    events.push(EdgeRemovalEvent { generation, a, b, cause: RemovalCause::TrustMismatch });
                }
            }
        }
        events
    }

    /// When the broadcast symbols were consistent, an accuser with no edge
    /// removed by the trust vectors this stage lied about the inconsistency
    /// and is isolated. Does nothing when `bcast_consistent` is false.
    pub fn isolate_false_accusers(
        &mut self,
        generation: usize,
        bcast_consistent: bool,
        accusers: &[usize],
        stage_events: &[EdgeRemovalEvent],
    ) -> Vec<EdgeRemovalEvent> {
        let mut events = Vec::new();
        if !bcast_consistent {
            return events;
        }
        for &j in accusers {
            if stage_events.iter().any(|e| e.touches(j)) {
                continue;
            }
            for other in 0..self.n {
                if other != j && self.remove(j, other) {
                    events.push(EdgeRemovalEvent {
                        generation,
                        a: j.min(other),
                        b: j.max(other),
                        cause: RemovalCause::FalseAccusation,
                    });
                }
            }
        }
        events
    }

    /// Isolates every vertex whose cumulative removed-edge count reached
    /// t + 1, repeating until no vertex crosses the threshold (an isolation
    /// removes edges at other vertices and may push them over).
    pub fn apply_degree_rule(&mut self, generation: usize, t: usize) -> Vec<EdgeRemovalEvent> {
        let mut events = Vec::new();
        loop {
            let over = (0..self.n).find(|&v| self.removed[v] >= t + 1 && self.degree(v) > 0);
            let Some(v) = over else { break };
            for other in 0..self.n {
                if other != v && self.remove(v, other) {
                    events.push(EdgeRemovalEvent {
                        generation,
                        a: v.min(other),
                        b: v.max(other),
                        cause: RemovalCause::DegreeThreshold,
                    });
                }
            }
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trust_all(n: usize) -> Vec<Vec<bool>> {
        vec![vec![true; n]; n]
    }

    #[test]
    fn complete_graph_has_all_edges() {
        let g = TrustGraph::complete(4).unwrap();
        assert_eq!(g.edge_count(), 6);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(g.trusts(i, j));
                }
            }
        }
        assert_eq!(TrustGraph::complete(7).unwrap().edge_count(), 21);
        assert_eq!(TrustGraph::complete(3), Err(GraphError::TooFewVertices(3)));
    }

    #[test]
    #[should_panic(expected = "undefined")]
    fn self_trust_is_undefined() {
        TrustGraph::complete(4).unwrap().trusts(2, 2);
    }

    #[test]
    fn all_true_trust_vectors_remove_nothing() {
        let mut g = TrustGraph::complete(4).unwrap();
        let events = g.apply_trust_vectors(0, &[true; 4], &trust_all(4));
        assert!(events.is_empty());
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn one_sided_accusation_removes_the_edge() {
        let mut g = TrustGraph::complete(4).unwrap();
        let mut trust = trust_all(4);
        trust[0][1] = false; // 0 accuses 1; 1 still vouches for 0
        let in_match = [true, true, true, false];
        let events = g.apply_trust_vectors(3, &in_match, &trust);
        assert_eq!(
            events,
            vec![EdgeRemovalEvent { generation: 3, a: 0, b: 1, cause: RemovalCause::TrustMismatch }]
        );
        assert!(!g.trusts(0, 1));
        assert_eq!(g.removed_count(0), 1);
        assert_eq!(g.removed_count(1), 1);

        // idempotent: the edge is already gone, no second event
        let again = g.apply_trust_vectors(4, &in_match, &trust);
        assert!(again.is_empty());
    }

    #[test]
    fn accusations_against_outsiders_are_ignored() {
        let mut g = TrustGraph::complete(4).unwrap();
        let mut trust = trust_all(4);
        trust[0][3] = false; // 3 is outside the match set: entry undefined
        let in_match = [true, true, true, false];
        assert!(g.apply_trust_vectors(0, &in_match, &trust).is_empty());
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn false_accuser_is_isolated_only_when_broadcast_was_consistent() {
        let mut g = TrustGraph::complete(7).unwrap();
        let events = g.isolate_false_accusers(1, false, &[5], &[]);
        assert!(events.is_empty());
        assert!(!g.is_isolated(5));

        let events = g.isolate_false_accusers(1, true, &[5], &[]);
        assert_eq!(events.len(), 6);
        assert!(events.iter().all(|e| e.cause == RemovalCause::FalseAccusation && e.touches(5)));
        assert!(g.is_isolated(5));
    }

    #[test]
    fn accuser_with_incident_removal_is_spared() {
        let mut g = TrustGraph::complete(7).unwrap();
        let stage = vec![EdgeRemovalEvent { generation: 0, a: 2, b: 5, cause: RemovalCause::TrustMismatch }];
        g.remove(2, 5);
        let events = g.isolate_false_accusers(0, true, &[5], &stage);
        assert!(events.is_empty());
        assert_eq!(g.degree(5), 5);
    }

    #[test]
    fn degree_rule_isolates_over_threshold_and_cascades() {
        let mut g = TrustGraph::complete(5).unwrap();
        // t = 1: two removals at vertex 3 prove it faulty
        g.remove(3, 0);
        g.remove(3, 1);
        let events = g.apply_degree_rule(2, 1);
        assert!(g.is_isolated(3));
        assert!(events.iter().all(|e| e.cause == RemovalCause::DegreeThreshold));
        // isolating 3 removed (3,2) and (3,4); neither 2 nor 4 crossed 2 removals
        assert!(!g.is_isolated(2) && !g.is_isolated(4));
        assert_eq!(g.removed_count(2), 1);
    }

    #[test]
    fn degree_rule_no_change_below_threshold() {
        let mut g = TrustGraph::complete(5).unwrap();
        g.remove(3, 0);
        assert!(g.apply_degree_rule(0, 1).is_empty());
        assert_eq!(g.degree(3), 3);
    }

    #[test]
    fn symmetry_and_monotonicity_hold_through_updates() {
        let mut g = TrustGraph::complete(6).unwrap();
        let mut trust = trust_all(6);
        trust[1][4] = false;
        trust[4][2] = false;
        let before = g.edge_count();
        g.apply_trust_vectors(0, &[true; 6], &trust);
        assert!(g.edge_count() < before);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(g.trusts(i, j), g.trusts(j, i));
                }
            }
        }
    }
}
