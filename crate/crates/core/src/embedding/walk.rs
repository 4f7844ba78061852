//! Second-order biased random walks over a weighted undirected graph.
//!
//! A step from `cur` that arrived from `prev` picks neighbour `x` with
//! unnormalised probability `bias(prev, x) * w(cur, x)`, where the bias is
//! `1/p` for returning to `prev`, `1` for neighbours of `prev`, and `1/q`
//! otherwise. With `p = q = 1` this reduces to a first-order weighted walk.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alias::AliasTable;
use super::EmbeddingError;
use crate::geo::SpatialGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub p: f64,
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
    /// Budget, in alias-table slots, for cached second-order tables per worker.
    pub cache_slots: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { p: 1.0, q: 1.0, walk_length: 80, walks_per_node: 10, seed: 0, cache_slots: 4_000_000 }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |msg: &str| Err(EmbeddingError::InvalidConfig(msg.to_string()));
        if !(self.p > 0.0 && self.p.is_finite()) || !(self.q > 0.0 && self.q.is_finite()) {
            return bad("p and q must be positive");
        }
        if self.walk_length < 2 {
            return bad("walk_length must be at least 2");
        }
        if self.walks_per_node < 1 {
            return bad("walks_per_node must be at least 1");
        }
        Ok(())
    }
}

/// Compressed adjacency with neighbour lists sorted by node id.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl Adjacency {
    pub fn from_graph(g: &SpatialGraph) -> Self {
        let n = g.node_count();
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for e in g.edges() {
            lists[e.u].push((e.v as u32, e.weight));
            lists[e.v].push((e.u as u32, e.weight));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * g.edges().len());
        let mut weights = Vec::with_capacity(2 * g.edges().len());
        offsets.push(0);
        for mut list in lists {
            list.sort_by_key(|x| x.0);
            for (v, w) in list {
                neighbors.push(v);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors, weights }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn weights(&self, v: usize) -> &[f64] {
        &self.weights[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Unnormalised weights for the step out of `cur`, in neighbour order.
    pub fn step_weights(&self, prev: Option<usize>, cur: usize, p: f64, q: f64, out: &mut Vec<f64>) {
        out.clear();
        let ws = self.weights(cur);
        match prev {
            None => out.extend_from_slice(ws),
            Some(t) => {
                for (&x, &w) in self.neighbors(cur).iter().zip(ws) {
                    let x = x as usize;
                    let bias = if x == t {
                        1.0 / p
                    } else if self.has_edge(t, x) {
                        1.0
                    } else {
                        1.0 / q
                    };
                    out.push(bias * w);
                }
            }
        }
    }

    /// Normalised transition distribution `(neighbour, probability)`.
    pub fn transition_probabilities(&self, prev: Option<usize>, cur: usize, p: f64, q: f64) -> Vec<(usize, f64)> {
        let mut ws = Vec::new();
        self.step_weights(prev, cur, p, q, &mut ws);
        let total: f64 = ws.iter().sum();
        self.neighbors(cur).iter().zip(ws).map(|(&x, w)| (x as usize, w / total)).collect()
    }
}

/// Per-worker cache of second-order alias tables keyed by `(prev, cur)`.
/// Past the slot budget, tables are built on the fly and discarded; draws
/// are identical either way.
struct TransitionCache {
    tables: HashMap<(u32, u32), AliasTable>,
    used_slots: usize,
    capacity: usize,
    scratch: Vec<f64>,
}

impl TransitionCache {
    fn new(capacity: usize) -> Self {
        Self { tables: HashMap::new(), used_slots: 0, capacity, scratch: Vec::new() }
    }

    fn sample(&mut self, adj: &Adjacency, prev: usize, cur: usize, cfg: &WalkConfig, rng: &mut ChaCha8Rng) -> usize {
        let key = (prev as u32, cur as u32);
        let idx = if let Some(t) = self.tables.get(&key) {
            t.sample(rng)
        } else {
            adj.step_weights(Some(prev), cur, cfg.p, cfg.q, &mut self.scratch);
            let table = AliasTable::from_positive(&self.scratch);
            let idx = table.sample(rng);
            if self.used_slots + table.len() <= self.capacity {
                self.used_slots += table.len();
                self.tables.insert(key, table);
            }
            idx
        };
        adj.neighbors(cur)[idx] as usize
    }
}

/// Generates `walks_per_node` walks from every node. Walk `k` (round-major:
/// `k = round * n + start`) draws from its own ChaCha stream, so the output
/// does not depend on how work is split across threads.
pub fn generate_walks(g: &SpatialGraph, cfg: &WalkConfig) -> Result<Vec<Vec<u32>>, EmbeddingError> {
    cfg.validate()?;
    let adj = Adjacency::from_graph(g);
    let n = adj.node_count();
    if (0..n).any(|v| adj.neighbors(v).is_empty()) {
        return Err(EmbeddingError::InvalidConfig("graph has an isolated node".into()));
    }
    let first_order: Vec<AliasTable> = (0..n).map(|v| AliasTable::from_positive(adj.weights(v))).collect();

    let total = n * cfg.walks_per_node;
    let walks = (0..total)
        .into_par_iter()
        .map_init(
            || TransitionCache::new(cfg.cache_slots),
            |cache, k| {
                let start = k % n;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(k as u64);
                let mut walk = Vec::with_capacity(cfg.walk_length);
                walk.push(start as u32);
                let mut cur = adj.neighbors(start)[first_order[start].sample(&mut rng)] as usize;
                walk.push(cur as u32);
                let mut prev = start;
                while walk.len() < cfg.walk_length {
                    let next = cache.sample(&adj, prev, cur, cfg, &mut rng);
                    walk.push(next as u32);
                    prev = cur;
                    cur = next;
                }
                walk
            },
        )
        .collect();
    Ok(walks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Edge;

    fn path3() -> SpatialGraph {
        SpatialGraph::from_edges(
            3,
            vec![
                Edge { u: 0, v: 1, distance_km: 1.0, weight: 1.0 },
                Edge { u: 1, v: 2, distance_km: 1.0, weight: 1.0 },
            ],
        )
        .unwrap()
    }

    fn complete(n: usize) -> SpatialGraph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let d = 1.0 + (u * 7 + v * 3) as f64 % 5.0;
                edges.push(Edge { u, v, distance_km: d, weight: (-d / 3.0).exp() });
            }
        }
        SpatialGraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn counts_and_starts() {
        let g = complete(12);
        let cfg = WalkConfig { walk_length: 7, walks_per_node: 4, ..Default::default() };
        let walks = generate_walks(&g, &cfg).unwrap();
        assert_eq!(walks.len(), 48);
        let mut starts = [0; 12];
        for w in &walks {
            assert_eq!(w.len(), 7);
            starts[w[0] as usize] += 1;
        }
        assert!(starts.iter().all(|&c| c == 4));
    }

    #[test]
    fn consecutive_nodes_are_adjacent() {
        let g = path3();
        let adj = Adjacency::from_graph(&g);
        let walks = generate_walks(&g, &WalkConfig { walk_length: 20, ..Default::default() }).unwrap();
        for w in walks {
            for pair in w.windows(2) {
                assert!(adj.has_edge(pair[0] as usize, pair[1] as usize));
            }
        }
    }

    #[test]
    fn q_is_irrelevant_on_complete_graphs() {
        let g = complete(9);
        let base = WalkConfig { walk_length: 30, walks_per_node: 3, p: 0.5, seed: 11, ..Default::default() };
        let a = generate_walks(&g, &WalkConfig { q: 0.25, ..base.clone() }).unwrap();
        let b = generate_walks(&g, &WalkConfig { q: 4.0, ..base }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_p_forces_immediate_return() {
        // from node 1 having arrived from 0: weights are 1/p for 0 and 1/q for 2,
        // so P(return) = (1/p) / (1/p + 1) with q = 1
        let p = 1e-6;
        let expected = (1.0 / p) / (1.0 / p + 1.0);
        let adj = Adjacency::from_graph(&path3());
        let probs = adj.transition_probabilities(Some(0), 1, p, 1.0);
        assert!((probs[0].1 - expected).abs() < 1e-12);

        let cfg = WalkConfig { p, walk_length: 101, walks_per_node: 100, seed: 3, ..Default::default() };
        let walks = generate_walks(&path3(), &cfg).unwrap();
        let (mut returns, mut steps) = (0usize, 0usize);
        for w in walks.iter().filter(|w| w[0] == 1) {
            for i in 2..w.len() {
                if w[i - 1] == 1 {
                    steps += 1;
                    returns += usize::from(w[i] == w[i - 2]);
                }
            }
        }
        assert!(steps >= 4_000);
        assert!(returns as f64 / steps as f64 > 0.99);
    }

    #[test]
    fn uniform_weights_reduce_to_first_order_walks() {
        // 4-node graph: triangle 0-1-2 plus pendant 3 attached to 2
        let e = |u, v| Edge { u, v, distance_km: 1.0, weight: 1.0 };
        let g = SpatialGraph::from_edges(4, vec![e(0, 1), e(0, 2), e(1, 2), e(2, 3)]).unwrap();
        let adj = Adjacency::from_graph(&g);
        // hand-computed: node 2 has neighbours {0,1,3}, each 1/3 regardless of history
        for prev in [None, Some(0), Some(1), Some(3)] {
            let probs = adj.transition_probabilities(prev, 2, 1.0, 1.0);
            assert_eq!(probs.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 3]);
            for (_, pr) in probs {
                assert!((pr - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let from0 = adj.transition_probabilities(Some(2), 0, 1.0, 1.0);
        assert_eq!(from0, vec![(1, 0.5), (2, 0.5)]);
    }

    #[test]
    fn cache_budget_does_not_change_walks() {
        let g = complete(10);
        let cfg = WalkConfig { walk_length: 25, walks_per_node: 2, p: 0.3, q: 2.0, seed: 5, ..Default::default() };
        let cached = generate_walks(&g, &cfg).unwrap();
        let uncached = generate_walks(&g, &WalkConfig { cache_slots: 0, ..cfg }).unwrap();
        assert_eq!(cached, uncached);
    }

    #[test]
    fn rejects_invalid_config() {
        let g = path3();
        assert!(generate_walks(&g, &WalkConfig { walk_length: 1, ..Default::default() }).is_err());
        assert!(generate_walks(&g, &WalkConfig { p: 0.0, ..Default::default() }).is_err());
        assert!(generate_walks(&g, &WalkConfig { walks_per_node: 0, ..Default::default() }).is_err());
    }
}
