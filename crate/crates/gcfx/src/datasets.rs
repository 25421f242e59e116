//! Synthetic P5Motif dataset construction and real-dataset loading.
//!
//! A P5Motif sample is a Barabasi-Albert tree base joined to a 5-node
//! motif by a single bridge edge. Class-one graphs carry one of six
//! mutually exclusive motifs; class-two graphs carry a perturbed motif
//! that matches none of the six.

use crate::graph::{GraphDataset, LabeledGraph};
use crate::isomorphism::subgraph_isomorphic;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One of the six class-one motif patterns.
#[derive(Debug, Clone)]
pub struct MotifSpec {
    pub motif_id: usize,
    pub node_types: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl MotifSpec {
    pub fn to_graph(&self, feature_count: usize) -> LabeledGraph {
        let edges: Vec<(usize, usize, u8)> =
            self.edges.iter().map(|&(i, j)| (i, j, 1u8)).collect();
        LabeledGraph::from_parts(
            format!("motif-{}", self.motif_id),
            &self.node_types,
            feature_count,
            &edges,
            Some(0),
        )
    }
}

pub const P5_NODE_TYPES: usize = 5;
const MOTIF_SIZE: usize = 5;

/// The six class-one motifs: motifs 1-3 type-homogeneous, 4-6 type-mixed.
/// Pairwise mutual exclusivity is covered by a standing test.
pub fn builtin_motifs() -> Vec<MotifSpec> {
    vec![
        // 5-cycle, all type 0
        MotifSpec {
            motif_id: 1,
            node_types: vec![0; 5],
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)],
        },
        // star K_{1,4}, all type 1, hub = node 0
        MotifSpec {
            motif_id: 2,
            node_types: vec![1; 5],
            edges: vec![(0, 1), (0, 2), (0, 3), (0, 4)],
        },
        // 5-path, all type 2
        MotifSpec {
            motif_id: 3,
            node_types: vec![2; 5],
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        },
        // 5-cycle, mixed types
        MotifSpec {
            motif_id: 4,
            node_types: vec![0, 1, 0, 1, 2],
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)],
        },
        // star, hub type 3, leaves type 4
        MotifSpec {
            motif_id: 5,
            node_types: vec![3, 4, 4, 4, 4],
            edges: vec![(0, 1), (0, 2), (0, 3), (0, 4)],
        },
        // house: 4-cycle with an apex triangle
        MotifSpec {
            motif_id: 6,
            node_types: vec![0, 2, 4, 2, 0],
            edges: vec![(0, 1), (1, 2), (2, 3), (0, 3), (2, 4), (3, 4)],
        },
    ]
}

/// Configuration for [`generate_p5motif`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct P5MotifConfig {
    pub graph_count: usize,
    pub ba_node_min: usize,
    pub ba_node_max: usize,
    pub node_type_count: usize,
    /// Fraction of class-one (label 0) graphs.
    pub class_balance: f64,
    pub seed: u64,
}

impl Default for P5MotifConfig {
    fn default() -> Self {
        P5MotifConfig {
            graph_count: 12000,
            ba_node_min: 5,
            ba_node_max: 20,
            node_type_count: P5_NODE_TYPES,
            class_balance: 0.5,
            seed: 0,
        }
    }
}

/// Where the motif landed in a generated graph, for ground-truth checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifPlacement {
    pub graph_id: String,
    /// 1..=6 for class-one graphs, None for negatives.
    pub motif_id: Option<usize>,
    pub motif_nodes: Vec<usize>,
}

/// Barabasi-Albert preferential attachment with `attach` edges per new
/// node. With attach = 1 the result is a tree. Node types are uniform
/// over `type_count`.
pub fn generate_ba_graph(
    n: usize,
    attach: usize,
    type_count: usize,
    rng: &mut ChaCha8Rng,
) -> LabeledGraph {
    assert!(n >= 2, "BA graph needs at least 2 nodes");
    let mut edges: Vec<(usize, usize, u8)> = vec![(0, 1, 1)];
    let mut degree = vec![1usize; 2];
    for v in 2..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(attach);
        let take = attach.min(v);
        while chosen.len() < take {
            // roulette over degrees
            let total: usize = degree.iter().sum();
            let mut r = rng.gen_range(0..total);
            let mut pick = 0usize;
            for (u, &d) in degree.iter().enumerate() {
                if r < d {
                    pick = u;
                    break;
                }
                r -= d;
            }
            if !chosen.contains(&pick) {
                chosen.push(pick);
            }
        }
        degree.push(chosen.len());
        for u in chosen {
            degree[u] += 1;
            edges.push((u, v, 1));
        }
    }
    let node_types: Vec<usize> = (0..n).map(|_| rng.gen_range(0..type_count)).collect();
    LabeledGraph::from_parts("ba", &node_types, type_count, &edges, None)
}

/// A connected 5-node graph that neither embeds into nor contains any
/// class-one motif (type-matched, both directions). Produced by
/// perturbing a random class-one motif; resamples the base motif when a
/// perturbation run fails to escape the class.
pub fn make_negative_motif(rng: &mut ChaCha8Rng) -> LabeledGraph {
    let motifs = builtin_motifs();
    let motif_graphs: Vec<LabeledGraph> =
        motifs.iter().map(|m| m.to_graph(P5_NODE_TYPES)).collect();
    loop {
        let base = &motifs[rng.gen_range(0..motifs.len())];
        let mut types = base.node_types.clone();
        let mut adj = [[false; MOTIF_SIZE]; MOTIF_SIZE];
        for &(i, j) in &base.edges {
            adj[i][j] = true;
            adj[j][i] = true;
        }
        for _ in 0..64 {
            // one random perturbation: toggle an edge or retype a node
            match rng.gen_range(0..3) {
                0 => {
                    let i = rng.gen_range(0..MOTIF_SIZE);
                    let mut j = rng.gen_range(0..MOTIF_SIZE);
                    while j == i {
                        j = rng.gen_range(0..MOTIF_SIZE);
                    }
                    adj[i][j] = !adj[i][j];
                    adj[j][i] = adj[i][j];
                }
                _ => {
                    let i = rng.gen_range(0..MOTIF_SIZE);
                    types[i] = rng.gen_range(0..P5_NODE_TYPES);
                }
            }
            let edges: Vec<(usize, usize, u8)> = (0..MOTIF_SIZE)
                .flat_map(|i| {
                    ((i + 1)..MOTIF_SIZE)
                        .filter(move |&j| adj[i][j])
                        .map(move |j| (i, j, 1u8))
                })
                .collect();
            let cand = LabeledGraph::from_parts("neg", &types, P5_NODE_TYPES, &edges, Some(1));
            if !cand.is_connected() {
                continue;
            }
            let clashes = motif_graphs.iter().any(|m| {
                subgraph_isomorphic(m, &cand, true, false)
                    || subgraph_isomorphic(&cand, m, true, false)
            });
            if !clashes {
                return cand;
            }
        }
    }
}

/// Generate the P5Motif dataset: each graph is a BA tree base plus a
/// motif, joined by one bridge edge. Deterministic under the seed; each
/// graph derives its own stream from (seed, index).
pub fn generate_p5motif(cfg: &P5MotifConfig) -> (GraphDataset, Vec<MotifPlacement>) {
    assert!(cfg.ba_node_min >= 2);
    assert!(cfg.ba_node_max >= cfg.ba_node_min);
    let motifs = builtin_motifs();
    let mut graphs = Vec::with_capacity(cfg.graph_count);
    let mut placements = Vec::with_capacity(cfg.graph_count);
    for idx in 0..cfg.graph_count {
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e3779b97f4a7c15) ^ idx as u64);
        // interleave classes so any prefix is roughly balanced
        let label = if ((idx + 1) as f64 * cfg.class_balance).floor()
            > (idx as f64 * cfg.class_balance).floor()
        {
            0
        } else {
            1
        };
        // rejection loop: a random base may accidentally contain a
        // class-one motif, which would contradict a label-1 assignment
        let (graph, motif_id, n_base) = loop {
            let n_base = rng.gen_range(cfg.ba_node_min..=cfg.ba_node_max);
            let base = generate_ba_graph(n_base, 1, cfg.node_type_count, &mut rng);

            let (motif_graph, motif_id) = if label == 0 {
                let m = &motifs[rng.gen_range(0..motifs.len())];
                (m.to_graph(cfg.node_type_count), Some(m.motif_id))
            } else {
                (make_negative_motif(&mut rng), None)
            };

            let mut types = base.node_types();
            types.extend(motif_graph.node_types());
            let mut edges: Vec<(usize, usize, u8)> = base.edges();
            for (i, j, t) in motif_graph.edges() {
                edges.push((i + n_base, j + n_base, t));
            }
            let bridge_base = rng.gen_range(0..n_base);
            let bridge_motif = n_base + rng.gen_range(0..MOTIF_SIZE);
            edges.push((bridge_base, bridge_motif, 1));

            let g = LabeledGraph::from_parts(
                format!("p5m-{idx}"),
                &types,
                cfg.node_type_count,
                &edges,
                Some(label),
            );
            if rule_label(&g) == label {
                break (g, motif_id, n_base);
            }
        };
        placements.push(MotifPlacement {
            graph_id: graph.id.clone(),
            motif_id,
            motif_nodes: (n_base..n_base + MOTIF_SIZE).collect(),
        });
        graphs.push(graph);
    }
    let dataset = GraphDataset {
        name: "P5Motif".into(),
        graphs,
        label_count: 2,
        node_type_count: cfg.node_type_count,
        edge_type_count: 1,
    };
    (dataset, placements)
}

/// Label a 5-node-motif graph by the brute-force rule: label 0 iff some
/// class-one motif embeds type-matched. Used to cross-check generation.
pub fn rule_label(g: &LabeledGraph) -> usize {
    let motifs = builtin_motifs();
    for m in &motifs {
        let mg = m.to_graph(g.feature_count());
        if subgraph_isomorphic(&mg, g, true, false) {
            return 0;
        }
    }
    1
}
