//! Graph edit distance: an exact branch-and-bound solver for small test
//! pairs, and a deterministic assignment-based upper bound used for the
//! perturbation cost everywhere else.

use crate::graph::LabeledGraph;
use ndarray::Array2;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum GedError {
    #[error("exact GED guard exceeded: {n1}+{n2} nodes > {max}")]
    TooLarge { n1: usize, n2: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Divide by (|V1|+|E1|+|V2|+|E2|)/2.
    PairSize,
}

#[derive(Debug, Clone, Copy)]
pub struct GedConfig {
    pub node_sub_cost: f64,
    pub node_ins_del_cost: f64,
    pub edge_sub_cost: f64,
    pub edge_ins_del_cost: f64,
    pub normalization: Normalization,
}

impl Default for GedConfig {
    fn default() -> Self {
        GedConfig {
            node_sub_cost: 1.0,
            node_ins_del_cost: 1.0,
            edge_sub_cost: 1.0,
            edge_ins_del_cost: 1.0,
            normalization: Normalization::PairSize,
        }
    }
}

/// A node-level edit mapping: `map[i]` is the g2 node that g1 node `i`
/// is substituted with, or `None` when it is deleted. g2 nodes that are
/// nobody's image are insertions.
pub type NodeMapping = Vec<Option<usize>>;

/// Total edit cost implied by a node mapping: node substitutions,
/// deletions, insertions, and the induced edge edits.
pub fn edit_cost_for_mapping(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    mapping: &NodeMapping,
    cfg: &GedConfig,
) -> f64 {
    let n1 = g1.node_count();
    let n2 = g2.node_count();
    debug_assert_eq!(mapping.len(), n1);
    let mut inverse = vec![None; n2];
    let mut cost = 0.0;
    for (i, m) in mapping.iter().enumerate() {
        match m {
            Some(j) => {
                inverse[*j] = Some(i);
                if g1.node_type(i) != g2.node_type(*j) {
                    cost += cfg.node_sub_cost;
                }
            }
            None => cost += cfg.node_ins_del_cost,
        }
    }
    cost += inverse.iter().filter(|x| x.is_none()).count() as f64 * cfg.node_ins_del_cost;

    for (i1, i2, t) in g1.edges() {
        match (mapping[i1], mapping[i2]) {
            (Some(j1), Some(j2)) => {
                let t2 = g2.adjacency[[j1, j2]];
                if t2 == 0 {
                    cost += cfg.edge_ins_del_cost;
                } else if t2 != t {
                    cost += cfg.edge_sub_cost;
                }
            }
            _ => cost += cfg.edge_ins_del_cost,
        }
    }
    for (j1, j2, _) in g2.edges() {
        match (inverse[j1], inverse[j2]) {
            (Some(i1), Some(i2)) => {
                if g1.adjacency[[i1, i2]] == 0 {
                    cost += cfg.edge_ins_del_cost;
                }
                // substitutions already charged on the g1 side
            }
            _ => cost += cfg.edge_ins_del_cost,
        }
    }
    cost
}

const EXACT_GUARD: usize = 14;

/// Exact minimal edit cost by depth-first branch and bound over node
/// mappings. Guarded to small instances; this is the test oracle.
pub fn ged_exact(g1: &LabeledGraph, g2: &LabeledGraph, cfg: &GedConfig) -> Result<f64, GedError> {
    let n1 = g1.node_count();
    let n2 = g2.node_count();
    if n1 + n2 > EXACT_GUARD {
        return Err(GedError::TooLarge {
            n1,
            n2,
            max: EXACT_GUARD,
        });
    }
    let mut best = ged_approx(g1, g2, cfg); // upper bound to start pruning
    let mut mapping: NodeMapping = vec![None; n1];
    let mut used = vec![false; n2];

    fn partial_cost(
        g1: &LabeledGraph,
        g2: &LabeledGraph,
        mapping: &NodeMapping,
        depth: usize,
        cfg: &GedConfig,
    ) -> f64 {
        // cost of everything decided by the first `depth` g1 nodes;
        // insertions are charged only at the leaf, so this is a lower
        // bound on any completion
        let mut cost = 0.0;
        for i in 0..depth {
            match mapping[i] {
                Some(j) => {
                    if g1.node_type(i) != g2.node_type(j) {
                        cost += cfg.node_sub_cost;
                    }
                }
                None => cost += cfg.node_ins_del_cost,
            }
            for k in 0..i {
                let t1 = g1.adjacency[[i, k]];
                match (mapping[i], mapping[k]) {
                    (Some(j), Some(l)) => {
                        let t2 = g2.adjacency[[j, l]];
                        if t1 != 0 && t2 != 0 {
                            if t1 != t2 {
                                cost += cfg.edge_sub_cost;
                            }
                        } else if t1 != t2 {
                            cost += cfg.edge_ins_del_cost;
                        }
                    }
                    _ => {
                        if t1 != 0 {
                            cost += cfg.edge_ins_del_cost;
                        }
                    }
                }
            }
        }
        cost
    }

    fn dfs(
        depth: usize,
        g1: &LabeledGraph,
        g2: &LabeledGraph,
        cfg: &GedConfig,
        mapping: &mut NodeMapping,
        used: &mut Vec<bool>,
        best: &mut f64,
    ) {
        let n1 = g1.node_count();
        let lower = partial_cost(g1, g2, mapping, depth, cfg);
        if lower >= *best {
            return;
        }
        if depth == n1 {
            let full = edit_cost_for_mapping(g1, g2, mapping, cfg);
            if full < *best {
                *best = full;
            }
            return;
        }
        for j in 0..g2.node_count() {
            if !used[j] {
                mapping[depth] = Some(j);
                used[j] = true;
                dfs(depth + 1, g1, g2, cfg, mapping, used, best);
                used[j] = false;
            }
        }
        mapping[depth] = None;
        dfs(depth + 1, g1, g2, cfg, mapping, used, best);
    }

    dfs(0, g1, g2, cfg, &mut mapping, &mut used, &mut best);
    Ok(best)
}

const FORBIDDEN: f64 = 1e9;

/// Minimum-cost assignment on a square matrix (shortest augmenting path
/// with potentials, O(n^3)). Returns row -> column.
pub fn hungarian(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols());
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// One directed assignment pass g1 -> g2; returns the mapping and its
/// explicit edit cost (a true upper bound on the exact GED).
pub fn ged_approx_mapping(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    cfg: &GedConfig,
) -> (NodeMapping, f64) {
    let n1 = g1.node_count();
    let n2 = g2.node_count();
    let n = n1 + n2;
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut cost = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            cost[[i, j]] = if i < n1 && j < n2 {
                // substitution: node cost plus a degree-based estimate
                // of the incident edge edits
                let node = if g1.node_type(i) != g2.node_type(j) {
                    cfg.node_sub_cost
                } else {
                    0.0
                };
                let edge = (g1.degree(i) as f64 - g2.degree(j) as f64).abs()
                    * cfg.edge_ins_del_cost
                    * 0.5;
                node + edge
            } else if i < n1 {
                // deletion of g1 node i, allowed only on its own slot
                if j == n2 + i {
                    cfg.node_ins_del_cost + g1.degree(i) as f64 * cfg.edge_ins_del_cost * 0.5
                } else {
                    FORBIDDEN
                }
            } else if j < n2 {
                // insertion of g2 node j
                if i == n1 + j {
                    cfg.node_ins_del_cost + g2.degree(j) as f64 * cfg.edge_ins_del_cost * 0.5
                } else {
                    FORBIDDEN
                }
            } else {
                0.0
            };
        }
    }
    let assignment = hungarian(&cost);
    let mapping: NodeMapping = (0..n1)
        .map(|i| {
            let j = assignment[i];
            if j < n2 {
                Some(j)
            } else {
                None
            }
        })
        .collect();
    let cost = edit_cost_for_mapping(g1, g2, &mapping, cfg);
    (mapping, cost)
}

/// Assignment-based GED upper bound, symmetrized by running both
/// directions and keeping the cheaper edit script.
pub fn ged_approx(g1: &LabeledGraph, g2: &LabeledGraph, cfg: &GedConfig) -> f64 {
    let (_, fwd) = ged_approx_mapping(g1, g2, cfg);
    let (_, bwd) = ged_approx_mapping(g2, g1, cfg);
    fwd.min(bwd)
}

/// Normalized perturbation cost between a sample and a counterfactual.
pub fn perturbation_cost(g1: &LabeledGraph, g2: &LabeledGraph, cfg: &GedConfig) -> f64 {
    let raw = ged_approx(g1, g2, cfg);
    match cfg.normalization {
        Normalization::None => raw,
        Normalization::PairSize => {
            let size = (g1.node_count() + g1.edge_count() + g2.node_count() + g2.edge_count())
                as f64
                / 2.0;
            if size == 0.0 {
                0.0
            } else {
                raw / size.max(1.0)
            }
        }
    }
}

/// Cheap lower bound on the raw GED, for skipping pairs that cannot be
/// within a threshold: node-count, type-multiset, and edge-count gaps.
pub fn ged_lower_bound(g1: &LabeledGraph, g2: &LabeledGraph, cfg: &GedConfig) -> f64 {
    let f = g1.feature_count().max(g2.feature_count());
    let mut c1 = vec![0i64; f];
    let mut c2 = vec![0i64; f];
    for t in g1.node_types() {
        c1[t] += 1;
    }
    for t in g2.node_types() {
        c2[t] += 1;
    }
    let type_mismatch: i64 = c1
        .iter()
        .zip(&c2)
        .map(|(a, b)| (a - b).abs())
        .sum::<i64>()
        / 2;
    let node_gap = (g1.node_count() as i64 - g2.node_count() as i64).unsigned_abs() as f64;
    let node_term = node_gap * cfg.node_ins_del_cost
        + (type_mismatch as f64 - node_gap).max(0.0) * cfg.node_sub_cost.min(cfg.node_ins_del_cost);
    let edge_gap = (g1.edge_count() as i64 - g2.edge_count() as i64).unsigned_abs() as f64;
    node_term + edge_gap * cfg.edge_ins_del_cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn graph(types: &[usize], edges: &[(usize, usize, u8)]) -> LabeledGraph {
        LabeledGraph::from_parts("g", types, 4, edges, None)
    }

    #[test]
    fn identical_graphs_have_zero_distance() {
        let g = graph(&[0, 1, 2], &[(0, 1, 1), (1, 2, 1)]);
        let cfg = GedConfig::default();
        assert_eq!(ged_exact(&g, &g, &cfg).unwrap(), 0.0);
        assert_eq!(ged_approx(&g, &g, &cfg), 0.0);
        assert_eq!(perturbation_cost(&g, &g, &cfg), 0.0);
    }

    #[test]
    fn empty_vs_single_node() {
        let empty = LabeledGraph {
            id: "e".into(),
            adjacency: Array2::zeros((0, 0)),
            features: Array2::zeros((0, 4)),
            label: None,
        };
        let one = graph(&[0], &[]);
        let cfg = GedConfig::default();
        assert_eq!(ged_exact(&empty, &one, &cfg).unwrap(), cfg.node_ins_del_cost);
    }

    #[test]
    fn triangle_vs_path_is_one_edge_deletion() {
        let tri = graph(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let path = graph(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1)]);
        let cfg = GedConfig::default();
        assert_eq!(ged_exact(&tri, &path, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn exact_guard_enforced() {
        let big = graph(&[0; 8], &[]);
        assert!(matches!(
            ged_exact(&big, &big, &GedConfig::default()),
            Err(GedError::TooLarge { .. })
        ));
    }

    fn random_graph(rng: &mut impl Rng, n: usize) -> LabeledGraph {
        let types: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.4) {
                    edges.push((i, j, rng.gen_range(1..=2u8)));
                }
            }
        }
        graph(&types, &edges)
    }

    #[test]
    fn approx_upper_bounds_exact_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = GedConfig::default();
        for _ in 0..200 {
            let n1 = rng.gen_range(1..=6);
            let n2 = rng.gen_range(1..=6);
            let g1 = random_graph(&mut rng, n1);
            let g2 = random_graph(&mut rng, n2);
            let exact = ged_exact(&g1, &g2, &cfg).unwrap();
            let approx = ged_approx(&g1, &g2, &cfg);
            assert!(
                approx >= exact - 1e-9,
                "approx {approx} < exact {exact} for {:?} vs {:?}",
                g1.edges(),
                g2.edges()
            );
            assert!(ged_lower_bound(&g1, &g2, &cfg) <= exact + 1e-9);
        }
    }

    #[test]
    fn approx_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = GedConfig::default();
        for _ in 0..50 {
            let n1 = rng.gen_range(1..=7);
            let n2 = rng.gen_range(1..=7);
            let g1 = random_graph(&mut rng, n1);
            let g2 = random_graph(&mut rng, n2);
            assert_eq!(ged_approx(&g1, &g2, &cfg), ged_approx(&g2, &g1, &cfg));
        }
    }

    #[test]
    fn cost_normalizer_keeps_cost_below_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = GedConfig::default();
        for _ in 0..50 {
            let n1 = rng.gen_range(2..=7);
            let n2 = rng.gen_range(2..=7);
            let g1 = random_graph(&mut rng, n1);
            let g2 = random_graph(&mut rng, n2);
            assert!(perturbation_cost(&g1, &g2, &cfg) <= ged_approx(&g1, &g2, &cfg) + 1e-12);
        }
    }

    #[test]
    fn hungarian_small_case() {
        let cost = ndarray::array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let assignment = hungarian(&cost);
        let total: f64 = (0..3).map(|i| cost[[i, assignment[i]]]).sum();
        assert_eq!(total, 5.0); // 1 + 2 + 2
    }
}
