//! Subgraph isomorphism via VF2-style backtracking with type pruning.
//!
//! Patterns in this system are small (motifs have 5 nodes), so a
//! backtracking search over injective mappings is fast enough.

use crate::graph::LabeledGraph;

/// True iff `pattern` embeds into `host` under an injective node mapping
/// that preserves every pattern edge (non-induced). Node and edge types
/// are matched only when the corresponding flag is set.
pub fn subgraph_isomorphic(
    pattern: &LabeledGraph,
    host: &LabeledGraph,
    match_node_types: bool,
    match_edge_types: bool,
) -> bool {
    find_embedding(pattern, host, match_node_types, match_edge_types).is_some()
}

/// Like [`subgraph_isomorphic`], but returns the node mapping
/// (pattern index -> host index) when one exists.
pub fn find_embedding(
    pattern: &LabeledGraph,
    host: &LabeledGraph,
    match_node_types: bool,
    match_edge_types: bool,
) -> Option<Vec<usize>> {
    let np = pattern.node_count();
    let nh = host.node_count();
    if np > nh {
        return None;
    }
    let p_types = pattern.node_types();
    let h_types = host.node_types();
    let p_deg: Vec<usize> = (0..np).map(|i| pattern.degree(i)).collect();
    let h_deg: Vec<usize> = (0..nh).map(|i| host.degree(i)).collect();

    // order pattern nodes so that each node after the first is adjacent
    // to an already-placed one when possible (cuts the search early)
    let order = search_order(pattern);

    let mut mapping = vec![usize::MAX; np];
    let mut used = vec![false; nh];

    fn backtrack(
        depth: usize,
        order: &[usize],
        pattern: &LabeledGraph,
        host: &LabeledGraph,
        p_types: &[usize],
        h_types: &[usize],
        p_deg: &[usize],
        h_deg: &[usize],
        match_node_types: bool,
        match_edge_types: bool,
        mapping: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let u = order[depth];
        'cand: for v in 0..host.node_count() {
            if used[v] {
                continue;
            }
            if match_node_types && p_types[u] != h_types[v] {
                continue;
            }
            if h_deg[v] < p_deg[u] {
                continue;
            }
            for w in 0..pattern.node_count() {
                let ty = pattern.adjacency[[u, w]];
                if ty != 0 && mapping[w] != usize::MAX {
                    let hty = host.adjacency[[v, mapping[w]]];
                    if hty == 0 || (match_edge_types && hty != ty) {
                        continue 'cand;
                    }
                }
            }
            mapping[u] = v;
            used[v] = true;
            if backtrack(
                depth + 1,
                order,
                pattern,
                host,
                p_types,
                h_types,
                p_deg,
                h_deg,
                match_node_types,
                match_edge_types,
                mapping,
                used,
            ) {
                return true;
            }
            mapping[u] = usize::MAX;
            used[v] = false;
        }
        false
    }

    if backtrack(
        0,
        &order,
        pattern,
        host,
        &p_types,
        &h_types,
        &p_deg,
        &h_deg,
        match_node_types,
        match_edge_types,
        &mut mapping,
        &mut used,
    ) {
        Some(mapping)
    } else {
        None
    }
}

fn search_order(pattern: &LabeledGraph) -> Vec<usize> {
    let n = pattern.node_count();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    while order.len() < n {
        // prefer a node adjacent to the placed set, highest degree first
        let next = (0..n)
            .filter(|&i| !placed[i])
            .max_by_key(|&i| {
                let adj = order
                    .iter()
                    .any(|&j: &usize| pattern.adjacency[[i, j]] != 0);
                (adj, pattern.degree(i))
            })
            .unwrap();
        placed[next] = true;
        order.push(next);
    }
    order
}
