//! Figure output: per-pair SVG drawings of an input sample and one of
//! its counterfactuals, with the edit script derived from the
//! approximate-GED assignment. Additions are red, deletions green,
//! modifications orange.

use crate::ged::{ged_approx_mapping, GedConfig};
use crate::graph::LabeledGraph;
use std::fmt::Write as _;

const COLOR_ADD: &str = "#d62728";
const COLOR_DELETE: &str = "#2ca02c";
const COLOR_MODIFY: &str = "#ff7f0e";
const COLOR_KEEP: &str = "#555555";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditMark {
    Keep,
    Add,
    Delete,
    Modify,
}

impl EditMark {
    fn color(self) -> &'static str {
        match self {
            EditMark::Keep => COLOR_KEEP,
            EditMark::Add => COLOR_ADD,
            EditMark::Delete => COLOR_DELETE,
            EditMark::Modify => COLOR_MODIFY,
        }
    }
}

/// Node and edge marks for both sides of a (source, counterfactual)
/// pair, relative to the cheaper directed assignment source -> cf.
#[derive(Debug, Clone)]
pub struct PairDiff {
    pub source_nodes: Vec<EditMark>,
    pub cf_nodes: Vec<EditMark>,
    /// (i, j, mark) over source edges, i < j.
    pub source_edges: Vec<(usize, usize, EditMark)>,
    pub cf_edges: Vec<(usize, usize, EditMark)>,
}

pub fn diff_pair(source: &LabeledGraph, cf: &LabeledGraph, ged: &GedConfig) -> PairDiff {
    let (mapping, _) = ged_approx_mapping(source, cf, ged);
    let mut cf_preimage: Vec<Option<usize>> = vec![None; cf.node_count()];
    for (i, m) in mapping.iter().enumerate() {
        if let Some(j) = *m {
            cf_preimage[j] = Some(i);
        }
    }
    let source_nodes: Vec<EditMark> = (0..source.node_count())
        .map(|i| match mapping[i] {
            None => EditMark::Delete,
            Some(j) if source.node_type(i) != cf.node_type(j) => EditMark::Modify,
            Some(_) => EditMark::Keep,
        })
        .collect();
    let cf_nodes: Vec<EditMark> = (0..cf.node_count())
        .map(|j| match cf_preimage[j] {
            None => EditMark::Add,
            Some(i) if source.node_type(i) != cf.node_type(j) => EditMark::Modify,
            Some(_) => EditMark::Keep,
        })
        .collect();
    let source_edges: Vec<(usize, usize, EditMark)> = source
        .edges()
        .into_iter()
        .map(|(i, k, ty)| {
            let mark = match (mapping[i], mapping[k]) {
                (Some(a), Some(b)) => match cf.adjacency[[a, b]] {
                    0 => EditMark::Delete,
                    t if t == ty => EditMark::Keep,
                    _ => EditMark::Modify,
                },
                _ => EditMark::Delete,
            };
            (i, k, mark)
        })
        .collect();
    let cf_edges: Vec<(usize, usize, EditMark)> = cf
        .edges()
        .into_iter()
        .map(|(a, b, ty)| {
            let mark = match (cf_preimage[a], cf_preimage[b]) {
                (Some(i), Some(k)) => match source.adjacency[[i, k]] {
                    0 => EditMark::Add,
                    t if t == ty => EditMark::Keep,
                    _ => EditMark::Modify,
                },
                _ => EditMark::Add,
            };
            (a, b, mark)
        })
        .collect();
    PairDiff {
        source_nodes,
        cf_nodes,
        source_edges,
        cf_edges,
    }
}

fn circle_layout(n: usize, cx: f64, cy: f64, r: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n.max(1) as f64
                - std::f64::consts::FRAC_PI_2;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn draw_graph(
    out: &mut String,
    g: &LabeledGraph,
    nodes: &[EditMark],
    edges: &[(usize, usize, EditMark)],
    cx: f64,
    title: &str,
) {
    let pos = circle_layout(g.node_count(), cx, 170.0, 110.0);
    for &(i, j, mark) in edges {
        let (x1, y1) = pos[i];
        let (x2, y2) = pos[j];
        let dash = if mark == EditMark::Keep { "" } else { " stroke-dasharray=\"6 3\"" };
        let _ = writeln!(
            out,
            "  <line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" \
             stroke=\"{}\" stroke-width=\"2\"{dash}/>",
            mark.color()
        );
    }
    for (i, &(x, y)) in pos.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"11\" fill=\"#ffffff\" \
             stroke=\"{}\" stroke-width=\"2.5\"/>",
            nodes[i].color()
        );
        let _ = writeln!(
            out,
            "  <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\" \
             font-family=\"sans-serif\">{}</text>",
            y + 3.5,
            g.node_type(i)
        );
    }
    let _ = writeln!(
        out,
        "  <text x=\"{cx:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"13\" \
         font-family=\"sans-serif\">{title}</text>"
    );
}

/// Render one input/counterfactual pair with prob and cost annotations.
pub fn pair_svg(
    source: &LabeledGraph,
    cf: &LabeledGraph,
    prob: f64,
    cost: f64,
    ged: &GedConfig,
) -> String {
    let diff = diff_pair(source, cf, ged);
    let mut s = String::new();
    s.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"340\" \
         viewBox=\"0 0 640 340\">\n",
    );
    s.push_str("  <rect width=\"640\" height=\"340\" fill=\"#ffffff\"/>\n");
    draw_graph(
        &mut s,
        source,
        &diff.source_nodes,
        &diff.source_edges,
        160.0,
        &format!("input {}", source.id),
    );
    draw_graph(
        &mut s,
        cf,
        &diff.cf_nodes,
        &diff.cf_edges,
        480.0,
        "counterfactual",
    );
    let _ = writeln!(
        s,
        "  <text x=\"320\" y=\"322\" text-anchor=\"middle\" font-size=\"12\" \
         font-family=\"sans-serif\">prob = {prob:.4}   cost = {cost:.4}</text>"
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(id: &str, edges: &[(usize, usize)], types: &[usize]) -> LabeledGraph {
        let typed: Vec<(usize, usize, u8)> = edges.iter().map(|&(i, j)| (i, j, 1)).collect();
        LabeledGraph::from_parts(id, types, 3, &typed, None)
    }

    #[test]
    fn identical_graphs_diff_to_all_keep() {
        let a = g("a", &[(0, 1), (1, 2)], &[0, 1, 2]);
        let d = diff_pair(&a, &a, &GedConfig::default());
        assert!(d.source_nodes.iter().all(|&m| m == EditMark::Keep));
        assert!(d.cf_nodes.iter().all(|&m| m == EditMark::Keep));
        assert!(d.source_edges.iter().all(|&(_, _, m)| m == EditMark::Keep));
        assert!(d.cf_edges.iter().all(|&(_, _, m)| m == EditMark::Keep));
    }

    #[test]
    fn extra_edge_is_an_addition() {
        let a = g("a", &[(0, 1), (1, 2)], &[0, 1, 2]);
        let b = g("b", &[(0, 1), (1, 2), (0, 2)], &[0, 1, 2]);
        let d = diff_pair(&a, &b, &GedConfig::default());
        let added: Vec<_> = d
            .cf_edges
            .iter()
            .filter(|&&(_, _, m)| m == EditMark::Add)
            .collect();
        assert_eq!(added.len(), 1);
        assert!(d.source_edges.iter().all(|&(_, _, m)| m == EditMark::Keep));
    }

    #[test]
    fn retyped_node_is_a_modification() {
        let a = g("a", &[(0, 1), (1, 2)], &[0, 1, 2]);
        let b = g("b", &[(0, 1), (1, 2)], &[0, 1, 1]);
        let d = diff_pair(&a, &b, &GedConfig::default());
        let n = d
            .cf_nodes
            .iter()
            .filter(|&&m| m == EditMark::Modify)
            .count();
        assert_eq!(n, 1);
    }

    #[test]
    fn svg_contains_annotations_and_both_titles() {
        let a = g("a", &[(0, 1)], &[0, 1]);
        let b = g("b", &[(0, 1), (1, 2)], &[0, 1, 2]);
        let svg = pair_svg(&a, &b, 0.9312, 0.05, &GedConfig::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("prob = 0.9312"));
        assert!(svg.contains("cost = 0.0500"));
        assert!(svg.contains("input a"));
        assert!(svg.contains("counterfactual"));
        assert!(svg.contains(COLOR_ADD));
    }
}
