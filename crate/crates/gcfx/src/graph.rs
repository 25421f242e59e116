//! Canonical labeled-graph representation, validation, and serialization.
//!
//! Graphs are undirected with typed edges (type 0 means "no edge") and
//! one-hot node features. All types are immutable after construction.

use ndarray::Array2;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum GraphError {
    #[error("adjacency matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("adjacency asymmetric at ({i},{j}): {a} != {b}")]
    Asymmetric { i: usize, j: usize, a: u8, b: u8 },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge type {ty} at ({i},{j}) out of range (max {max})")]
    EdgeTypeOutOfRange { i: usize, j: usize, ty: u8, max: u8 },
    #[error("feature row {0} is not one-hot")]
    NotOneHot(usize),
    #[error("feature matrix has {rows} rows but graph has {nodes} nodes")]
    FeatureRowMismatch { rows: usize, nodes: usize },
    #[error("label {label} out of range (label count {count})")]
    LabelOutOfRange { label: usize, count: usize },
    #[error("graph {id}: feature width {got}, dataset expects {expected}")]
    FeatureWidthMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported dataset schema version: {0}")]
    SchemaVersion(String),
}

/// An undirected graph with typed edges, one-hot node features, and an
/// optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub id: String,
    /// N x N, entries in 0..=m, 0 = no edge. Symmetric, zero diagonal.
    pub adjacency: Array2<u8>,
    /// N x F, each row one-hot.
    pub features: Array2<f64>,
    pub label: Option<usize>,
}

impl LabeledGraph {
    /// Build a graph from node-type indices and an undirected typed edge list.
    pub fn from_parts(
        id: impl Into<String>,
        node_types: &[usize],
        feature_count: usize,
        edges: &[(usize, usize, u8)],
        label: Option<usize>,
    ) -> Self {
        let n = node_types.len();
        let mut adjacency = Array2::<u8>::zeros((n, n));
        for &(i, j, ty) in edges {
            adjacency[[i, j]] = ty;
            adjacency[[j, i]] = ty;
        }
        let mut features = Array2::<f64>::zeros((n, feature_count));
        for (i, &t) in node_types.iter().enumerate() {
            features[[i, t]] = 1.0;
        }
        LabeledGraph {
            id: id.into(),
            adjacency,
            features,
            label,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    /// Node type = index of the one-hot entry.
    pub fn node_type(&self, i: usize) -> usize {
        let row = self.features.row(i);
        row.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k)
            .unwrap()
    }

    pub fn node_types(&self) -> Vec<usize> {
        (0..self.node_count()).map(|i| self.node_type(i)).collect()
    }

    /// Undirected typed edges with i < j.
    pub fn edges(&self) -> Vec<(usize, usize, u8)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let ty = self.adjacency[[i, j]];
                if ty != 0 {
                    out.push((i, j, ty));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).iter().filter(|&&t| t != 0).count()
    }

    /// Adjacency with all edge types collapsed to 0/1.
    pub fn binary_adjacency(&self) -> Array2<f64> {
        self.adjacency.mapv(|t| if t != 0 { 1.0 } else { 0.0 })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if self.adjacency[[u, v]] != 0 && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Apply a node permutation: node i of the result is node perm[i] of self.
    pub fn permuted(&self, perm: &[usize]) -> LabeledGraph {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut adjacency = Array2::<u8>::zeros((n, n));
        let mut features = Array2::<f64>::zeros((n, self.feature_count()));
        for i in 0..n {
            for j in 0..n {
                adjacency[[i, j]] = self.adjacency[[perm[i], perm[j]]];
            }
            features.row_mut(i).assign(&self.features.row(perm[i]));
        }
        LabeledGraph {
            id: self.id.clone(),
            adjacency,
            features,
            label: self.label,
        }
    }
}

/// Check every [`LabeledGraph`] invariant, reporting the first violation.
pub fn validate_graph(g: &LabeledGraph, edge_type_count: u8) -> Result<(), GraphError> {
    let (rows, cols) = (g.adjacency.nrows(), g.adjacency.ncols());
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(GraphError::Empty);
    }
    if g.features.nrows() != rows {
        return Err(GraphError::FeatureRowMismatch {
            rows: g.features.nrows(),
            nodes: rows,
        });
    }
    for i in 0..rows {
        if g.adjacency[[i, i]] != 0 {
            return Err(GraphError::SelfLoop(i));
        }
        for j in 0..rows {
            let a = g.adjacency[[i, j]];
            let b = g.adjacency[[j, i]];
            if a != b {
                return Err(GraphError::Asymmetric { i, j, a, b });
            }
            if a > edge_type_count {
                return Err(GraphError::EdgeTypeOutOfRange {
                    i,
                    j,
                    ty: a,
                    max: edge_type_count,
                });
            }
        }
        let row = g.features.row(i);
        let ones = row.iter().filter(|&&x| x == 1.0).count();
        let sum: f64 = row.sum();
        if ones != 1 || (sum - 1.0).abs() > 1e-12 {
            return Err(GraphError::NotOneHot(i));
        }
    }
    Ok(())
}

/// An ordered collection of graphs sharing label/feature/edge-type spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<LabeledGraph>,
    pub label_count: usize,
    pub node_type_count: usize,
    pub edge_type_count: u8,
}

impl GraphDataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for g in &self.graphs {
            validate_graph(g, self.edge_type_count)?;
            if g.feature_count() != self.node_type_count {
                return Err(GraphError::FeatureWidthMismatch {
                    id: g.id.clone(),
                    got: g.feature_count(),
                    expected: self.node_type_count,
                });
            }
            if let Some(l) = g.label {
                if l >= self.label_count {
                    return Err(GraphError::LabelOutOfRange {
                        label: l,
                        count: self.label_count,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn mean_node_count(&self) -> f64 {
        self.graphs.iter().map(|g| g.node_count() as f64).sum::<f64>() / self.len().max(1) as f64
    }

    pub fn mean_edge_count(&self) -> f64 {
        self.graphs.iter().map(|g| g.edge_count() as f64).sum::<f64>() / self.len().max(1) as f64
    }
}

const SCHEMA_VERSION: &str = "1";

/// Write a dataset in the line-delimited text format: one header record,
/// then one record per graph carrying id, label, node types, and the
/// i<j typed edge list.
pub fn serialize_dataset(d: &GraphDataset, path: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    let nmin = d.graphs.iter().map(|g| g.node_count()).min().unwrap_or(0);
    let nmax = d.graphs.iter().map(|g| g.node_count()).max().unwrap_or(0);
    writeln!(
        out,
        "gcfx-dataset v{SCHEMA_VERSION} name={} labels={} node_types={} edge_types={} nodes={}..{} graphs={}",
        d.name,
        d.label_count,
        d.node_type_count,
        d.edge_type_count,
        nmin,
        nmax,
        d.len()
    )
    .unwrap();
    for g in &d.graphs {
        let label = g.label.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
        let types: Vec<String> = g.node_types().iter().map(|t| t.to_string()).collect();
        let edges: Vec<String> = g
            .edges()
            .iter()
            .map(|(i, j, t)| format!("{i}-{j}:{t}"))
            .collect();
        writeln!(
            out,
            "g {} {} {} {}",
            g.id,
            label,
            types.join(","),
            if edges.is_empty() {
                "~".into()
            } else {
                edges.join(",")
            }
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn deserialize_dataset(path: &Path) -> Result<GraphDataset, GraphError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(GraphError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut fields = header.split_whitespace();
    let magic = fields.next().unwrap_or("");
    if magic != "gcfx-dataset" {
        return Err(GraphError::Parse {
            line: 1,
            msg: format!("bad magic '{magic}'"),
        });
    }
    let version = fields.next().unwrap_or("");
    if version != format!("v{SCHEMA_VERSION}") {
        return Err(GraphError::SchemaVersion(version.into()));
    }
    let mut kv = BTreeMap::new();
    for f in fields {
        if let Some((k, v)) = f.split_once('=') {
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<String, GraphError> {
        kv.get(k).cloned().ok_or_else(|| GraphError::Parse {
            line: 1,
            msg: format!("missing header field {k}"),
        })
    };
    let name = get("name")?;
    let label_count: usize = get("labels")?.parse().map_err(|_| GraphError::Parse {
        line: 1,
        msg: "bad labels".into(),
    })?;
    let node_type_count: usize = get("node_types")?.parse().map_err(|_| GraphError::Parse {
        line: 1,
        msg: "bad node_types".into(),
    })?;
    let edge_type_count: u8 = get("edge_types")?.parse().map_err(|_| GraphError::Parse {
        line: 1,
        msg: "bad edge_types".into(),
    })?;

    let mut graphs = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| GraphError::Parse {
            line: lineno + 1,
            msg: msg.into(),
        };
        let mut parts = line.split_whitespace();
        if parts.next() != Some("g") {
            return Err(parse_err("expected graph record"));
        }
        let id = parts.next().ok_or_else(|| parse_err("missing id"))?;
        let label_s = parts.next().ok_or_else(|| parse_err("missing label"))?;
        let label = if label_s == "-" {
            None
        } else {
            Some(
                label_s
                    .parse::<usize>()
                    .map_err(|_| parse_err("bad label"))?,
            )
        };
        let types_s = parts.next().ok_or_else(|| parse_err("missing types"))?;
        let node_types: Vec<usize> = types_s
            .split(',')
            .map(|t| t.parse::<usize>().map_err(|_| parse_err("bad node type")))
            .collect::<Result<_, _>>()?;
        if node_types.iter().any(|&t| t >= node_type_count) {
            return Err(parse_err("node type out of range"));
        }
        let edges_s = parts.next().ok_or_else(|| parse_err("missing edges"))?;
        let mut edges = Vec::new();
        if edges_s != "~" {
            for e in edges_s.split(',') {
                let (pair, ty) = e.split_once(':').ok_or_else(|| parse_err("bad edge"))?;
                let (i, j) = pair.split_once('-').ok_or_else(|| parse_err("bad edge"))?;
                let i: usize = i.parse().map_err(|_| parse_err("bad edge index"))?;
                let j: usize = j.parse().map_err(|_| parse_err("bad edge index"))?;
                let ty: u8 = ty.parse().map_err(|_| parse_err("bad edge type"))?;
                if i >= node_types.len() || j >= node_types.len() {
                    return Err(parse_err("edge index out of range"));
                }
                edges.push((i, j, ty));
            }
        }
        graphs.push(LabeledGraph::from_parts(
            id,
            &node_types,
            node_type_count,
            &edges,
            label,
        ));
    }
    let d = GraphDataset {
        name,
        graphs,
        label_count,
        node_type_count,
        edge_type_count,
    };
    d.validate()?;
    Ok(d)
}

/// Import a TU-style dataset: `<name>_A.txt` (edge pairs), `_graph_indicator`,
/// `_graph_labels`, `_node_labels`, and optionally `_edge_labels`.
/// Indices in the files are 1-based.
pub fn load_tu_dataset(dir: &Path, name: &str) -> Result<GraphDataset, GraphError> {
    let read_lines = |suffix: &str| -> Result<Vec<String>, GraphError> {
        let p = dir.join(format!("{name}_{suffix}.txt"));
        Ok(fs::read_to_string(&p)?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect())
    };
    let parse_err = |msg: String| GraphError::Parse { line: 0, msg };

    let indicator: Vec<usize> = read_lines("graph_indicator")?
        .iter()
        .map(|l| l.parse::<usize>().map_err(|_| parse_err(format!("bad graph_indicator entry '{l}'"))))
        .collect::<Result<_, _>>()?;
    let graph_labels_raw: Vec<i64> = read_lines("graph_labels")?
        .iter()
        .map(|l| l.parse::<i64>().map_err(|_| parse_err(format!("bad graph label '{l}'"))))
        .collect::<Result<_, _>>()?;
    let node_labels_raw: Vec<i64> = read_lines("node_labels")?
        .iter()
        .map(|l| {
            // some TU files carry "idx, label" pairs; take the last field
            let last = l.split(',').last().unwrap().trim();
            last.parse::<i64>()
                .map_err(|_| parse_err(format!("bad node label '{l}'")))
        })
        .collect::<Result<_, _>>()?;
    if node_labels_raw.len() != indicator.len() {
        return Err(parse_err("node_labels / graph_indicator length mismatch".into()));
    }

    let edge_lines = read_lines("A")?;
    let edge_labels_raw: Option<Vec<i64>> = match read_lines("edge_labels") {
        Ok(lines) => Some(
            lines
                .iter()
                .map(|l| l.parse::<i64>().map_err(|_| parse_err(format!("bad edge label '{l}'"))))
                .collect::<Result<_, _>>()?,
        ),
        Err(GraphError::Io(_)) => None,
        Err(e) => return Err(e),
    };

    // remap labels to dense 0-based ranges
    let mut graph_label_set: Vec<i64> = graph_labels_raw.clone();
    graph_label_set.sort_unstable();
    graph_label_set.dedup();
    let mut node_label_set: Vec<i64> = node_labels_raw.clone();
    node_label_set.sort_unstable();
    node_label_set.dedup();
    let edge_label_set: Vec<i64> = edge_labels_raw
        .as_ref()
        .map(|els| {
            let mut s = els.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .unwrap_or_default();

    let graph_count = *indicator
        .iter()
        .max()
        .ok_or_else(|| parse_err("empty graph_indicator".into()))?;
    if graph_labels_raw.len() != graph_count {
        return Err(parse_err("graph_labels / graph_indicator count mismatch".into()));
    }

    // local node index within each graph
    let mut local_index = vec![0usize; indicator.len()];
    let mut sizes = vec![0usize; graph_count];
    for (v, &gi) in indicator.iter().enumerate() {
        if gi == 0 || gi > graph_count {
            return Err(parse_err(format!("graph_indicator out of range at node {}", v + 1)));
        }
        local_index[v] = sizes[gi - 1];
        sizes[gi - 1] += 1;
    }

    let mut per_graph_edges: Vec<Vec<(usize, usize, u8)>> = vec![Vec::new(); graph_count];
    for (k, line) in edge_lines.iter().enumerate() {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("bad edge line '{line}'")))?;
        let a: usize = a.trim().parse().map_err(|_| parse_err(format!("bad edge '{line}'")))?;
        let b: usize = b.trim().parse().map_err(|_| parse_err(format!("bad edge '{line}'")))?;
        if a == 0 || b == 0 || a > indicator.len() || b > indicator.len() {
            return Err(parse_err(format!("edge index out of range '{line}'")));
        }
        let (ga, gb) = (indicator[a - 1], indicator[b - 1]);
        if ga != gb {
            return Err(parse_err(format!("edge '{line}' crosses graph boundary")));
        }
        let ty: u8 = match &edge_labels_raw {
            Some(els) => {
                let raw = els.get(k).ok_or_else(|| parse_err("edge_labels shorter than A".into()))?;
                (edge_label_set.iter().position(|x| x == raw).unwrap() + 1) as u8
            }
            None => 1,
        };
        let (i, j) = (local_index[a - 1], local_index[b - 1]);
        if i < j {
            per_graph_edges[ga - 1].push((i, j, ty));
        }
    }

    let node_type_count = node_label_set.len();
    let edge_type_count = edge_label_set.len().max(1) as u8;
    let mut node_cursor = 0usize;
    let mut graphs = Vec::with_capacity(graph_count);
    for g in 0..graph_count {
        let n = sizes[g];
        let types: Vec<usize> = (0..n)
            .map(|k| {
                let raw = node_labels_raw[node_cursor + k];
                node_label_set.iter().position(|x| *x == raw).unwrap()
            })
            .collect();
        node_cursor += n;
        let label = graph_label_set
            .iter()
            .position(|x| *x == graph_labels_raw[g])
            .unwrap();
        graphs.push(LabeledGraph::from_parts(
            format!("{name}-{}", g + 1),
            &types,
            node_type_count,
            &per_graph_edges[g],
            Some(label),
        ));
    }

    let d = GraphDataset {
        name: name.to_string(),
        graphs,
        label_count: graph_label_set.len(),
        node_type_count,
        edge_type_count,
    };
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minimal_valid_graph() {
        let g = LabeledGraph::from_parts("g0", &[0], 3, &[], None);
        assert!(validate_graph(&g, 1).is_ok());
    }

    #[test]
    fn asymmetry_detected() {
        let mut g = LabeledGraph::from_parts("g0", &[0, 1], 2, &[], None);
        g.adjacency[[0, 1]] = 1;
        match validate_graph(&g, 1) {
            Err(GraphError::Asymmetric { .. }) => {}
            other => panic!("expected asymmetry error, got {other:?}"),
        }
    }

    #[test]
    fn self_loop_detected() {
        let mut g = LabeledGraph::from_parts("g0", &[0, 1], 2, &[(0, 1, 1)], None);
        g.adjacency[[1, 1]] = 1;
        assert!(matches!(validate_graph(&g, 1), Err(GraphError::SelfLoop(1))));
    }

    #[test]
    fn non_one_hot_detected() {
        let g = LabeledGraph {
            id: "g0".into(),
            adjacency: Array2::zeros((1, 1)),
            features: array![[0.5, 0.5]],
            label: None,
        };
        assert!(matches!(validate_graph(&g, 1), Err(GraphError::NotOneHot(0))));
    }

    #[test]
    fn edge_type_range_checked() {
        let g = LabeledGraph::from_parts("g0", &[0, 1], 2, &[(0, 1, 3)], None);
        assert!(matches!(
            validate_graph(&g, 2),
            Err(GraphError::EdgeTypeOutOfRange { ty: 3, .. })
        ));
    }

    #[test]
    fn roundtrip_single_graph() {
        let d = GraphDataset {
            name: "tiny".into(),
            graphs: vec![LabeledGraph::from_parts("a", &[0], 2, &[], Some(0))],
            label_count: 1,
            node_type_count: 2,
            edge_type_count: 1,
        };
        let tmp = tempfile::NamedTempFile::new().unwrap();
        serialize_dataset(&d, tmp.path()).unwrap();
        let back = deserialize_dataset(tmp.path()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn load_rejects_out_of_range_edge_type() {
        let d = GraphDataset {
            name: "tiny".into(),
            graphs: vec![LabeledGraph::from_parts("a", &[0, 1], 2, &[(0, 1, 1)], Some(0))],
            label_count: 1,
            node_type_count: 2,
            edge_type_count: 1,
        };
        let tmp = tempfile::NamedTempFile::new().unwrap();
        serialize_dataset(&d, tmp.path()).unwrap();
        let text = fs::read_to_string(tmp.path()).unwrap().replace("0-1:1", "0-1:2");
        fs::write(tmp.path(), text).unwrap();
        assert!(deserialize_dataset(tmp.path()).is_err());
    }

    #[test]
    fn permutation_preserves_validity() {
        let g = LabeledGraph::from_parts("g", &[0, 1, 2], 3, &[(0, 1, 1), (1, 2, 1)], Some(0));
        let p = g.permuted(&[2, 0, 1]);
        assert!(validate_graph(&p, 1).is_ok());
        assert_eq!(p.node_type(0), 2);
        assert_eq!(p.edge_count(), 2);
    }
}
