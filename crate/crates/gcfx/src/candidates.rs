//! Approximate counterfactual candidates and the per-label candidate
//! pool, including the codeword-frequency statistics feeding
//! expressibility.

use crate::classifier::{argmax, ClassifierError, ConsensusModel};
use crate::ged::{perturbation_cost, GedConfig};
use crate::graph::LabeledGraph;
use crate::vqcfx::{DecodeMode, VqCfxError, VqCfxModel};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error(transparent)]
    Model(#[from] VqCfxError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("empty target set")]
    EmptyTargets,
}

/// One approximate counterfactual for a specific source sample.
#[derive(Debug, Clone)]
pub struct CounterfactualCandidate {
    /// Id of the explained input sample.
    pub source_id: String,
    /// Classifier probability vector on the candidate.
    pub prob: Vec<f64>,
    /// Normalized perturbation cost to the source.
    pub cost: f64,
    /// Counterfactual-path codeword index per node.
    pub codeword_indices: Vec<usize>,
    pub graph: LabeledGraph,
}

/// Candidate pool for one (target label, counterfactual label) pair.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub target_label: usize,
    pub counterfactual_label: usize,
    pub candidates: Vec<CounterfactualCandidate>,
    /// Counterfactual-side codeword index -> count, aggregated over the
    /// positions where the factual and counterfactual indices differ.
    pub codeword_freq: BTreeMap<usize, usize>,
}

impl CandidatePool {
    pub fn new(target_label: usize, counterfactual_label: usize) -> Self {
        CandidatePool {
            target_label,
            counterfactual_label,
            candidates: Vec::new(),
            codeword_freq: BTreeMap::new(),
        }
    }

    /// Fold one input's index diff into the global frequency table:
    /// positions where the counterfactual index differs from the
    /// factual one contribute their counterfactual-side index.
    pub fn record_index_diff(&mut self, factual: &[usize], counterfactual: &[usize]) {
        debug_assert_eq!(factual.len(), counterfactual.len());
        for (&f, &c) in factual.iter().zip(counterfactual) {
            if f != c {
                *self.codeword_freq.entry(c).or_insert(0) += 1;
            }
        }
    }
}

/// Decode up to `samples` sampled graphs (seeds 1..=samples) plus one
/// argmax decode (seed 0) for a single input, keeping a decode only if
/// the classifier flips to `y_c` and the perturbation cost stays within
/// `delta`. Empty decodes (every node isolated) are discarded. An empty
/// return is normal, not an error.
///
/// Precondition: the classifier predicts the target label on `g` and
/// `y_c` differs from it.
pub fn generate_candidates(
    model: &VqCfxModel,
    classifier: &ConsensusModel,
    g: &LabeledGraph,
    y_c: usize,
    samples: usize,
    delta: f64,
    ged: &GedConfig,
) -> Result<Vec<CounterfactualCandidate>, CandidateError> {
    let mut out = Vec::new();
    for seed in 0..=samples as u64 {
        let mode = if seed == 0 {
            DecodeMode::Argmax
        } else {
            DecodeMode::Sample
        };
        let Some(sample) = model.generate(g, y_c, mode, seed)? else {
            continue;
        };
        let Some(graph) = sample.graph else {
            continue;
        };
        let prob = classifier.classify(&graph)?;
        if argmax(&prob) != y_c {
            continue;
        }
        let cost = perturbation_cost(g, &graph, ged);
        if cost > delta {
            continue;
        }
        out.push(CounterfactualCandidate {
            source_id: g.id.clone(),
            prob,
            cost,
            codeword_indices: sample.counterfactual_indices,
            graph,
        });
    }
    Ok(out)
}

/// Union of per-input candidates over the whole target set, plus the
/// global codeword-frequency table. Each input contributes its
/// factual/counterfactual index diff exactly once (the encoder paths do
/// not depend on the decode seed), whether or not any of its decodes
/// survive the filter.
pub fn build_pool(
    model: &VqCfxModel,
    classifier: &ConsensusModel,
    targets: &[&LabeledGraph],
    target_label: usize,
    y_c: usize,
    samples: usize,
    delta: f64,
    ged: &GedConfig,
) -> Result<CandidatePool, CandidateError> {
    if targets.is_empty() {
        return Err(CandidateError::EmptyTargets);
    }
    let mut pool = CandidatePool::new(target_label, y_c);
    for g in targets {
        let (idx_f, idx_c) = model.codeword_paths(g, y_c)?;
        pool.record_index_diff(&idx_f, &idx_c);
        pool.candidates
            .extend(generate_candidates(model, classifier, g, y_c, samples, delta, ged)?);
    }
    pool.candidates.sort_by(|a, b| {
        (&a.source_id, &a.graph.id).cmp(&(&b.source_id, &b.graph.id))
    });
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::GinClassifier;
    use crate::vqcfx::VqCfxConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_graph(id: &str, edges: &[(usize, usize)], types: &[usize]) -> LabeledGraph {
        let typed: Vec<(usize, usize, u8)> = edges.iter().map(|&(i, j)| (i, j, 1)).collect();
        LabeledGraph::from_parts(id, types, 3, &typed, Some(0))
    }

    fn toy_setup(seed: u64) -> (VqCfxModel, ConsensusModel) {
        let cfg = VqCfxConfig {
            codebook_size: 16,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = VqCfxModel::new(3, 2, 2, cfg, &mut rng);
        let clf = ConsensusModel {
            folds: vec![GinClassifier::new(3, 2, &mut rng)],
        };
        (model, clf)
    }

    fn toy_targets() -> Vec<LabeledGraph> {
        vec![
            toy_graph("t0", &[(0, 1), (1, 2), (0, 2)], &[0, 1, 2]),
            toy_graph("t1", &[(0, 1), (1, 2), (2, 3)], &[1, 1, 0, 2]),
            toy_graph("t2", &[(0, 1), (1, 2), (2, 3), (0, 3)], &[2, 0, 1, 0]),
        ]
    }

    #[test]
    fn samples_zero_yields_at_most_the_argmax_candidate() {
        let (model, clf) = toy_setup(5);
        let g = toy_targets().remove(0);
        let got =
            generate_candidates(&model, &clf, &g, 1, 0, f64::INFINITY, &GedConfig::default())
                .unwrap();
        assert!(got.len() <= 1);
    }

    #[test]
    fn classifier_filter_matches_manual_flip_count() {
        let (model, clf) = toy_setup(6);
        let g = toy_targets().remove(1);
        let ged = GedConfig::default();
        let got = generate_candidates(&model, &clf, &g, 1, 8, f64::INFINITY, &ged).unwrap();
        let mut flips = 0usize;
        for seed in 0..=8u64 {
            let mode = if seed == 0 { DecodeMode::Argmax } else { DecodeMode::Sample };
            if let Some(s) = model.generate(&g, 1, mode, seed).unwrap() {
                if let Some(cand) = s.graph {
                    if argmax(&clf.classify(&cand).unwrap()) == 1 {
                        flips += 1;
                    }
                }
            }
        }
        assert_eq!(got.len(), flips);
        for c in &got {
            assert_eq!(argmax(&c.prob), 1);
            assert_eq!(c.source_id, g.id);
        }
    }

    #[test]
    fn impossible_cost_bound_gives_empty_list() {
        let (model, clf) = toy_setup(7);
        let g = toy_targets().remove(2);
        let got = generate_candidates(&model, &clf, &g, 1, 8, -1.0, &GedConfig::default())
            .unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn pool_size_is_sum_of_per_input_counts() {
        let (model, clf) = toy_setup(8);
        let targets = toy_targets();
        let refs: Vec<&LabeledGraph> = targets.iter().collect();
        let ged = GedConfig::default();
        let pool = build_pool(&model, &clf, &refs, 0, 1, 4, f64::INFINITY, &ged).unwrap();
        let expect: usize = refs
            .iter()
            .map(|g| {
                generate_candidates(&model, &clf, g, 1, 4, f64::INFINITY, &ged)
                    .unwrap()
                    .len()
            })
            .sum();
        assert_eq!(pool.candidates.len(), expect);
        assert_eq!(pool.target_label, 0);
        assert_eq!(pool.counterfactual_label, 1);
    }

    #[test]
    fn pool_is_order_independent() {
        let (model, clf) = toy_setup(9);
        let targets = toy_targets();
        let ged = GedConfig::default();
        let fwd: Vec<&LabeledGraph> = targets.iter().collect();
        let rev: Vec<&LabeledGraph> = targets.iter().rev().collect();
        let a = build_pool(&model, &clf, &fwd, 0, 1, 4, f64::INFINITY, &ged).unwrap();
        let b = build_pool(&model, &clf, &rev, 0, 1, 4, f64::INFINITY, &ged).unwrap();
        assert_eq!(a.codeword_freq, b.codeword_freq);
        let ids = |p: &CandidatePool| -> Vec<(String, String)> {
            p.candidates
                .iter()
                .map(|c| (c.source_id.clone(), c.graph.id.clone()))
                .collect()
        };
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn empty_target_set_is_an_error() {
        let (model, clf) = toy_setup(10);
        let err = build_pool(&model, &clf, &[], 0, 1, 4, 0.1, &GedConfig::default());
        assert!(matches!(err, Err(CandidateError::EmptyTargets)));
    }

    #[test]
    fn positional_diff_counts_counterfactual_side() {
        let mut pool = CandidatePool::new(0, 1);
        pool.record_index_diff(&[1, 2, 7], &[1, 3, 7]);
        assert_eq!(pool.codeword_freq.get(&3), Some(&1));
        assert_eq!(pool.codeword_freq.len(), 1);
    }

    #[test]
    fn identical_indices_leave_freq_empty() {
        let mut pool = CandidatePool::new(0, 1);
        pool.record_index_diff(&[4, 4, 4], &[4, 4, 4]);
        assert!(pool.codeword_freq.is_empty());
    }
}
