//! Global explanation metrics: validity, coverage, and cost.

use crate::ged::{ged_lower_bound, perturbation_cost, GedConfig, Normalization};
use crate::graph::LabeledGraph;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("empty counterfactual set")]
    EmptySet,
    #[error("empty target set")]
    EmptyTargets,
}

/// Clip threshold for the validity ratio.
pub const VALIDITY_CLIP: f64 = 1.5;

/// Mean clipped ratio of the probability of `numerator_label` to the
/// best competing class, over a set of probability vectors.
pub fn validity(probs: &[Vec<f64>], numerator_label: usize) -> Result<f64, MetricsError> {
    if probs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut total = 0.0;
    for p in probs {
        let pc = p[numerator_label];
        let competing = p
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != numerator_label)
            .map(|(_, v)| *v)
            .fold(f64::MIN, f64::max);
        let ratio = if competing <= 0.0 {
            VALIDITY_CLIP
        } else {
            (pc / competing).min(VALIDITY_CLIP)
        };
        total += ratio;
    }
    Ok(total / probs.len() as f64)
}

/// Per-target minimum perturbation cost to the counterfactual set.
/// Targets with no counterfactual within `skip_above` (when set) still
/// get their true minimum; the bound only prunes GED evaluations.
pub fn min_costs(
    candidates: &[&LabeledGraph],
    targets: &[&LabeledGraph],
    cfg: &GedConfig,
) -> Vec<f64> {
    targets
        .iter()
        .map(|t| {
            candidates
                .iter()
                .map(|c| perturbation_cost(t, c, cfg))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Fraction of targets within cost threshold `delta` of some candidate.
/// An empty candidate set covers nothing.
pub fn coverage(
    candidates: &[&LabeledGraph],
    targets: &[&LabeledGraph],
    delta: f64,
    cfg: &GedConfig,
) -> Result<f64, MetricsError> {
    if targets.is_empty() {
        return Err(MetricsError::EmptyTargets);
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let covered = targets
        .iter()
        .filter(|t| {
            candidates
                .iter()
                .any(|c| covers(t, c, delta, cfg))
        })
        .count();
    Ok(covered as f64 / targets.len() as f64)
}

/// Whether one candidate covers one target at threshold `delta`, with a
/// cheap lower-bound prefilter before the assignment GED.
pub fn covers(target: &LabeledGraph, candidate: &LabeledGraph, delta: f64, cfg: &GedConfig) -> bool {
    let lb = ged_lower_bound(target, candidate, cfg);
    let lb_normalized = match cfg.normalization {
        Normalization::None => lb,
        Normalization::PairSize => {
            let size = (target.node_count()
                + target.edge_count()
                + candidate.node_count()
                + candidate.edge_count()) as f64
                / 2.0;
            lb / size.max(1.0)
        }
    };
    if lb_normalized > delta {
        return false;
    }
    perturbation_cost(target, candidate, cfg) <= delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Median,
}

/// Aggregate per-target minimum perturbation cost of the set.
pub fn cost(
    candidates: &[&LabeledGraph],
    targets: &[&LabeledGraph],
    aggr: Aggregation,
    cfg: &GedConfig,
) -> Result<f64, MetricsError> {
    if candidates.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    if targets.is_empty() {
        return Err(MetricsError::EmptyTargets);
    }
    let mut mins = min_costs(candidates, targets, cfg);
    Ok(match aggr {
        Aggregation::Mean => mins.iter().sum::<f64>() / mins.len() as f64,
        Aggregation::Median => {
            mins.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = mins.len();
            if n % 2 == 1 {
                mins[n / 2]
            } else {
                0.5 * (mins[n / 2 - 1] + mins[n / 2])
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;

    fn g(types: &[usize], edges: &[(usize, usize, u8)]) -> LabeledGraph {
        LabeledGraph::from_parts("g", types, 4, edges, None)
    }

    #[test]
    fn validity_even_split_is_one() {
        assert_eq!(validity(&[vec![0.5, 0.5]], 1).unwrap(), 1.0);
    }

    #[test]
    fn validity_clips_at_threshold() {
        assert_eq!(validity(&[vec![0.1, 0.9]], 1).unwrap(), 1.5);
    }

    #[test]
    fn validity_mixed_values() {
        // ratios: 0.75/0.25 = 3 -> 1.5, and 0.4/0.6 = 2/3
        let v = validity(&[vec![0.25, 0.75], vec![0.6, 0.4]], 1).unwrap();
        assert!((v - (1.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn validity_rejects_empty() {
        assert!(validity(&[], 0).is_err());
    }

    #[test]
    fn coverage_of_self_at_zero_delta() {
        let a = g(&[0, 1], &[(0, 1, 1)]);
        let b = g(&[2, 3], &[(0, 1, 1)]);
        let targets = [&a, &b];
        let cands = [&a, &b];
        let cfg = GedConfig::default();
        assert_eq!(coverage(&cands, &targets, 0.0, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn empty_candidates_cover_nothing() {
        let a = g(&[0], &[]);
        let cfg = GedConfig::default();
        assert_eq!(coverage(&[], &[&a], 0.1, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn three_target_fixture() {
        // candidate = a one-edge variant of t1 and t2, far from t3
        let cfg = GedConfig {
            normalization: Normalization::None,
            ..Default::default()
        };
        let t1 = g(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let t2 = g(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1)]);
        let t3 = g(&[1, 2, 3], &[]);
        let cand = g(&[0, 0, 0], &[(0, 1, 1), (1, 2, 1)]);
        let targets = [&t1, &t2, &t3];
        // exact distances: 1 (edge delete), 0, 5 (3 retypes + 2 edge inserts)
        for (t, expected) in targets.iter().zip([1.0, 0.0, 5.0]) {
            assert_eq!(crate::ged::ged_exact(t, &cand, &cfg).unwrap(), expected);
        }
        let cov = coverage(&[&cand], &targets, 1.0, &cfg).unwrap();
        assert!((cov - 2.0 / 3.0).abs() < 1e-12);
        let mean = cost(&[&cand], &targets, Aggregation::Mean, &cfg).unwrap();
        assert!((mean - (1.0 + 0.0 + 5.0) / 3.0).abs() < 1e-12);
        let median = cost(&[&cand], &targets, Aggregation::Median, &cfg).unwrap();
        assert_eq!(median, 1.0);
    }

    #[test]
    fn mean_and_median_on_known_minima() {
        // per-target minima 0.1 / 0.2 / 0.6 via scaled node retypes
        let cfg = GedConfig {
            node_sub_cost: 0.1,
            normalization: Normalization::None,
            ..Default::default()
        };
        let cand = g(&[0; 10], &[]);
        let t1 = g(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 0], &[]);
        let t2 = g(&[1, 1, 0, 0, 0, 0, 0, 0, 0, 0], &[]);
        let t3 = g(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 0], &[]);
        let targets = [&t1, &t2, &t3];
        let mean = cost(&[&cand], &targets, Aggregation::Mean, &cfg).unwrap();
        assert!((mean - 0.3).abs() < 1e-12);
        let median = cost(&[&cand], &targets, Aggregation::Median, &cfg).unwrap();
        assert!((median - 0.2).abs() < 1e-12);
    }

    #[test]
    fn coverage_monotone_in_candidates_and_delta() {
        let cfg = GedConfig::default();
        let t1 = g(&[0, 1, 2], &[(0, 1, 1), (1, 2, 1)]);
        let t2 = g(&[1, 1], &[(0, 1, 1)]);
        let c1 = g(&[0, 1, 2], &[(0, 1, 1)]);
        let c2 = g(&[1, 1], &[(0, 1, 1)]);
        let targets = [&t1, &t2];
        for delta in [0.0, 0.1, 0.3, 1.0] {
            let small = coverage(&[&c1], &targets, delta, &cfg).unwrap();
            let big = coverage(&[&c1, &c2], &targets, delta, &cfg).unwrap();
            assert!(big >= small);
            let wider = coverage(&[&c1], &targets, delta + 0.2, &cfg).unwrap();
            assert!(wider >= small);
        }
    }
}
