//! Pipeline stages behind the command-line driver. Every stage writes
//! its artifacts into the run directory and records them in the
//! manifest; a rerun with unchanged configuration and inputs is a
//! no-op.

use super::config::{DatasetSource, ExperimentConfig};
use super::manifest::{sha256_bytes, Manifest, ManifestError};
use super::report::pair_svg;
use crate::candidates::{build_pool, CandidateError, CandidatePool, CounterfactualCandidate};
use crate::classifier::{
    evaluate_classifier, load_consensus, save_consensus, train_classifier, ClassifierError,
    ConsensusModel,
};
use crate::datasets::generate_p5motif;
use crate::gcfs::{summarize, GcfsError, GlobalSummary};
use crate::ged::GedConfig;
use crate::graph::{deserialize_dataset, serialize_dataset, GraphDataset, GraphError, LabeledGraph};
use crate::metrics::{cost, coverage, validity, Aggregation, MetricsError};
use crate::vqcfx::{load_vqcfx, save_vqcfx, train_vqcfx, VqCfxError, VqCfxModel};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DATASET_FILE: &str = "dataset.json";
pub const STATS_FILE: &str = "dataset_stats.tsv";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const CLASSIFIER_METRICS_FILE: &str = "classifier_metrics.tsv";
pub const VQCFX_FILE: &str = "vqcfx.json";
pub const VQCFX_LOG_FILE: &str = "vqcfx_log.tsv";
pub const POOL_GRAPHS_FILE: &str = "candidates_graphs.json";
pub const POOL_TABLE_FILE: &str = "candidates_table.tsv";
pub const POOL_FREQ_FILE: &str = "codeword_freq.tsv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.tsv";

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    VqCfx(#[from] VqCfxError),
    #[error(transparent)]
    Candidates(#[from] CandidateError),
    #[error(transparent)]
    Gcfs(#[from] GcfsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("artifact format error in {path}: {msg}")]
    Artifact { path: PathBuf, msg: String },
    #[error("no targets: no graph has label {0} and a matching prediction")]
    NoTargets(usize),
    #[error("empty summary; nothing to report")]
    EmptySummary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stage_hash(parts: &[&str]) -> String {
    sha256_bytes(parts.join("\u{1f}").as_bytes())
}

fn dataset_stage_hash(cfg: &ExperimentConfig) -> String {
    let src = match &cfg.dataset {
        DatasetSource::P5Motif => format!(
            "p5motif|{}|{}|{}|{}|{}",
            cfg.dataset_cfg.graph_count,
            cfg.dataset_cfg.ba_node_min,
            cfg.dataset_cfg.ba_node_max,
            cfg.dataset_cfg.class_balance,
            cfg.dataset_cfg.seed
        ),
        DatasetSource::Path(p) => format!("path|{}", p.display()),
    };
    stage_hash(&["dataset", &src])
}

/// Run a stage unless the manifest already marks it current. Returns
/// true when the stage actually executed.
fn run_stage(
    run_dir: &Path,
    stage: &str,
    config_hash: String,
    inputs: &[&str],
    outputs: &[&str],
    body: impl FnOnce() -> Result<(), StageError>,
) -> Result<bool, StageError> {
    std::fs::create_dir_all(run_dir)?;
    let mut manifest = Manifest::load(run_dir)?;
    if manifest.is_current(run_dir, stage, &config_hash, inputs) {
        println!("{stage}: up to date");
        return Ok(false);
    }
    manifest.check_inputs(run_dir, inputs)?;
    body()?;
    manifest.record(run_dir, stage, config_hash, inputs, outputs)?;
    manifest.save(run_dir)?;
    println!("{stage}: done");
    Ok(true)
}

fn load_run_dataset(run_dir: &Path) -> Result<GraphDataset, StageError> {
    Ok(deserialize_dataset(&run_dir.join(DATASET_FILE))?)
}

/// Targets of the explanation: graphs labeled with the target class
/// whose model prediction agrees.
pub fn select_targets<'a>(
    d: &'a GraphDataset,
    clf: &ConsensusModel,
    target_label: usize,
) -> Result<Vec<&'a LabeledGraph>, StageError> {
    let mut out = Vec::new();
    for g in &d.graphs {
        if g.label == Some(target_label) && clf.predict(g)? == target_label {
            out.push(g);
        }
    }
    if out.is_empty() {
        return Err(StageError::NoTargets(target_label));
    }
    Ok(out)
}

fn stats_table(d: &GraphDataset) -> String {
    let mut s = String::from("dataset\tlabels\tgraphs\tavg_node\tavg_edge\tfeatures\n");
    let _ = writeln!(
        s,
        "{}\t{}\t{}\t{:.2}\t{:.2}\t{}",
        d.name,
        d.label_count,
        d.len(),
        d.mean_node_count(),
        d.mean_edge_count(),
        d.node_type_count
    );
    s
}

pub fn cmd_generate_dataset(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    run_stage(
        &run_dir,
        "generate-dataset",
        dataset_stage_hash(cfg),
        &[],
        &[DATASET_FILE, STATS_FILE],
        || {
            let d = match &cfg.dataset {
                DatasetSource::P5Motif => {
                    let (d, placements) = generate_p5motif(&cfg.dataset_cfg);
                    let text = serde_json::to_string_pretty(&placements)
                        .expect("placements serialize");
                    std::fs::write(run_dir.join("placements.json"), text)?;
                    d
                }
                DatasetSource::Path(p) => deserialize_dataset(p)?,
            };
            serialize_dataset(&d, &run_dir.join(DATASET_FILE))?;
            std::fs::write(run_dir.join(STATS_FILE), stats_table(&d))?;
            Ok(())
        },
    )?;
    Ok(())
}

pub fn cmd_train_classifier(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    let c = &cfg.classifier;
    let hash = stage_hash(&[
        "train-classifier",
        &format!("{}|{}|{}|{}|{}", c.epochs, c.folds, c.batch_size, c.lr, c.seed),
    ]);
    run_stage(
        &run_dir,
        "train-classifier",
        hash,
        &[DATASET_FILE],
        &[CLASSIFIER_FILE, CLASSIFIER_METRICS_FILE],
        || {
            let d = load_run_dataset(&run_dir)?;
            let (model, folds) = train_classifier(&d, c)?;
            save_consensus(&model, &run_dir.join(CLASSIFIER_FILE))?;
            let eval = evaluate_classifier(&model, &d)?;
            let mut t = String::from("fold\taccuracy\trocauc\tf1\n");
            for f in &folds {
                let _ = writeln!(t, "{}\t{:.6}\t{:.6}\t{:.6}", f.fold, f.accuracy, f.rocauc, f.f1);
            }
            let _ = writeln!(
                t,
                "consensus\t{:.6}\t{:.6}\t{:.6}",
                eval.accuracy, eval.rocauc, eval.f1
            );
            std::fs::write(run_dir.join(CLASSIFIER_METRICS_FILE), t)?;
            Ok(())
        },
    )?;
    Ok(())
}

pub fn cmd_train_vqcfx(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    let v = &cfg.vqcfx;
    let vq_json = serde_json::to_string(v).expect("config serializes");
    let hash = stage_hash(&[
        "train-vqcfx",
        &vq_json,
        &format!("{}|{}", cfg.target_label, cfg.counterfactual_label),
    ]);
    run_stage(
        &run_dir,
        "train-vqcfx",
        hash,
        &[DATASET_FILE, CLASSIFIER_FILE],
        &[VQCFX_FILE, VQCFX_LOG_FILE],
        || {
            let d = load_run_dataset(&run_dir)?;
            let clf = load_consensus(&run_dir.join(CLASSIFIER_FILE))?;
            let targets = select_targets(&d, &clf, cfg.target_label)?;
            let (model, log) = train_vqcfx(
                &targets,
                cfg.counterfactual_label,
                &clf,
                d.node_type_count,
                d.label_count,
                d.edge_type_count as usize + 1,
                v,
            )?;
            save_vqcfx(&model, &run_dir.join(VQCFX_FILE))?;
            let mut t = String::from("epoch\tl_px\tl_cf\tl_vq\tl_orth\ttotal\n");
            for e in &log {
                let _ = writeln!(
                    t,
                    "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    e.epoch, e.l_px, e.l_cf, e.l_vq, e.l_orth, e.total
                );
            }
            std::fs::write(run_dir.join(VQCFX_LOG_FILE), t)?;
            Ok(())
        },
    )?;
    Ok(())
}

fn write_pool(run_dir: &Path, pool: &CandidatePool, source: &GraphDataset) -> Result<(), StageError> {
    let graphs: Vec<LabeledGraph> = pool.candidates.iter().map(|c| c.graph.clone()).collect();
    let d = GraphDataset {
        name: "candidates".into(),
        label_count: source.label_count,
        node_type_count: source.node_type_count,
        edge_type_count: source.edge_type_count,
        graphs,
    };
    serialize_dataset(&d, &run_dir.join(POOL_GRAPHS_FILE))?;
    let mut t = String::from("graph_id\tsource_id\tcost\tprob\tcodeword_indices\n");
    for c in &pool.candidates {
        let prob: Vec<String> = c.prob.iter().map(|p| format!("{p:.12}")).collect();
        let idx: Vec<String> = c.codeword_indices.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(
            t,
            "{}\t{}\t{:.12}\t{}\t{}",
            c.graph.id,
            c.source_id,
            c.cost,
            prob.join(","),
            idx.join(",")
        );
    }
    std::fs::write(run_dir.join(POOL_TABLE_FILE), t)?;
    let mut f = format!(
        "# target_label={} counterfactual_label={}\nindex\tcount\n",
        pool.target_label, pool.counterfactual_label
    );
    for (i, n) in &pool.codeword_freq {
        let _ = writeln!(f, "{i}\t{n}");
    }
    std::fs::write(run_dir.join(POOL_FREQ_FILE), f)?;
    Ok(())
}

fn artifact_err(path: &Path, msg: impl Into<String>) -> StageError {
    StageError::Artifact {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn read_pool(run_dir: &Path) -> Result<CandidatePool, StageError> {
    let graphs = deserialize_dataset(&run_dir.join(POOL_GRAPHS_FILE))?;
    let by_id: std::collections::BTreeMap<&str, &LabeledGraph> =
        graphs.graphs.iter().map(|g| (g.id.as_str(), g)).collect();

    let freq_path = run_dir.join(POOL_FREQ_FILE);
    let freq_text = std::fs::read_to_string(&freq_path)?;
    let header = freq_text
        .lines()
        .next()
        .ok_or_else(|| artifact_err(&freq_path, "empty file"))?;
    let mut labels = (None, None);
    for part in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = part.strip_prefix("target_label=") {
            labels.0 = v.parse().ok();
        }
        if let Some(v) = part.strip_prefix("counterfactual_label=") {
            labels.1 = v.parse().ok();
        }
    }
    let (Some(target_label), Some(counterfactual_label)) = labels else {
        return Err(artifact_err(&freq_path, "missing label header"));
    };
    let mut pool = CandidatePool::new(target_label, counterfactual_label);
    for line in freq_text.lines().skip(2) {
        let (i, n) = line
            .split_once('\t')
            .ok_or_else(|| artifact_err(&freq_path, format!("bad row '{line}'")))?;
        let i = i.parse().map_err(|e| artifact_err(&freq_path, format!("{e}")))?;
        let n = n.parse().map_err(|e| artifact_err(&freq_path, format!("{e}")))?;
        pool.codeword_freq.insert(i, n);
    }

    let table_path = run_dir.join(POOL_TABLE_FILE);
    let table = std::fs::read_to_string(&table_path)?;
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(artifact_err(&table_path, format!("bad row '{line}'")));
        }
        let graph = by_id
            .get(cols[0])
            .ok_or_else(|| artifact_err(&table_path, format!("unknown graph '{}'", cols[0])))?;
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| artifact_err(&table_path, format!("{e}")))
        };
        let prob = cols[3]
            .split(',')
            .map(parse_f)
            .collect::<Result<Vec<f64>, _>>()?;
        let codeword_indices = cols[4]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| artifact_err(&table_path, format!("{e}")))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        pool.candidates.push(CounterfactualCandidate {
            source_id: cols[1].to_string(),
            prob,
            cost: parse_f(cols[2])?,
            codeword_indices,
            graph: (*graph).clone(),
        });
    }
    Ok(pool)
}

pub fn cmd_generate_candidates(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    let hash = stage_hash(&[
        "generate-candidates",
        &format!(
            "{}|{}|{}|{}",
            cfg.samples, cfg.delta, cfg.target_label, cfg.counterfactual_label
        ),
    ]);
    run_stage(
        &run_dir,
        "generate-candidates",
        hash,
        &[DATASET_FILE, CLASSIFIER_FILE, VQCFX_FILE],
        &[POOL_GRAPHS_FILE, POOL_TABLE_FILE, POOL_FREQ_FILE],
        || {
            let d = load_run_dataset(&run_dir)?;
            let clf = load_consensus(&run_dir.join(CLASSIFIER_FILE))?;
            let model: VqCfxModel = load_vqcfx(&run_dir.join(VQCFX_FILE))?;
            let targets = select_targets(&d, &clf, cfg.target_label)?;
            let pool = build_pool(
                &model,
                &clf,
                &targets,
                cfg.target_label,
                cfg.counterfactual_label,
                cfg.samples,
                cfg.delta,
                &GedConfig::default(),
            )?;
            write_pool(&run_dir, &pool, &d)?;
            Ok(())
        },
    )?;
    Ok(())
}

pub fn cmd_summarize(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    let w = &cfg.weights;
    let hash = stage_hash(&[
        "summarize",
        &format!(
            "{}|{}|{}|{}|{:?}|{}",
            cfg.resolved_k(),
            w.w_validity,
            w.w_coverage,
            w.w_expressibility,
            w.zeta,
            cfg.delta
        ),
    ]);
    run_stage(
        &run_dir,
        "summarize",
        hash,
        &[DATASET_FILE, CLASSIFIER_FILE, POOL_GRAPHS_FILE, POOL_TABLE_FILE, POOL_FREQ_FILE],
        &[SUMMARY_FILE],
        || {
            let d = load_run_dataset(&run_dir)?;
            let clf = load_consensus(&run_dir.join(CLASSIFIER_FILE))?;
            let pool = read_pool(&run_dir)?;
            let targets = select_targets(&d, &clf, pool.target_label)?;
            let summary = summarize(
                &pool,
                &targets,
                cfg.resolved_k(),
                cfg.delta,
                w,
                &GedConfig::default(),
            )?;
            let stored = StoredSummary {
                selected: summary
                    .selected
                    .iter()
                    .map(|&i| pool.candidates[i].graph.id.clone())
                    .collect(),
                steps: summary.steps,
            };
            let text = serde_json::to_string_pretty(&stored).expect("summary serializes");
            std::fs::write(run_dir.join(SUMMARY_FILE), text)?;
            Ok(())
        },
    )?;
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct StoredSummary {
    /// Candidate graph ids, in selection order.
    pub selected: Vec<String>,
    pub steps: Vec<crate::gcfs::SelectionStep>,
}

/// Load the stored summary and resolve it against the pool.
pub fn read_summary(
    run_dir: &Path,
    pool: &CandidatePool,
) -> Result<(StoredSummary, GlobalSummary), StageError> {
    let path = run_dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path)?;
    let stored: StoredSummary =
        serde_json::from_str(&text).map_err(|e| artifact_err(&path, e.to_string()))?;
    let mut selected = Vec::with_capacity(stored.selected.len());
    for id in &stored.selected {
        let i = pool
            .candidates
            .iter()
            .position(|c| &c.graph.id == id)
            .ok_or_else(|| artifact_err(&path, format!("selected graph '{id}' not in pool")))?;
        selected.push(i);
    }
    let steps = stored.steps.clone();
    Ok((stored, GlobalSummary { selected, steps }))
}

/// The three global metrics for one explanation set.
pub fn summary_metrics(
    pool: &CandidatePool,
    selected: &[usize],
    targets: &[&LabeledGraph],
    delta: f64,
    aggr: Aggregation,
    ged: &GedConfig,
) -> Result<(f64, f64, f64), StageError> {
    let probs: Vec<Vec<f64>> = selected
        .iter()
        .map(|&i| pool.candidates[i].prob.clone())
        .collect();
    let graphs: Vec<&LabeledGraph> = selected.iter().map(|&i| &pool.candidates[i].graph).collect();
    let v = validity(&probs, pool.counterfactual_label)?;
    let c = coverage(&graphs, targets, delta, ged)?;
    let w = cost(&graphs, targets, aggr, ged)?;
    Ok((v, c, w))
}

pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    let aggr = if cfg.cost_is_median {
        Aggregation::Median
    } else {
        Aggregation::Mean
    };
    let hash = stage_hash(&[
        "evaluate",
        &format!("{}|{}", cfg.delta, cfg.cost_is_median),
    ]);
    run_stage(
        &run_dir,
        "evaluate",
        hash,
        &[
            DATASET_FILE,
            CLASSIFIER_FILE,
            POOL_GRAPHS_FILE,
            POOL_TABLE_FILE,
            POOL_FREQ_FILE,
            SUMMARY_FILE,
        ],
        &[METRICS_FILE],
        || {
            let d = load_run_dataset(&run_dir)?;
            let clf = load_consensus(&run_dir.join(CLASSIFIER_FILE))?;
            let pool = read_pool(&run_dir)?;
            let targets = select_targets(&d, &clf, pool.target_label)?;
            let (_, summary) = read_summary(&run_dir, &pool)?;
            let (v, c, w) = summary_metrics(
                &pool,
                &summary.selected,
                &targets,
                cfg.delta,
                aggr,
                &GedConfig::default(),
            )?;
            let mut t = String::from("dataset\tmethod\tvalidity\tcoverage_pct\tcost\n");
            let _ = writeln!(t, "{}\tgcfx\t{:.6}\t{:.4}\t{:.6}", d.name, v, c * 100.0, w);
            std::fs::write(run_dir.join(METRICS_FILE), t)?;
            Ok(())
        },
    )?;
    Ok(())
}

pub fn cmd_report(cfg: &ExperimentConfig) -> Result<(), StageError> {
    let run_dir = cfg.resolved_output_dir();
    let hash = stage_hash(&["report", "v1"]);
    // outputs depend on K; recorded dynamically below
    std::fs::create_dir_all(&run_dir)?;
    let mut manifest = Manifest::load(&run_dir)?;
    let inputs = [
        DATASET_FILE,
        POOL_GRAPHS_FILE,
        POOL_TABLE_FILE,
        POOL_FREQ_FILE,
        SUMMARY_FILE,
        METRICS_FILE,
    ];
    if manifest.is_current(&run_dir, "report", &hash, &inputs) {
        println!("report: up to date");
        return Ok(());
    }
    manifest.check_inputs(&run_dir, &inputs)?;
    let d = load_run_dataset(&run_dir)?;
    let pool = read_pool(&run_dir)?;
    let (_, summary) = read_summary(&run_dir, &pool)?;
    if summary.selected.is_empty() {
        return Err(StageError::EmptySummary);
    }
    let report_dir = run_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;
    let ged = GedConfig::default();
    let by_id: std::collections::BTreeMap<&str, &LabeledGraph> =
        d.graphs.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut outputs: Vec<String> = Vec::new();
    for (rank, &i) in summary.selected.iter().enumerate() {
        let c = &pool.candidates[i];
        let source = by_id.get(c.source_id.as_str()).ok_or_else(|| {
            artifact_err(&run_dir.join(POOL_TABLE_FILE), format!("unknown source '{}'", c.source_id))
        })?;
        let prob = c.prob[pool.counterfactual_label];
        let svg = pair_svg(source, &c.graph, prob, c.cost, &ged);
        let rel = format!("report/pair_{rank:02}.svg");
        std::fs::write(run_dir.join(&rel), svg)?;
        outputs.push(rel);
    }
    let mut t = String::from("step\tsource_id\tscore\tgain\n");
    for s in &summary.steps {
        let _ = writeln!(t, "{}\t{}\t{:.6}\t{:.6}", s.step, s.source_id, s.score, s.gain);
    }
    std::fs::write(run_dir.join("report/selection_steps.tsv"), t)?;
    outputs.push("report/selection_steps.tsv".into());
    let refs: Vec<&str> = outputs.iter().map(|s| s.as_str()).collect();
    manifest.record(&run_dir, "report", hash, &inputs, &refs)?;
    manifest.save(&run_dir)?;
    println!("report: done ({} figures)", summary.selected.len());
    Ok(())
}
