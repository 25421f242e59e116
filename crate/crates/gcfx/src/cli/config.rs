//! Flat key-value experiment configuration with one section per
//! pipeline stage. Unknown sections or keys are hard errors so a typo
//! cannot silently fall back to a default.

use crate::classifier::TrainConfig;
use crate::datasets::P5MotifConfig;
use crate::gcfs::ScoreWeights;
use crate::vqcfx::VqCfxConfig;
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for '{key}': {msg}")]
    InvalidValue { key: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which dataset the run uses: the builtin synthetic generator or a
/// serialized dataset file.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    P5Motif,
    Path(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub dataset_cfg: P5MotifConfig,
    pub classifier: TrainConfig,
    pub vqcfx: VqCfxConfig,
    pub target_label: usize,
    pub counterfactual_label: usize,
    pub samples: usize,
    pub delta: f64,
    /// None means "resolve by dataset kind": 20 for the builtin
    /// synthetic dataset, 50 for external (real) datasets.
    pub k: Option<usize>,
    pub weights: ScoreWeights,
    pub cost_is_median: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::P5Motif,
            dataset_cfg: P5MotifConfig::default(),
            classifier: TrainConfig::default(),
            vqcfx: VqCfxConfig::default(),
            target_label: 0,
            counterfactual_label: 1,
            samples: 16,
            delta: 0.1,
            k: None,
            weights: ScoreWeights::default(),
            cost_is_median: false,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    /// Summary capacity K, defaulting per dataset kind.
    pub fn resolved_k(&self) -> usize {
        self.k.unwrap_or(match self.dataset {
            DatasetSource::P5Motif => 20,
            DatasetSource::Path(_) => 50,
        })
    }

    /// Output directory, rooted at `GCFX_OUTPUT_ROOT` when that is set
    /// and the configured directory is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os("GCFX_OUTPUT_ROOT") {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let n = ln + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                    line: n,
                    msg: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                match section.as_str() {
                    "dataset" | "classifier" | "vqcfx" | "candidates" | "summary"
                    | "output" => {}
                    other => return Err(ConfigError::UnknownSection(other.to_string())),
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: n,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| ConfigError::InvalidValue {
                key: key.to_string(),
                msg: format!("{e}"),
            })
        }
        match (section, key) {
            ("dataset", "name") => {
                if value != "p5motif" {
                    return Err(ConfigError::InvalidValue {
                        key: key.into(),
                        msg: format!("unknown builtin dataset '{value}'"),
                    });
                }
                self.dataset = DatasetSource::P5Motif;
            }
            ("dataset", "path") => self.dataset = DatasetSource::Path(PathBuf::from(value)),
            ("dataset", "graph_count") => self.dataset_cfg.graph_count = num(key, value)?,
            ("dataset", "ba_node_min") => self.dataset_cfg.ba_node_min = num(key, value)?,
            ("dataset", "ba_node_max") => self.dataset_cfg.ba_node_max = num(key, value)?,
            ("dataset", "class_balance") => self.dataset_cfg.class_balance = num(key, value)?,
            ("dataset", "seed") => self.dataset_cfg.seed = num(key, value)?,
            ("classifier", "epochs") => self.classifier.epochs = num(key, value)?,
            ("classifier", "folds") => self.classifier.folds = num(key, value)?,
            ("classifier", "batch_size") => self.classifier.batch_size = num(key, value)?,
            ("classifier", "lr") => self.classifier.lr = num(key, value)?,
            ("classifier", "seed") => self.classifier.seed = num(key, value)?,
            ("vqcfx", "codebook_size") => self.vqcfx.codebook_size = num(key, value)?,
            ("vqcfx", "d_vq") => self.vqcfx.d_vq = num(key, value)?,
            ("vqcfx", "alpha1") => self.vqcfx.alpha1 = num(key, value)?,
            ("vqcfx", "alpha2") => self.vqcfx.alpha2 = num(key, value)?,
            ("vqcfx", "alpha3") => self.vqcfx.alpha3 = num(key, value)?,
            ("vqcfx", "theta") => self.vqcfx.theta = num(key, value)?,
            ("vqcfx", "gamma") => self.vqcfx.gamma = num(key, value)?,
            ("vqcfx", "eta") => self.vqcfx.eta = num(key, value)?,
            ("vqcfx", "w_or") => self.vqcfx.w_or = num(key, value)?,
            ("vqcfx", "epochs") => self.vqcfx.epochs = num(key, value)?,
            ("vqcfx", "batch_size") => self.vqcfx.batch_size = num(key, value)?,
            ("vqcfx", "lr") => self.vqcfx.lr = num(key, value)?,
            ("vqcfx", "seed") => self.vqcfx.seed = num(key, value)?,
            ("vqcfx", "target_label") => self.target_label = num(key, value)?,
            ("vqcfx", "counterfactual_label") => self.counterfactual_label = num(key, value)?,
            ("candidates", "samples") => self.samples = num(key, value)?,
            ("candidates", "delta") => self.delta = num(key, value)?,
            ("summary", "k") => self.k = Some(num(key, value)?),
            ("summary", "w_validity") => self.weights.w_validity = num(key, value)?,
            ("summary", "w_coverage") => self.weights.w_coverage = num(key, value)?,
            ("summary", "w_expressibility") => {
                self.weights.w_expressibility = num(key, value)?;
            }
            ("summary", "zeta") => self.weights.zeta = Some(num(key, value)?),
            ("summary", "cost_aggregation") => {
                self.cost_is_median = match value {
                    "mean" => false,
                    "median" => true,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            msg: format!("expected mean or median, got '{other}'"),
                        })
                    }
                };
            }
            ("output", "dir") => self.output_dir = PathBuf::from(value),
            (sec, k) => {
                return Err(ConfigError::UnknownKey {
                    section: sec.to_string(),
                    key: k.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Render the configuration as a parseable file. `defaults` prints
    /// this for the default value set.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("[dataset]\n");
        match &self.dataset {
            DatasetSource::P5Motif => s.push_str("name = p5motif\n"),
            DatasetSource::Path(p) => {
                let _ = writeln!(s, "path = {}", p.display());
            }
        }
        let d = &self.dataset_cfg;
        let _ = writeln!(s, "graph_count = {}", d.graph_count);
        let _ = writeln!(s, "ba_node_min = {}", d.ba_node_min);
        let _ = writeln!(s, "ba_node_max = {}", d.ba_node_max);
        let _ = writeln!(s, "class_balance = {}", d.class_balance);
        let _ = writeln!(s, "seed = {}", d.seed);
        s.push_str("\n[classifier]\n");
        let c = &self.classifier;
        let _ = writeln!(s, "epochs = {}", c.epochs);
        let _ = writeln!(s, "folds = {}", c.folds);
        let _ = writeln!(s, "batch_size = {}", c.batch_size);
        let _ = writeln!(s, "lr = {}", c.lr);
        let _ = writeln!(s, "seed = {}", c.seed);
        s.push_str("\n[vqcfx]\n");
        let v = &self.vqcfx;
        let _ = writeln!(s, "codebook_size = {}", v.codebook_size);
        let _ = writeln!(s, "d_vq = {}", v.d_vq);
        let _ = writeln!(s, "alpha1 = {}", v.alpha1);
        let _ = writeln!(s, "alpha2 = {}", v.alpha2);
        let _ = writeln!(s, "alpha3 = {}", v.alpha3);
        let _ = writeln!(s, "theta = {}", v.theta);
        let _ = writeln!(s, "gamma = {}", v.gamma);
        let _ = writeln!(s, "eta = {}", v.eta);
        let _ = writeln!(s, "w_or = {}", v.w_or);
        let _ = writeln!(s, "epochs = {}", v.epochs);
        let _ = writeln!(s, "batch_size = {}", v.batch_size);
        let _ = writeln!(s, "lr = {}", v.lr);
        let _ = writeln!(s, "seed = {}", v.seed);
        let _ = writeln!(s, "target_label = {}", self.target_label);
        let _ = writeln!(s, "counterfactual_label = {}", self.counterfactual_label);
        s.push_str("\n[candidates]\n");
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "delta = {}", self.delta);
        s.push_str("\n[summary]\n");
        let _ = writeln!(s, "k = {}", self.resolved_k());
        let _ = writeln!(s, "w_validity = {}", self.weights.w_validity);
        let _ = writeln!(s, "w_coverage = {}", self.weights.w_coverage);
        let _ = writeln!(s, "w_expressibility = {}", self.weights.w_expressibility);
        if let Some(z) = self.weights.zeta {
            let _ = writeln!(s, "zeta = {z}");
        }
        let _ = writeln!(
            s,
            "cost_aggregation = {}",
            if self.cost_is_median { "median" } else { "mean" }
        );
        s.push_str("\n[output]\n");
        let _ = writeln!(s, "dir = {}", self.output_dir.display());
        s
    }
}
