//! Plain-text `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. List values are comma
//! separated. Relative paths resolve against the config file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::attribution::{Provider, TargetClass};
use crate::error::{Error, Result};
use crate::forest::TrainingParams;
use crate::harness::sweep::{SweepGrid, DEFAULT_BETA_GRID};
use crate::proximity::DEFAULT_MATERIALIZE_CAP;
use crate::selection::{AssignmentMetric, SelectionConfig, StrategyKind, DEFAULT_EPSILON};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub label_column: String,
    pub missing_token: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub mtry: Option<usize>,
    pub strategy: StrategyKind,
    pub beta: f64,
    pub k: usize,
    pub k_per_class: usize,
    pub epsilon: f64,
    pub metric: AssignmentMetric,
    pub attribution_provider: Provider,
    pub attribution_target: TargetClass,
    pub background_size: usize,
    pub attributions_train: Option<PathBuf>,
    pub attributions_test: Option<PathBuf>,
    pub distance_cap: usize,
    pub out_dir: PathBuf,
    pub sweep_betas: Vec<f64>,
    pub sweep_strategies: Vec<StrategyKind>,
    pub sweep_k: Vec<f64>,
    pub sweep_k_per_class: Vec<f64>,
    pub sweep_epsilon: Vec<f64>,
    base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rf = TrainingParams::default();
        PipelineConfig {
            data: None,
            label_column: "label".into(),
            missing_token: String::new(),
            seed: 0,
            test_fraction: 0.25,
            n_trees: rf.n_trees,
            max_depth: rf.max_depth,
            min_leaf: rf.min_leaf,
            mtry: None,
            strategy: StrategyKind::Apete,
            beta: 1.0,
            k: 10,
            k_per_class: 3,
            epsilon: DEFAULT_EPSILON,
            metric: AssignmentMetric::Combined,
            attribution_provider: Provider::Path,
            attribution_target: TargetClass::Predicted,
            background_size: 32,
            attributions_train: None,
            attributions_test: None,
            distance_cap: DEFAULT_MATERIALIZE_CAP,
            out_dir: PathBuf::from("runs"),
            sweep_betas: DEFAULT_BETA_GRID.to_vec(),
            sweep_strategies: vec![StrategyKind::Gkm, StrategyKind::Sma, StrategyKind::Apete],
            sweep_k: vec![5.0, 10.0, 20.0],
            sweep_k_per_class: vec![1.0, 2.0, 4.0],
            sweep_epsilon: vec![0.005, 0.01, 0.05],
            base_dir: PathBuf::new(),
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<V: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn join<V: std::fmt::Display>(values: &[V]) -> String {
    values.iter().map(V::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = PipelineConfig {
            base_dir: base_dir.into(),
            ..Default::default()
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Directory that relative paths resolve against.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    /// Sets one key; used for both file entries and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "data" => self.data = Some(self.resolve(value)),
            "label_column" => self.label_column = value.to_owned(),
            "missing_token" => self.missing_token = value.to_owned(),
            "seed" => self.seed = parse(&key, value)?,
            "test_fraction" => self.test_fraction = parse(&key, value)?,
            "n_trees" => self.n_trees = parse(&key, value)?,
            "max_depth" => self.max_depth = parse(&key, value)?,
            "min_leaf" => self.min_leaf = parse(&key, value)?,
            "mtry" => {
                self.mtry = match value {
                    "" | "auto" => None,
                    v => Some(parse(&key, v)?),
                }
            }
            "strategy" => self.strategy = value.parse()?,
            "beta" => self.beta = parse(&key, value)?,
            "k" => self.k = parse(&key, value)?,
            "k_per_class" => self.k_per_class = parse(&key, value)?,
            "epsilon" => self.epsilon = parse(&key, value)?,
            "metric" => self.metric = value.parse()?,
            "attribution_provider" => self.attribution_provider = value.parse()?,
            "attribution_target" => {
                self.attribution_target = match value {
                    "predicted" => TargetClass::Predicted,
                    v => TargetClass::Fixed(parse(&key, v)?),
                }
            }
            "background_size" => self.background_size = parse(&key, value)?,
            "attributions_train" => self.attributions_train = Some(self.resolve(value)),
            "attributions_test" => self.attributions_test = Some(self.resolve(value)),
            "distance_cap" => self.distance_cap = parse(&key, value)?,
            "out_dir" => self.out_dir = self.resolve(value),
            "sweep_betas" => self.sweep_betas = parse_list(&key, value)?,
            "sweep_strategies" => self.sweep_strategies = parse_list(&key, value)?,
            "sweep_k" => self.sweep_k = parse_list(&key, value)?,
            "sweep_k_per_class" => self.sweep_k_per_class = parse_list(&key, value)?,
            "sweep_epsilon" => self.sweep_epsilon = parse_list(&key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn training_params(&self) -> TrainingParams {
        TrainingParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            mtry: self.mtry,
            seed: self.seed,
        }
    }

    pub fn selection_config(&self) -> Result<SelectionConfig> {
        let hyper = match self.strategy {
            StrategyKind::Gkm => self.k_per_class as f64,
            StrategyKind::Sma => self.k as f64,
            StrategyKind::Apete => self.epsilon,
        };
        let config = SelectionConfig {
            strategy: self.strategy.with_hyperparameter(hyper)?,
            beta: self.beta,
            assignment_metric: self.metric,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            betas: self.sweep_betas.clone(),
            strategies: self
                .sweep_strategies
                .iter()
                .map(|&kind| {
                    let values = match kind {
                        StrategyKind::Gkm => self.sweep_k_per_class.clone(),
                        StrategyKind::Sma => self.sweep_k.clone(),
                        StrategyKind::Apete => self.sweep_epsilon.clone(),
                    };
                    (kind, values)
                })
                .collect(),
        }
    }

    /// Every setting except `out_dir`, one `key = value` per line in a fixed order.
    pub fn canonical_text(&self) -> String {
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("data", opt_path(&self.data));
        line("label_column", self.label_column.clone());
        line("missing_token", self.missing_token.clone());
        line("seed", self.seed.to_string());
        line("test_fraction", self.test_fraction.to_string());
        line("n_trees", self.n_trees.to_string());
        line("max_depth", self.max_depth.to_string());
        line("min_leaf", self.min_leaf.to_string());
        line("mtry", self.mtry.map_or("auto".into(), |m| m.to_string()));
        line("strategy", self.strategy.as_str().into());
        line("beta", self.beta.to_string());
        line("k", self.k.to_string());
        line("k_per_class", self.k_per_class.to_string());
        line("epsilon", self.epsilon.to_string());
        line("metric", self.metric.as_str().into());
        line("attribution_provider", self.attribution_provider.as_str().into());
        line(
            "attribution_target",
            match self.attribution_target {
                TargetClass::Predicted => "predicted".into(),
                TargetClass::Fixed(c) => c.to_string(),
            },
        );
        line("background_size", self.background_size.to_string());
        line("attributions_train", opt_path(&self.attributions_train));
        line("attributions_test", opt_path(&self.attributions_test));
        line("distance_cap", self.distance_cap.to_string());
        line("sweep_betas", join(&self.sweep_betas));
        line(
            "sweep_strategies",
            self.sweep_strategies.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        );
        line("sweep_k", join(&self.sweep_k));
        line("sweep_k_per_class", join(&self.sweep_k_per_class));
        line("sweep_epsilon", join(&self.sweep_epsilon));
        out
    }

    /// First 12 hex digits of the SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// `out_dir/run-<hash>-seed<seed>`
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("run-{}-seed{}", self.hash(), self.seed))
    }
}
