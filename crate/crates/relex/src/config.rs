//! Run configuration: one TOML (or JSON) document fully determines a
//! run — dataset, black box, explainers, evaluation, seed, output.
//!
//! Every section beyond `dataset` and `blackbox` is optional and every
//! field has a default, so a minimal config is a handful of lines.
//! Unknown keys are rejected everywhere: a typo should fail loudly, not
//! silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::AnchorOptions;
use crate::error::{Error, Result};
use crate::eval::{BenchmarkSettings, MethodKind};
use crate::explain::RelexOptions;
use crate::formats::DEFAULT_DEGREE_CAP;
use crate::synth::{BenchmarkKind, SynthConfig};

/// What the dataset section describes: a synthetic benchmark or a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    TreeGrid,
    TreeBa,
    TreeGridBa,
    File,
}

impl DatasetKind {
    pub fn benchmark_kind(&self) -> Option<BenchmarkKind> {
        match self {
            DatasetKind::TreeGrid => Some(BenchmarkKind::TreeGrid),
            DatasetKind::TreeBa => Some(BenchmarkKind::TreeBa),
            DatasetKind::TreeGridBa => Some(BenchmarkKind::TreeGridBa),
            DatasetKind::File => None,
        }
    }
}

/// Synthetic generator overrides. Fields left out fall back to the
/// benchmark defaults for the configured kind (noise in particular is
/// recomputed as 10% of the base edge count after size overrides).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motif_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_side: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ba_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ba_attach: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_edges: Option<usize>,
    /// Generator seed; defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SynthSection {
    pub fn resolve(&self, kind: BenchmarkKind, run_seed: u64) -> SynthConfig {
        let mut config = SynthConfig::defaults(kind);
        config.seed = self.seed.unwrap_or(run_seed);
        if let Some(v) = self.tree_height {
            config.tree_height = v;
        }
        if let Some(v) = self.motif_count {
            config.motif_count = v;
        }
        if let Some(v) = self.grid_side {
            config.grid_side = v;
        }
        if let Some(v) = self.ba_size {
            config.ba_size = v;
        }
        if let Some(v) = self.ba_attach {
            config.ba_attach = v;
        }
        config.noise_edges = self
            .noise_edges
            .unwrap_or_else(|| config.base_edge_count(kind) / 10);
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Graph document for `kind = "file"`: `.json`, or a TSV edge list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Feature sidecar for TSV inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<PathBuf>,
    /// Label sidecar for TSV inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    /// Degree cap for default one-hot degree features of file inputs.
    #[serde(default = "default_degree_cap")]
    pub degree_feature_cap: usize,
    #[serde(default)]
    pub synth: SynthSection,
}

fn default_degree_cap() -> usize {
    DEFAULT_DEGREE_CAP
}

/// Which black-box family to train or load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlackboxKind {
    Gcn,
    Rules,
}

impl BlackboxKind {
    pub fn name(&self) -> &'static str {
        match self {
            BlackboxKind::Gcn => "gcn",
            BlackboxKind::Rules => "rules",
        }
    }
}

/// Rule-model training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesSection {
    /// Fraction of nodes whose labels the model observes.
    pub seed_fraction: f64,
    /// Per-hop walk weights, hop 1 first.
    pub rule_weights: Vec<f64>,
    pub smoothing: f64,
}

impl Default for RulesSection {
    fn default() -> Self {
        RulesSection {
            seed_fraction: 0.3,
            rule_weights: vec![1.0, 0.5, 0.25],
            smoothing: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackboxConfig {
    pub kind: BlackboxKind,
    /// Load a trained model from here instead of training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub gcn: crate::blackbox::GcnHyper,
    #[serde(default)]
    pub rules: RulesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub methods: Vec<MethodKind>,
    /// Number of diverse masks per node (T).
    pub diverse: usize,
    pub relex: RelexOptions,
    pub anchors: AnchorOptions,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            methods: MethodKind::all(),
            diverse: 1,
            relex: RelexOptions::default(),
            anchors: AnchorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Motif nodes are uniformly subsampled down to this many.
    pub node_cap: usize,
    /// Perturbation draws per node for infidelity.
    pub infidelity_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            node_cap: 100,
            infidelity_samples: 100,
        }
    }
}

/// The whole run, as loaded from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed; may be omitted and supplied by the CLI or RELEX_SEED.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub blackbox: BlackboxConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.explain.methods.is_empty() {
            return Err(Error::InvalidConfig("explain.methods is empty".into()));
        }
        if self.explain.diverse == 0 {
            return Err(Error::InvalidConfig("explain.diverse must be >= 1".into()));
        }
        self.explain.relex.validate()?;
        self.explain.anchors.validate()?;
        if self.eval.node_cap == 0 {
            return Err(Error::InvalidConfig("eval.node_cap must be >= 1".into()));
        }
        if self.eval.infidelity_samples == 0 {
            return Err(Error::InvalidConfig(
                "eval.infidelity_samples must be >= 1".into(),
            ));
        }
        let rules = &self.blackbox.rules;
        if !(rules.seed_fraction > 0.0 && rules.seed_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "blackbox.rules.seed_fraction {} outside (0, 1]",
                rules.seed_fraction
            )));
        }
        if rules.rule_weights.is_empty()
            || rules.rule_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::InvalidConfig(
                "blackbox.rules.rule_weights must be nonempty, finite, and >= 0".into(),
            ));
        }
        if !(rules.smoothing.is_finite() && rules.smoothing > 0.0) {
            return Err(Error::InvalidConfig(
                "blackbox.rules.smoothing must be positive".into(),
            ));
        }
        match self.dataset.kind {
            DatasetKind::File => {
                if self.dataset.path.is_none() {
                    return Err(Error::InvalidConfig(
                        "dataset.kind = \"file\" requires dataset.path".into(),
                    ));
                }
            }
            _ => {
                if self.dataset.path.is_some() {
                    return Err(Error::InvalidConfig(
                        "dataset.path is only meaningful with dataset.kind = \"file\"".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The effective seed: an explicit value wins, otherwise `fallback`
    /// (CLI flag or the RELEX_SEED environment variable, resolved by
    /// the caller).
    pub fn effective_seed(&self, fallback: Option<u64>) -> u64 {
        self.seed.or(fallback).unwrap_or(0)
    }

    /// Resolved generator parameters; errors for file datasets.
    pub fn synth_config(&self, seed: u64) -> Result<(BenchmarkKind, SynthConfig)> {
        let kind = self.dataset.kind.benchmark_kind().ok_or_else(|| {
            Error::InvalidConfig("dataset.kind = \"file\" has no generator".into())
        })?;
        Ok((kind, self.dataset.synth.resolve(kind, seed)))
    }

    /// Maps the explain and eval sections onto benchmark settings.
    pub fn benchmark_settings(&self, seed: u64) -> BenchmarkSettings {
        let mut relex = self.explain.relex.clone();
        relex.seed = seed;
        BenchmarkSettings {
            methods: self.explain.methods.clone(),
            hops: relex.hops,
            node_cap: self.eval.node_cap,
            infidelity_samples: self.eval.infidelity_samples,
            relex,
            anchors: self.explain.anchors.clone(),
            seed,
        }
    }

    /// Rebases every relative path in the config onto `base` (the
    /// config file's directory), so a config works regardless of the
    /// invocation directory.
    pub fn rebase_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        rebase(&mut self.output_dir);
        if let Some(p) = self.dataset.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = self.dataset.features_path.as_mut() {
            rebase(p);
        }
        if let Some(p) = self.dataset.labels_path.as_mut() {
            rebase(p);
        }
        if let Some(p) = self.blackbox.model_path.as_mut() {
            rebase(p);
        }
    }

    /// Input paths that must exist before a run can start.
    pub fn referenced_inputs(&self) -> Vec<&Path> {
        [
            self.dataset.path.as_deref(),
            self.dataset.features_path.as_deref(),
            self.dataset.labels_path.as_deref(),
            self.blackbox.model_path.as_deref(),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    /// The effective configuration, rendered as TOML for echoing into
    /// the output directory.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parses a config document without touching the filesystem.
pub fn parse_run_config(text: &str, format: ConfigFormat) -> Result<RunConfig> {
    let config: RunConfig = match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        ConfigFormat::Json => serde_json::from_str(text)?,
    };
    config.validate()?;
    Ok(config)
}

/// Loads a config file (TOML unless the extension is `.json`), rebases
/// its relative paths onto the file's directory, and checks that every
/// referenced input exists.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ConfigFormat::Json,
        _ => ConfigFormat::Toml,
    };
    let mut config = parse_run_config(&text, format)?;
    if let Some(base) = path.parent() {
        config.rebase_paths(base);
    }
    for input in config.referenced_inputs() {
        if !input.exists() {
            return Err(Error::InvalidConfig(format!(
                "referenced path {} does not exist",
                input.display()
            )));
        }
    }
    Ok(config)
}
