//! TOML pipeline configuration with dotted `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use super::PipelineError;
use crate::augment::{AggregationMode, DEFAULT_CHAR_BUDGET};
use crate::embed::EmbedderConfig;
use crate::gnn::TrainConfig;
use crate::llm::ProviderConfig;
use crate::structure::{PageRankParams, StructureParams};

/// Which modules run. With all three off the pipeline is a plain GCN on the
/// sparsified graph over propagated text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub text_aug: bool,
    pub struct_aug: bool,
    pub struct_learn: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            text_aug: true,
            struct_aug: true,
            struct_learn: true,
        }
    }
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        text_aug: false,
        struct_aug: false,
        struct_learn: false,
    };

    /// "full", "w/o TA", "w/o SA+SL", ...
    pub fn label(&self) -> String {
        let off: Vec<&str> = [
            (self.text_aug, "TA"),
            (self.struct_aug, "SA"),
            (self.struct_learn, "SL"),
        ]
        .into_iter()
        .filter(|(on, _)| !on)
        .map(|(_, name)| name)
        .collect();
        if off.is_empty() {
            "full".into()
        } else {
            format!("w/o {}", off.join("+"))
        }
    }

    /// Turns one module off by its config name.
    pub fn disable(&mut self, module: &str) -> Result<(), PipelineError> {
        match module {
            "text_aug" => self.text_aug = false,
            "struct_aug" => self.struct_aug = false,
            "struct_learn" => self.struct_learn = false,
            other => {
                return Err(PipelineError::Config(format!(
                    "unknown module '{other}' (expected text_aug, struct_aug or struct_learn)"
                )))
            }
        }
        Ok(())
    }
}

/// Final classifier. `auto` picks the dual GNN when structure learning is on
/// and a plain GCN otherwise; `mlp` ignores the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    #[default]
    Auto,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// JSONL dataset file. Exactly one of `dataset` and `synthetic` is set.
    pub dataset: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    /// Name used in report headers and generic prompt descriptions.
    pub name: Option<String>,
    /// Preset name (cora, citeseer, pubmed, wikics, instagram, reddit,
    /// ele-photo) or a literal dataset description for prompts.
    pub description: Option<String>,
    pub sparsity: f64,
    pub seeds: Vec<u64>,
    pub tau1: f64,
    pub tau2: f64,
    pub k_fraction: f64,
    pub aggregation: AggregationMode,
    pub char_budget: usize,
    pub classifier: Classifier,
    pub ablation: Ablation,
    pub llm: ProviderConfig,
    pub embedder: EmbedderConfig,
    /// `train.seed` is replaced by each run seed.
    pub train: TrainConfig,
    pub pagerank: PageRankParams,
    pub output_dir: PathBuf,
    /// Stage artifacts and LLM responses are cached here when set.
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic: None,
            name: None,
            description: None,
            sparsity: 0.0,
            seeds: vec![42, 43, 44, 45, 46],
            tau1: 0.8,
            tau2: 0.5,
            k_fraction: 0.10,
            aggregation: AggregationMode::default(),
            char_budget: DEFAULT_CHAR_BUDGET,
            classifier: Classifier::Auto,
            ablation: Ablation::default(),
            llm: ProviderConfig::default(),
            embedder: EmbedderConfig::default(),
            train: TrainConfig::default(),
            pagerank: PageRankParams::default(),
            output_dir: PathBuf::from("runs/default"),
            cache_dir: None,
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string (`name=cora` rather than `name="cora"`).
fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override '{assignment}' is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(PipelineError::Config(format!("bad override key '{key}'")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("'{part}' in '{key}' is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(value));
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses TOML text, applies overrides and validates. Relative paths are
    /// resolved against `base_dir`.
    pub fn from_toml_str(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self, PipelineError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are relative to the file.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, overrides, base)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &mut self.dataset {
            resolve(base, p);
        }
        resolve(base, &mut self.output_dir);
        for p in [&mut self.cache_dir, &mut self.llm.cache_dir, &mut self.llm.audit_log]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => return err("set either dataset or [synthetic], not both".into()),
            (None, None) => return err("no dataset: set dataset = \"file.jsonl\" or a [synthetic] table".into()),
            (None, Some(spec)) => spec.validate().map_err(|e| PipelineError::Config(e.to_string()))?,
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return err(format!("sparsity {} outside [0, 1]", self.sparsity));
        }
        if self.seeds.is_empty() {
            return err("seeds must not be empty".into());
        }
        if !(self.tau2 >= 0.0 && self.tau2 <= 1.0) {
            return err(format!("tau2 {} outside [0, 1]", self.tau2));
        }
        if !self.tau1.is_finite() {
            return err(format!("tau1 {} is not finite", self.tau1));
        }
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return err(format!("k_fraction {} outside (0, 1]", self.k_fraction));
        }
        if !(self.pagerank.damping > 0.0 && self.pagerank.damping < 1.0) {
            return err(format!("pagerank damping {} outside (0, 1)", self.pagerank.damping));
        }
        if self.char_budget == 0 {
            return err("char_budget must be positive".into());
        }
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.llm.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn structure_params(&self) -> StructureParams {
        StructureParams {
            tau1: self.tau1,
            tau2: self.tau2,
            k_fraction: self.k_fraction,
            pagerank: self.pagerank,
        }
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.dataset {
            Some(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
            None => "synthetic".into(),
        }
    }

    /// LLM responses go to `llm.cache_dir`, or `cache_dir/llm` when only the
    /// pipeline cache is configured.
    pub fn provider_config(&self) -> ProviderConfig {
        let mut p = self.llm.clone();
        if p.cache_dir.is_none() {
            p.cache_dir = self.cache_dir.as_ref().map(|d| d.join("llm"));
        }
        p
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl FromStr for PipelineConfig {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_toml_str(s, &[], Path::new(""))
    }
}
