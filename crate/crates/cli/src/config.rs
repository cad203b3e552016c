//! TOML pipeline configuration. Every field has a default, so an absent
//! file or section means "use the published settings".

use std::path::{Path, PathBuf};

use counterkit::genstrat::{self, GenerationConfig, MessagePlacement};
use counterkit::matcher;
use counterkit::selection;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub llm: LlmConfig,
    pub embeddings: EmbeddingConfig,
    pub factcheck: FactCheckConfig,
    pub thresholds: Thresholds,
    pub seeds: Seeds,
    pub workbench: WorkbenchSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub signatories: Option<PathBuf>,
    pub ngo_allowlist: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// `stub:` for the canned provider, otherwise an OpenAI-style API root.
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub placement: MessagePlacement,
    pub concurrency: usize,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "stub:".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model_id: genstrat::DEFAULT_MODEL_ID.into(),
            max_tokens: genstrat::DEFAULT_MAX_TOKENS,
            temperature: genstrat::DEFAULT_TEMPERATURE,
            placement: MessagePlacement::default(),
            concurrency: genstrat::DEFAULT_CONCURRENCY,
            timeout_secs: 60,
        }
    }
}

impl LlmConfig {
    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            model_id: self.model_id.clone(),
            placement: self.placement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// `stub:` for the deterministic hashing provider, otherwise the base URL
    /// of a service implementing `POST /embed`.
    pub provider_url: String,
    pub model_id: String,
    pub batch_size: usize,
    /// Fixed text→vector table for the stub provider.
    pub stub_table: Option<PathBuf>,
    pub stub_dim: usize,
    pub stub_seed: u64,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider_url: "stub:".into(),
            model_id: matcher::DEFAULT_MODEL_ID.into(),
            batch_size: matcher::DEFAULT_BATCH_SIZE,
            stub_table: None,
            stub_dim: 64,
            stub_seed: 0,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactCheckConfig {
    pub base_url: String,
    pub language_code: String,
    pub api_key_env: String,
    pub limit: usize,
    pub threads: usize,
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for FactCheckConfig {
    fn default() -> Self {
        FactCheckConfig {
            base_url: counterkit::ingest::DEFAULT_FACTCHECK_URL.into(),
            language_code: "en".into(),
            api_key_env: "FACTCHECK_API_KEY".into(),
            limit: counterkit::ingest::MAX_QUERY_LIMIT,
            threads: counterkit::ingest::MAX_FETCH_THREADS,
            max_retries: 4,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Strict lower bound on claim–myth cosine similarity.
    pub similarity: f64,
    /// Minimum HTER for a pair to enter the preference survey.
    pub hter_select: f64,
    /// Edit-effort rows whose mean HTER reaches this are marked in text output.
    pub hter_mod: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { similarity: matcher::DEFAULT_THRESHOLD, hter_select: selection::DEFAULT_MIN_HTER, hter_mod: 0.4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub repetition_rate: u64,
    pub selection: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchSettings {
    pub port: u16,
    pub annotators: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub lease_hours: i64,
}

impl Default for WorkbenchSettings {
    fn default() -> Self {
        WorkbenchSettings {
            port: 8080,
            annotators: None,
            static_dir: None,
            token_env: None,
            lease_hours: counterkit::workbench::DEFAULT_LEASE_HOURS,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks and existence of every configured input path. The corpus
    /// path is checked per command since ingest may create it.
    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.thresholds;
        if !(-1.0..=1.0).contains(&t.similarity) {
            return Err(CliError::Config(format!("thresholds.similarity {} outside [-1, 1]", t.similarity)));
        }
        for (name, v) in [("hter_select", t.hter_select), ("hter_mod", t.hter_mod)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Config(format!("thresholds.{name} must be a non-negative number")));
            }
        }
        if self.embeddings.batch_size == 0 {
            return Err(CliError::Config("embeddings.batch_size must be > 0".into()));
        }
        if self.llm.concurrency == 0 {
            return Err(CliError::Config("llm.concurrency must be > 0".into()));
        }
        self.llm.generation().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.workbench.lease_hours <= 0 {
            return Err(CliError::Config("workbench.lease_hours must be > 0".into()));
        }
        let p = &self.paths;
        for (name, path) in [
            ("paths.parses", &p.parses),
            ("paths.keywords", &p.keywords),
            ("paths.signatories", &p.signatories),
            ("paths.ngo_allowlist", &p.ngo_allowlist),
            ("embeddings.stub_table", &self.embeddings.stub_table),
            ("workbench.annotators", &self.workbench.annotators),
            ("workbench.static_dir", &self.workbench.static_dir),
        ] {
            if let Some(path) = path {
                require_exists(name, path)?;
            }
        }
        Ok(())
    }
}

pub fn require_exists(what: &str, path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what}: {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.thresholds.similarity, 0.4);
        assert_eq!(cfg.thresholds.hter_select, 0.39);
        assert_eq!(cfg.llm.model_id, "gpt-4o-mini-2024-07-18");
        assert_eq!(cfg.embeddings.model_id, "all-mpnet-base-v2");
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cfg: PipelineConfig = toml::from_str("[thresholds]\nsimilarity = 1.5\n").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg: PipelineConfig = toml::from_str("[paths]\nparses = \"/no/such/dir\"\n").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("paths.parses")));
        assert!(toml::from_str::<PipelineConfig>("[llm]\nmodle_id = \"x\"\n").is_err());
    }

    #[test]
    fn placement_is_configurable() {
        let cfg: PipelineConfig = toml::from_str("[llm]\nplacement = \"split\"\ntemperature = 0.0\n").unwrap();
        assert_eq!(cfg.llm.generation().placement, MessagePlacement::Split);
        assert_eq!(cfg.llm.generation().temperature, 0.0);
    }
}
