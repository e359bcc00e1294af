//! Run configuration: a flat TOML file with documented defaults for every
//! key, validated on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::{CandidateConfig, KeywordThreshold};
use crate::error::ConvQueryError;
use crate::eval::RecallMode;
use crate::scorer::{FinetuneHyper, PretrainHyper};
use crate::search::CacheMode;
use crate::supervision::Strategy;

fn default_extractor() -> String {
    "both".into()
}
fn default_strategy() -> String {
    "bm25++".into()
}
fn default_threshold_percentile() -> f64 {
    75.0
}
fn default_max_span() -> usize {
    4
}
fn default_bm25_k1() -> f64 {
    crate::supervision::DEFAULT_K1
}
fn default_bm25_b() -> f64 {
    crate::supervision::DEFAULT_B
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_cache_mode() -> String {
    "strict".into()
}
fn default_stats_mode() -> String {
    "per_turn".into()
}
fn default_pretrain_lr() -> f64 {
    0.1
}
fn default_pretrain_epochs() -> usize {
    200
}
fn default_finetune_lr() -> f64 {
    0.01
}
fn default_finetune_epochs() -> usize {
    5
}
fn default_breakdown_cap() -> usize {
    9
}
fn default_recall_mode() -> String {
    "ranked_queries".into()
}
fn default_holdout() -> usize {
    0
}

/// All knobs of a pipeline run. Every field has a default; see the keys of
/// the same name in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input dataset (JSON lines, one dialogue per line).
    pub dataset: PathBuf,
    /// Title lexicon for dictionary extraction, one title per line.
    #[serde(default)]
    pub title_lexicon: Option<PathBuf>,
    /// Function-word list; the bundled list is used when absent.
    #[serde(default)]
    pub function_words: Option<PathBuf>,
    /// Fixture article store (JSON lines of title/summary); when present
    /// the fixture engine backs cache building instead of the live client.
    #[serde(default)]
    pub fixture_articles: Option<PathBuf>,

    /// "dictionary", "metric" or "both".
    #[serde(default = "default_extractor")]
    pub extractor: String,
    /// Last k turns to extract from; 0 means all turns.
    #[serde(default)]
    pub window_k: usize,
    #[serde(default = "default_threshold_percentile")]
    pub threshold_percentile: f64,
    /// Absolute TF-IDF keyword threshold; overrides the percentile if set.
    #[serde(default)]
    pub threshold_absolute: Option<f64>,
    #[serde(default = "default_max_span")]
    pub max_span: usize,

    /// Supervision strategy: random, tf-idf, bm25-qu, bm25 or bm25++.
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_bm25_k1")]
    pub bm25_k1: f64,
    #[serde(default = "default_bm25_b")]
    pub bm25_b: f64,
    /// "per_turn" scores against the turn's retrieved summaries,
    /// "global" against statistics over the whole cache.
    #[serde(default = "default_stats_mode")]
    pub stats_mode: String,

    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    /// "strict" or "passthrough".
    #[serde(default = "default_cache_mode")]
    pub cache_mode: String,

    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pretrain_lr")]
    pub pretrain_lr: f64,
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_finetune_lr")]
    pub finetune_lr: f64,
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
    /// Number of trailing dialogues held out from training for evaluation;
    /// 0 evaluates on the full set.
    #[serde(default = "default_holdout")]
    pub holdout: usize,

    /// "ranked_queries" or "pooled_articles".
    #[serde(default = "default_recall_mode")]
    pub recall_mode: String,
    #[serde(default = "default_breakdown_cap")]
    pub breakdown_cap: usize,

    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("dataset = \"dataset.jsonl\"").expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConvQueryError> {
        let contents = std::fs::read_to_string(path).map_err(|source| ConvQueryError::Io {
            context: format!("reading config {}", path.display()),
            source,
        })?;
        let config: RunConfig =
            toml::from_str(&contents).map_err(|e| ConvQueryError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConvQueryError> {
        if !matches!(self.extractor.as_str(), "dictionary" | "metric" | "both") {
            return Err(ConvQueryError::Config(format!(
                "extractor must be dictionary, metric or both, got {:?}",
                self.extractor
            )));
        }
        Strategy::parse(&self.strategy, self.seed)?;
        self.cache_mode_parsed()?;
        self.recall_mode_parsed()?;
        if !matches!(self.stats_mode.as_str(), "per_turn" | "global") {
            return Err(ConvQueryError::Config(format!(
                "stats_mode must be per_turn or global, got {:?}",
                self.stats_mode
            )));
        }
        if self.bm25_k1 <= 0.0 || !(0.0..=1.0).contains(&self.bm25_b) {
            return Err(ConvQueryError::Config(
                "bm25_k1 must be > 0 and bm25_b within [0, 1]".to_string(),
            ));
        }
        Ok(())
    }

    pub fn candidate_config(&self) -> CandidateConfig {
        CandidateConfig {
            use_dictionary: self.extractor != "metric",
            use_metric: self.extractor != "dictionary",
            window_k: (self.window_k > 0).then_some(self.window_k),
            threshold: match self.threshold_absolute {
                Some(v) => KeywordThreshold::Absolute(v),
                None => KeywordThreshold::Percentile(self.threshold_percentile),
            },
            max_span: self.max_span,
        }
    }

    pub fn strategy_parsed(&self) -> Strategy {
        Strategy::parse(&self.strategy, self.seed).expect("validated on load")
    }

    pub fn cache_mode_parsed(&self) -> Result<CacheMode, ConvQueryError> {
        match self.cache_mode.as_str() {
            "strict" => Ok(CacheMode::Strict),
            "passthrough" => Ok(CacheMode::Passthrough),
            other => Err(ConvQueryError::Config(format!(
                "cache_mode must be strict or passthrough, got {other:?}"
            ))),
        }
    }

    pub fn recall_mode_parsed(&self) -> Result<RecallMode, ConvQueryError> {
        match self.recall_mode.as_str() {
            "ranked_queries" => Ok(RecallMode::RankedQueries),
            "pooled_articles" => Ok(RecallMode::PooledArticles),
            other => Err(ConvQueryError::Config(format!(
                "recall_mode must be ranked_queries or pooled_articles, got {other:?}"
            ))),
        }
    }

    pub fn pretrain_hyper(&self) -> PretrainHyper {
        PretrainHyper {
            lr: self.pretrain_lr,
            epochs: self.pretrain_epochs,
            seed: self.seed,
        }
    }

    pub fn finetune_hyper(&self) -> FinetuneHyper {
        FinetuneHyper {
            lr: self.finetune_lr,
            epochs: self.finetune_epochs,
            seed: self.seed,
        }
    }

    /// Hash of the configuration plus the dataset bytes; stage outputs
    /// embed this so stale artifacts are rejected.
    pub fn content_hash(&self, dataset_bytes: &[u8]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(toml::to_string(self).expect("config serializes").as_bytes());
        hasher.update(dataset_bytes);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
