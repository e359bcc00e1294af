//! Stage orchestration: extract, build-cache, label, pretrain, finetune,
//! evaluate. Every stage output embeds the hash of the configuration and
//! dataset that produced it; a stage is skipped when its output already
//! carries the current hash, and stale artifacts are rejected when read.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::candidates::{candidate_pool, CandidateQuery, Dialogue, TitleLexicon};
use crate::error::ConvQueryError;
use crate::eval::{
    ceiling_recall, compare_strategies, evaluate_model, per_turn_breakdown, recall_at_mode,
    EvalContext, EvalRecord, StrategyRow,
};
use crate::pipeline::config::RunConfig;
use crate::pipeline::dataset::{load_dataset, DatasetRecord};
use crate::scorer::{
    featurize, finetune_reinforce, pretrain, LabeledTurn, RewardTurn, ScorerModel,
};
use crate::search::{
    build_cache, ArticleCache, CacheMode, CacheReport, CachedEngine, FixtureEngine,
    LiveWikiClient, LiveWikiConfig, SearchEngine,
};
use crate::supervision::{
    pseudo_label, score_candidates_by_strategy, summary_corpus_stats, Article, RetrievalResult,
};
use crate::text::{tokenize, CorpusStats, FunctionWords, TokenSeq};

/// Everything loaded once per run.
pub struct Pipeline {
    pub config: RunConfig,
    pub records: Vec<DatasetRecord>,
    pub dialogues: Vec<Dialogue>,
    pub lexicon: TitleLexicon,
    pub function_words: FunctionWords,
    pub global_stats: CorpusStats,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Artifact<T> {
    config_hash: String,
    data: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractOutput {
    pub pools: Vec<Vec<CandidateQuery>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRecord {
    pub turn_id: usize,
    pub label: usize,
    pub surface: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelOutput {
    /// One entry per dialogue; `None` where the candidate pool was empty.
    pub labels: Vec<Option<LabelRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutput {
    pub model: ScorerModel,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutput {
    pub row: StrategyRow,
    pub ceiling: f64,
    pub breakdown: Vec<(usize, f64, usize)>,
}

/// Artifact summary returned by [`run_pipeline`].
#[derive(Debug)]
pub struct RunArtifacts {
    pub cache_report: CacheReport,
    pub labels: LabelOutput,
    pub model: ScorerModel,
    pub eval: EvalOutput,
}

impl Pipeline {
    pub fn load(config: RunConfig) -> Result<Self, ConvQueryError> {
        config.validate()?;
        let dataset_bytes =
            std::fs::read(&config.dataset).map_err(|source| ConvQueryError::Io {
                context: format!("reading dataset {}", config.dataset.display()),
                source,
            })?;
        let config_hash = config.content_hash(&dataset_bytes);
        let records = load_dataset(&config.dataset)?;
        let dialogues: Vec<Dialogue> = records.iter().map(|r| r.to_dialogue()).collect();

        let lexicon = match &config.title_lexicon {
            Some(path) => TitleLexicon::load(path)?,
            // Without an explicit lexicon, gold titles seed the dictionary.
            None => TitleLexicon::new(records.iter().flat_map(|r| r.gold_titles.iter())),
        };
        let function_words = match &config.function_words {
            Some(path) => FunctionWords::load(path)?,
            None => FunctionWords::bundled(),
        };
        let docs: Vec<TokenSeq> = dialogues
            .iter()
            .flat_map(|d| d.turns.iter().map(|t| t.tokens.clone()))
            .collect();
        let global_stats = CorpusStats::build(&docs)?;

        std::fs::create_dir_all(&config.out_dir).map_err(|source| ConvQueryError::Io {
            context: format!("creating out dir {}", config.out_dir.display()),
            source,
        })?;

        Ok(Pipeline {
            config,
            records,
            dialogues,
            lexicon,
            function_words,
            global_stats,
            config_hash,
        })
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn write_artifact<T: Serialize>(&self, name: &str, data: &T) -> Result<(), ConvQueryError> {
        let artifact = Artifact {
            config_hash: self.config_hash.clone(),
            data,
        };
        let json = serde_json::to_string_pretty(&artifact).expect("artifact serializes");
        std::fs::write(self.out_path(name), json).map_err(|source| ConvQueryError::Io {
            context: format!("writing artifact {name}"),
            source,
        })
    }

    /// Read an artifact written by an earlier stage; a hash mismatch is an
    /// error, a missing file is `None`.
    fn read_artifact<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>, ConvQueryError> {
        let path = self.out_path(name);
        if !path.exists() {
            return Ok(None);
        }
        let contents = std::fs::read_to_string(&path).map_err(|source| ConvQueryError::Io {
            context: format!("reading artifact {name}"),
            source,
        })?;
        let artifact: Artifact<T> =
            serde_json::from_str(&contents).map_err(|e| ConvQueryError::Parse {
                line: 0,
                message: format!("artifact {name}: {e}"),
            })?;
        if artifact.config_hash != self.config_hash {
            return Err(ConvQueryError::Stage {
                stage: name.to_string(),
                cause: "artifact was produced by a different config or dataset".to_string(),
            });
        }
        Ok(Some(artifact.data))
    }

    /// `Some` if a fresh artifact already exists (resumable skip).
    fn fresh<T: DeserializeOwned>(&self, name: &str) -> Option<T> {
        self.read_artifact(name).ok().flatten()
    }

    /// The engine used to populate the cache.
    pub fn fetch_engine(&self) -> Result<Box<dyn SearchEngine>, ConvQueryError> {
        match &self.config.fixture_articles {
            Some(path) => Ok(Box::new(load_fixture_engine(path)?)),
            None => Ok(Box::new(LiveWikiClient::new(LiveWikiConfig::default())?)),
        }
    }

    /// The engine used by label/evaluate: cache-backed, strict or
    /// passthrough per config.
    pub fn query_engine(&self) -> Result<CachedEngine, ConvQueryError> {
        let cache = ArticleCache::open(&self.config.cache_dir)?;
        match self.config.cache_mode_parsed()? {
            CacheMode::Strict => Ok(CachedEngine::strict(cache)),
            CacheMode::Passthrough => Ok(CachedEngine::passthrough(cache, self.fetch_engine()?)),
        }
    }

    // ---- stages -----------------------------------------------------------

    pub fn extract(&self) -> Result<ExtractOutput, ConvQueryError> {
        if let Some(out) = self.fresh::<ExtractOutput>("extract.json") {
            return Ok(out);
        }
        let candidate_config = self.config.candidate_config();
        let pools = self
            .dialogues
            .iter()
            .map(|d| {
                candidate_pool(
                    d,
                    &self.lexicon,
                    &self.global_stats,
                    &self.function_words,
                    &candidate_config,
                )
            })
            .collect();
        let out = ExtractOutput { pools };
        self.write_artifact("extract.json", &out)?;
        Ok(out)
    }

    pub fn build_cache_stage(&self, pools: &ExtractOutput) -> Result<CacheReport, ConvQueryError> {
        let queries: Vec<String> = pools
            .pools
            .iter()
            .flatten()
            .map(|c| c.surface.clone())
            .collect();
        let cache = ArticleCache::open(&self.config.cache_dir)?;
        let engine = self.fetch_engine()?;
        let report = build_cache(engine.as_ref(), &queries, &cache, None)?;
        self.write_artifact("cache_report.json", &report)?;
        Ok(report)
    }

    fn retrievals_for(
        &self,
        pool: &[CandidateQuery],
        engine: &dyn SearchEngine,
    ) -> Result<Vec<Option<RetrievalResult>>, ConvQueryError> {
        pool.iter()
            .map(|c| {
                crate::search::search(engine, &c.surface)
                    .map(|articles| Some(RetrievalResult::new(c.surface.clone(), articles)))
            })
            .collect()
    }

    /// Supervision corpus statistics for one turn's retrievals.
    fn supervision_stats(
        &self,
        retrievals: &[Option<RetrievalResult>],
    ) -> Result<CorpusStats, ConvQueryError> {
        if self.config.stats_mode == "global" {
            let cache = ArticleCache::open(&self.config.cache_dir)?;
            let docs: Vec<TokenSeq> = cache
                .entries()?
                .iter()
                .flat_map(|e| e.articles.iter().map(|a| tokenize(&a.summary)))
                .filter(|d| !d.is_empty())
                .collect();
            return CorpusStats::build(&docs).or_else(|_| Ok(self.global_stats.clone()));
        }
        summary_corpus_stats(retrievals).or_else(|_| Ok(self.global_stats.clone()))
    }

    pub fn label(&self, pools: &ExtractOutput) -> Result<LabelOutput, ConvQueryError> {
        if let Some(out) = self.fresh::<LabelOutput>("labels.json") {
            return Ok(out);
        }
        let engine = self.query_engine()?;
        let strategy = self.config.strategy_parsed();
        let mut labels = Vec::with_capacity(self.dialogues.len());
        for (turn_id, (dialogue, pool)) in
            self.dialogues.iter().zip(&pools.pools).enumerate()
        {
            if pool.is_empty() {
                labels.push(None);
                continue;
            }
            let retrievals = self.retrievals_for(pool, &engine)?;
            // Summary-corpus statistics only make sense for strategies that
            // score against the retrieved summaries.
            let stats = if strategy.needs_retrieval() {
                self.supervision_stats(&retrievals)?
            } else {
                self.global_stats.clone()
            };
            let scores = score_candidates_by_strategy(
                pool,
                &retrievals,
                dialogue,
                &stats,
                strategy,
                &self.function_words,
            )?;
            let label = pseudo_label(&scores)?;
            labels.push(Some(LabelRecord {
                turn_id,
                label,
                surface: pool[label].surface.clone(),
                scores: scores.iter().map(|s| s.score).collect(),
            }));
        }
        let out = LabelOutput { labels };
        self.write_artifact("labels.json", &out)?;
        Ok(out)
    }

    fn split_point(&self) -> usize {
        if self.config.holdout == 0 || self.config.holdout >= self.dialogues.len() {
            self.dialogues.len()
        } else {
            self.dialogues.len() - self.config.holdout
        }
    }

    fn labeled_turns(
        &self,
        pools: &ExtractOutput,
        labels: &LabelOutput,
        range: std::ops::Range<usize>,
    ) -> Vec<LabeledTurn> {
        range
            .filter_map(|i| {
                let label = labels.labels[i].as_ref()?;
                let pool = &pools.pools[i];
                let features = pool
                    .iter()
                    .map(|c| featurize(c, &self.dialogues[i], &self.global_stats))
                    .collect();
                Some(LabeledTurn {
                    turn_id: i,
                    features,
                    label: label.label,
                })
            })
            .collect()
    }

    fn reward_turns(
        &self,
        pools: &ExtractOutput,
        labels: &LabelOutput,
        range: std::ops::Range<usize>,
    ) -> Vec<RewardTurn> {
        range
            .filter_map(|i| {
                let label = labels.labels[i].as_ref()?;
                let pool = &pools.pools[i];
                let features = pool
                    .iter()
                    .map(|c| featurize(c, &self.dialogues[i], &self.global_stats))
                    .collect();
                Some(RewardTurn {
                    turn_id: i,
                    features,
                    rewards: label.scores.clone(),
                })
            })
            .collect()
    }

    pub fn pretrain_stage(
        &self,
        pools: &ExtractOutput,
        labels: &LabelOutput,
    ) -> Result<TrainOutput, ConvQueryError> {
        if let Some(out) = self.fresh::<TrainOutput>("pretrain.json") {
            return Ok(out);
        }
        let train = self.labeled_turns(pools, labels, 0..self.split_point());
        let (model, trace) = pretrain(&ScorerModel::zeros(), &train, self.config.pretrain_hyper())?;
        let out = TrainOutput { model, trace };
        self.write_artifact("pretrain.json", &out)?;
        out.model.save(&self.out_path("model_pretrain.json"))?;
        Ok(out)
    }

    pub fn finetune_stage(
        &self,
        pools: &ExtractOutput,
        labels: &LabelOutput,
        pretrained: &ScorerModel,
    ) -> Result<TrainOutput, ConvQueryError> {
        if let Some(out) = self.fresh::<TrainOutput>("finetune.json") {
            return Ok(out);
        }
        let split = self.split_point();
        let train = self.reward_turns(pools, labels, 0..split);
        let held_out = if split < self.dialogues.len() {
            self.reward_turns(pools, labels, split..self.dialogues.len())
        } else {
            train.clone()
        };
        let (model, trace) =
            finetune_reinforce(pretrained, &train, &held_out, self.config.finetune_hyper())?;
        let out = TrainOutput { model, trace };
        self.write_artifact("finetune.json", &out)?;
        out.model.save(&self.out_path("model.json"))?;
        Ok(out)
    }

    pub fn evaluate_stage(&self, model: &ScorerModel) -> Result<EvalOutput, ConvQueryError> {
        if let Some(out) = self.fresh::<EvalOutput>("eval.json") {
            return Ok(out);
        }
        let engine = self.query_engine()?;
        let candidate_config = self.config.candidate_config();
        let ctx = EvalContext {
            lexicon: &self.lexicon,
            global_stats: &self.global_stats,
            function_words: &self.function_words,
            candidate_config: &candidate_config,
        };
        let split = self.split_point();
        let dialogues = if split < self.dialogues.len() {
            &self.dialogues[split..]
        } else {
            &self.dialogues[..]
        };
        let records = evaluate_model(dialogues, &engine, &ctx, model)?;
        let out = self.summarize_records("scorer", &records)?;
        self.write_artifact("eval.json", &out)?;
        self.write_reports(&[out.row.clone()], &out)?;
        Ok(out)
    }

    pub fn summarize_records(
        &self,
        name: &str,
        records: &[EvalRecord],
    ) -> Result<EvalOutput, ConvQueryError> {
        let mode = self.config.recall_mode_parsed()?;
        Ok(EvalOutput {
            row: StrategyRow {
                strategy: name.to_string(),
                r_at_1: recall_at_mode(records, 1, mode)?,
                r_at_3: recall_at_mode(records, 3, mode)?,
                r_at_5: recall_at_mode(records, 5, mode)?,
            },
            ceiling: ceiling_recall(records)?,
            breakdown: per_turn_breakdown(records, self.config.breakdown_cap)?,
        })
    }

    fn write_reports(&self, rows: &[StrategyRow], eval: &EvalOutput) -> Result<(), ConvQueryError> {
        let mut table = crate::eval::format_table(rows);
        table.push_str(&format!("ceiling (R@M) {:>8.4}\n", eval.ceiling));
        table.push_str("\nper-turn R@1\n");
        for (bucket, r1, n) in &eval.breakdown {
            let label = if *bucket >= self.config.breakdown_cap {
                format!(">={bucket}")
            } else {
                bucket.to_string()
            };
            table.push_str(&format!("  turns {label:>4}: {r1:.4} (n={n})\n"));
        }
        write_text(&self.out_path("report.txt"), &table)?;
        write_text(&self.out_path("report.tsv"), &crate::eval::format_tsv(rows))
    }

    pub fn compare_strategies_stage(
        &self,
        strategies: &[crate::supervision::Strategy],
    ) -> Result<Vec<StrategyRow>, ConvQueryError> {
        let engine = self.query_engine()?;
        let candidate_config = self.config.candidate_config();
        let ctx = EvalContext {
            lexicon: &self.lexicon,
            global_stats: &self.global_stats,
            function_words: &self.function_words,
            candidate_config: &candidate_config,
        };
        let split = self.split_point();
        let dialogues = if split < self.dialogues.len() {
            &self.dialogues[split..]
        } else {
            &self.dialogues[..]
        };
        let rows = compare_strategies(dialogues, &engine, &ctx, strategies)?;
        write_text(
            &self.out_path("strategies.txt"),
            &crate::eval::format_table(&rows),
        )?;
        write_text(
            &self.out_path("strategies.tsv"),
            &crate::eval::format_tsv(&rows),
        )?;
        Ok(rows)
    }
}

fn write_text(path: &Path, contents: &str) -> Result<(), ConvQueryError> {
    std::fs::write(path, contents).map_err(|source| ConvQueryError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

/// Load a fixture article store: JSON lines of `{title, summary}`.
pub fn load_fixture_engine(path: &Path) -> Result<FixtureEngine, ConvQueryError> {
    let contents = std::fs::read_to_string(path).map_err(|source| ConvQueryError::Io {
        context: format!("reading fixture articles {}", path.display()),
        source,
    })?;
    let mut engine = FixtureEngine::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct FixtureArticle {
            title: String,
            summary: String,
        }
        let article: FixtureArticle =
            serde_json::from_str(line).map_err(|e| ConvQueryError::Parse {
                line: i + 1,
                message: format!("fixture article: {e}"),
            })?;
        engine.add_article(&article.title, &article.summary);
    }
    Ok(engine)
}

/// Write a fixture article store for [`load_fixture_engine`].
pub fn write_fixture_articles(path: &Path, articles: &[Article]) -> Result<(), ConvQueryError> {
    let mut out = String::new();
    for article in articles {
        out.push_str(
            &serde_json::json!({"title": article.title, "summary": article.summary}).to_string(),
        );
        out.push('\n');
    }
    write_text(path, &out)
}

/// Run every stage in order, skipping stages whose artifacts are current.
/// A failing stage halts the run, naming the stage; earlier artifacts stay.
pub fn run_pipeline(config: RunConfig) -> Result<RunArtifacts, ConvQueryError> {
    let pipeline = Pipeline::load(config)?;
    let stage = |name: &str, e: ConvQueryError| ConvQueryError::Stage {
        stage: name.to_string(),
        cause: e.to_string(),
    };
    let pools = pipeline.extract().map_err(|e| stage("extract", e))?;
    let cache_report = pipeline
        .build_cache_stage(&pools)
        .map_err(|e| stage("build-cache", e))?;
    let labels = pipeline.label(&pools).map_err(|e| stage("label", e))?;
    let pretrained = pipeline
        .pretrain_stage(&pools, &labels)
        .map_err(|e| stage("pretrain", e))?;
    let finetuned = pipeline
        .finetune_stage(&pools, &labels, &pretrained.model)
        .map_err(|e| stage("finetune", e))?;
    let eval = pipeline
        .evaluate_stage(&finetuned.model)
        .map_err(|e| stage("evaluate", e))?;
    Ok(RunArtifacts {
        cache_report,
        labels,
        model: finetuned.model,
        eval,
    })
}
