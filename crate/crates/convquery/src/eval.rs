//! Recall-based evaluation of query production: R@x over ranked candidate
//! queries, the pool-wide ceiling R@M, a per-turn breakdown, and the
//! strategy-comparison harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::candidates::{candidate_pool, CandidateConfig, Dialogue, TitleLexicon};
use crate::error::ConvQueryError;
use crate::scorer::{predict, ScorerModel};
use crate::search::SearchEngine;
use crate::supervision::{
    score_candidates_by_strategy, summary_corpus_stats, RetrievalResult, Strategy,
};
use crate::text::{CorpusStats, FunctionWords};

/// Case-fold and collapse whitespace; parenthetical disambiguators are
/// stripped only when the gold side carries none, so "Rush (band)" matches
/// gold "rush" but not gold "rush (album)".
pub fn normalize_title(title: &str, strip_parenthetical: bool) -> String {
    let mut s = title.to_string();
    if strip_parenthetical {
        if let Some(open) = s.find('(') {
            let close = s[open..].find(')').map(|c| open + c + 1);
            if let Some(close) = close {
                s.replace_range(open..close, " ");
            }
        }
    }
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// True iff any retrieved title equals any gold title after normalization.
pub fn query_hit(retrieval: &RetrievalResult, gold_titles: &[String]) -> bool {
    titles_hit(retrieval.titles(), gold_titles)
}

fn titles_hit<'a>(titles: impl Iterator<Item = &'a str>, gold_titles: &[String]) -> bool {
    let gold: Vec<(String, bool)> = gold_titles
        .iter()
        .map(|g| {
            let has_paren = g.contains('(');
            (normalize_title(g, false), has_paren)
        })
        .collect();
    for title in titles {
        for (gold_norm, gold_has_paren) in &gold {
            let candidate = normalize_title(title, !gold_has_paren);
            if candidate == *gold_norm || normalize_title(title, false) == *gold_norm {
                return true;
            }
        }
    }
    false
}

/// One ranked query with its retrieved titles and hit flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedQuery {
    pub surface: String,
    pub retrieved_titles: Vec<String>,
    pub hit: bool,
}

/// Evaluation record for one dialogue turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub turn_id: usize,
    /// Number of context turns, used for the per-turn breakdown.
    pub dialogue_turns: usize,
    /// Candidates in ranked order; empty when the pool was empty.
    pub ranked: Vec<RankedQuery>,
    pub gold_titles: Vec<String>,
}

impl EvalRecord {
    pub fn from_retrievals(
        turn_id: usize,
        dialogue_turns: usize,
        ranked: Vec<(String, RetrievalResult)>,
        gold_titles: Vec<String>,
    ) -> Self {
        let ranked = ranked
            .into_iter()
            .map(|(surface, retrieval)| RankedQuery {
                hit: query_hit(&retrieval, &gold_titles),
                retrieved_titles: retrieval.titles().map(str::to_string).collect(),
                surface,
            })
            .collect();
        EvalRecord {
            turn_id,
            dialogue_turns,
            ranked,
            gold_titles,
        }
    }
}

/// How R@x counts the top x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// Top x ranked queries, each contributing all its retrieved articles.
    #[default]
    RankedQueries,
    /// Top x articles pooled across queries in rank order.
    PooledArticles,
}

/// Fraction of turns where the top-x slice hits. Empty pools are misses.
pub fn recall_at(records: &[EvalRecord], x: usize) -> Result<f64, ConvQueryError> {
    recall_at_mode(records, x, RecallMode::RankedQueries)
}

pub fn recall_at_mode(
    records: &[EvalRecord],
    x: usize,
    mode: RecallMode,
) -> Result<f64, ConvQueryError> {
    if records.is_empty() {
        return Err(ConvQueryError::EmptyRecords);
    }
    let hits = records
        .iter()
        .filter(|record| match mode {
            RecallMode::RankedQueries => record.ranked.iter().take(x).any(|r| r.hit),
            RecallMode::PooledArticles => {
                let titles = record
                    .ranked
                    .iter()
                    .flat_map(|r| r.retrieved_titles.iter().map(String::as_str))
                    .take(x);
                titles_hit(titles, &record.gold_titles)
            }
        })
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Fraction of turns where any candidate in the pool hits (R@M).
pub fn ceiling_recall(records: &[EvalRecord]) -> Result<f64, ConvQueryError> {
    let max_pool = records.iter().map(|r| r.ranked.len()).max().unwrap_or(0);
    recall_at(records, max_pool.max(1))
}

/// R@1 within each dialogue-turn bucket; indices at or above `cap` share
/// the final bucket. Empty buckets are absent, not zero.
pub fn per_turn_breakdown(
    records: &[EvalRecord],
    cap: usize,
) -> Result<Vec<(usize, f64, usize)>, ConvQueryError> {
    if records.is_empty() {
        return Err(ConvQueryError::EmptyRecords);
    }
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for record in records {
        let bucket = record.dialogue_turns.min(cap);
        let entry = buckets.entry(bucket).or_insert((0, 0));
        entry.1 += 1;
        if record.ranked.first().is_some_and(|r| r.hit) {
            entry.0 += 1;
        }
    }
    Ok(buckets
        .into_iter()
        .map(|(bucket, (hits, count))| (bucket, hits as f64 / count as f64, count))
        .collect())
}

/// One row of the strategy-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub r_at_1: f64,
    pub r_at_3: f64,
    pub r_at_5: f64,
}

/// Everything the harness needs to score one dialogue's pool.
pub struct EvalContext<'a> {
    pub lexicon: &'a TitleLexicon,
    pub global_stats: &'a CorpusStats,
    pub function_words: &'a FunctionWords,
    pub candidate_config: &'a CandidateConfig,
}

fn pool_retrievals(
    dialogue: &Dialogue,
    ctx: &EvalContext<'_>,
    engine: &dyn SearchEngine,
) -> Result<(Vec<crate::candidates::CandidateQuery>, Vec<Option<RetrievalResult>>), ConvQueryError>
{
    let pool = candidate_pool(
        dialogue,
        ctx.lexicon,
        ctx.global_stats,
        ctx.function_words,
        ctx.candidate_config,
    );
    let mut retrievals = Vec::with_capacity(pool.len());
    for candidate in &pool {
        let articles = crate::search::search(engine, &candidate.surface)?;
        retrievals.push(Some(RetrievalResult::new(candidate.surface.clone(), articles)));
    }
    Ok((pool, retrievals))
}

/// Evaluate one scoring strategy over a dataset, producing per-turn records.
pub fn evaluate_strategy(
    dialogues: &[Dialogue],
    engine: &dyn SearchEngine,
    ctx: &EvalContext<'_>,
    strategy: Strategy,
) -> Result<Vec<EvalRecord>, ConvQueryError> {
    let mut records = Vec::with_capacity(dialogues.len());
    for (turn_id, dialogue) in dialogues.iter().enumerate() {
        let (pool, retrievals) = pool_retrievals(dialogue, ctx, engine)?;
        if pool.is_empty() {
            records.push(EvalRecord {
                turn_id,
                dialogue_turns: dialogue.turns.len(),
                ranked: Vec::new(),
                gold_titles: dialogue.gold_titles.clone(),
            });
            continue;
        }
        // Decorrelate the random permutation across turns while keeping the
        // run reproducible.
        let effective = match strategy {
            Strategy::Random { seed } => Strategy::Random {
                seed: seed.wrapping_add(turn_id as u64),
            },
            other => other,
        };
        // Retrieval-dependent scores compare against the summaries this
        // turn's candidates retrieved, so their statistics come from that
        // summary corpus (falling back to global stats when nothing was
        // retrieved). Context-only strategies keep corpus-level statistics:
        // a repeated mention would otherwise inflate its own document
        // frequency through duplicate retrievals and depress its idf.
        let turn_stats = if strategy.needs_retrieval() {
            summary_corpus_stats(&retrievals).ok()
        } else {
            None
        };
        let stats = turn_stats.as_ref().unwrap_or(ctx.global_stats);
        let scores = score_candidates_by_strategy(
            &pool,
            &retrievals,
            dialogue,
            stats,
            effective,
            ctx.function_words,
        )?;
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .score
                .partial_cmp(&scores[a].score)
                .unwrap()
                .then(a.cmp(&b))
        });
        let ranked = order
            .into_iter()
            .map(|i| {
                (
                    pool[i].surface.clone(),
                    retrievals[i].clone().unwrap(),
                )
            })
            .collect();
        records.push(EvalRecord::from_retrievals(
            turn_id,
            dialogue.turns.len(),
            ranked,
            dialogue.gold_titles.clone(),
        ));
    }
    Ok(records)
}

/// Evaluate a trained scorer model over a dataset.
pub fn evaluate_model(
    dialogues: &[Dialogue],
    engine: &dyn SearchEngine,
    ctx: &EvalContext<'_>,
    model: &ScorerModel,
) -> Result<Vec<EvalRecord>, ConvQueryError> {
    let mut records = Vec::with_capacity(dialogues.len());
    for (turn_id, dialogue) in dialogues.iter().enumerate() {
        let (pool, retrievals) = pool_retrievals(dialogue, ctx, engine)?;
        let ranked = match predict(model, &pool, dialogue, ctx.global_stats) {
            Ok(ranked) => ranked,
            Err(ConvQueryError::EmptyPool) => {
                records.push(EvalRecord {
                    turn_id,
                    dialogue_turns: dialogue.turns.len(),
                    ranked: Vec::new(),
                    gold_titles: dialogue.gold_titles.clone(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let by_surface: std::collections::HashMap<&str, &RetrievalResult> = pool
            .iter()
            .zip(&retrievals)
            .map(|(c, r)| (c.surface.as_str(), r.as_ref().unwrap()))
            .collect();
        let ordered = ranked
            .into_iter()
            .map(|r| {
                let retrieval = (*by_surface.get(r.candidate.surface.as_str()).unwrap()).clone();
                (r.candidate.surface, retrieval)
            })
            .collect();
        records.push(EvalRecord::from_retrievals(
            turn_id,
            dialogue.turns.len(),
            ordered,
            dialogue.gold_titles.clone(),
        ));
    }
    Ok(records)
}

/// One row per strategy with R@1/3/5. Deterministic given the strategies'
/// seeds.
pub fn compare_strategies(
    dialogues: &[Dialogue],
    engine: &dyn SearchEngine,
    ctx: &EvalContext<'_>,
    strategies: &[Strategy],
) -> Result<Vec<StrategyRow>, ConvQueryError> {
    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let records = evaluate_strategy(dialogues, engine, ctx, strategy)?;
        rows.push(StrategyRow {
            strategy: strategy.name().to_string(),
            r_at_1: recall_at(&records, 1)?,
            r_at_3: recall_at(&records, 3)?,
            r_at_5: recall_at(&records, 5)?,
        });
    }
    Ok(rows)
}

/// Aligned plain-text table of strategy rows.
pub fn format_table(rows: &[StrategyRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<12} {:>8} {:>8} {:>8}\n", "strategy", "R@1", "R@3", "R@5"));
    for row in rows {
        out.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4} {:>8.4}\n",
            row.strategy, row.r_at_1, row.r_at_3, row.r_at_5
        ));
    }
    out
}

/// Machine-readable tab-delimited form of the same table.
pub fn format_tsv(rows: &[StrategyRow]) -> String {
    let mut out = String::from("strategy\tr_at_1\tr_at_3\tr_at_5\n");
    for row in rows {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\n",
            row.strategy, row.r_at_1, row.r_at_3, row.r_at_5
        ));
    }
    out
}
