//! BM25 and the cheap noisy supervision signal: a query is scored by
//! comparing the articles it retrieves against the gold next response,
//! taking the maximum per-article BM25 score. The `++` variant expands the
//! response with coreferent entity mentions and drops function words from
//! both sides first.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateQuery, Dialogue};
use crate::error::ConvQueryError;
use crate::text::{drop_function_words, tf_idf, tokenize, CorpusStats, FunctionWords, TokenSeq};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// A retrieved article: title plus first-paragraph summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub summary: String,
    #[serde(default)]
    pub url: String,
    /// 1-based position in the engine results.
    pub rank: usize,
}

impl Article {
    pub fn summary_tokens(&self) -> TokenSeq {
        tokenize(&self.summary)
    }
}

/// A query paired with its ranked retrieved articles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub articles: Vec<Article>,
}

impl RetrievalResult {
    pub fn new(query: impl Into<String>, articles: Vec<Article>) -> Self {
        RetrievalResult {
            query: query.into(),
            articles,
        }
    }

    pub fn titles(&self) -> impl Iterator<Item = &str> {
        self.articles.iter().map(|a| a.title.as_str())
    }
}

/// Score assigned to one candidate by one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub candidate: usize,
    pub strategy: String,
    pub score: f64,
}

/// Okapi BM25 of `query` against `doc`, with the smoothed non-negative IDF
/// `ln(1 + (N - df + 0.5) / (df + 0.5))`. Repeated query terms count once.
pub fn bm25(query: &TokenSeq, doc: &TokenSeq, stats: &CorpusStats, k1: f64, b: f64) -> f64 {
    if query.is_empty() || doc.is_empty() {
        return 0.0;
    }
    let doc_len = doc.len() as f64;
    let norm = k1 * (1.0 - b + b * doc_len / stats.avg_doc_len());
    let mut seen = std::collections::HashSet::new();
    let mut score = 0.0;
    for term in query.iter() {
        if !seen.insert(term) {
            continue;
        }
        let tf = doc.term_frequency(term) as f64;
        if tf == 0.0 {
            continue;
        }
        score += stats.bm25_idf(term) * tf * (k1 + 1.0) / (tf + norm);
    }
    score
}

/// Plain BM25 or the `++` variant with coreference expansion and
/// function-word dropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionMode {
    Plain,
    PlusPlus,
}

/// The noisy supervision score for one retrieval: the maximum BM25 between
/// the (optionally preprocessed) response and each article summary.
/// An empty retrieval scores 0, so queries that fetch nothing are never chosen.
pub fn supervision_score(
    retrieval: &RetrievalResult,
    response_raw: &str,
    stats: &CorpusStats,
    mode: SupervisionMode,
    mentions: Option<&[String]>,
    function_words: &FunctionWords,
) -> f64 {
    let response = match mode {
        SupervisionMode::Plain => tokenize(response_raw),
        SupervisionMode::PlusPlus => {
            let expanded = expand_response_with_coref(response_raw, mentions.unwrap_or(&[]));
            drop_function_words(&tokenize(&expanded), function_words)
        }
    };
    retrieval
        .articles
        .iter()
        .map(|article| {
            let summary = match mode {
                SupervisionMode::Plain => article.summary_tokens(),
                SupervisionMode::PlusPlus => {
                    drop_function_words(&article.summary_tokens(), function_words)
                }
            };
            bm25(&response, &summary, stats, DEFAULT_K1, DEFAULT_B)
        })
        .fold(0.0, f64::max)
}

/// Append the entity mentions referred to by pronouns in the response,
/// space-joined, in order and with duplicates preserved.
pub fn expand_response_with_coref(response: &str, mentions: &[String]) -> String {
    if mentions.is_empty() {
        return response.to_string();
    }
    let mut out = response.to_string();
    for mention in mentions {
        out.push(' ');
        out.push_str(mention);
    }
    out
}

const THIRD_PERSON_PRONOUNS: &[&str] = &[
    "he", "him", "his", "she", "her", "hers", "it", "its", "they", "them", "their", "theirs",
];

/// Heuristic coreference for datasets without mention annotations: if the
/// response contains a third-person pronoun, return the nearest preceding
/// capitalized multi-token span from the dialogue context.
pub fn heuristic_coref_mentions(dialogue: &Dialogue) -> Vec<String> {
    let has_pronoun = dialogue
        .gold_response
        .iter()
        .any(|t| THIRD_PERSON_PRONOUNS.contains(&t));
    if !has_pronoun {
        return Vec::new();
    }
    // Scan turns latest-first for the last capitalized run of >= 2 words.
    for turn in dialogue.turns.iter().rev() {
        let words: Vec<&str> = turn.raw.split_whitespace().collect();
        let mut best: Option<(usize, usize)> = None;
        let mut run_start: Option<usize> = None;
        for (i, word) in words.iter().enumerate() {
            let capitalized = word.chars().next().is_some_and(|c| c.is_uppercase());
            // Sentence-initial capitals are not evidence of a name.
            let sentence_initial = i == 0
                || words[i - 1]
                    .chars()
                    .last()
                    .is_some_and(|c| matches!(c, '.' | '!' | '?'));
            if capitalized && !(sentence_initial && run_start.is_none()) {
                run_start.get_or_insert(i);
            } else {
                if let Some(start) = run_start.take() {
                    if i - start >= 2 {
                        best = Some((start, i));
                    }
                }
            }
        }
        if let Some(start) = run_start {
            if words.len() - start >= 2 {
                best = Some((start, words.len()));
            }
        }
        if let Some((start, end)) = best {
            let mention = words[start..end]
                .iter()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                .collect::<Vec<_>>()
                .join(" ");
            if !mention.trim().is_empty() {
                return vec![mention];
            }
        }
    }
    Vec::new()
}

/// Mentions to use for `++` scoring: dataset annotations when present,
/// otherwise the heuristic resolver.
pub fn resolve_mentions(dialogue: &Dialogue) -> Vec<String> {
    match &dialogue.coref_mentions {
        Some(m) => m.clone(),
        None => heuristic_coref_mentions(dialogue),
    }
}

/// The query scoring strategies compared in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// A seeded random permutation rank.
    Random { seed: u64 },
    /// Average context TF-IDF of the candidate's tokens; ignores retrieval.
    TfIdf,
    /// BM25 between the candidate and the gold response; ignores retrieval.
    Bm25Qu,
    /// Max-over-articles BM25 against the gold response.
    Bm25,
    /// Same, with coreference expansion and function-word dropping.
    Bm25PlusPlus,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random { .. } => "random",
            Strategy::TfIdf => "tf-idf",
            Strategy::Bm25Qu => "bm25-qu",
            Strategy::Bm25 => "bm25",
            Strategy::Bm25PlusPlus => "bm25++",
        }
    }

    pub fn needs_retrieval(&self) -> bool {
        matches!(self, Strategy::Bm25 | Strategy::Bm25PlusPlus)
    }

    /// Parse a strategy name as used in config files and the CLI.
    pub fn parse(name: &str, seed: u64) -> Result<Strategy, ConvQueryError> {
        match name {
            "random" => Ok(Strategy::Random { seed }),
            "tf-idf" | "tfidf" => Ok(Strategy::TfIdf),
            "bm25-qu" | "bm25qu" => Ok(Strategy::Bm25Qu),
            "bm25" => Ok(Strategy::Bm25),
            "bm25++" | "bm25pp" | "bm25plusplus" => Ok(Strategy::Bm25PlusPlus),
            other => Err(ConvQueryError::Config(format!(
                "unknown strategy {other:?} (expected random, tf-idf, bm25-qu, bm25, bm25++)"
            ))),
        }
    }
}

/// Score every candidate under one strategy. `retrievals[i]` must be present
/// for knowledge-dependent strategies and aligns with `candidates[i]`.
pub fn score_candidates_by_strategy(
    candidates: &[CandidateQuery],
    retrievals: &[Option<RetrievalResult>],
    dialogue: &Dialogue,
    stats: &CorpusStats,
    strategy: Strategy,
    function_words: &FunctionWords,
) -> Result<Vec<QueryScore>, ConvQueryError> {
    let context = dialogue.context_tokens();
    let mentions = resolve_mentions(dialogue);
    let mut scores = Vec::with_capacity(candidates.len());

    let random_ranks: Option<Vec<usize>> = match strategy {
        Strategy::Random { seed } => {
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            // order[r] = candidate at rank r; invert to per-candidate rank.
            let mut ranks = vec![0usize; candidates.len()];
            for (rank, &cand) in order.iter().enumerate() {
                ranks[cand] = rank;
            }
            Some(ranks)
        }
        _ => None,
    };

    for (i, candidate) in candidates.iter().enumerate() {
        let score = match strategy {
            Strategy::Random { .. } => {
                let rank = random_ranks.as_ref().unwrap()[i];
                // Higher score = better; rank 0 is best.
                (candidates.len() - rank) as f64
            }
            Strategy::TfIdf => {
                let tokens = candidate.tokens();
                if tokens.is_empty() {
                    0.0
                } else {
                    tokens.iter().map(|t| tf_idf(t, &context, stats)).sum::<f64>()
                        / tokens.len() as f64
                }
            }
            Strategy::Bm25Qu => bm25(
                &candidate.tokens(),
                &dialogue.gold_response,
                stats,
                DEFAULT_K1,
                DEFAULT_B,
            ),
            Strategy::Bm25 | Strategy::Bm25PlusPlus => {
                let retrieval =
                    retrievals
                        .get(i)
                        .and_then(Option::as_ref)
                        .ok_or_else(|| ConvQueryError::MissingRetrieval {
                            strategy: strategy.name().to_string(),
                            candidate: candidate.surface.clone(),
                        })?;
                let mode = if strategy == Strategy::Bm25 {
                    SupervisionMode::Plain
                } else {
                    SupervisionMode::PlusPlus
                };
                supervision_score(
                    retrieval,
                    &dialogue.gold_response_raw,
                    stats,
                    mode,
                    Some(&mentions),
                    function_words,
                )
            }
        };
        scores.push(QueryScore {
            candidate: i,
            strategy: strategy.name().to_string(),
            score,
        });
    }
    Ok(scores)
}

/// Index of the highest-scoring candidate; ties break to the lowest index.
pub fn pseudo_label(scores: &[QueryScore]) -> Result<usize, ConvQueryError> {
    if scores.is_empty() {
        return Err(ConvQueryError::EmptyCandidates);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.score > scores[best].score {
            best = i;
        }
    }
    Ok(scores[best].candidate)
}

/// The knowledge candidate whose summary best matches the context under
/// BM25; ties break to the lowest rank.
pub fn rank_knowledge<'a>(
    context: &TokenSeq,
    knowledge: &'a [Article],
    stats: &CorpusStats,
) -> Result<&'a Article, ConvQueryError> {
    if knowledge.is_empty() {
        return Err(ConvQueryError::EmptyKnowledge);
    }
    let mut best: Option<(&Article, f64)> = None;
    for article in knowledge {
        let score = bm25(context, &article.summary_tokens(), stats, DEFAULT_K1, DEFAULT_B);
        let better = match best {
            None => true,
            Some((prev, prev_score)) => {
                score > prev_score || (score == prev_score && article.rank < prev.rank)
            }
        };
        if better {
            best = Some((article, score));
        }
    }
    Ok(best.unwrap().0)
}

/// Build the per-turn document-frequency corpus for supervision scoring:
/// the union of all article summaries retrieved by that turn's candidates.
pub fn summary_corpus_stats(
    retrievals: &[Option<RetrievalResult>],
) -> Result<CorpusStats, ConvQueryError> {
    let docs: Vec<TokenSeq> = retrievals
        .iter()
        .flatten()
        .flat_map(|r| r.articles.iter().map(Article::summary_tokens))
        .filter(|d| !d.is_empty())
        .collect();
    CorpusStats::build(&docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::single_turn_dialogue;

    fn small_stats() -> CorpusStats {
        CorpusStats::build(&[tokenize("cat sat"), tokenize("dog ran")]).unwrap()
    }

    fn article(title: &str, summary: &str, rank: usize) -> Article {
        Article {
            title: title.into(),
            summary: summary.into(),
            url: String::new(),
            rank,
        }
    }

    #[test]
    fn bm25_hand_computed_value() {
        // df(cat)=1, N=2: idf = ln(1 + 1.5/1.5) = ln 2. tf factor is exactly 1
        // because |doc| equals the average length.
        let stats = small_stats();
        let score = bm25(&tokenize("cat"), &tokenize("cat sat"), &stats, 1.2, 0.75);
        assert!((score - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bm25_absent_term_contributes_nothing() {
        let stats = small_stats();
        let with = bm25(&tokenize("cat"), &tokenize("cat sat"), &stats, 1.2, 0.75);
        let without = bm25(&tokenize("cat dog"), &tokenize("cat sat"), &stats, 1.2, 0.75);
        assert_eq!(with, without);
    }

    #[test]
    fn bm25_empty_query_is_zero() {
        let stats = small_stats();
        assert_eq!(bm25(&TokenSeq::default(), &tokenize("cat"), &stats, 1.2, 0.75), 0.0);
        assert_eq!(bm25(&tokenize("cat"), &TokenSeq::default(), &stats, 1.2, 0.75), 0.0);
    }

    #[test]
    fn supervision_self_match_positive() {
        let stats = small_stats();
        let fw = FunctionWords::bundled();
        let retrieval = RetrievalResult::new("q", vec![article("T", "cat sat", 1)]);
        let score = supervision_score(
            &retrieval,
            "cat sat",
            &stats,
            SupervisionMode::Plain,
            None,
            &fw,
        );
        assert!(score > 0.0);
    }

    #[test]
    fn supervision_monotone_under_article_addition() {
        let stats = small_stats();
        let fw = FunctionWords::bundled();
        let base = RetrievalResult::new("q", vec![article("T", "dog ran", 1)]);
        let more = RetrievalResult::new(
            "q",
            vec![article("T", "dog ran", 1), article("U", "cat sat", 2)],
        );
        let s1 = supervision_score(&base, "cat sat", &stats, SupervisionMode::Plain, None, &fw);
        let s2 = supervision_score(&more, "cat sat", &stats, SupervisionMode::Plain, None, &fw);
        assert!(s2 >= s1);
    }

    #[test]
    fn supervision_empty_retrieval_is_zero() {
        let stats = small_stats();
        let fw = FunctionWords::bundled();
        let retrieval = RetrievalResult::new("q", vec![]);
        assert_eq!(
            supervision_score(&retrieval, "cat", &stats, SupervisionMode::Plain, None, &fw),
            0.0
        );
    }

    #[test]
    fn coref_expansion_rules() {
        assert_eq!(
            expand_response_with_coref("He was born in Tupelo", &["Elvis Presley".into()]),
            "He was born in Tupelo Elvis Presley"
        );
        assert_eq!(expand_response_with_coref("r", &[]), "r");
        assert_eq!(
            expand_response_with_coref("r", &["m".into(), "m".into()]),
            "r m m"
        );
    }

    #[test]
    fn heuristic_coref_finds_capitalized_span() {
        let d = crate::candidates::Dialogue::new(
            vec![crate::candidates::Turn::new(
                "a",
                "Do you like Elvis Presley?",
            )],
            "Yes, he was born in Tupelo",
        );
        assert_eq!(heuristic_coref_mentions(&d), vec!["Elvis Presley".to_string()]);
    }

    #[test]
    fn heuristic_coref_without_pronoun_is_empty() {
        let d = crate::candidates::Dialogue::new(
            vec![crate::candidates::Turn::new("a", "Do you like Elvis Presley?")],
            "I prefer jazz music",
        );
        assert!(heuristic_coref_mentions(&d).is_empty());
    }

    #[test]
    fn pseudo_label_tie_breaks_low_index() {
        let scores: Vec<QueryScore> = [0.2, 0.9, 0.9]
            .iter()
            .enumerate()
            .map(|(i, &s)| QueryScore {
                candidate: i,
                strategy: "t".into(),
                score: s,
            })
            .collect();
        assert_eq!(pseudo_label(&scores).unwrap(), 1);
        assert_eq!(pseudo_label(&scores[..1]).unwrap(), 0);
        assert!(pseudo_label(&[]).is_err());
    }

    #[test]
    fn rank_knowledge_prefers_matching_summary() {
        let stats = small_stats();
        let context = tokenize("cat sat");
        let knowledge = vec![
            article("A", "dog ran", 1),
            article("B", "cat sat", 2),
        ];
        assert_eq!(rank_knowledge(&context, &knowledge, &stats).unwrap().title, "B");
        assert!(rank_knowledge(&context, &[], &stats).is_err());
    }

    #[test]
    fn missing_retrieval_names_candidate() {
        let d = single_turn_dialogue("tell me about cats", "cats are great");
        let stats = small_stats();
        let fw = FunctionWords::bundled();
        let cand = CandidateQuery {
            turn_index: 1,
            begin: 3,
            end: 4,
            surface: "cats".into(),
            source: crate::candidates::CandidateSource::Metric,
        };
        let err = score_candidates_by_strategy(
            std::slice::from_ref(&cand),
            &[None],
            &d,
            &stats,
            Strategy::Bm25,
            &fw,
        )
        .unwrap_err();
        assert!(err.to_string().contains("cats"));
    }
}
