//! Search-space pruning: extract candidate query spans from the dialogue
//! context, either by longest-match against a title lexicon or by merging
//! adjacent high-TF-IDF keywords, restricted to the last `k` turns.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConvQueryError;
use crate::text::{tf_idf, tokenize, CorpusStats, FunctionWords, TokenSeq};

/// One dialogue turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: String,
    pub raw: String,
    pub tokens: TokenSeq,
}

impl Turn {
    pub fn new(speaker: impl Into<String>, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw);
        Turn {
            speaker: speaker.into(),
            raw,
            tokens,
        }
    }
}

/// A dialogue context with its gold next response and gold article titles.
///
/// Turn indices are 1-based and dense; `turns[i]` has turn index `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub turns: Vec<Turn>,
    pub gold_response_raw: String,
    pub gold_response: TokenSeq,
    pub gold_titles: Vec<String>,
    pub coref_mentions: Option<Vec<String>>,
}

impl Dialogue {
    pub fn new(turns: Vec<Turn>, gold_response: impl Into<String>) -> Self {
        let raw = gold_response.into();
        let tokens = tokenize(&raw);
        Dialogue {
            turns,
            gold_response_raw: raw,
            gold_response: tokens,
            gold_titles: Vec::new(),
            coref_mentions: None,
        }
    }

    pub fn with_gold_titles(mut self, titles: Vec<String>) -> Self {
        self.gold_titles = titles;
        self
    }

    pub fn with_coref_mentions(mut self, mentions: Vec<String>) -> Self {
        self.coref_mentions = Some(mentions);
        self
    }

    /// 1-based index of the last turn.
    pub fn last_turn_index(&self) -> usize {
        self.turns.len()
    }

    /// All context tokens, oldest turn first.
    pub fn context_tokens(&self) -> TokenSeq {
        let mut seq = TokenSeq::default();
        for turn in &self.turns {
            seq = seq.concat(&turn.tokens);
        }
        seq
    }

    /// Indices (1-based) of the last `window_k` turns; `None` means all turns.
    fn window_indices(&self, window_k: Option<usize>) -> std::ops::RangeInclusive<usize> {
        let n = self.turns.len();
        let k = window_k.unwrap_or(n).max(1);
        let first = n.saturating_sub(k) + 1;
        first..=n
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Dictionary,
    Metric,
}

/// A continuous token span of one turn, proposed as a search query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateQuery {
    /// 1-based turn index.
    pub turn_index: usize,
    /// Token offset of the span start within the turn.
    pub begin: usize,
    /// Exclusive token offset of the span end.
    pub end: usize,
    /// Normalized surface form, equal to the joined tokens of the span.
    pub surface: String,
    pub source: CandidateSource,
}

impl CandidateQuery {
    fn from_span(dialogue: &Dialogue, turn_index: usize, begin: usize, end: usize, source: CandidateSource) -> Self {
        let surface = dialogue.turns[turn_index - 1].tokens.slice(begin, end).join();
        CandidateQuery {
            turn_index,
            begin,
            end,
            surface,
            source,
        }
    }

    pub fn tokens(&self) -> TokenSeq {
        tokenize(&self.surface)
    }
}

/// Drop one trailing "(...)" disambiguator from a title.
fn strip_parenthetical(title: &str) -> String {
    match (title.find('('), title.rfind(')')) {
        (Some(open), Some(close)) if open < close => {
            format!("{} {}", &title[..open], &title[close + 1..])
        }
        _ => title.to_string(),
    }
}

/// A set of known article titles for dictionary-based matching,
/// stored as normalized token surfaces.
#[derive(Debug, Clone, Default)]
pub struct TitleLexicon {
    surfaces: HashSet<String>,
    max_len: usize,
}

impl TitleLexicon {
    pub fn new<I, S>(titles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut surfaces = HashSet::new();
        let mut max_len = 0;
        for title in titles {
            let raw = title.as_ref();
            // Index both the full title and the form without a parenthetical
            // disambiguator: dialogue text says "rush", not "rush (band)".
            for variant in [raw.to_string(), strip_parenthetical(raw)] {
                let seq = tokenize(&variant);
                if seq.is_empty() {
                    continue;
                }
                max_len = max_len.max(seq.len());
                surfaces.insert(seq.join());
            }
        }
        TitleLexicon { surfaces, max_len }
    }

    /// One title per line, UTF-8, normalized on load.
    pub fn load(path: &Path) -> Result<Self, ConvQueryError> {
        let contents = std::fs::read_to_string(path).map_err(|source| ConvQueryError::Io {
            context: format!("reading title lexicon {}", path.display()),
            source,
        })?;
        Ok(Self::new(contents.lines()))
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.surfaces.contains(surface)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }
}

/// Threshold rule for metric-based keyword selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordThreshold {
    /// Keep tokens at or above this percentile of the turn's TF-IDF scores.
    Percentile(f64),
    /// Keep tokens with TF-IDF at or above this absolute value.
    Absolute(f64),
}

impl Default for KeywordThreshold {
    fn default() -> Self {
        KeywordThreshold::Percentile(75.0)
    }
}

/// Configuration for [`candidate_pool`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub use_dictionary: bool,
    pub use_metric: bool,
    /// Last `k` turns to consider; `None` means all turns.
    pub window_k: Option<usize>,
    pub threshold: KeywordThreshold,
    pub max_span: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            use_dictionary: true,
            use_metric: true,
            window_k: None,
            threshold: KeywordThreshold::default(),
            max_span: 4,
        }
    }
}

/// All maximal spans within the last `window_k` turns whose normalized
/// surface appears in the lexicon. Overlaps resolved longest-first, ties by
/// earlier start; duplicate surfaces keep the latest-turn occurrence.
pub fn extract_dictionary_candidates(
    dialogue: &Dialogue,
    lexicon: &TitleLexicon,
    window_k: Option<usize>,
) -> Vec<CandidateQuery> {
    let mut per_turn: Vec<CandidateQuery> = Vec::new();
    for turn_index in dialogue.window_indices(window_k) {
        let tokens = &dialogue.turns[turn_index - 1].tokens;
        let n = tokens.len();
        let mut taken = vec![false; n];
        let max_len = lexicon.max_len.min(n);
        for len in (1..=max_len).rev() {
            for begin in 0..=(n - len) {
                let end = begin + len;
                if (begin..end).any(|i| taken[i]) {
                    continue;
                }
                let surface = tokens.slice(begin, end).join();
                if lexicon.contains(&surface) {
                    for flag in taken[begin..end].iter_mut() {
                        *flag = true;
                    }
                    per_turn.push(CandidateQuery::from_span(
                        dialogue,
                        turn_index,
                        begin,
                        end,
                        CandidateSource::Dictionary,
                    ));
                }
            }
        }
    }
    dedup_latest_turn(per_turn)
}

/// Metric-based extraction: tokens of the last `window_k` turns whose TF-IDF
/// against `stats` (the containing turn as document) clears the threshold are
/// keywords; maximal runs of keywords bridged only by function words merge
/// into spans of at most `max_span` tokens, split greedily left-to-right.
pub fn extract_metric_candidates(
    dialogue: &Dialogue,
    stats: &CorpusStats,
    function_words: &FunctionWords,
    window_k: Option<usize>,
    threshold: KeywordThreshold,
    max_span: usize,
) -> Vec<CandidateQuery> {
    let max_span = max_span.max(1);
    let mut out: Vec<CandidateQuery> = Vec::new();
    for turn_index in dialogue.window_indices(window_k) {
        let tokens = &dialogue.turns[turn_index - 1].tokens;
        let scores: Vec<f64> = tokens.iter().map(|t| tf_idf(t, tokens, stats)).collect();
        let cutoff = match threshold {
            KeywordThreshold::Absolute(v) => v,
            KeywordThreshold::Percentile(p) => percentile(&scores, p),
        };
        let keyword: Vec<bool> = tokens
            .iter()
            .zip(&scores)
            .map(|(t, &s)| s >= cutoff && !function_words.contains(t))
            .collect();

        let mut i = 0;
        while i < tokens.len() {
            if !keyword[i] {
                i += 1;
                continue;
            }
            // Collect the positions of a keyword run bridged by function words.
            let mut positions = vec![i];
            let mut j = i + 1;
            let mut last_kw = i;
            while j < tokens.len() {
                if keyword[j] {
                    positions.push(j);
                    last_kw = j;
                    j += 1;
                } else if function_words.contains(tokens.tokens()[j].as_str()) {
                    j += 1;
                } else {
                    break;
                }
            }
            emit_spans(dialogue, turn_index, &positions, max_span, &mut out);
            i = last_kw + 1;
        }
    }
    dedup_latest_turn(out)
}

/// Greedily group run keyword positions into spans no longer than `max_span`
/// tokens end-to-end, anchored at keywords on both edges.
fn emit_spans(
    dialogue: &Dialogue,
    turn_index: usize,
    positions: &[usize],
    max_span: usize,
    out: &mut Vec<CandidateQuery>,
) {
    let mut start = 0;
    while start < positions.len() {
        let begin = positions[start];
        let mut last = start;
        while last + 1 < positions.len() && positions[last + 1] - begin + 1 <= max_span {
            last += 1;
        }
        out.push(CandidateQuery::from_span(
            dialogue,
            turn_index,
            begin,
            positions[last] + 1,
            CandidateSource::Metric,
        ));
        start = last + 1;
    }
}

fn percentile(scores: &[f64], p: f64) -> f64 {
    if scores.is_empty() {
        return f64::INFINITY;
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (p / 100.0 * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Deduplicate by surface, keeping the latest-turn occurrence (earliest span
/// within that turn).
fn dedup_latest_turn(candidates: Vec<CandidateQuery>) -> Vec<CandidateQuery> {
    let mut best: HashMap<String, CandidateQuery> = HashMap::new();
    for cand in candidates {
        match best.get(&cand.surface) {
            Some(kept)
                if (kept.turn_index, std::cmp::Reverse(kept.begin))
                    >= (cand.turn_index, std::cmp::Reverse(cand.begin)) => {}
            _ => {
                best.insert(cand.surface.clone(), cand);
            }
        }
    }
    let mut out: Vec<CandidateQuery> = best.into_values().collect();
    sort_pool(&mut out);
    out
}

fn sort_pool(pool: &mut [CandidateQuery]) {
    pool.sort_by(|a, b| {
        b.turn_index
            .cmp(&a.turn_index)
            .then(a.begin.cmp(&b.begin))
            .then(a.surface.cmp(&b.surface))
    });
}

/// Deduplicated union of the configured extractors, ordered by turn index
/// descending then span start ascending. Dictionary candidates win surface
/// ties against metric candidates.
pub fn candidate_pool(
    dialogue: &Dialogue,
    lexicon: &TitleLexicon,
    stats: &CorpusStats,
    function_words: &FunctionWords,
    config: &CandidateConfig,
) -> Vec<CandidateQuery> {
    let mut by_surface: HashMap<String, CandidateQuery> = HashMap::new();
    if config.use_dictionary {
        for cand in extract_dictionary_candidates(dialogue, lexicon, config.window_k) {
            by_surface.insert(cand.surface.clone(), cand);
        }
    }
    if config.use_metric {
        for cand in extract_metric_candidates(
            dialogue,
            stats,
            function_words,
            config.window_k,
            config.threshold,
            config.max_span,
        ) {
            by_surface.entry(cand.surface.clone()).or_insert(cand);
        }
    }
    let mut pool: Vec<CandidateQuery> = by_surface.into_values().collect();
    sort_pool(&mut pool);
    pool
}

/// Surface set of a pool, for inclusion checks.
pub fn pool_surfaces(pool: &[CandidateQuery]) -> HashSet<&str> {
    pool.iter().map(|c| c.surface.as_str()).collect()
}

/// Convenience wrapper used by tests and the demo: pool from a raw text turn.
pub fn single_turn_dialogue(text: &str, response: &str) -> Dialogue {
    Dialogue::new(vec![Turn::new("user", text)], response)
}
