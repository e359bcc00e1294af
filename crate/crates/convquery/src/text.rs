//! Tokenization, normalization, function-word filtering and corpus
//! statistics shared by every scoring component.
//!
//! Tokens are maximal runs of Unicode letters and digits, NFKC-normalized
//! and case-folded. Punctuation is discarded, so `"Presley's"` tokenizes
//! to `[presley, s]`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::ConvQueryError;

/// Bundled English function-word list, one token per line.
pub const BUNDLED_FUNCTION_WORDS: &str = include_str!("../assets/function_words.txt");

/// An ordered sequence of normalized word tokens.
///
/// Invariant: no token is empty and every token is already in normalized
/// form, so re-normalizing a `TokenSeq` is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    /// Build a sequence from pre-normalized tokens. Empty tokens are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSeq {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }

    /// Space-joined surface form.
    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }

    /// Term frequency of `token` within this sequence.
    pub fn term_frequency(&self, token: &str) -> usize {
        self.tokens.iter().filter(|t| t.as_str() == token).count()
    }

    /// Counts for every distinct token.
    pub fn term_frequencies(&self) -> HashMap<&str, usize> {
        let mut freqs = HashMap::new();
        for token in &self.tokens {
            *freqs.entry(token.as_str()).or_insert(0) += 1;
        }
        freqs
    }

    pub fn slice(&self, begin: usize, end: usize) -> TokenSeq {
        TokenSeq {
            tokens: self.tokens[begin..end].to_vec(),
        }
    }

    /// Concatenation of two sequences.
    pub fn concat(&self, other: &TokenSeq) -> TokenSeq {
        let mut tokens = self.tokens.clone();
        tokens.extend(other.tokens.iter().cloned());
        TokenSeq { tokens }
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.join())
    }
}

/// Split raw text into normalized tokens: NFKC, lowercase, maximal runs of
/// letters/digits. Empty input yields an empty sequence.
pub fn tokenize(text: &str) -> TokenSeq {
    let normalized: String = text.nfkc().collect::<String>().to_lowercase();
    let tokens = normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    TokenSeq { tokens }
}

/// Normalize a single string to its token-joined surface form.
/// `"  New  YORK "` becomes `"new york"`.
pub fn normalize_surface(text: &str) -> String {
    tokenize(text).join()
}

/// A closed-class word lexicon used to drop function words before scoring.
#[derive(Debug, Clone)]
pub struct FunctionWords {
    words: HashSet<String>,
}

impl FunctionWords {
    /// The in-repo default list.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_FUNCTION_WORDS)
    }

    /// Parse the one-token-per-line format; '#' lines are comments.
    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| normalize_surface(l))
            .filter(|l| !l.is_empty())
            .collect();
        FunctionWords { words }
    }

    pub fn load(path: &Path) -> Result<Self, ConvQueryError> {
        let contents = std::fs::read_to_string(path).map_err(|source| ConvQueryError::Io {
            context: format!("reading function-word lexicon {}", path.display()),
            source,
        })?;
        Ok(Self::parse(&contents))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Remove function words, preserving the relative order of what remains.
pub fn drop_function_words(seq: &TokenSeq, lexicon: &FunctionWords) -> TokenSeq {
    TokenSeq {
        tokens: seq
            .tokens
            .iter()
            .filter(|t| !lexicon.contains(t))
            .cloned()
            .collect(),
    }
}

/// Document frequencies, document count and average document length for a
/// background corpus. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
    avg_doc_len: f64,
}

impl CorpusStats {
    /// Count document frequencies over `docs`. Errors on an empty corpus.
    pub fn build(docs: &[TokenSeq]) -> Result<Self, ConvQueryError> {
        if docs.is_empty() {
            return Err(ConvQueryError::EmptyCorpus);
        }
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut total_len = 0usize;
        for doc in docs {
            total_len += doc.len();
            let distinct: HashSet<&str> = doc.iter().collect();
            for token in distinct {
                *doc_freq.entry(token.to_string()).or_insert(0) += 1;
            }
        }
        Ok(CorpusStats {
            doc_count: docs.len(),
            doc_freq,
            avg_doc_len: total_len as f64 / docs.len() as f64,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    /// Document frequency of a token; 0 for tokens never seen.
    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    /// Plain IDF `ln(N / df)`; unseen tokens get 0 (df treated as N).
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.doc_freq(token);
        if df == 0 {
            return 0.0;
        }
        (self.doc_count as f64 / df as f64).ln()
    }

    /// Smoothed, always non-negative BM25 IDF: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn bm25_idf(&self, token: &str) -> f64 {
        let n = self.doc_count as f64;
        let df = self.doc_freq(token) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

/// Raw term frequency times natural-log IDF of `token` within `doc`.
/// Unseen tokens score 0.
pub fn tf_idf(token: &str, doc: &TokenSeq, stats: &CorpusStats) -> f64 {
    let tf = doc.term_frequency(token) as f64;
    tf * stats.idf(token)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation_and_folds_case() {
        assert_eq!(
            tokenize("Rush is great!").tokens(),
            &["rush", "is", "great"]
        );
    }

    #[test]
    fn tokenize_empty_input() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_splits_apostrophes() {
        // Golden segmentation fixed by hand-applying the rules.
        assert_eq!(
            tokenize("Elvis Presley's album").tokens(),
            &["elvis", "presley", "s", "album"]
        );
    }

    #[test]
    fn tokenize_is_idempotent() {
        for text in ["Hello, World!", "ﬁnancial ﬂow", "Ｃａｆé №3", ""] {
            let once = tokenize(text);
            let twice = tokenize(&once.join());
            assert_eq!(once, twice, "not idempotent on {text:?}");
        }
    }

    #[test]
    fn drop_function_words_basic() {
        let lex = FunctionWords::bundled();
        let seq = TokenSeq::from_tokens(["the", "cat", "sat"]);
        assert_eq!(drop_function_words(&seq, &lex).tokens(), &["cat", "sat"]);
    }

    #[test]
    fn drop_function_words_fixpoint_and_empty() {
        let lex = FunctionWords::bundled();
        let seq = TokenSeq::from_tokens(["cat", "sat"]);
        assert_eq!(drop_function_words(&seq, &lex), seq);
        assert!(drop_function_words(&TokenSeq::default(), &lex).is_empty());
    }

    #[test]
    fn bundled_lexicon_parses_comments() {
        let lex = FunctionWords::bundled();
        assert!(lex.len() > 200);
        assert!(lex.contains("the"));
        assert!(!lex.contains("#"));
    }

    #[test]
    fn corpus_stats_counts_documents() {
        let docs = vec![
            TokenSeq::from_tokens(["a", "b"]),
            TokenSeq::from_tokens(["b", "c"]),
        ];
        let stats = CorpusStats::build(&docs).unwrap();
        assert_eq!(stats.doc_count(), 2);
        assert_eq!(stats.doc_freq("a"), 1);
        assert_eq!(stats.doc_freq("b"), 2);
        assert_eq!(stats.doc_freq("c"), 1);
        assert_eq!(stats.avg_doc_len(), 2.0);
    }

    #[test]
    fn corpus_stats_single_doc() {
        let stats = CorpusStats::build(&[TokenSeq::from_tokens(["a"])]).unwrap();
        assert_eq!(stats.doc_count(), 1);
        assert_eq!(stats.doc_freq("a"), 1);
        assert_eq!(stats.avg_doc_len(), 1.0);
    }

    #[test]
    fn corpus_stats_rejects_empty() {
        assert!(matches!(
            CorpusStats::build(&[]),
            Err(ConvQueryError::EmptyCorpus)
        ));
    }

    #[test]
    fn tf_idf_values() {
        let docs = vec![
            TokenSeq::from_tokens(["a", "b"]),
            TokenSeq::from_tokens(["b", "c"]),
        ];
        let stats = CorpusStats::build(&docs).unwrap();
        let doc = TokenSeq::from_tokens(["a", "b"]);
        // Ubiquitous token: idf = ln(2/2) = 0.
        assert_eq!(tf_idf("b", &doc, &stats), 0.0);
        // Hand-computed: 1 * ln(2/1).
        assert!((tf_idf("a", &doc, &stats) - 2f64.ln()).abs() < 1e-12);
        // Unseen token convention.
        assert_eq!(tf_idf("z", &doc, &stats), 0.0);
    }
}
