//! A deterministic in-memory search engine for tests and the synthetic
//! benchmark. Articles are indexed by their title tokens; a query matches
//! an article by distinct-token overlap with its title, ties broken by
//! insertion order.

use std::collections::{HashMap, HashSet};

use crate::error::ConvQueryError;
use crate::search::{SearchEngine, DEFAULT_TOP_N};
use crate::supervision::Article;
use crate::text::tokenize;

#[derive(Debug, Clone)]
struct IndexedArticle {
    title: String,
    summary: String,
    url: String,
    title_tokens: HashSet<String>,
}

/// Immutable fixture engine; freely shareable across threads.
#[derive(Debug, Clone, Default)]
pub struct FixtureEngine {
    articles: Vec<IndexedArticle>,
    by_token: HashMap<String, Vec<usize>>,
    top_n: usize,
}

impl FixtureEngine {
    pub fn new() -> Self {
        FixtureEngine {
            articles: Vec::new(),
            by_token: HashMap::new(),
            top_n: DEFAULT_TOP_N,
        }
    }

    pub fn with_top_n(mut self, top_n: usize) -> Self {
        self.top_n = top_n;
        self
    }

    pub fn add_article(&mut self, title: &str, summary: &str) {
        let id = self.articles.len();
        let title_tokens: HashSet<String> =
            tokenize(title).iter().map(str::to_string).collect();
        for token in &title_tokens {
            self.by_token.entry(token.clone()).or_default().push(id);
        }
        self.articles.push(IndexedArticle {
            title: title.to_string(),
            summary: summary.to_string(),
            url: format!("fixture://{}", crate::text::normalize_surface(title).replace(' ', "_")),
            title_tokens,
        });
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    /// All stored articles, for use as knowledge pools.
    pub fn all_articles(&self) -> Vec<Article> {
        self.articles
            .iter()
            .enumerate()
            .map(|(i, a)| Article {
                title: a.title.clone(),
                summary: a.summary.clone(),
                url: a.url.clone(),
                rank: i + 1,
            })
            .collect()
    }
}

impl SearchEngine for FixtureEngine {
    fn search(&self, query: &str) -> Result<Vec<Article>, ConvQueryError> {
        let query_tokens: HashSet<String> =
            tokenize(query).iter().map(str::to_string).collect();
        let mut hits: HashMap<usize, usize> = HashMap::new();
        for token in &query_tokens {
            if let Some(ids) = self.by_token.get(token) {
                for &id in ids {
                    *hits.entry(id).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(usize, usize)> = hits.into_iter().collect();
        // More overlapping title tokens first; fully-covered titles beat
        // partial ones; stable on insertion order.
        ranked.sort_by(|a, b| {
            let full_a = a.1 == self.articles[a.0].title_tokens.len();
            let full_b = b.1 == self.articles[b.0].title_tokens.len();
            full_b
                .cmp(&full_a)
                .then(b.1.cmp(&a.1))
                .then(a.0.cmp(&b.0))
        });
        Ok(ranked
            .into_iter()
            .take(self.top_n)
            .enumerate()
            .map(|(rank, (id, _))| {
                let a = &self.articles[id];
                Article {
                    title: a.title.clone(),
                    summary: a.summary.clone(),
                    url: a.url.clone(),
                    rank: rank + 1,
                }
            })
            .collect())
    }

    fn top_n(&self) -> usize {
        self.top_n
    }
}
