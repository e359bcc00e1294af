//! Live MediaWiki client. Searches via `action=query&list=search`, then
//! fetches the intro extract of each hit via `action=query&prop=extracts`.
//! Requests are rate limited and retried with exponential backoff.

use std::time::Duration;

use serde::Deserialize;

use crate::error::ConvQueryError;
use crate::search::rate_limit::{RateLimiter, SystemClock};
use crate::search::{SearchEngine, DEFAULT_TOP_N};
use crate::supervision::Article;

#[derive(Debug, Clone)]
pub struct LiveWikiConfig {
    pub endpoint: String,
    pub top_n: usize,
    pub requests_per_second: usize,
    /// Upper bound on in-flight requests when used from a batch builder.
    pub max_concurrency: usize,
    pub max_attempts: u32,
    pub user_agent: String,
}

impl Default for LiveWikiConfig {
    fn default() -> Self {
        LiveWikiConfig {
            endpoint: "https://en.wikipedia.org/w/api.php".to_string(),
            top_n: DEFAULT_TOP_N,
            requests_per_second: 10,
            max_concurrency: 4,
            max_attempts: 3,
            user_agent: concat!(
                "convquery/",
                env!("CARGO_PKG_VERSION"),
                " (dialogue query production toolkit)"
            )
            .to_string(),
        }
    }
}

pub struct LiveWikiClient {
    config: LiveWikiConfig,
    client: reqwest::blocking::Client,
    limiter: RateLimiter<SystemClock>,
}

#[derive(Deserialize)]
struct SearchResponse {
    query: Option<SearchQuery>,
}

#[derive(Deserialize)]
struct SearchQuery {
    search: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    title: String,
}

#[derive(Deserialize)]
struct ExtractResponse {
    query: Option<ExtractQuery>,
}

#[derive(Deserialize)]
struct ExtractQuery {
    pages: std::collections::HashMap<String, ExtractPage>,
}

#[derive(Deserialize)]
struct ExtractPage {
    title: String,
    extract: Option<String>,
}

impl LiveWikiClient {
    pub fn new(config: LiveWikiConfig) -> Result<Self, ConvQueryError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ConvQueryError::Transport {
                query: String::new(),
                attempts: 0,
                message: e.to_string(),
            })?;
        let limiter = RateLimiter::new(config.requests_per_second, SystemClock::new());
        Ok(LiveWikiClient {
            config,
            client,
            limiter,
        })
    }

    pub fn max_concurrency(&self) -> usize {
        self.config.max_concurrency
    }

    fn get_with_retry(
        &self,
        query: &str,
        params: &[(&str, &str)],
    ) -> Result<serde_json::Value, ConvQueryError> {
        let mut backoff = Duration::from_millis(500);
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_attempts {
            self.limiter.acquire();
            let result = self
                .client
                .get(&self.config.endpoint)
                .query(params)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json::<serde_json::Value>());
            match result {
                Ok(value) => return Ok(value),
                Err(e) => {
                    last_error = e.to_string();
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(ConvQueryError::Transport {
            query: query.to_string(),
            attempts: self.config.max_attempts,
            message: last_error,
        })
    }

    fn fetch_summary(&self, query: &str, title: &str) -> Result<Option<String>, ConvQueryError> {
        let value = self.get_with_retry(
            query,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("exintro", "1"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("format", "json"),
                ("titles", title),
            ],
        )?;
        let parsed: ExtractResponse =
            serde_json::from_value(value).map_err(|e| ConvQueryError::Transport {
                query: query.to_string(),
                attempts: 1,
                message: format!("malformed extract response: {e}"),
            })?;
        Ok(parsed.query.and_then(|q| {
            q.pages
                .into_values()
                .find(|p| p.title.eq_ignore_ascii_case(title) || p.extract.is_some())
                .and_then(|p| p.extract)
        }))
    }
}

impl SearchEngine for LiveWikiClient {
    fn search(&self, query: &str) -> Result<Vec<Article>, ConvQueryError> {
        let limit = self.config.top_n.to_string();
        let value = self.get_with_retry(
            query,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", query),
                ("srlimit", limit.as_str()),
                ("format", "json"),
            ],
        )?;
        let parsed: SearchResponse =
            serde_json::from_value(value).map_err(|e| ConvQueryError::Transport {
                query: query.to_string(),
                attempts: 1,
                message: format!("malformed search response: {e}"),
            })?;
        let hits = parsed.query.map(|q| q.search).unwrap_or_default();

        let mut articles = Vec::new();
        for hit in hits.into_iter().take(self.config.top_n) {
            let summary = self.fetch_summary(query, &hit.title)?.unwrap_or_default();
            if summary.is_empty() {
                continue;
            }
            let url = format!(
                "https://en.wikipedia.org/wiki/{}",
                hit.title.replace(' ', "_")
            );
            articles.push(Article {
                title: hit.title,
                summary,
                url,
                rank: articles.len() + 1,
            });
        }
        Ok(articles)
    }

    fn top_n(&self) -> usize {
        self.config.top_n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::search;

    // Verified once against the live endpoint; excluded from offline CI.
    #[test]
    #[ignore = "requires network access to en.wikipedia.org"]
    fn live_smoke_elvis_presley() {
        let client = LiveWikiClient::new(LiveWikiConfig::default()).unwrap();
        let results = search(&client, "Elvis Presley").unwrap();
        assert!(!results.is_empty());
        assert_eq!(results[0].title, "Elvis Presley");
        assert_eq!(results[0].rank, 1);
        assert!(!results[0].summary.is_empty());
    }
}
