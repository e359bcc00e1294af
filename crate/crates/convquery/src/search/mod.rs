//! Search engines and the offline article cache.
//!
//! Three engine implementations share one interface: a live MediaWiki
//! client, a deterministic in-memory fixture, and a cache wrapper that
//! serves stored results (strict-offline) or writes through to an inner
//! engine (passthrough).

mod cache;
mod fixture;
mod live;
mod rate_limit;

pub use cache::{build_cache, ArticleCache, CacheEntry, CacheMode, CacheReport, CachedEngine};
pub use fixture::FixtureEngine;
pub use live::{LiveWikiClient, LiveWikiConfig};
pub use rate_limit::{testing, Clock, RateLimiter, SystemClock};

use crate::error::ConvQueryError;
use crate::supervision::Article;

/// Number of articles retained per query.
pub const DEFAULT_TOP_N: usize = 5;

/// A search backend returning at most `top_n` rank-ordered articles.
pub trait SearchEngine: Send + Sync {
    /// Retrieve articles for an already-normalized query.
    fn search(&self, query: &str) -> Result<Vec<Article>, ConvQueryError>;

    fn top_n(&self) -> usize {
        DEFAULT_TOP_N
    }
}

/// Trim, collapse internal whitespace, lowercase. Applied before dispatch
/// and before cache addressing, so case variants share one entry.
pub fn normalize_query(query: &str) -> String {
    query
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Normalize and dispatch; empty-after-normalization queries are rejected.
pub fn search(engine: &dyn SearchEngine, query: &str) -> Result<Vec<Article>, ConvQueryError> {
    let normalized = normalize_query(query);
    if normalized.is_empty() {
        return Err(ConvQueryError::EmptyQuery);
    }
    engine.search(&normalized)
}
