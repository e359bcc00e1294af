//! Content-addressed offline article cache.
//!
//! One JSON file per distinct normalized query, named by the lowercase hex
//! SHA-256 of that query, so the store is self-describing: every entry's
//! file name recomputes from its stored query. Writes go to a temporary
//! file first and are renamed into place.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConvQueryError;
use crate::search::{normalize_query, SearchEngine};
use crate::supervision::Article;

/// One cached retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub query: String,
    pub fetched_at: DateTime<Utc>,
    pub articles: Vec<Article>,
}

/// Lowercase hex SHA-256 of a normalized query, used as the entry file stem.
pub fn entry_key(normalized_query: &str) -> String {
    let digest = Sha256::digest(normalized_query.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory-backed cache of [`CacheEntry`] files.
#[derive(Debug, Clone)]
pub struct ArticleCache {
    dir: PathBuf,
}

impl ArticleCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ConvQueryError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| ConvQueryError::Io {
            context: format!("creating cache directory {}", dir.display()),
            source,
        })?;
        Ok(ArticleCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, normalized_query: &str) -> PathBuf {
        self.dir.join(format!("{}.json", entry_key(normalized_query)))
    }

    pub fn contains(&self, query: &str) -> bool {
        self.entry_path(&normalize_query(query)).exists()
    }

    pub fn read(&self, query: &str) -> Result<Option<CacheEntry>, ConvQueryError> {
        let path = self.entry_path(&normalize_query(query));
        if !path.exists() {
            return Ok(None);
        }
        let contents = std::fs::read_to_string(&path).map_err(|source| ConvQueryError::Io {
            context: format!("reading cache entry {}", path.display()),
            source,
        })?;
        let entry: CacheEntry =
            serde_json::from_str(&contents).map_err(|e| ConvQueryError::Parse {
                line: 0,
                message: format!("cache entry {}: {e}", path.display()),
            })?;
        Ok(Some(entry))
    }

    /// Atomic write: temporary file in the same directory, then rename.
    pub fn write(&self, query: &str, articles: &[Article]) -> Result<CacheEntry, ConvQueryError> {
        let normalized = normalize_query(query);
        let entry = CacheEntry {
            query: normalized.clone(),
            fetched_at: Utc::now(),
            articles: articles.to_vec(),
        };
        let path = self.entry_path(&normalized);
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        let json = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        std::fs::write(&tmp, json).map_err(|source| ConvQueryError::Io {
            context: format!("writing cache entry {}", tmp.display()),
            source,
        })?;
        std::fs::rename(&tmp, &path).map_err(|source| ConvQueryError::Io {
            context: format!("renaming cache entry into {}", path.display()),
            source,
        })?;
        Ok(entry)
    }

    /// All stored entries, in file-name order.
    pub fn entries(&self) -> Result<Vec<CacheEntry>, ConvQueryError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)
            .map_err(|source| ConvQueryError::Io {
                context: format!("listing cache directory {}", self.dir.display()),
                source,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut entries = Vec::with_capacity(paths.len());
        for path in paths {
            let contents = std::fs::read_to_string(&path).map_err(|source| ConvQueryError::Io {
                context: format!("reading cache entry {}", path.display()),
                source,
            })?;
            let entry: CacheEntry =
                serde_json::from_str(&contents).map_err(|e| ConvQueryError::Parse {
                    line: 0,
                    message: format!("cache entry {}: {e}", path.display()),
                })?;
            entries.push(entry);
        }
        Ok(entries)
    }
}

/// Outcome counts of a cache-building pass. Per-query failures are recorded
/// instead of aborting the batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheReport {
    pub fetched: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

/// Fetch and store every distinct normalized query not already cached.
/// `max_age` forces a refetch of entries older than the given duration;
/// by default entries never expire.
pub fn build_cache(
    engine: &dyn SearchEngine,
    queries: &[String],
    cache: &ArticleCache,
    max_age: Option<chrono::Duration>,
) -> Result<CacheReport, ConvQueryError> {
    let mut report = CacheReport::default();
    let mut seen = std::collections::HashSet::new();
    for query in queries {
        let normalized = normalize_query(query);
        if normalized.is_empty() || !seen.insert(normalized.clone()) {
            continue;
        }
        let fresh = match (cache.read(&normalized)?, max_age) {
            (Some(_), None) => true,
            (Some(entry), Some(age)) => Utc::now() - entry.fetched_at <= age,
            (None, _) => false,
        };
        if fresh {
            report.skipped += 1;
            continue;
        }
        match engine.search(&normalized) {
            Ok(articles) => {
                cache.write(&normalized, &articles)?;
                report.fetched += 1;
            }
            Err(e) => report.failed.push((normalized, e.to_string())),
        }
    }
    Ok(report)
}

/// Whether cache misses error out or fall through to a live engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Miss is an error; runs are fully reproducible.
    Strict,
    /// Miss delegates to the inner engine and persists the result.
    Passthrough,
}

/// A [`SearchEngine`] serving from an [`ArticleCache`].
pub struct CachedEngine {
    cache: ArticleCache,
    mode: CacheMode,
    inner: Option<Box<dyn SearchEngine>>,
}

impl CachedEngine {
    pub fn strict(cache: ArticleCache) -> Self {
        CachedEngine {
            cache,
            mode: CacheMode::Strict,
            inner: None,
        }
    }

    pub fn passthrough(cache: ArticleCache, inner: Box<dyn SearchEngine>) -> Self {
        CachedEngine {
            cache,
            mode: CacheMode::Passthrough,
            inner: Some(inner),
        }
    }

    pub fn cache(&self) -> &ArticleCache {
        &self.cache
    }
}

impl SearchEngine for CachedEngine {
    fn search(&self, query: &str) -> Result<Vec<Article>, ConvQueryError> {
        let normalized = normalize_query(query);
        if let Some(entry) = self.cache.read(&normalized)? {
            return Ok(entry.articles);
        }
        match (self.mode, &self.inner) {
            (CacheMode::Passthrough, Some(inner)) => {
                let articles = inner.search(&normalized)?;
                self.cache.write(&normalized, &articles)?;
                Ok(articles)
            }
            _ => Err(ConvQueryError::CacheMiss { query: normalized }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::FixtureEngine;

    fn fixture() -> FixtureEngine {
        let mut engine = FixtureEngine::new();
        engine.add_article("Rush (band)", "Rush was a Canadian rock band from Toronto.");
        engine.add_article("Elvis Presley", "Elvis Presley was an American singer.");
        engine
    }

    #[test]
    fn round_trip_preserves_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArticleCache::open(dir.path()).unwrap();
        let engine = fixture();
        let articles = engine.search("rush").unwrap();
        cache.write("Rush", &articles).unwrap();
        let entry = cache.read("rush").unwrap().unwrap();
        assert_eq!(entry.articles, articles);
        assert_eq!(entry.query, "rush");
    }

    #[test]
    fn case_variants_share_one_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArticleCache::open(dir.path()).unwrap();
        let engine = fixture();
        let report = build_cache(
            &engine,
            &["Rush".to_string(), "rush".to_string()],
            &cache,
            None,
        )
        .unwrap();
        assert_eq!(report.fetched, 1);
        assert_eq!(cache.entries().unwrap().len(), 1);
    }

    #[test]
    fn rebuild_over_complete_cache_fetches_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArticleCache::open(dir.path()).unwrap();
        let engine = fixture();
        let queries = vec!["rush".to_string(), "elvis presley".to_string()];
        build_cache(&engine, &queries, &cache, None).unwrap();
        let report = build_cache(&engine, &queries, &cache, None).unwrap();
        assert_eq!(report.fetched, 0);
        assert_eq!(report.skipped, 2);
    }

    #[test]
    fn filename_recomputes_from_stored_query() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArticleCache::open(dir.path()).unwrap();
        cache.write("Some Query", &[]).unwrap();
        for entry in cache.entries().unwrap() {
            let expected = cache.entry_path(&entry.query);
            assert!(expected.exists(), "entry path mismatch for {}", entry.query);
        }
    }

    #[test]
    fn strict_mode_errors_on_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArticleCache::open(dir.path()).unwrap();
        let engine = CachedEngine::strict(cache);
        match engine.search("missing") {
            Err(ConvQueryError::CacheMiss { query }) => assert_eq!(query, "missing"),
            other => panic!("expected cache miss, got {other:?}"),
        }
    }

    #[test]
    fn passthrough_persists_then_returns() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArticleCache::open(dir.path()).unwrap();
        let engine = CachedEngine::passthrough(cache, Box::new(fixture()));
        let articles = engine.search("rush").unwrap();
        assert!(!articles.is_empty());
        assert!(engine.cache().contains("rush"));
        // Second call served from cache even without the inner engine.
        let strict = CachedEngine::strict(ArticleCache::open(engine.cache().dir()).unwrap());
        assert_eq!(strict.search("rush").unwrap(), articles);
    }
}
