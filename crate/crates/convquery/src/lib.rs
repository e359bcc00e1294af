//! convquery produces search-engine queries from multi-turn dialogue
//! contexts without annotated queries. Candidate spans are pruned from the
//! context, scored against the knowledge their retrievals share with the
//! gold next response, and a featurized softmax ranker is trained on those
//! noisy signals (cross-entropy pretraining, then REINFORCE fine-tuning).
//! Retrieval quality is measured by recall at k over gold article titles.
//!
//! The guide under `book/` walks through each piece; its code snippets are
//! compiled as doc-tests below.

pub mod candidates;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod scorer;
pub mod search;
pub mod supervision;
pub mod text;

pub use error::ConvQueryError;

// Keep the book's runnable snippets honest: each chapter is compiled as a
// doc-test against the current API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../book/src/introduction.md");
    chapter!(text_and_stats, "../book/src/text-and-stats.md");
    chapter!(candidate_extraction, "../book/src/candidate-extraction.md");
    chapter!(noisy_supervision, "../book/src/noisy-supervision.md");
    chapter!(search_and_cache, "../book/src/search-and-cache.md");
    chapter!(training_the_scorer, "../book/src/training-the-scorer.md");
    chapter!(evaluation, "../book/src/evaluation.md");
    chapter!(pipeline_and_cli, "../book/src/pipeline-and-cli.md");
}
