//! Dataset ingestion, run configuration, the synthetic benchmark, and the
//! stage orchestration behind the CLI.

pub mod config;
pub mod dataset;
pub mod stages;
pub mod synth;

pub use config::RunConfig;
pub use dataset::{load_dataset, parse_dataset, write_dataset, DatasetRecord, DatasetTurn};
pub use stages::{
    load_fixture_engine, run_pipeline, write_fixture_articles, EvalOutput, ExtractOutput,
    LabelOutput, LabelRecord, Pipeline, RunArtifacts, TrainOutput,
};
pub use synth::{generate_synthetic_benchmark, SyntheticBenchmark};
