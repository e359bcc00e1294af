//! Command-line entry point: extract -> build-cache -> label -> pretrain ->
//! finetune -> evaluate, plus the strategy comparison harness, a synthetic
//! benchmark generator and a non-interactive demo.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use convquery::candidates::{Dialogue, Turn};
use convquery::error::ConvQueryError;
use convquery::pipeline::{
    generate_synthetic_benchmark, run_pipeline, write_dataset, write_fixture_articles, Pipeline,
    RunConfig,
};
use convquery::scorer::{predict, ScorerModel};
use convquery::supervision::Strategy;

#[derive(Parser)]
#[command(name = "convquery", version, about = "Produce search queries from dialogue contexts")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Run configuration file (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Serve retrievals from the cache only; misses are errors.
    #[arg(long, global = true, conflicts_with = "passthrough")]
    offline: bool,

    /// On cache miss, fetch live and persist the result.
    #[arg(long, global = true)]
    passthrough: bool,

    /// Override the config's cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract candidate query pools for every dialogue.
    Extract,
    /// Fetch and store articles for every candidate query.
    BuildCache,
    /// Score candidates with the configured strategy and pick pseudo-labels.
    Label,
    /// Pretrain the scorer on pseudo-labels with cross-entropy.
    Pretrain,
    /// Fine-tune the pretrained scorer with REINFORCE.
    Finetune,
    /// Evaluate the trained scorer (R@1/3/5, ceiling, per-turn breakdown).
    Evaluate,
    /// Run every stage in order, skipping up-to-date artifacts.
    Run,
    /// Compare query scoring strategies side by side.
    CompareStrategies,
    /// Produce the query and retrieved knowledge for an ad-hoc context.
    Demo {
        /// Dialogue turns, oldest first; repeat the flag per turn.
        #[arg(long = "turn", required = true)]
        turns: Vec<String>,
        /// Trained model file; without it a uniform ranker is used.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate the seeded synthetic benchmark.
    Synth {
        #[arg(long, default_value_t = 200)]
        articles: usize,
        #[arg(long, default_value_t = 600)]
        dialogues: usize,
        /// Directory receiving dataset.jsonl, articles.jsonl, titles.txt
        /// and a ready-to-run config.toml.
        #[arg(long, default_value = "synth")]
        out_dir: PathBuf,
    },
}

fn load_config(global: &GlobalOpts) -> Result<RunConfig, ConvQueryError> {
    let mut config = RunConfig::load(&global.config)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(dir) = &global.cache_dir {
        config.cache_dir = dir.clone();
    }
    if global.offline {
        config.cache_mode = "strict".to_string();
    }
    if global.passthrough {
        config.cache_mode = "passthrough".to_string();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), ConvQueryError> {
    match cli.command {
        Command::Synth {
            articles,
            dialogues,
            out_dir,
        } => {
            let seed = cli.global.seed.unwrap_or(0);
            let bench = generate_synthetic_benchmark(seed, articles, dialogues);
            std::fs::create_dir_all(&out_dir).map_err(|source| ConvQueryError::Io {
                context: format!("creating {}", out_dir.display()),
                source,
            })?;
            write_dataset(&out_dir.join("dataset.jsonl"), &bench.dataset)?;
            write_fixture_articles(&out_dir.join("articles.jsonl"), &bench.engine.all_articles())?;
            std::fs::write(out_dir.join("titles.txt"), bench.titles.join("\n") + "\n").map_err(
                |source| ConvQueryError::Io {
                    context: "writing titles.txt".to_string(),
                    source,
                },
            )?;
            let config = format!(
                "dataset = \"{0}/dataset.jsonl\"\n\
                 title_lexicon = \"{0}/titles.txt\"\n\
                 fixture_articles = \"{0}/articles.jsonl\"\n\
                 cache_dir = \"{0}/cache\"\n\
                 out_dir = \"{0}/out\"\n\
                 seed = {1}\n\
                 holdout = {2}\n",
                out_dir.display(),
                seed,
                dialogues / 6
            );
            std::fs::write(out_dir.join("config.toml"), config).map_err(|source| {
                ConvQueryError::Io {
                    context: "writing config.toml".to_string(),
                    source,
                }
            })?;
            println!(
                "synth: {} articles, {} dialogues under {}",
                articles,
                dialogues,
                out_dir.display()
            );
            Ok(())
        }
        Command::Run => {
            let artifacts = run_pipeline(load_config(&cli.global)?)?;
            println!(
                "cache: fetched={} skipped={} failed={}",
                artifacts.cache_report.fetched,
                artifacts.cache_report.skipped,
                artifacts.cache_report.failed.len()
            );
            println!(
                "eval: R@1={:.4} R@3={:.4} R@5={:.4} ceiling={:.4}",
                artifacts.eval.row.r_at_1,
                artifacts.eval.row.r_at_3,
                artifacts.eval.row.r_at_5,
                artifacts.eval.ceiling
            );
            Ok(())
        }
        Command::Extract => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let pools = pipeline.extract()?;
            let total: usize = pools.pools.iter().map(Vec::len).sum();
            println!(
                "extract: {} candidates over {} dialogues",
                total,
                pools.pools.len()
            );
            Ok(())
        }
        Command::BuildCache => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let pools = pipeline.extract()?;
            let report = pipeline.build_cache_stage(&pools)?;
            println!(
                "build-cache: fetched={} skipped={} failed={}",
                report.fetched,
                report.skipped,
                report.failed.len()
            );
            Ok(())
        }
        Command::Label => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let pools = pipeline.extract()?;
            let labels = pipeline.label(&pools)?;
            let labeled = labels.labels.iter().flatten().count();
            println!("label: {} labeled, {} empty pools", labeled, labels.labels.len() - labeled);
            Ok(())
        }
        Command::Pretrain => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let pools = pipeline.extract()?;
            let labels = pipeline.label(&pools)?;
            let out = pipeline.pretrain_stage(&pools, &labels)?;
            println!(
                "pretrain: final loss {:.6} after {} epochs",
                out.trace.last().copied().unwrap_or(f64::NAN),
                out.trace.len()
            );
            Ok(())
        }
        Command::Finetune => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let pools = pipeline.extract()?;
            let labels = pipeline.label(&pools)?;
            let pretrained = pipeline.pretrain_stage(&pools, &labels)?;
            let out = pipeline.finetune_stage(&pools, &labels, &pretrained.model)?;
            println!(
                "finetune: held-out argmax reward {:.6} after {} epochs",
                out.trace.last().copied().unwrap_or(f64::NAN),
                out.trace.len()
            );
            Ok(())
        }
        Command::Evaluate => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let pools = pipeline.extract()?;
            let labels = pipeline.label(&pools)?;
            let pretrained = pipeline.pretrain_stage(&pools, &labels)?;
            let finetuned = pipeline.finetune_stage(&pools, &labels, &pretrained.model)?;
            let eval = pipeline.evaluate_stage(&finetuned.model)?;
            println!(
                "evaluate: R@1={:.4} R@3={:.4} R@5={:.4} ceiling={:.4}",
                eval.row.r_at_1, eval.row.r_at_3, eval.row.r_at_5, eval.ceiling
            );
            Ok(())
        }
        Command::CompareStrategies => {
            let config = load_config(&cli.global)?;
            let seed = config.seed;
            let pipeline = Pipeline::load(config)?;
            let strategies = [
                Strategy::Random { seed },
                Strategy::TfIdf,
                Strategy::Bm25Qu,
                Strategy::Bm25,
                Strategy::Bm25PlusPlus,
            ];
            let rows = pipeline.compare_strategies_stage(&strategies)?;
            print!("{}", convquery::eval::format_table(&rows));
            Ok(())
        }
        Command::Demo { turns, model } => {
            let pipeline = Pipeline::load(load_config(&cli.global)?)?;
            let model = match model {
                Some(path) => ScorerModel::load(&path)?,
                None => ScorerModel::zeros(),
            };
            let dialogue = Dialogue::new(
                turns
                    .into_iter()
                    .map(|t| Turn::new("user", t))
                    .collect::<Vec<_>>(),
                "n/a",
            );
            let pool = convquery::candidates::candidate_pool(
                &dialogue,
                &pipeline.lexicon,
                &pipeline.global_stats,
                &pipeline.function_words,
                &pipeline.config.candidate_config(),
            );
            match predict(&model, &pool, &dialogue, &pipeline.global_stats) {
                Ok(ranked) => {
                    let top = &ranked[0];
                    println!("query: {} (p={:.4})", top.candidate.surface, top.probability);
                    let engine = pipeline.query_engine()?;
                    for article in convquery::search::search(&engine, &top.candidate.surface)? {
                        let preview: String = article.summary.chars().take(120).collect();
                        println!("  [{}] {}: {}", article.rank, article.title, preview);
                    }
                    Ok(())
                }
                Err(ConvQueryError::EmptyPool) => {
                    println!("no query: candidate pool is empty for this context");
                    Ok(())
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e);
            ExitCode::FAILURE
        }
    }
}
