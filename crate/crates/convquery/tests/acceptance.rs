//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the per-criterion report.

use std::collections::HashSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use convquery::candidates::{candidate_pool, CandidateConfig, Dialogue};
use convquery::eval::{per_turn_breakdown, query_hit, recall_at, ceiling_recall, EvalContext};
use convquery::pipeline::{
    generate_synthetic_benchmark, run_pipeline, write_dataset, write_fixture_articles, Pipeline,
    RunConfig,
};
use convquery::scorer::{
    cross_entropy_gradient, cross_entropy_loss, reinforce_surrogate_gradient,
    reinforce_surrogate_loss, rescale_rewards, score_distribution, LabeledTurn, RewardTurn,
    ScorerModel, FEATURE_DIM,
};
use convquery::search::{testing::MockClock, ArticleCache, Clock, RateLimiter, SearchEngine};
use convquery::supervision::{
    bm25, supervision_score, Article, RetrievalResult, Strategy, SupervisionMode,
};
use convquery::text::{CorpusStats, FunctionWords, TokenSeq};

fn report(n: usize, name: &str, ok: bool) {
    println!(
        "criterion {:>2} ({name}): {}",
        n,
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({name}) failed");
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> TokenSeq {
    TokenSeq::from_tokens((0..len).map(|_| format!("t{}", rng.gen_range(0..vocab))))
}

/// Independently coded Okapi BM25 used only as an oracle here.
fn bm25_reference(query: &[String], doc: &[String], corpus: &[Vec<String>], k1: f64, b: f64) -> f64 {
    let n_docs = corpus.len() as f64;
    let total_len: usize = corpus.iter().map(Vec::len).sum();
    let avg_len = total_len as f64 / n_docs;
    let mut score = 0.0;
    let distinct: HashSet<&String> = query.iter().collect();
    for term in distinct {
        let tf = doc.iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = corpus.iter().filter(|d| d.contains(term)).count() as f64;
        let idf = ((n_docs - df + 0.5) / (df + 0.5) + 1.0).ln();
        let denom = tf + k1 * (1.0 - b + b * doc.len() as f64 / avg_len);
        score += idf * tf * (k1 + 1.0) / denom;
    }
    score
}

#[test]
fn criterion_01_bm25_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_delta: f64 = 0.0;
    for _ in 0..1000 {
        let n_docs = rng.gen_range(1..=10);
        let docs: Vec<TokenSeq> = (0..n_docs)
            .map(|_| {
                let len = rng.gen_range(1..=20);
                random_tokens(&mut rng, 25, len)
            })
            .collect();
        let stats = CorpusStats::build(&docs).unwrap();
        let query_len = rng.gen_range(1..=8);
        let query = random_tokens(&mut rng, 30, query_len);
        let doc = docs[rng.gen_range(0..docs.len())].clone();
        let ours = bm25(&query, &doc, &stats, 1.2, 0.75);
        let raw_corpus: Vec<Vec<String>> = docs.iter().map(|d| d.tokens().to_vec()).collect();
        let reference = bm25_reference(
            query.tokens(),
            doc.tokens(),
            &raw_corpus,
            1.2,
            0.75,
        );
        max_delta = max_delta.max((ours - reference).abs());
    }
    let elapsed = started.elapsed();
    report(
        1,
        "bm25 oracle equivalence",
        max_delta <= 1e-9 && elapsed < Duration::from_secs(5),
    );
}

#[test]
fn criterion_02_supervision_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let fw = FunctionWords::bundled();
    let mut ok = true;
    for case in 0..10_000 {
        let docs: Vec<TokenSeq> = (0..rng.gen_range(2..=6))
            .map(|_| {
                let len = rng.gen_range(1..=12);
                random_tokens(&mut rng, 15, len)
            })
            .collect();
        let stats = CorpusStats::build(&docs).unwrap();
        let response_len = rng.gen_range(1..=10);
        let response = random_tokens(&mut rng, 15, response_len).join();
        let mode = if case % 2 == 0 {
            SupervisionMode::Plain
        } else {
            SupervisionMode::PlusPlus
        };
        let mut articles: Vec<Article> = (0..rng.gen_range(0..=4))
            .map(|i| {
                let len = rng.gen_range(1..=12);
                Article {
                    title: format!("A{i}"),
                    summary: random_tokens(&mut rng, 15, len).join(),
                    url: String::new(),
                    rank: i + 1,
                }
            })
            .collect();
        let base = supervision_score(
            &RetrievalResult::new("q", articles.clone()),
            &response,
            &stats,
            mode,
            None,
            &fw,
        );
        // Monotone under article addition.
        articles.push(Article {
            title: "extra".into(),
            summary: random_tokens(&mut rng, 15, 8).join(),
            url: String::new(),
            rank: articles.len() + 1,
        });
        let grown = supervision_score(
            &RetrievalResult::new("q", articles.clone()),
            &response,
            &stats,
            mode,
            None,
            &fw,
        );
        ok &= grown >= base;
        // Invariant to article order.
        let mut shuffled = articles.clone();
        shuffled.shuffle(&mut rng);
        let reordered = supervision_score(
            &RetrievalResult::new("q", shuffled),
            &response,
            &stats,
            mode,
            None,
            &fw,
        );
        ok &= (reordered - grown).abs() < 1e-12;
        // Positivity on self-match (content tokens never in the lexicon).
        let self_match = supervision_score(
            &RetrievalResult::new(
                "q",
                vec![Article {
                    title: "self".into(),
                    summary: response.clone(),
                    url: String::new(),
                    rank: 1,
                }],
            ),
            &response,
            &stats,
            mode,
            None,
            &fw,
        );
        ok &= self_match > 0.0;
        if !ok {
            break;
        }
    }
    report(2, "supervision semantics", ok);
}

#[test]
fn criterion_03_reward_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ok = true;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let rescaled = rescale_rewards(&rewards);
        ok &= rescaled.iter().all(|r| (-0.5..=0.5).contains(r));
        let min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            let arg_min = rewards.iter().position(|&r| r == min).unwrap();
            let arg_max = rewards.iter().position(|&r| r == max).unwrap();
            ok &= (rescaled[arg_min] + 0.5).abs() < 1e-12;
            ok &= (rescaled[arg_max] - 0.5).abs() < 1e-12;
        }
    }
    ok &= rescale_rewards(&[4.2; 7]) == vec![0.0; 7];
    report(3, "reward rescaling", ok);
}

fn random_model(rng: &mut ChaCha8Rng) -> ScorerModel {
    let mut model = ScorerModel::zeros();
    for w in model.weights.iter_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    model
}

fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; FEATURE_DIM]> {
    (0..n)
        .map(|_| {
            let mut f = [0.0; FEATURE_DIM];
            for x in f.iter_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
            f
        })
        .collect()
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

#[test]
fn criterion_04_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for pair in 0..100 {
        let model = random_model(&mut rng);
        let n = rng.gen_range(2..=6);
        let features = random_features(&mut rng, n);
        if pair % 2 == 0 {
            let dataset = vec![LabeledTurn {
                turn_id: pair,
                features,
                label: rng.gen_range(0..n),
            }];
            let analytic = cross_entropy_gradient(&model, &dataset).unwrap();
            let mut numeric = vec![0.0; FEATURE_DIM];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let mut plus = model.clone();
                plus.weights[i] += h;
                let mut minus = model.clone();
                minus.weights[i] -= h;
                *slot = (cross_entropy_loss(&plus, &dataset).unwrap()
                    - cross_entropy_loss(&minus, &dataset).unwrap())
                    / (2.0 * h);
            }
            worst = worst.max(rel_error(&analytic, &numeric));
        } else {
            let turn = RewardTurn {
                turn_id: pair,
                rewards: (0..n).map(|_| rng.gen_range(0.0..5.0)).collect(),
                features,
            };
            let sampled = rng.gen_range(0..n);
            let delta = rng.gen_range(-1.0..1.0);
            let analytic = reinforce_surrogate_gradient(&model, &turn, sampled, delta).unwrap();
            let mut numeric = vec![0.0; FEATURE_DIM];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let mut plus = model.clone();
                plus.weights[i] += h;
                let mut minus = model.clone();
                minus.weights[i] -= h;
                *slot = (reinforce_surrogate_loss(&plus, &turn, sampled, delta).unwrap()
                    - reinforce_surrogate_loss(&minus, &turn, sampled, delta).unwrap())
                    / (2.0 * h);
            }
            worst = worst.max(rel_error(&analytic, &numeric));
        }
    }
    report(4, "gradient finite-difference checks", worst < 1e-4);
}

#[test]
fn criterion_05_softmax_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut model = ScorerModel::zeros();
    model.weights[0] = 1.0;
    let mut ok = true;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=10);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let features: Vec<[f64; FEATURE_DIM]> = logits
            .iter()
            .map(|&l| {
                let mut f = [0.0; FEATURE_DIM];
                f[0] = l;
                f
            })
            .collect();
        let probs = score_distribution(&model, &features).unwrap();
        let sum: f64 = probs.iter().sum();
        ok &= (sum - 1.0).abs() <= 1e-12;
        ok &= probs.iter().all(|p| *p > 0.0);

        let shift = rng.gen_range(-20.0..20.0);
        let shifted: Vec<[f64; FEATURE_DIM]> = features
            .iter()
            .map(|f| {
                let mut g = *f;
                g[0] += shift;
                g
            })
            .collect();
        let probs_shifted = score_distribution(&model, &shifted).unwrap();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap()
                .0
        };
        ok &= argmax(&probs) == argmax(&probs_shifted);
        if !ok {
            break;
        }
    }
    report(5, "softmax contracts", ok);
}

/// Write the synthetic benchmark and a matching run configuration.
fn synth_config(dir: &Path, seed: u64, articles: usize, dialogues: usize, holdout: usize) -> RunConfig {
    let bench = generate_synthetic_benchmark(seed, articles, dialogues);
    write_dataset(&dir.join("dataset.jsonl"), &bench.dataset).unwrap();
    write_fixture_articles(&dir.join("articles.jsonl"), &bench.engine.all_articles()).unwrap();
    std::fs::write(dir.join("titles.txt"), bench.titles.join("\n") + "\n").unwrap();

    let mut config = RunConfig::default();
    config.dataset = dir.join("dataset.jsonl");
    config.title_lexicon = Some(dir.join("titles.txt"));
    config.fixture_articles = Some(dir.join("articles.jsonl"));
    config.cache_dir = dir.join("cache");
    config.out_dir = dir.join("out");
    config.seed = seed;
    config.holdout = holdout;
    config
}

#[test]
fn criterion_06_synthetic_end_to_end() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = synth_config(dir.path(), 20260824, 200, 600, 100);

    let artifacts = run_pipeline(config.clone()).unwrap();
    let ceiling = artifacts.eval.ceiling;
    let scorer_r1 = artifacts.eval.row.r_at_1;

    let pipeline = Pipeline::load(config.clone()).unwrap();
    let rows = pipeline
        .compare_strategies_stage(&[
            Strategy::Random { seed: config.seed },
            Strategy::TfIdf,
            Strategy::Bm25PlusPlus,
        ])
        .unwrap();
    let r1 = |name: &str| rows.iter().find(|r| r.strategy == name).unwrap().r_at_1;
    let elapsed = started.elapsed();

    println!(
        "  ceiling={ceiling:.4} scorer={scorer_r1:.4} random={:.4} tfidf={:.4} bm25++={:.4} ({elapsed:?})",
        r1("random"),
        r1("tf-idf"),
        r1("bm25++"),
    );
    report(
        6,
        "synthetic end-to-end",
        ceiling == 1.0
            && scorer_r1 >= 0.85
            && scorer_r1 > r1("tf-idf")
            && r1("random") < r1("tf-idf")
            && r1("tf-idf") < r1("bm25++")
            && elapsed < Duration::from_secs(120),
    );
}

#[test]
fn criterion_07_recall_laws() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_config(dir.path(), 7, 60, 120, 30);
    let artifacts = run_pipeline(config.clone()).unwrap();

    let pipeline = Pipeline::load(config).unwrap();
    let engine = pipeline.query_engine().unwrap();
    let candidate_config = pipeline.config.candidate_config();
    let ctx = EvalContext {
        lexicon: &pipeline.lexicon,
        global_stats: &pipeline.global_stats,
        function_words: &pipeline.function_words,
        candidate_config: &candidate_config,
    };
    let mut ok = true;
    for strategy in [
        Strategy::Random { seed: 7 },
        Strategy::TfIdf,
        Strategy::Bm25Qu,
        Strategy::Bm25,
        Strategy::Bm25PlusPlus,
    ] {
        let records =
            convquery::eval::evaluate_strategy(&pipeline.dialogues, &engine, &ctx, strategy)
                .unwrap();
        let r1 = recall_at(&records, 1).unwrap();
        let r3 = recall_at(&records, 3).unwrap();
        let r5 = recall_at(&records, 5).unwrap();
        let rm = ceiling_recall(&records).unwrap();
        ok &= r1 <= r3 && r3 <= r5 && r5 <= rm;
        let breakdown = per_turn_breakdown(&records, 9).unwrap();
        let total: usize = breakdown.iter().map(|(_, _, n)| n).sum();
        let weighted: f64 =
            breakdown.iter().map(|(_, r, n)| r * *n as f64).sum::<f64>() / total as f64;
        ok &= (weighted - r1).abs() <= 1e-12;
    }
    // The trained model's run obeys the same laws.
    ok &= artifacts.eval.row.r_at_1 <= artifacts.eval.row.r_at_3;
    ok &= artifacts.eval.row.r_at_3 <= artifacts.eval.row.r_at_5;
    ok &= artifacts.eval.row.r_at_5 <= artifacts.eval.ceiling;
    report(7, "recall laws", ok);
}

#[test]
fn criterion_08_window_monotonicity() {
    let fw = FunctionWords::bundled();
    let mut ok = true;
    let mut checked = 0;
    for seed in 0..20u64 {
        let bench = generate_synthetic_benchmark(800 + seed, 30, 50);
        let lexicon = convquery::candidates::TitleLexicon::new(bench.titles.iter());
        let dialogues: Vec<Dialogue> = bench.dataset.iter().map(|r| r.to_dialogue()).collect();
        let docs: Vec<TokenSeq> = dialogues
            .iter()
            .flat_map(|d| d.turns.iter().map(|t| t.tokens.clone()))
            .collect();
        let stats = CorpusStats::build(&docs).unwrap();
        for dialogue in &dialogues {
            checked += 1;
            let mut prev: HashSet<String> = HashSet::new();
            let mut prev_hit = false;
            for k in 1..=dialogue.turns.len() {
                let config = CandidateConfig {
                    window_k: Some(k),
                    ..CandidateConfig::default()
                };
                let pool = candidate_pool(dialogue, &lexicon, &stats, &fw, &config);
                let surfaces: HashSet<String> =
                    pool.iter().map(|c| c.surface.clone()).collect();
                ok &= prev.is_subset(&surfaces);
                // A turn that hits at window k still hits at k+1.
                let hit = pool.iter().any(|c| {
                    let articles = bench.engine.search(&c.surface).unwrap();
                    query_hit(
                        &RetrievalResult::new(c.surface.clone(), articles),
                        &dialogue.gold_titles,
                    )
                });
                ok &= !prev_hit || hit;
                prev = surfaces;
                prev_hit = hit;
            }
        }
    }
    println!("  checked {checked} dialogues");
    report(8, "window monotonicity", ok && checked >= 1000);
}

#[test]
fn criterion_09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_config(dir.path(), 99, 60, 120, 30);

    run_pipeline(config.clone()).unwrap();
    let snapshot = |name: &str| std::fs::read(config.out_dir.join(name)).unwrap();
    let first: Vec<Vec<u8>> = ["labels.json", "model.json", "report.txt", "report.tsv"]
        .iter()
        .map(|n| snapshot(n))
        .collect();

    // Wipe the artifacts (but not the cache) and rerun strict-offline.
    std::fs::remove_dir_all(&config.out_dir).unwrap();
    run_pipeline(config.clone()).unwrap();
    let second: Vec<Vec<u8>> = ["labels.json", "model.json", "report.txt", "report.tsv"]
        .iter()
        .map(|n| snapshot(n))
        .collect();

    report(9, "strict-offline determinism", first == second);
}

#[test]
fn criterion_10_cache_integrity_and_rate_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ArticleCache::open(dir.path()).unwrap();
    let articles = vec![Article {
        title: "Rush (band)".into(),
        summary: "Rush was a Canadian rock band.".into(),
        url: "fixture://rush".into(),
        rank: 1,
    }];
    cache.write("Rush  Band", &articles).unwrap();
    let entry = cache.read("rush band").unwrap().unwrap();
    let mut ok = entry.articles == articles;
    // Self-describing store: file name recomputes from the stored query.
    ok &= cache.entry_path(&entry.query).exists();

    // Rate limiter at 100x pressure under a mock clock: 10 req/s budget,
    // 1000 back-to-back acquisitions.
    let limiter = RateLimiter::new(10, MockClock::new());
    let mut timestamps = Vec::with_capacity(1000);
    for _ in 0..1000 {
        limiter.acquire();
        timestamps.push(limiter.clock().now());
    }
    for (i, &start) in timestamps.iter().enumerate() {
        let in_window = timestamps[i..]
            .iter()
            .take_while(|&&t| t - start < Duration::from_secs(1))
            .count();
        ok &= in_window <= 10;
    }
    report(10, "cache integrity and rate limiting", ok);
}
