//! The trainable query producer: a linear softmax ranker over engineered
//! candidate features, pretrained with cross-entropy against pseudo-labels
//! and fine-tuned with REINFORCE using the noisy supervision score as
//! reward, a model-argmax baseline and min-max reward rescaling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::candidates::{CandidateQuery, CandidateSource, Dialogue};
use crate::error::ConvQueryError;
use crate::text::{tf_idf, CorpusStats};

/// Fixed feature order; [`featurize`] fills exactly these slots.
pub const FEATURE_NAMES: [&str; 10] = [
    "sum_idf",
    "max_context_tf_idf",
    "turn_recency",
    "relative_position",
    "token_length",
    "occurrence_count",
    "capitalized_in_source",
    "source_dictionary",
    "last_turn_overlap",
    "bias",
];

pub const FEATURE_DIM: usize = FEATURE_NAMES.len();

pub type FeatureVector = [f64; FEATURE_DIM];

/// Deterministic feature extraction for one candidate in its dialogue.
pub fn featurize(
    candidate: &CandidateQuery,
    dialogue: &Dialogue,
    stats: &CorpusStats,
) -> FeatureVector {
    let tokens = candidate.tokens();
    let context = dialogue.context_tokens();
    let turn = &dialogue.turns[candidate.turn_index - 1];
    let last_turn = &dialogue.turns[dialogue.turns.len() - 1].tokens;

    let sum_idf: f64 = tokens.iter().map(|t| stats.idf(t)).sum();
    let max_context_tf_idf = tokens
        .iter()
        .map(|t| tf_idf(t, &context, stats))
        .fold(0.0, f64::max);
    let recency = (dialogue.last_turn_index() - candidate.turn_index) as f64;
    let relative_position = if turn.tokens.is_empty() {
        0.0
    } else {
        candidate.begin as f64 / turn.tokens.len() as f64
    };
    let occurrence_count = count_span_occurrences(&context, &tokens) as f64;
    let capitalized = span_capitalized_in_raw(&turn.raw, &candidate.surface) as u8 as f64;
    let source = match candidate.source {
        CandidateSource::Dictionary => 1.0,
        CandidateSource::Metric => 0.0,
    };
    let overlap = if tokens.is_empty() {
        0.0
    } else {
        tokens.iter().filter(|t| last_turn.contains(t)).count() as f64 / tokens.len() as f64
    };

    [
        sum_idf,
        max_context_tf_idf,
        recency,
        relative_position,
        tokens.len() as f64,
        occurrence_count,
        capitalized,
        source,
        overlap,
        1.0,
    ]
}

fn count_span_occurrences(context: &crate::text::TokenSeq, span: &crate::text::TokenSeq) -> usize {
    if span.is_empty() || context.len() < span.len() {
        return 0;
    }
    let ctx = context.tokens();
    let pat = span.tokens();
    (0..=ctx.len() - pat.len())
        .filter(|&i| &ctx[i..i + pat.len()] == pat)
        .count()
}

fn span_capitalized_in_raw(raw: &str, surface: &str) -> bool {
    let first = match surface.split(' ').next() {
        Some(f) if !f.is_empty() => f,
        _ => return false,
    };
    raw.split_whitespace().any(|word| {
        crate::text::normalize_surface(word) == first
            && word.chars().next().is_some_and(char::is_uppercase)
    })
}

/// Hyperparameters and provenance stored with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
}

/// Named linear weights defining a softmax distribution over candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub metadata: TrainingMetadata,
}

impl ScorerModel {
    /// All-zero weights: a uniform ranker.
    pub fn zeros() -> Self {
        ScorerModel {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: vec![0.0; FEATURE_DIM],
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn logit(&self, features: &FeatureVector) -> f64 {
        self.weights
            .iter()
            .zip(features.iter())
            .map(|(w, x)| w * x)
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), ConvQueryError> {
        let json = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, json).map_err(|source| ConvQueryError::Io {
            context: format!("writing model {}", path.display()),
            source,
        })
    }

    /// Load and validate: refuses files whose feature names or dimension do
    /// not match this build.
    pub fn load(path: &Path) -> Result<Self, ConvQueryError> {
        let contents = std::fs::read_to_string(path).map_err(|source| ConvQueryError::Io {
            context: format!("reading model {}", path.display()),
            source,
        })?;
        let model: ScorerModel =
            serde_json::from_str(&contents).map_err(|e| ConvQueryError::ModelFormat(e.to_string()))?;
        if model.feature_names != FEATURE_NAMES {
            return Err(ConvQueryError::ModelFormat(format!(
                "feature names {:?} do not match this build",
                model.feature_names
            )));
        }
        if model.weights.len() != FEATURE_DIM {
            return Err(ConvQueryError::ModelFormat(format!(
                "expected {} weights, found {}",
                FEATURE_DIM,
                model.weights.len()
            )));
        }
        if !model.weights.iter().all(|w| w.is_finite()) {
            return Err(ConvQueryError::ModelFormat("non-finite weight".to_string()));
        }
        Ok(model)
    }
}

/// Softmax over per-candidate logits; strictly positive, sums to 1.
pub fn score_distribution(
    model: &ScorerModel,
    features: &[FeatureVector],
) -> Result<Vec<f64>, ConvQueryError> {
    if features.is_empty() {
        return Err(ConvQueryError::EmptyCandidates);
    }
    let logits: Vec<f64> = features.iter().map(|f| model.logit(f)).collect();
    Ok(softmax(&logits))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Sum of per-token log-probabilities divided by sqrt(length), easing the
/// preference for short candidates.
pub fn length_normalized_score(token_logprobs: &[f64]) -> Result<f64, ConvQueryError> {
    if token_logprobs.is_empty() {
        return Err(ConvQueryError::EmptyLogProbs);
    }
    let sum: f64 = token_logprobs.iter().sum();
    Ok(sum / (token_logprobs.len() as f64).sqrt())
}

/// One training turn: candidate features plus a pseudo-label index.
#[derive(Debug, Clone)]
pub struct LabeledTurn {
    pub turn_id: usize,
    pub features: Vec<FeatureVector>,
    pub label: usize,
}

/// One fine-tuning turn: candidate features plus raw supervision rewards.
#[derive(Debug, Clone)]
pub struct RewardTurn {
    pub turn_id: usize,
    pub features: Vec<FeatureVector>,
    pub rewards: Vec<f64>,
}

/// Mean cross-entropy of the pseudo-labels under the model.
pub fn cross_entropy_loss(
    model: &ScorerModel,
    dataset: &[LabeledTurn],
) -> Result<f64, ConvQueryError> {
    let mut total = 0.0;
    for turn in dataset {
        validate_label(turn)?;
        let probs = score_distribution(model, &turn.features)?;
        total -= probs[turn.label].ln();
    }
    Ok(total / dataset.len().max(1) as f64)
}

fn validate_label(turn: &LabeledTurn) -> Result<(), ConvQueryError> {
    if turn.label >= turn.features.len() {
        return Err(ConvQueryError::LabelOutOfRange {
            turn: turn.turn_id,
            label: turn.label,
            candidates: turn.features.len(),
        });
    }
    Ok(())
}

/// Gradient of [`cross_entropy_loss`] with respect to the weights.
pub fn cross_entropy_gradient(
    model: &ScorerModel,
    dataset: &[LabeledTurn],
) -> Result<Vec<f64>, ConvQueryError> {
    let mut grad = vec![0.0; FEATURE_DIM];
    for turn in dataset {
        validate_label(turn)?;
        let probs = score_distribution(model, &turn.features)?;
        for (i, features) in turn.features.iter().enumerate() {
            let coeff = probs[i] - if i == turn.label { 1.0 } else { 0.0 };
            for (g, x) in grad.iter_mut().zip(features.iter()) {
                *g += coeff * x;
            }
        }
    }
    let n = dataset.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

#[derive(Debug, Clone, Copy)]
pub struct PretrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PretrainHyper {
    fn default() -> Self {
        PretrainHyper {
            lr: 0.1,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Full-batch gradient descent on the mean cross-entropy. Zero epochs
/// leaves the model unchanged.
pub fn pretrain(
    model: &ScorerModel,
    dataset: &[LabeledTurn],
    hyper: PretrainHyper,
) -> Result<(ScorerModel, Vec<f64>), ConvQueryError> {
    let mut model = model.clone();
    model.metadata.seed = hyper.seed;
    model.metadata.pretrain_lr = hyper.lr;
    model.metadata.pretrain_epochs = hyper.epochs;
    let mut trace = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        let grad = cross_entropy_gradient(&model, dataset)?;
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= hyper.lr * g;
        }
        trace.push(cross_entropy_loss(&model, dataset)?);
    }
    Ok((model, trace))
}

/// Affine map onto [-0.5, 0.5]: min to -0.5, max to +0.5; a constant
/// vector maps to all zeros.
pub fn rescale_rewards(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; rewards.len()];
    }
    rewards
        .iter()
        .map(|r| (r - min) / (max - min) - 0.5)
        .collect()
}

/// REINFORCE surrogate for one turn at fixed sample, baseline and advantage:
/// `-delta * ln p_s`.
pub fn reinforce_surrogate_loss(
    model: &ScorerModel,
    turn: &RewardTurn,
    sampled: usize,
    delta: f64,
) -> Result<f64, ConvQueryError> {
    let probs = score_distribution(model, &turn.features)?;
    Ok(-delta * probs[sampled].ln())
}

/// Gradient of [`reinforce_surrogate_loss`] with respect to the weights.
pub fn reinforce_surrogate_gradient(
    model: &ScorerModel,
    turn: &RewardTurn,
    sampled: usize,
    delta: f64,
) -> Result<Vec<f64>, ConvQueryError> {
    let probs = score_distribution(model, &turn.features)?;
    let mut expected = vec![0.0; FEATURE_DIM];
    for (p, features) in probs.iter().zip(&turn.features) {
        for (e, x) in expected.iter_mut().zip(features.iter()) {
            *e += p * x;
        }
    }
    Ok(turn.features[sampled]
        .iter()
        .zip(&expected)
        .map(|(x, e)| -delta * (x - e))
        .collect())
}

fn sample_inverse_cdf(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct FinetuneHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for FinetuneHyper {
    fn default() -> Self {
        FinetuneHyper {
            lr: 0.01,
            epochs: 5,
            seed: 0,
        }
    }
}

/// Per-turn stochastic REINFORCE: sample a candidate, take the model argmax
/// as baseline, rescale the turn's rewards and step against the surrogate.
/// Returns the trained model and the mean held-out argmax reward per epoch.
pub fn finetune_reinforce(
    model: &ScorerModel,
    train: &[RewardTurn],
    held_out: &[RewardTurn],
    hyper: FinetuneHyper,
) -> Result<(ScorerModel, Vec<f64>), ConvQueryError> {
    let mut model = model.clone();
    model.metadata.finetune_lr = hyper.lr;
    model.metadata.finetune_epochs = hyper.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut trace = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        for turn in train {
            let probs = score_distribution(&model, &turn.features)?;
            let sampled = sample_inverse_cdf(&probs, &mut rng);
            let baseline = argmax(&probs);
            let rescaled = rescale_rewards(&turn.rewards);
            let delta = rescaled[sampled] - rescaled[baseline];
            if delta == 0.0 {
                continue;
            }
            let grad = reinforce_surrogate_gradient(&model, turn, sampled, delta)?;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= hyper.lr * g;
            }
        }
        trace.push(mean_argmax_reward(&model, held_out)?);
    }
    Ok((model, trace))
}

/// Mean raw reward of the model-argmax candidate over a set of turns.
pub fn mean_argmax_reward(
    model: &ScorerModel,
    turns: &[RewardTurn],
) -> Result<f64, ConvQueryError> {
    if turns.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for turn in turns {
        let probs = score_distribution(model, &turn.features)?;
        total += turn.rewards[argmax(&probs)];
    }
    Ok(total / turns.len() as f64)
}

/// A candidate ranked by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub candidate: CandidateQuery,
    pub probability: f64,
}

/// Rank a dialogue's candidate pool by model probability, descending,
/// ties keeping the pool order. An empty pool is a typed signal so the
/// caller can count a miss or report "no query".
pub fn predict(
    model: &ScorerModel,
    pool: &[CandidateQuery],
    dialogue: &Dialogue,
    stats: &CorpusStats,
) -> Result<Vec<RankedCandidate>, ConvQueryError> {
    if pool.is_empty() {
        return Err(ConvQueryError::EmptyPool);
    }
    let features: Vec<FeatureVector> = pool
        .iter()
        .map(|c| featurize(c, dialogue, stats))
        .collect();
    let probs = score_distribution(model, &features)?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .map(|i| RankedCandidate {
            candidate: pool[i].clone(),
            probability: probs[i],
        })
        .collect())
}
