//! Skip-gram token embeddings trained with stochastic gradient descent.
//!
//! A model holds an input matrix (one row per vocabulary token, the token
//! embedding) and an output matrix. The output matrix is stored with one
//! contiguous `d`-vector per token, i.e. column `j` of the `d × V` output
//! weights is `output_row(j)`.
//!
//! Full softmax is the reference objective: for a center token `I` and a
//! context token `O`,
//!
//! ```text
//! p(O | I) = exp(u_O) / Σ_j exp(u_j),    u_j = output_row(j) · input_row(I)
//! ```
//!
//! and the corpus loss sums `-log p(w_{t+i} | w_t)` over every position `t`
//! and in-window offset `i`, averaged per student by sequence length.

use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sequence, TokenVocab};

pub const MODEL_FORMAT: &str = "pathlens-sgm/1";

#[derive(Debug, Error)]
pub enum SkipGramError {
    #[error("vocabulary has {0} token(s); at least 2 are required")]
    VocabularyTooSmall(usize),
    #[error("no student has an in-vocabulary token")]
    EmptyCorpus,
    #[error("non-finite weight or loss during epoch {epoch} (learning rate too high?)")]
    NonFiniteLoss { epoch: usize },
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SkipGramError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    FullSoftmax,
    NegativeSampling { negatives: usize },
}

impl std::str::FromStr for TrainingMode {
    type Err = String;

    /// Accepts `softmax` or `neg:K`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "softmax" {
            return Ok(Self::FullSoftmax);
        }
        match s.strip_prefix("neg:").map(str::parse::<usize>) {
            Some(Ok(k)) if k >= 1 => Ok(Self::NegativeSampling { negatives: k }),
            _ => Err(format!("expected `softmax` or `neg:K` with K >= 1, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    /// Embedding width `d`.
    pub vector_size: usize,
    /// Context half-width `c`; each position sees up to `2c` neighbors.
    pub window: usize,
    pub epochs: usize,
    /// Starting learning rate, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub mode: TrainingMode,
    pub seed: u64,
    /// Values above 1 enable unsynchronized parallel updates and forfeit
    /// determinism.
    pub workers: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            vector_size: 12,
            window: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            mode: TrainingMode::FullSoftmax,
            seed: 1,
            workers: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SkipGramError::InvalidConfig(m.to_string()));
        if self.vector_size == 0 {
            return bad("vector_size must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.min_learning_rate > 0.0 && self.min_learning_rate <= self.learning_rate) {
            return bad("min_learning_rate must be in (0, learning_rate]");
        }
        if let TrainingMode::NegativeSampling { negatives: 0 } = self.mode {
            return bad("negative sampling needs at least one negative");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        Ok(())
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub epochs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramModel {
    vocab: TokenVocab,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

/// Gradient of one pair's loss `-log p(O | I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub center: usize,
    /// Gradient with respect to `input_row(center)`; other input rows have
    /// zero gradient.
    pub input_row: Vec<f64>,
    /// Gradient with respect to the output weights, laid out like
    /// [`SkipGramModel::output`].
    pub output: Vec<f64>,
}

/// Every (center, context) pair of a sequence, with windows truncated at
/// the boundaries. Ordered by position, then offset ascending.
pub fn context_pairs<T: Copy>(tokens: &[T], window: usize) -> Vec<(T, T)> {
    let n = tokens.len();
    let mut out = Vec::new();
    for t in 0..n {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(n.saturating_sub(1));
        for j in lo..=hi {
            if j != t {
                out.push((tokens[t], tokens[j]));
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable `log Σ exp(x)`.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|u| (u - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

impl SkipGramModel {
    /// Input rows uniform on `[-0.5/d, 0.5/d]`, output weights zero.
    pub fn init(vocab: TokenVocab, config: &SkipGramConfig) -> Result<Self> {
        config.validate()?;
        if vocab.len() < 2 {
            return Err(SkipGramError::VocabularyTooSmall(vocab.len()));
        }
        let d = config.vector_size;
        let v = vocab.len();
        let half = 0.5 / d as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dist = Uniform::new_inclusive(-half, half).expect("finite bounds");
        let input = (0..v * d).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self { vocab, dim: d, input, output: vec![0.0; v * d] })
    }

    /// Assembles a model from explicit weights. `output` holds one
    /// `d`-vector per token.
    pub fn from_parts(vocab: TokenVocab, dim: usize, input: Vec<f64>, output: Vec<f64>) -> Result<Self> {
        let v = vocab.len();
        if dim == 0 || input.len() != v * dim || output.len() != v * dim {
            return Err(SkipGramError::Format(format!(
                "weights do not match {v} tokens x {dim} dimensions"
            )));
        }
        if input.iter().chain(&output).any(|x| !x.is_finite()) {
            return Err(SkipGramError::Format("non-finite weight".into()));
        }
        Ok(Self { vocab, dim, input, output })
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Input weights, row-major `V × d`.
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn input_mut(&mut self) -> &mut [f64] {
        &mut self.input
    }

    /// Output weights, one `d`-vector per token.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut [f64] {
        &mut self.output
    }

    pub fn input_row(&self, idx: usize) -> &[f64] {
        &self.input[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn output_row(&self, idx: usize) -> &[f64] {
        &self.output[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn logits(&self, center: usize) -> Vec<f64> {
        let h = self.input_row(center);
        (0..self.vocab_size()).map(|j| dot(self.output_row(j), h)).collect()
    }

    /// `p(· | center)` over the whole vocabulary.
    pub fn forward_softmax(&self, center: usize) -> Vec<f64> {
        softmax(&self.logits(center))
    }

    /// `-log p(context | center)`.
    pub fn pair_loss(&self, center: usize, context: usize) -> f64 {
        let u = self.logits(center);
        log_sum_exp(&u) - u[context]
    }

    pub fn pair_gradient(&self, center: usize, context: usize) -> PairGradient {
        let d = self.dim;
        let h = self.input_row(center);
        let mut p = self.forward_softmax(center);
        p[context] -= 1.0;
        let mut input_row = vec![0.0; d];
        let mut output = vec![0.0; self.output.len()];
        for (j, &e) in p.iter().enumerate() {
            let out_j = self.output_row(j);
            for k in 0..d {
                input_row[k] += e * out_j[k];
                output[j * d + k] = e * h[k];
            }
        }
        PairGradient { center, input_row, output }
    }

    /// Cross-entropy over all students: each student's summed context
    /// log-loss divided by their in-vocabulary sequence length, summed over
    /// students. Out-of-vocabulary tokens are dropped before windowing.
    pub fn corpus_loss(&self, sequences: &[Sequence], window: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut students = 0usize;
        for seq in sequences {
            let ids = self.vocab.encode(&seq.tokens);
            if ids.is_empty() {
                continue;
            }
            students += 1;
            let n = ids.len();
            let mut student = 0.0;
            for t in 0..n {
                let u = self.logits(ids[t]);
                let lse = log_sum_exp(&u);
                let lo = t.saturating_sub(window);
                let hi = (t + window).min(n - 1);
                for j in lo..=hi {
                    if j != t {
                        student += lse - u[ids[j]];
                    }
                }
            }
            total += student / n as f64;
        }
        if students == 0 {
            return Err(SkipGramError::EmptyCorpus);
        }
        Ok(total)
    }

    /// The token's input row, exactly as stored.
    pub fn embedding_of(&self, token: &str) -> Result<&[f64]> {
        self.vocab
            .index_of(token)
            .map(|i| self.input_row(i))
            .ok_or_else(|| SkipGramError::UnknownToken(token.to_string()))
    }

    /// Top-`k` tokens by cosine similarity of input rows, excluding the
    /// query. Ties go to the lower vocabulary index.
    pub fn nearest_neighbors(&self, token: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let q = self
            .vocab
            .index_of(token)
            .ok_or_else(|| SkipGramError::UnknownToken(token.to_string()))?;
        let mut scored: Vec<(usize, f64)> = (0..self.vocab_size())
            .filter(|&j| j != q)
            .map(|j| (j, cosine(self.input_row(q), self.input_row(j))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(j, s)| (self.vocab.token(j).to_string(), s))
            .collect())
    }

    pub fn to_file(&self) -> ModelFile {
        let d = self.dim;
        let v = self.vocab_size();
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            d,
            tokens: self.vocab.tokens().to_vec(),
            counts: self.vocab.counts().to_vec(),
            w: self.input.chunks(d).map(<[f64]>::to_vec).collect(),
            w_out: (0..d)
                .map(|k| (0..v).map(|j| self.output[j * d + k]).collect())
                .collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(SkipGramError::Format(format!("unsupported format `{}`", file.format)));
        }
        let d = file.d;
        let v = file.tokens.len();
        let counts = if file.counts.is_empty() { vec![1; v] } else { file.counts };
        if counts.len() != v || file.w.len() != v || file.w_out.len() != d {
            return Err(SkipGramError::Format("matrix shapes do not match the token list".into()));
        }
        if file.w.iter().any(|r| r.len() != d) || file.w_out.iter().any(|r| r.len() != v) {
            return Err(SkipGramError::Format("ragged weight matrix".into()));
        }
        let vocab = TokenVocab::from_entries(file.tokens.into_iter().zip(counts).collect());
        if vocab.len() != v {
            return Err(SkipGramError::Format("duplicate tokens".into()));
        }
        let input = file.w.concat();
        let mut output = vec![0.0; v * d];
        for (k, row) in file.w_out.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                output[j * d + k] = x;
            }
        }
        Self::from_parts(vocab, d, input, output)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// On-disk model. `W` is `V × d`, `W_out` is `d × V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub d: usize,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counts: Vec<u64>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "W_out")]
    pub w_out: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Weight storage the SGD step writes through: plain slices for the
/// sequential trainer, relaxed atomics for parallel workers.
trait Weights {
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, v: f64);
}

struct Plain<'a>(&'a mut [f64]);

impl Weights for Plain<'_> {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
    #[inline]
    fn set(&mut self, i: usize, v: f64) {
        self.0[i] = v;
    }
}

struct Shared<'a>(&'a [AtomicU64]);

impl Weights for Shared<'_> {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }
    #[inline]
    fn set(&mut self, i: usize, v: f64) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

struct Scratch {
    h: Vec<f64>,
    grad_h: Vec<f64>,
    logits: Vec<f64>,
}

impl Scratch {
    fn new(v: usize, d: usize) -> Self {
        Self { h: vec![0.0; d], grad_h: vec![0.0; d], logits: vec![0.0; v] }
    }
}

struct NegativeSampler {
    dist: WeightedIndex<f64>,
    negatives: usize,
}

/// One SGD step on a (center, context) pair. Returns the pair's loss
/// before the update, or `None` if the update produced a non-finite value.
#[allow(clippy::too_many_arguments)]
fn sgd_step<I: Weights, O: Weights>(
    input: &mut I,
    output: &mut O,
    v: usize,
    d: usize,
    center: usize,
    context: usize,
    lr: f64,
    sampler: Option<&NegativeSampler>,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
) -> Option<f64> {
    for k in 0..d {
        s.h[k] = input.get(center * d + k);
        s.grad_h[k] = 0.0;
    }
    let mut finite = true;
    let loss = match sampler {
        None => {
            for j in 0..v {
                s.logits[j] = (0..d).map(|k| output.get(j * d + k) * s.h[k]).sum();
            }
            let max = s.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.logits.iter().map(|u| (u - max).exp()).sum();
            let loss = max + z.ln() - s.logits[context];
            for j in 0..v {
                let mut e = (s.logits[j] - max).exp() / z;
                if j == context {
                    e -= 1.0;
                }
                for k in 0..d {
                    let idx = j * d + k;
                    let w = output.get(idx);
                    s.grad_h[k] += e * w;
                    let nw = w - lr * e * s.h[k];
                    finite &= nw.is_finite();
                    output.set(idx, nw);
                }
            }
            loss
        }
        Some(ns) => {
            let mut loss = 0.0;
            let mut update = |j: usize, label: f64, s: &mut Scratch| {
                let u: f64 = (0..d).map(|k| output.get(j * d + k) * s.h[k]).sum();
                let sig = sigmoid(u);
                let l = if label > 0.5 { -sig.ln() } else { -(1.0 - sig).ln() };
                let e = sig - label;
                for k in 0..d {
                    let idx = j * d + k;
                    let w = output.get(idx);
                    s.grad_h[k] += e * w;
                    let nw = w - lr * e * s.h[k];
                    finite &= nw.is_finite();
                    output.set(idx, nw);
                }
                l
            };
            loss += update(context, 1.0, s);
            for _ in 0..ns.negatives {
                let j = ns.dist.sample(rng);
                if j != context {
                    loss += update(j, 0.0, s);
                }
            }
            loss
        }
    };
    for k in 0..d {
        let nw = s.h[k] - lr * s.grad_h[k];
        finite &= nw.is_finite();
        input.set(center * d + k, nw);
    }
    (finite && loss.is_finite()).then_some(loss)
}

fn learning_rate_at(config: &SkipGramConfig, step: usize, total: usize) -> f64 {
    let frac = step as f64 / total.max(1) as f64;
    (config.learning_rate - (config.learning_rate - config.min_learning_rate) * frac)
        .max(config.min_learning_rate)
}

fn build_sampler(vocab: &TokenVocab, mode: TrainingMode) -> Option<NegativeSampler> {
    match mode {
        TrainingMode::FullSoftmax => None,
        TrainingMode::NegativeSampling { negatives } => {
            let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
            Some(NegativeSampler {
                dist: WeightedIndex::new(weights).expect("counts are positive"),
                negatives,
            })
        }
    }
}

/// Trains a skip-gram model from scratch.
///
/// Sequences are visited in a seeded shuffled order each epoch and the
/// learning rate decays linearly over every (epoch, pair) step. With one
/// worker the result is fully determined by the seed.
pub fn train(
    sequences: &[Sequence],
    vocab: &TokenVocab,
    config: &SkipGramConfig,
) -> Result<(SkipGramModel, LossTrace)> {
    let mut model = SkipGramModel::init(vocab.clone(), config)?;
    let encoded: Vec<Vec<usize>> = sequences
        .iter()
        .map(|s| vocab.encode(&s.tokens))
        .filter(|ids| !ids.is_empty())
        .collect();
    if encoded.is_empty() {
        return Err(SkipGramError::EmptyCorpus);
    }
    let pairs: Vec<Vec<(usize, usize)>> =
        encoded.iter().map(|ids| context_pairs(ids, config.window)).collect();
    let trace = if config.workers > 1 {
        train_parallel(&mut model, &pairs, config)?
    } else {
        train_sequential(&mut model, &pairs, config)?
    };
    Ok((model, trace))
}

fn train_sequential(
    model: &mut SkipGramModel,
    pairs: &[Vec<(usize, usize)>],
    config: &SkipGramConfig,
) -> Result<LossTrace> {
    let v = model.vocab_size();
    let d = model.dim;
    let total_pairs: usize = pairs.iter().map(Vec::len).sum();
    let total_steps = total_pairs * config.epochs;
    let sampler = build_sampler(&model.vocab, config.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut scratch = Scratch::new(v, d);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trace = LossTrace::default();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let (input, output) = (&mut model.input, &mut model.output);
        let mut input = Plain(input);
        let mut output = Plain(output);
        for &s in &order {
            for &(center, context) in &pairs[s] {
                let lr = learning_rate_at(config, step, total_steps);
                step += 1;
                epoch_loss += sgd_step(
                    &mut input,
                    &mut output,
                    v,
                    d,
                    center,
                    context,
                    lr,
                    sampler.as_ref(),
                    &mut rng,
                    &mut scratch,
                )
                .ok_or(SkipGramError::NonFiniteLoss { epoch })?;
            }
        }
        trace.epochs.push(if total_pairs == 0 { 0.0 } else { epoch_loss / total_pairs as f64 });
    }
    Ok(trace)
}

/// Lock-free parallel training: workers share the weights through relaxed
/// atomics and may overwrite each other's updates.
fn train_parallel(
    model: &mut SkipGramModel,
    pairs: &[Vec<(usize, usize)>],
    config: &SkipGramConfig,
) -> Result<LossTrace> {
    let v = model.vocab_size();
    let d = model.dim;
    let total_pairs: usize = pairs.iter().map(Vec::len).sum();
    let total_steps = total_pairs * config.epochs;
    let sampler = build_sampler(&model.vocab, config.mode);
    let to_atomic = |w: &[f64]| w.iter().map(|x| AtomicU64::new(x.to_bits())).collect::<Vec<_>>();
    let input = to_atomic(&model.input);
    let output = to_atomic(&model.output);
    let step = AtomicUsize::new(0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trace = LossTrace::default();
    let workers = config.workers.min(pairs.len()).max(1);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let chunk = order.len().div_ceil(workers);
        let results: Vec<Option<f64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = order
                .chunks(chunk)
                .enumerate()
                .map(|(w, part)| {
                    let (input, output, step, sampler) = (&input, &output, &step, sampler.as_ref());
                    let mut wrng = ChaCha8Rng::seed_from_u64(config.seed);
                    wrng.set_stream(2 + (epoch * workers + w) as u64);
                    scope.spawn(move || {
                        let mut scratch = Scratch::new(v, d);
                        let mut inp = Shared(input);
                        let mut out = Shared(output);
                        let mut loss = 0.0;
                        for &s in part {
                            for &(center, context) in &pairs[s] {
                                let n = step.fetch_add(1, Ordering::Relaxed);
                                let lr = learning_rate_at(config, n, total_steps);
                                loss += sgd_step(
                                    &mut inp, &mut out, v, d, center, context, lr, sampler,
                                    &mut wrng, &mut scratch,
                                )?;
                            }
                        }
                        Some(loss)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut epoch_loss = 0.0;
        for r in results {
            epoch_loss += r.ok_or(SkipGramError::NonFiniteLoss { epoch })?;
        }
        trace.epochs.push(if total_pairs == 0 { 0.0 } else { epoch_loss / total_pairs as f64 });
    }
    let from_atomic = |w: &[AtomicU64]| w.iter().map(|x| f64::from_bits(x.load(Ordering::Relaxed))).collect();
    model.input = from_atomic(&input);
    model.output = from_atomic(&output);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn seq(user: &str, tokens: &str) -> Sequence {
        Sequence {
            user_id: user.into(),
            tokens: tokens.split_whitespace().map(String::from).collect(),
        }
    }

    fn vocab_of(tokens: &[&str]) -> TokenVocab {
        TokenVocab::from_entries(tokens.iter().map(|t| (t.to_string(), 1)).collect())
    }

    fn config(d: usize, seed: u64) -> SkipGramConfig {
        SkipGramConfig { vector_size: d, window: 1, seed, ..Default::default() }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let v = vocab_of(&["a", "b", "c"]);
        let m1 = SkipGramModel::init(v.clone(), &config(2, 9)).unwrap();
        let m2 = SkipGramModel::init(v.clone(), &config(2, 9)).unwrap();
        assert_eq!(m1, m2);
        assert!(m1.output().iter().all(|&x| x == 0.0));
        assert!(m1.input().iter().all(|x| x.abs() <= 0.25));
        let m3 = SkipGramModel::init(v, &config(2, 10)).unwrap();
        assert_ne!(m1.input(), m3.input());
    }

    #[test]
    fn init_rejects_tiny_vocab() {
        assert!(matches!(
            SkipGramModel::init(vocab_of(&["a"]), &config(2, 0)),
            Err(SkipGramError::VocabularyTooSmall(1))
        ));
    }

    #[test]
    fn context_pairs_truncate_at_boundaries() {
        assert_eq!(
            context_pairs(&['A', 'B', 'C'], 1),
            vec![('A', 'B'), ('B', 'A'), ('B', 'C'), ('C', 'B')]
        );
        let pairs = context_pairs(&['A', 'B', 'C', 'D'], 2);
        let ctx: Vec<char> = pairs.iter().filter(|p| p.0 == 'C').map(|p| p.1).collect();
        assert_eq!(ctx, vec!['A', 'B', 'D']);
        assert!(context_pairs(&['A'], 3).is_empty());
        assert!(context_pairs::<char>(&[], 3).is_empty());
    }

    #[test]
    fn softmax_of_zero_model_is_uniform() {
        let mut m = SkipGramModel::init(vocab_of(&["a", "b", "c"]), &config(2, 1)).unwrap();
        m.input_mut().iter_mut().for_each(|x| *x = 0.0);
        for p in m.forward_softmax(0) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = logits.iter().map(|x| x + 1000.0).collect();
        let a = softmax(&logits);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_loss_is_log_v() {
        let m = SkipGramModel::init(vocab_of(&["A", "B", "C"]), &config(2, 1)).unwrap();
        let c = m.corpus_loss(&[seq("s", "A B")], 1).unwrap();
        assert!((c - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_vocab_students_are_excluded() {
        let m = SkipGramModel::init(vocab_of(&["A", "B", "C"]), &config(2, 1)).unwrap();
        let base = m.corpus_loss(&[seq("s", "A B")], 1).unwrap();
        let with_ghost = m.corpus_loss(&[seq("s", "A B"), seq("g", "X Y Z")], 1).unwrap();
        assert_eq!(base, with_ghost);
        assert!(matches!(m.corpus_loss(&[seq("g", "X")], 1), Err(SkipGramError::EmptyCorpus)));
    }

    #[test]
    fn embedding_lookup() {
        let m = SkipGramModel::init(vocab_of(&["a", "b", "c"]), &config(2, 4)).unwrap();
        assert_eq!(m.embedding_of("b").unwrap(), &m.input()[2..4]);
        assert_eq!(m.embedding_of("b").unwrap().len(), 2);
        assert!(matches!(m.embedding_of("zz"), Err(SkipGramError::UnknownToken(_))));
    }

    #[test]
    fn neighbor_count_is_capped() {
        let m = SkipGramModel::init(vocab_of(&["a", "b", "c", "d"]), &config(3, 4)).unwrap();
        let nn = m.nearest_neighbors("a", 9).unwrap();
        assert_eq!(nn.len(), 3);
        assert!(nn.iter().all(|(t, _)| t != "a"));
        assert!(nn.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(m.nearest_neighbors("q", 1).is_err());
    }

    #[test]
    fn neighbor_ties_break_by_index() {
        let vocab = vocab_of(&["q", "x", "y", "z"]);
        let input = vec![1.0, 0.0, 0.5, 0.5, 2.0, 0.0, 3.0, 0.0];
        let m = SkipGramModel::from_parts(vocab, 2, input, vec![0.0; 8]).unwrap();
        let nn = m.nearest_neighbors("q", 3).unwrap();
        let names: Vec<&str> = nn.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, vec!["y", "z", "x"]);
    }

    #[test]
    fn model_json_round_trip() {
        let seqs = vec![seq("a", "x y z x y"), seq("b", "z y x")];
        let vocab = build_vocab(&seqs, 1).unwrap();
        let (m, _) = train(&seqs, &vocab, &config(3, 2)).unwrap();
        let json = m.to_json();
        assert!(json.starts_with("{\"format\":\"pathlens-sgm/1\",\"d\":3"));
        let back = SkipGramModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        let file = m.to_file();
        assert_eq!(file.w_out.len(), 3);
        assert_eq!(file.w_out[0].len(), 3);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("softmax".parse::<TrainingMode>().unwrap(), TrainingMode::FullSoftmax);
        assert_eq!(
            "neg:5".parse::<TrainingMode>().unwrap(),
            TrainingMode::NegativeSampling { negatives: 5 }
        );
        assert!("neg:0".parse::<TrainingMode>().is_err());
    }

    #[test]
    fn divergent_learning_rate_is_reported() {
        let seqs = vec![seq("a", "x y x y x y x y x y")];
        let vocab = build_vocab(&seqs, 1).unwrap();
        let cfg = SkipGramConfig {
            vector_size: 2,
            window: 1,
            epochs: 50,
            learning_rate: 1e200,
            min_learning_rate: 1e199,
            ..Default::default()
        };
        assert!(matches!(train(&seqs, &vocab, &cfg), Err(SkipGramError::NonFiniteLoss { .. })));
    }

    #[test]
    fn negative_sampling_reduces_loss() {
        let seqs: Vec<Sequence> =
            (0..20).map(|i| seq(&format!("u{i}"), "a b c d a b c d e f")).collect();
        let vocab = build_vocab(&seqs, 1).unwrap();
        let cfg = SkipGramConfig {
            vector_size: 4,
            window: 2,
            epochs: 20,
            mode: TrainingMode::NegativeSampling { negatives: 3 },
            ..Default::default()
        };
        let (_, trace) = train(&seqs, &vocab, &cfg).unwrap();
        assert!(trace.epochs.last().unwrap() < &trace.epochs[0]);
    }

    #[test]
    fn parallel_workers_train() {
        let seqs: Vec<Sequence> =
            (0..40).map(|i| seq(&format!("u{i}"), "a b c d a b c d e f")).collect();
        let vocab = build_vocab(&seqs, 1).unwrap();
        let cfg = SkipGramConfig { vector_size: 4, window: 2, epochs: 10, workers: 4, ..Default::default() };
        let (m, trace) = train(&seqs, &vocab, &cfg).unwrap();
        assert_eq!(trace.epochs.len(), 10);
        assert!(trace.epochs.last().unwrap() < &trace.epochs[0]);
        assert!(m.input().iter().all(|x| x.is_finite()));
    }
}
