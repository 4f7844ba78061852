//! SkipGram with negative sampling over node sequences.
//!
//! For a (center `w`, context `c`) pair with noise nodes `n_1..n_k` the
//! per-pair loss is
//!
//! ```text
//! L = -ln σ(u_c · v_w) - Σ_k ln σ(-u_{n_k} · v_w)
//! ```
//!
//! where `v` are input (center) vectors and `u` output (context) vectors.
//! Noise nodes are drawn from the unigram distribution raised to 0.75.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alias::AliasTable;
use super::{Embedding, EmbeddingError};

const NOISE_EXPONENT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Single-threaded, bitwise reproducible for a given seed.
    #[default]
    Deterministic,
    /// Lock-free concurrent updates; results vary run to run.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dims: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dims: 32,
            window: 10,
            negatives: 5,
            epochs: 5,
            lr_initial: 0.025,
            lr_final: 0.0001,
            seed: 0,
            mode: TrainMode::Deterministic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |msg: &str| Err(EmbeddingError::InvalidConfig(msg.to_string()));
        if self.dims < 2 {
            return bad("dims must be at least 2");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be at least 1");
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_initial && self.lr_initial.is_finite()) {
            return bad("learning rates must satisfy 0 < lr_final <= lr_initial");
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln σ(x)`, stable for large |x|.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss for one (center, context) pair.
pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(context, center)) - negatives.iter().map(|u| log_sigmoid(-dot(u, center))).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`pair_loss`] with respect to every vector involved.
pub fn pair_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGradient {
    let d = center.len();
    let mut g_center = vec![0.0; d];
    let pos = sigmoid(dot(context, center)) - 1.0;
    for k in 0..d {
        g_center[k] += pos * context[k];
    }
    let g_context = center.iter().map(|v| pos * v).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for u in negatives {
        let s = sigmoid(dot(u, center));
        for k in 0..d {
            g_center[k] += s * u[k];
        }
        g_negs.push(center.iter().map(|v| s * v).collect());
    }
    PairGradient { center: g_center, context: g_context, negatives: g_negs }
}

/// Row-addressable parameter storage; lets the same update code run on a
/// plain buffer or on shared atomics.
trait Rows {
    fn read(&self, row: usize, out: &mut [f64]);
    fn add(&mut self, row: usize, delta: &[f64]);
}

struct Plain<'a> {
    data: &'a mut [f64],
    dims: usize,
}

impl Rows for Plain<'_> {
    #[inline]
    fn read(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[row * self.dims..(row + 1) * self.dims]);
    }

    #[inline]
    fn add(&mut self, row: usize, delta: &[f64]) {
        for (x, d) in self.data[row * self.dims..(row + 1) * self.dims].iter_mut().zip(delta) {
            *x += d;
        }
    }
}

/// Racy read-modify-write on f64 bit patterns: concurrent updates to the same
/// row can be lost, which SGD tolerates.
struct Shared<'a> {
    data: &'a [AtomicU64],
    dims: usize,
}

impl Rows for Shared<'_> {
    #[inline]
    fn read(&self, row: usize, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.data[row * self.dims..(row + 1) * self.dims]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    #[inline]
    fn add(&mut self, row: usize, delta: &[f64]) {
        for (a, d) in self.data[row * self.dims..(row + 1) * self.dims].iter().zip(delta) {
            let x = f64::from_bits(a.load(Ordering::Relaxed)) + d;
            a.store(x.to_bits(), Ordering::Relaxed);
        }
    }
}

struct Scratch {
    center: Vec<f64>,
    target: Vec<f64>,
    center_delta: Vec<f64>,
    target_delta: Vec<f64>,
    negatives: Vec<usize>,
}

impl Scratch {
    fn new(dims: usize, negatives: usize) -> Self {
        Self {
            center: vec![0.0; dims],
            target: vec![0.0; dims],
            center_delta: vec![0.0; dims],
            target_delta: vec![0.0; dims],
            negatives: Vec::with_capacity(negatives),
        }
    }
}

/// One SGD step on a pair; returns the pre-update loss. Each parameter moves
/// by `-lr` times its [`pair_gradient`] component, all evaluated at the old
/// parameters.
fn sgd_pair<I: Rows, O: Rows>(
    input: &mut I,
    output: &mut O,
    center: usize,
    context: usize,
    lr: f64,
    s: &mut Scratch,
) -> f64 {
    input.read(center, &mut s.center);
    s.center_delta.iter_mut().for_each(|x| *x = 0.0);
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0)).chain(s.negatives.iter().map(|&n| (n, 0.0)));
    for (t, label) in targets {
        output.read(t, &mut s.target);
        let f = dot(&s.center, &s.target);
        loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
        let g = (label - sigmoid(f)) * lr;
        for k in 0..s.center.len() {
            s.center_delta[k] += g * s.target[k];
            s.target_delta[k] = g * s.center[k];
        }
        output.add(t, &s.target_delta);
    }
    input.add(center, &s.center_delta);
    loss
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub embedding: Embedding,
    /// Mean per-pair loss of each epoch, measured before each update.
    pub epoch_loss: Vec<f64>,
}

struct Corpus<'a> {
    walks: &'a [Vec<u32>],
    noise: AliasTable,
    noise_nodes: Vec<usize>,
    pairs_per_epoch: usize,
}

impl<'a> Corpus<'a> {
    fn new(walks: &'a [Vec<u32>], n: usize, window: usize) -> Result<Self, EmbeddingError> {
        if walks.iter().all(|w| w.is_empty()) {
            return Err(EmbeddingError::EmptyWalks);
        }
        let mut freq = vec![0usize; n];
        for w in walks {
            for &v in w {
                let v = v as usize;
                if v >= n {
                    return Err(EmbeddingError::NodeIdOutOfRange { node: v, n });
                }
                freq[v] += 1;
            }
        }
        let noise_nodes: Vec<usize> = (0..n).filter(|&v| freq[v] > 0).collect();
        let weights: Vec<f64> = noise_nodes.iter().map(|&v| (freq[v] as f64).powf(NOISE_EXPONENT)).collect();
        let pairs_per_epoch = walks
            .iter()
            .map(|w| (0..w.len()).map(|i| context_range(i, w.len(), window).len() - 1).sum::<usize>())
            .sum();
        Ok(Self { walks, noise: AliasTable::from_positive(&weights), noise_nodes, pairs_per_epoch })
    }

    fn draw_negatives(&self, context: usize, k: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..k {
            let n = self.noise_nodes[self.noise.sample(rng)];
            if n != context {
                out.push(n);
            }
        }
    }
}

#[inline]
fn context_range(i: usize, len: usize, window: usize) -> std::ops::Range<usize> {
    i.saturating_sub(window)..(i + window + 1).min(len)
}

#[inline]
fn learning_rate(cfg: &TrainConfig, done: usize, total: usize) -> f64 {
    let progress = if total == 0 { 0.0 } else { done as f64 / total as f64 };
    cfg.lr_initial - (cfg.lr_initial - cfg.lr_final) * progress.min(1.0)
}

pub fn train_skipgram(walks: &[Vec<u32>], n: usize, cfg: &TrainConfig) -> Result<Embedding, EmbeddingError> {
    train_skipgram_with_history(walks, n, cfg).map(|t| t.embedding)
}

pub fn train_skipgram_with_history(
    walks: &[Vec<u32>],
    n: usize,
    cfg: &TrainConfig,
) -> Result<TrainedEmbedding, EmbeddingError> {
    cfg.validate()?;
    let corpus = Corpus::new(walks, n, cfg.window)?;
    let init = Embedding::initialize(n, cfg.dims, cfg.seed);
    match cfg.mode {
        TrainMode::Deterministic => Ok(train_sequential(init, &corpus, cfg)),
        TrainMode::Parallel => Ok(train_parallel(init, &corpus, cfg)),
    }
}

fn train_sequential(mut emb: Embedding, corpus: &Corpus<'_>, cfg: &TrainConfig) -> TrainedEmbedding {
    let dims = cfg.dims;
    let total = corpus.pairs_per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut scratch = Scratch::new(dims, cfg.negatives);
    let mut context = emb.context.take().unwrap_or_else(|| vec![0.0; emb.n * dims]);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut done = 0usize;
    {
        let mut input = Plain { data: &mut emb.matrix, dims };
        let mut output = Plain { data: &mut context, dims };
        for _ in 0..cfg.epochs {
            let mut loss = 0.0;
            for walk in corpus.walks {
                for i in 0..walk.len() {
                    let center = walk[i] as usize;
                    for j in context_range(i, walk.len(), cfg.window) {
                        if j == i {
                            continue;
                        }
                        let ctx = walk[j] as usize;
                        let lr = learning_rate(cfg, done, total);
                        corpus.draw_negatives(ctx, cfg.negatives, &mut rng, &mut scratch.negatives);
                        loss += sgd_pair(&mut input, &mut output, center, ctx, lr, &mut scratch);
                        done += 1;
                    }
                }
            }
            epoch_loss.push(loss / corpus.pairs_per_epoch.max(1) as f64);
        }
    }
    emb.context = Some(context);
    TrainedEmbedding { embedding: emb, epoch_loss }
}

fn train_parallel(emb: Embedding, corpus: &Corpus<'_>, cfg: &TrainConfig) -> TrainedEmbedding {
    let dims = cfg.dims;
    let total = corpus.pairs_per_epoch * cfg.epochs;
    let to_atomic = |v: &[f64]| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect::<Vec<_>>();
    let input = to_atomic(&emb.matrix);
    let output = to_atomic(emb.context.as_deref().unwrap_or(&vec![0.0; emb.n * dims]));
    let done = AtomicUsize::new(0);
    let chunk = corpus.walks.len().div_ceil(rayon::current_num_threads() * 4).max(1);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let loss: f64 = corpus
            .walks
            .par_chunks(chunk)
            .enumerate()
            .map(|(ci, walks)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((epoch as u64) << 32) | (ci as u64 + 1));
                let mut scratch = Scratch::new(dims, cfg.negatives);
                let mut inp = Shared { data: &input, dims };
                let mut out = Shared { data: &output, dims };
                let mut loss = 0.0;
                let mut local = 0usize;
                for walk in walks {
                    for i in 0..walk.len() {
                        let center = walk[i] as usize;
                        for j in context_range(i, walk.len(), cfg.window) {
                            if j == i {
                                continue;
                            }
                            let ctx = walk[j] as usize;
                            let lr = learning_rate(cfg, done.load(Ordering::Relaxed) + local, total);
                            corpus.draw_negatives(ctx, cfg.negatives, &mut rng, &mut scratch.negatives);
                            loss += sgd_pair(&mut inp, &mut out, center, ctx, lr, &mut scratch);
                            local += 1;
                            if local == 10_000 {
                                done.fetch_add(local, Ordering::Relaxed);
                                local = 0;
                            }
                        }
                    }
                }
                done.fetch_add(local, Ordering::Relaxed);
                loss
            })
            .sum();
        epoch_loss.push(loss / corpus.pairs_per_epoch.max(1) as f64);
    }

    let from_atomic = |v: Vec<AtomicU64>| v.into_iter().map(|a| f64::from_bits(a.into_inner())).collect::<Vec<_>>();
    TrainedEmbedding {
        embedding: Embedding { n: emb.n, dims, matrix: from_atomic(input), context: Some(from_atomic(output)) },
        epoch_loss,
    }
}

/// Applies exactly one update for a fixed pair and negative set; exposed so
/// tests can tie the trainer's update rule to [`pair_gradient`].
#[doc(hidden)]
pub fn apply_pair_update(emb: &mut Embedding, center: usize, context: usize, negatives: &[usize], lr: f64) -> f64 {
    let dims = emb.dims;
    let mut scratch = Scratch::new(dims, negatives.len());
    scratch.negatives.extend_from_slice(negatives);
    let ctx = emb.context.get_or_insert_with(|| vec![0.0; emb.n * dims]);
    let mut input = Plain { data: &mut emb.matrix, dims };
    let mut output = Plain { data: ctx, dims };
    sgd_pair(&mut input, &mut output, center, context, lr, &mut scratch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_returns_initialisation() {
        let walks = vec![vec![0, 1, 2, 1, 0]];
        let cfg = TrainConfig { dims: 4, epochs: 0, seed: 9, ..Default::default() };
        let emb = train_skipgram(&walks, 3, &cfg).unwrap();
        let init = Embedding::initialize(3, 4, 9);
        assert_eq!(emb.matrix, init.matrix);
        assert!(emb.context.unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = TrainConfig { dims: 4, ..Default::default() };
        assert!(matches!(train_skipgram(&[], 3, &cfg), Err(EmbeddingError::EmptyWalks)));
        assert!(matches!(train_skipgram(&[vec![]], 3, &cfg), Err(EmbeddingError::EmptyWalks)));
        assert!(matches!(
            train_skipgram(&[vec![0, 5]], 3, &cfg),
            Err(EmbeddingError::NodeIdOutOfRange { node: 5, n: 3 })
        ));
        let bad = TrainConfig { dims: 1, ..Default::default() };
        assert!(train_skipgram(&[vec![0, 1]], 3, &bad).is_err());
        let bad = TrainConfig { lr_final: 0.1, lr_initial: 0.01, ..Default::default() };
        assert!(train_skipgram(&[vec![0, 1]], 3, &bad).is_err());
    }

    #[test]
    fn update_follows_negative_gradient() {
        let mut emb = Embedding::initialize(4, 3, 2);
        emb.context = Some(vec![0.1, -0.2, 0.3, 0.05, 0.4, -0.1, -0.3, 0.2, 0.1, 0.0, 0.1, 0.2]);
        let before = emb.clone();
        let row = |m: &[f64], r: usize| m[r * 3..r * 3 + 3].to_vec();
        let ctx = before.context.as_ref().unwrap();
        let (v, u, n1, n2) = (row(&before.matrix, 0), row(ctx, 1), row(ctx, 2), row(ctx, 3));
        let grad = pair_gradient(&v, &u, &[&n1, &n2]);
        let lr = 0.05;
        let loss = apply_pair_update(&mut emb, 0, 1, &[2, 3], lr);
        assert!((loss - pair_loss(&v, &u, &[&n1, &n2])).abs() < 1e-15);
        let after_ctx = emb.context.as_ref().unwrap();
        for k in 0..3 {
            assert!((emb.matrix[k] - (v[k] - lr * grad.center[k])).abs() < 1e-15);
            assert!((after_ctx[3 + k] - (u[k] - lr * grad.context[k])).abs() < 1e-15);
            assert!((after_ctx[6 + k] - (n1[k] - lr * grad.negatives[0][k])).abs() < 1e-15);
        }
    }

    #[test]
    fn sequential_training_is_reproducible() {
        let walks: Vec<Vec<u32>> = (0..20).map(|i| (0..15).map(|j| ((i * 3 + j * 7) % 6) as u32).collect()).collect();
        let cfg = TrainConfig { dims: 8, window: 3, epochs: 2, seed: 4, ..Default::default() };
        let a = train_skipgram(&walks, 6, &cfg).unwrap();
        let b = train_skipgram(&walks, 6, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_mode_produces_finite_vectors() {
        let walks: Vec<Vec<u32>> = (0..40).map(|i| (0..20).map(|j| ((i + j * 5) % 10) as u32).collect()).collect();
        let cfg = TrainConfig { dims: 8, window: 3, epochs: 2, mode: TrainMode::Parallel, ..Default::default() };
        let t = train_skipgram_with_history(&walks, 10, &cfg).unwrap();
        assert!(t.embedding.matrix.iter().all(|x| x.is_finite()));
        assert_eq!(t.epoch_loss.len(), 2);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }
}
