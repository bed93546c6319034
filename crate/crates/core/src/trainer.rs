//! Stochastic gradient descent with negative sampling over target-context
//! pairs, in two modes: `scne` trains the composed sum of a target's
//! sub-n-gram embeddings against every adjacent in-vocabulary context;
//! `sembei` trains each frequent n-gram as an atomic unit on the
//! adjacent-pair stream of the n-gram lattice.
//!
//! Parallelism follows the usual embedding-training recipe: the corpus is
//! partitioned by document ranges, workers update the shared parameter
//! matrices without locks (lost updates tolerated), and single-worker runs
//! are bitwise reproducible for a fixed seed.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::time::Instant;

use num_traits::{Float, NumCast, One, Zero};
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lattice;
use crate::model::EmbeddingModel;
use crate::vocab::{NegSampler, Vocab};

/// Floating-point scalar the SGD math is generic over (f32 in production,
/// f64 for gradient checks).
pub trait FloatScalar: Float + Send + Sync + fmt::Debug + 'static {}
impl<T: Float + Send + Sync + fmt::Debug + 'static> FloatScalar for T {}

/// Read/accumulate access to the two parameter matrices touched by a step:
/// the sub-n-gram ("input") side and the context ("output") side.
pub trait ParamStore {
    type F: FloatScalar;
    fn dim(&self) -> usize;
    fn emb(&self, id: usize, k: usize) -> Self::F;
    fn emb_add(&mut self, id: usize, k: usize, delta: Self::F);
    fn ctx(&self, id: usize, k: usize) -> Self::F;
    fn ctx_add(&mut self, id: usize, k: usize, delta: Self::F);
}

/// Plain single-threaded parameter matrices.
#[derive(Debug, Clone)]
pub struct DenseParams<F> {
    dim: usize,
    emb: Vec<F>,
    ctx: Vec<F>,
}

impl<F: FloatScalar> DenseParams<F> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn new(rows: usize, dim: usize) -> DenseParams<F> {
        DenseParams {
            dim,
            emb: vec![F::zero(); rows * dim],
            ctx: vec![F::zero(); rows * dim],
        }
    }

    pub fn from_vecs(dim: usize, emb: Vec<F>, ctx: Vec<F>) -> DenseParams<F> {
        assert_eq!(emb.len() % dim, 0);
        assert_eq!(emb.len(), ctx.len());
        DenseParams { dim, emb, ctx }
    }

    /// Copies a model's matrices, widening or narrowing to `F`.
    pub fn from_model(model: &EmbeddingModel) -> DenseParams<F> {
        let conv = |v: &f32| F::from(*v).unwrap();
        DenseParams {
            dim: model.dim(),
            emb: (0..model.vocab().len())
                .flat_map(|id| model.embedding(id).iter().map(conv))
                .collect(),
            ctx: (0..model.vocab().len())
                .flat_map(|id| model.context_embedding(id).iter().map(conv))
                .collect(),
        }
    }

    pub fn emb_row(&self, id: usize) -> &[F] {
        &self.emb[id * self.dim..(id + 1) * self.dim]
    }

    pub fn ctx_row(&self, id: usize) -> &[F] {
        &self.ctx[id * self.dim..(id + 1) * self.dim]
    }

    pub fn emb_row_mut(&mut self, id: usize) -> &mut [F] {
        &mut self.emb[id * self.dim..(id + 1) * self.dim]
    }

    pub fn ctx_row_mut(&mut self, id: usize) -> &mut [F] {
        &mut self.ctx[id * self.dim..(id + 1) * self.dim]
    }
}

impl<F: FloatScalar> ParamStore for DenseParams<F> {
    type F = F;

    fn dim(&self) -> usize {
        self.dim
    }

    fn emb(&self, id: usize, k: usize) -> F {
        self.emb[id * self.dim + k]
    }

    fn emb_add(&mut self, id: usize, k: usize, delta: F) {
        self.emb[id * self.dim + k] = self.emb[id * self.dim + k] + delta;
    }

    fn ctx(&self, id: usize, k: usize) -> F {
        self.ctx[id * self.dim + k]
    }

    fn ctx_add(&mut self, id: usize, k: usize, delta: F) {
        self.ctx[id * self.dim + k] = self.ctx[id * self.dim + k] + delta;
    }
}

/// f32 stored as relaxed-atomic bits; `add` is a plain read-modify-write,
/// so concurrent increments may drop updates (the hogwild contract).
struct AtomicF32(AtomicU32);

impl AtomicF32 {
    fn new(v: f32) -> AtomicF32 {
        AtomicF32(AtomicU32::new(v.to_bits()))
    }

    fn get(&self) -> f32 {
        f32::from_bits(self.0.load(Ordering::Relaxed))
    }

    fn add(&self, delta: f32) {
        self.0
            .store((self.get() + delta).to_bits(), Ordering::Relaxed);
    }

    fn into_inner(self) -> f32 {
        f32::from_bits(self.0.into_inner())
    }
}

/// Shared parameter matrices for lock-free data-parallel training.
pub(crate) struct SharedParams {
    dim: usize,
    emb: Vec<AtomicF32>,
    ctx: Vec<AtomicF32>,
}

impl SharedParams {
    fn from_vecs(dim: usize, emb: Vec<f32>, ctx: Vec<f32>) -> SharedParams {
        SharedParams {
            dim,
            emb: emb.into_iter().map(AtomicF32::new).collect(),
            ctx: ctx.into_iter().map(AtomicF32::new).collect(),
        }
    }

    fn into_vecs(self) -> (Vec<f32>, Vec<f32>) {
        (
            self.emb.into_iter().map(AtomicF32::into_inner).collect(),
            self.ctx.into_iter().map(AtomicF32::into_inner).collect(),
        )
    }
}

impl ParamStore for &SharedParams {
    type F = f32;

    fn dim(&self) -> usize {
        self.dim
    }

    fn emb(&self, id: usize, k: usize) -> f32 {
        self.emb[id * self.dim + k].get()
    }

    fn emb_add(&mut self, id: usize, k: usize, delta: f32) {
        self.emb[id * self.dim + k].add(delta);
    }

    fn ctx(&self, id: usize, k: usize) -> f32 {
        self.ctx[id * self.dim + k].get()
    }

    fn ctx_add(&mut self, id: usize, k: usize, delta: f32) {
        self.ctx[id * self.dim + k].add(delta);
    }
}

/// Dot products are clamped to this magnitude before exponentiation; the
/// sigmoid error where the clamp bites is below 1e-13.
const DOT_CLAMP: f64 = 30.0;

fn sigmoid<F: FloatScalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `ln σ(x)` in a branch form that never overflows.
fn log_sigmoid<F: FloatScalar>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Reusable buffers for [`pair_step_with`]: the composed target vector and
/// the accumulated update to it.
pub struct PairScratch<F> {
    v: Vec<F>,
    dv: Vec<F>,
}

impl<F: FloatScalar> PairScratch<F> {
    pub fn new(dim: usize) -> PairScratch<F> {
        PairScratch {
            v: vec![F::zero(); dim],
            dv: vec![F::zero(); dim],
        }
    }
}

/// One SGD step for a single (target, context) pair with `k` negatives.
///
/// The target's vector `v` is the sum of the sub-n-gram embedding rows, one
/// addend per occurrence. For the positive context (label 1) and each
/// negative (label 0), `g = lr * (label - σ(v·ctx))`: the context row gets
/// `g * v`, and `g * ctx` (read before that update) accumulates into the
/// shared delta applied to every sub-n-gram row afterwards — a repeated id
/// receives the delta once per occurrence. Returns the pair's negative log
/// likelihood.
pub fn pair_step<P: ParamStore>(
    params: &mut P,
    subgram_ids: &[usize],
    context_id: usize,
    negative_ids: &[usize],
    lr: P::F,
) -> P::F {
    let mut scratch = PairScratch::new(params.dim());
    pair_step_with(params, subgram_ids, context_id, negative_ids, lr, &mut scratch)
}

/// [`pair_step`] with caller-owned scratch buffers (the hot-loop form).
pub fn pair_step_with<P: ParamStore>(
    params: &mut P,
    subgram_ids: &[usize],
    context_id: usize,
    negative_ids: &[usize],
    lr: P::F,
    scratch: &mut PairScratch<P::F>,
) -> P::F {
    assert!(!subgram_ids.is_empty(), "target has no sub-n-grams");
    let dim = params.dim();
    let v = &mut scratch.v;
    let dv = &mut scratch.dv;
    v.clear();
    v.resize(dim, P::F::zero());
    dv.clear();
    dv.resize(dim, P::F::zero());
    for &s in subgram_ids {
        for (k, acc) in v.iter_mut().enumerate() {
            *acc = *acc + params.emb(s, k);
        }
    }

    let cap: P::F = NumCast::from(DOT_CLAMP).unwrap();
    let mut loss = P::F::zero();
    let mut one_update = |params: &mut P, dv: &mut Vec<P::F>, ctx_id: usize, positive: bool| {
        let mut dot = P::F::zero();
        for (k, &vk) in v.iter().enumerate() {
            dot = dot + vk * params.ctx(ctx_id, k);
        }
        dot = dot.max(-cap).min(cap);
        let label = if positive { P::F::one() } else { P::F::zero() };
        let g = lr * (label - sigmoid(dot));
        loss = loss - log_sigmoid(if positive { dot } else { -dot });
        // the delta to v reads the context row before it moves
        for (k, acc) in dv.iter_mut().enumerate() {
            *acc = *acc + g * params.ctx(ctx_id, k);
        }
        for (k, &vk) in v.iter().enumerate() {
            params.ctx_add(ctx_id, k, g * vk);
        }
    };

    one_update(params, dv, context_id, true);
    for &neg in negative_ids {
        one_update(params, dv, neg, false);
    }

    for &s in subgram_ids {
        for (k, &d) in dv.iter().enumerate() {
            params.emb_add(s, k, d);
        }
    }
    loss
}

/// Linear decay from `lr0` to the `1e-4 * lr0` floor over the scheduled
/// step count.
pub fn lr_at(step: u64, total_steps: u64, lr0: f64) -> f64 {
    debug_assert!(total_steps >= 1);
    lr0 * (1.0 - step as f64 / total_steps as f64).max(1e-4)
}

/// Training objective variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Compositional targets: every span of length `<= n_target`.
    Scne,
    /// Atomic frequent-n-gram targets on the adjacent-pair lattice stream.
    Sembei,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Mode, String> {
        match s {
            "scne" => Ok(Mode::Scne),
            "sembei" => Ok(Mode::Sembei),
            other => Err(format!("unknown mode `{other}` (expected scne or sembei)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Scne => "scne",
            Mode::Sembei => "sembei",
        })
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Vocabulary capacity `M`.
    pub vocab_size: usize,
    pub n_max: usize,
    /// Maximum target span length; equal to `n_max` by default.
    pub n_target: usize,
    /// Negative samples per (target, context) pair.
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate.
    pub lr0: f64,
    /// Exponent of the negative-sampling distribution.
    pub neg_exponent: f64,
    pub mode: Mode,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            dim: 200,
            vocab_size: 2_000_000,
            n_max: 8,
            n_target: 8,
            negatives: 10,
            epochs: 10,
            lr0: 0.01,
            neg_exponent: 1.0,
            mode: Mode::Scne,
            seed: 42,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.dim, "dim"),
            (self.vocab_size, "vocab_size"),
            (self.n_max, "n_max"),
            (self.n_target, "n_target"),
            (self.negatives, "negatives"),
            (self.workers, "workers"),
        ];
        for (value, name) in positive {
            if value < 1 {
                return Err(Error::Invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Invalid("lr0 must be finite and positive".into()));
        }
        if !self.neg_exponent.is_finite() || self.neg_exponent < 0.0 {
            return Err(Error::Invalid(
                "neg_exponent must be finite and >= 0".into(),
            ));
        }
        if self.mode == Mode::Scne && self.n_target > self.n_max {
            return Err(Error::Invalid(format!(
                "n_target={} exceeds n_max={}: scne targets must stay composable",
                self.n_target, self.n_max
            )));
        }
        Ok(())
    }
}

/// Aggregate counters from one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub mode: Mode,
    /// Positive (target, context) pairs fed to SGD, summed over epochs.
    pub pairs_processed: u64,
    /// Target visits skipped because the sub-n-gram set was empty (scne).
    pub targets_skipped: u64,
    pub epoch_mean_loss: Vec<f64>,
    pub epoch_wall_secs: Vec<f64>,
}

/// Deterministic seed derivation for worker/epoch/repeat streams
/// (splitmix64 finalizer over a salted mix).
pub(crate) fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut x = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

const STREAM_SAMPLER: u64 = 1;
/// Multi-worker runs reserve learning-rate steps from the shared counter in
/// batches of this size; single-worker runs use exact per-pair steps.
const LR_BATCH: u64 = 1024;

#[derive(Debug, Default, Clone, Copy)]
struct WorkerStats {
    pairs: u64,
    loss_sum: f64,
    skipped: u64,
}

/// Fits a model on the corpus under `config`.
///
/// The vocabulary must have been built with the config's `n_max` and `M`.
/// Initialization, sampling and worker scheduling all derive from
/// `config.seed`; with `workers == 1` the result is bitwise reproducible.
pub fn train(
    corpus: &Corpus,
    vocab: &Vocab,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, TrainReport)> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::Invalid("vocabulary is empty".into()));
    }
    if vocab.n_max() != config.n_max || vocab.capacity() != config.vocab_size {
        return Err(Error::Invalid(format!(
            "vocabulary was built with n_max={} M={}, but the config says n_max={} M={}",
            vocab.n_max(),
            vocab.capacity(),
            config.n_max,
            config.vocab_size
        )));
    }

    let model = EmbeddingModel::init(vocab.clone(), config.dim, config.seed);
    let mut report = TrainReport {
        mode: config.mode,
        pairs_processed: 0,
        targets_skipped: 0,
        epoch_mean_loss: Vec::new(),
        epoch_wall_secs: Vec::new(),
    };
    if config.epochs == 0 {
        return Ok((model, report));
    }

    // Exact per-epoch pair totals drive the linear learning-rate schedule.
    let per_epoch_pairs = match config.mode {
        Mode::Scne => {
            if lattice::target_count(corpus, config.n_target) == 0 {
                return Err(Error::Invalid("empty target set".into()));
            }
            lattice::scne_schedule_docs(corpus, vocab, config.n_target, 0..corpus.n_docs()).pairs
        }
        Mode::Sembei => lattice::sembei_pair_count_docs(corpus, vocab, 0..corpus.n_docs()),
    };
    let total_steps = per_epoch_pairs * config.epochs as u64;

    let (vocab_owned, dim, emb, ctx) = model.into_parts();
    let shared = SharedParams::from_vecs(dim, emb, ctx);
    let base_sampler = NegSampler::new(vocab, config.neg_exponent, config.seed)?;
    let ranges = partition_docs(corpus, config.workers);
    let lr_batch = if config.workers == 1 { 1 } else { LR_BATCH };
    let step_counter = AtomicU64::new(0);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let stats: Vec<WorkerStats> = std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .cloned()
                .enumerate()
                .map(|(worker, docs)| {
                    let sampler = base_sampler.fork(derive_seed(
                        config.seed,
                        STREAM_SAMPLER,
                        ((epoch as u64) << 32) | worker as u64,
                    ));
                    let shared = &shared;
                    let counter = &step_counter;
                    scope.spawn(move || {
                        run_epoch_worker(
                            corpus,
                            vocab,
                            shared,
                            config,
                            sampler,
                            docs,
                            counter,
                            total_steps,
                            lr_batch,
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        });
        let pairs: u64 = stats.iter().map(|s| s.pairs).sum();
        let loss_sum: f64 = stats.iter().map(|s| s.loss_sum).sum();
        report.pairs_processed += pairs;
        report.targets_skipped += stats.iter().map(|s| s.skipped).sum::<u64>();
        let mean_loss = if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 };
        report.epoch_mean_loss.push(mean_loss);
        let secs = started.elapsed().as_secs_f64();
        report.epoch_wall_secs.push(secs);
        eprintln!(
            "epoch {}/{}: {} pairs, mean loss {:.6}, {:.2}s",
            epoch + 1,
            config.epochs,
            pairs,
            mean_loss,
            secs
        );
    }

    let (emb, ctx) = shared.into_vecs();
    let model = EmbeddingModel::from_parts(vocab_owned, dim, emb, ctx);
    if !model.is_finite() {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    Ok((model, report))
}

/// Contiguous document ranges with roughly equal character counts.
fn partition_docs(corpus: &Corpus, workers: usize) -> Vec<Range<usize>> {
    let n_docs = corpus.n_docs();
    let mut ranges = Vec::with_capacity(workers);
    let mut chars_left = corpus.n_chars() as u64;
    let mut doc = 0usize;
    for worker in 0..workers {
        let start = doc;
        if worker == workers - 1 {
            doc = n_docs;
        } else {
            let share = chars_left / (workers - worker) as u64;
            let mut taken = 0u64;
            while doc < n_docs && taken < share {
                let (s, e) = corpus.doc_range(doc);
                taken += (e - s + 1) as u64;
                doc += 1;
            }
            chars_left -= taken;
        }
        ranges.push(start..doc);
    }
    ranges
}

#[allow(clippy::too_many_arguments)]
fn run_epoch_worker(
    corpus: &Corpus,
    vocab: &Vocab,
    shared: &SharedParams,
    config: &TrainConfig,
    mut sampler: NegSampler,
    docs: Range<usize>,
    step_counter: &AtomicU64,
    total_steps: u64,
    lr_batch: u64,
) -> WorkerStats {
    let mut view = shared;
    let mut scratch = PairScratch::new(shared.dim);
    let mut negatives: Vec<usize> = Vec::with_capacity(config.negatives);
    let mut stats = WorkerStats::default();
    let mut batch_base = 0u64;
    let mut batch_used = lr_batch; // forces a reservation on the first pair

    let mut one_pair = |view: &mut &SharedParams,
                        sampler: &mut NegSampler,
                        scratch: &mut PairScratch<f32>,
                        negatives: &mut Vec<usize>,
                        stats: &mut WorkerStats,
                        subgram_ids: &[usize],
                        context_id: usize| {
        if batch_used == lr_batch {
            batch_base = step_counter.fetch_add(lr_batch, Ordering::Relaxed);
            batch_used = 0;
        }
        let lr = lr_at(batch_base + batch_used, total_steps, config.lr0) as f32;
        batch_used += 1;
        sampler.sample_into(config.negatives, negatives);
        stats.loss_sum +=
            pair_step_with(view, subgram_ids, context_id, negatives, lr, scratch) as f64;
        stats.pairs += 1;
    };

    match config.mode {
        Mode::Scne => {
            let mut buf = String::new();
            let mut subgram_ids: Vec<usize> = Vec::new();
            let mut context_ids: Vec<usize> = Vec::new();
            for span in lattice::stream_targets_docs(corpus, config.n_target, docs) {
                lattice::subgrams_into(corpus, span, vocab, &mut buf, &mut subgram_ids);
                if subgram_ids.is_empty() {
                    stats.skipped += 1;
                    continue;
                }
                lattice::contexts_into(
                    corpus,
                    span,
                    vocab,
                    vocab.n_max(),
                    &mut buf,
                    &mut context_ids,
                );
                for &context_id in &context_ids {
                    one_pair(
                        &mut view,
                        &mut sampler,
                        &mut scratch,
                        &mut negatives,
                        &mut stats,
                        &subgram_ids,
                        context_id,
                    );
                }
            }
        }
        Mode::Sembei => {
            for (target_id, context_id) in lattice::sembei_pairs_docs(corpus, vocab, docs) {
                one_pair(
                    &mut view,
                    &mut sampler,
                    &mut scratch,
                    &mut negatives,
                    &mut stats,
                    &[target_id],
                    context_id,
                );
            }
        }
    }
    stats
}
