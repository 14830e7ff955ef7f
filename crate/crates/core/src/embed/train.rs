use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::thread;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernel::{dot, logistic_coeff};
use super::vocab::{build_vocab, keep_probability, NegativeTable, Vocab};
use super::{EmbedError, EmbeddingModel, Mode, TrainParams, NEGATIVE_EXPONENT};
use crate::textprep::Paragraph;

/// Row storage the update kernels read from and write to.
trait Rows: Sync {
    fn read(&self, row: usize, out: &mut [f64]);
    fn add(&self, row: usize, delta: &[f64], scale: f64);
}

/// Matrix shared between training threads. Relaxed loads and stores mean
/// concurrent updates of the same row may be lost, never torn.
struct SharedMatrix {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl SharedMatrix {
    fn new(values: Vec<f64>, dim: usize) -> Self {
        Self {
            data: values.into_iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
            dim,
        }
    }

    fn into_vec(self) -> Vec<f64> {
        self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
    }

    fn write(&self, row: usize, values: &[f64]) {
        let base = row * self.dim;
        for (slot, v) in self.data[base..base + self.dim].iter().zip(values) {
            slot.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

impl Rows for SharedMatrix {
    fn read(&self, row: usize, out: &mut [f64]) {
        let base = row * self.dim;
        for (o, slot) in out.iter_mut().zip(&self.data[base..base + self.dim]) {
            *o = f64::from_bits(slot.load(Ordering::Relaxed));
        }
    }

    fn add(&self, row: usize, delta: &[f64], scale: f64) {
        let base = row * self.dim;
        for (slot, d) in self.data[base..base + self.dim].iter().zip(delta) {
            let cur = f64::from_bits(slot.load(Ordering::Relaxed));
            slot.store((cur + scale * d).to_bits(), Ordering::Relaxed);
        }
    }
}

/// Read-only view used at inference time; updates are discarded.
struct Frozen<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Rows for Frozen<'_> {
    fn read(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[row * self.dim..(row + 1) * self.dim]);
    }

    fn add(&self, _row: usize, _delta: &[f64], _scale: f64) {}
}

struct Scratch {
    u: Vec<f64>,
    neu1e: Vec<f64>,
    h: Vec<f64>,
    kept: Vec<u32>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            u: vec![0.0; dim],
            neu1e: vec![0.0; dim],
            h: vec![0.0; dim],
            kept: Vec::new(),
        }
    }
}

struct StepCtx<'a, R: Rows> {
    output: &'a R,
    input: Option<&'a R>,
    negatives: &'a NegativeTable,
    keep: &'a [f64],
    n_negative: usize,
    window: usize,
}

impl<R: Rows> StepCtx<'_, R> {
    /// Score `h` against `target` plus sampled negatives. Accumulates the
    /// gradient step for `h` into `neu1e` and applies output updates.
    fn predict<G: Rng>(&self, h: &[f64], target: u32, lr: f64, rng: &mut G, s: &mut Scratch) -> f64 {
        let mut loss = 0.0;
        for k in 0..=self.n_negative {
            let (word, label) = if k == 0 {
                (target, 1.0)
            } else {
                let w = self.negatives.sample(rng);
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            self.output.read(word as usize, &mut s.u);
            let (l, c) = logistic_coeff(dot(h, &s.u), label);
            loss += l;
            let g = c * lr;
            for (e, u) in s.neu1e.iter_mut().zip(&s.u) {
                *e += g * u;
            }
            self.output.add(word as usize, h, g);
        }
        loss
    }

    fn subsample<G: Rng>(&self, ids: &[u32], rng: &mut G, kept: &mut Vec<u32>) {
        kept.clear();
        for &w in ids {
            let p = self.keep[w as usize];
            if p >= 1.0 || rng.gen::<f64>() < p {
                kept.push(w);
            }
        }
    }

    /// One PV-DBOW pass over a paragraph; returns (loss, targets).
    fn dbow<G: Rng>(&self, pvec: &mut [f64], ids: &[u32], lr: f64, rng: &mut G, s: &mut Scratch) -> (f64, usize) {
        let mut kept = std::mem::take(&mut s.kept);
        self.subsample(ids, rng, &mut kept);
        let mut loss = 0.0;
        for &w in &kept {
            s.neu1e.iter_mut().for_each(|e| *e = 0.0);
            loss += self.predict(pvec, w, lr, rng, s);
            for (p, e) in pvec.iter_mut().zip(&s.neu1e) {
                *p += e;
            }
        }
        let n = kept.len();
        s.kept = kept;
        (loss, n)
    }

    /// One PV-DM pass: the mean of the paragraph vector and the context
    /// word input vectors predicts each centre word.
    fn dm<G: Rng>(&self, pvec: &mut [f64], ids: &[u32], lr: f64, rng: &mut G, s: &mut Scratch) -> (f64, usize) {
        let input = self.input.expect("DM mode carries input vectors");
        let mut kept = std::mem::take(&mut s.kept);
        self.subsample(ids, rng, &mut kept);
        let mut loss = 0.0;
        let mut h = std::mem::take(&mut s.h);
        for i in 0..kept.len() {
            let lo = i.saturating_sub(self.window);
            let hi = (i + self.window + 1).min(kept.len());
            h.copy_from_slice(pvec);
            let mut count = 1.0;
            for (j, &c) in kept[lo..hi].iter().enumerate() {
                if lo + j == i {
                    continue;
                }
                input.read(c as usize, &mut s.u);
                for (a, b) in h.iter_mut().zip(&s.u) {
                    *a += b;
                }
                count += 1.0;
            }
            h.iter_mut().for_each(|x| *x /= count);
            s.neu1e.iter_mut().for_each(|e| *e = 0.0);
            loss += self.predict(&h, kept[i], lr, rng, s);
            let share = 1.0 / count;
            for (p, e) in pvec.iter_mut().zip(&s.neu1e) {
                *p += share * e;
            }
            for (j, &c) in kept[lo..hi].iter().enumerate() {
                if lo + j != i {
                    input.add(c as usize, &s.neu1e, share);
                }
            }
        }
        let n = kept.len();
        s.h = h;
        s.kept = kept;
        (loss, n)
    }

    fn step<G: Rng>(&self, mode: Mode, pvec: &mut [f64], ids: &[u32], lr: f64, rng: &mut G, s: &mut Scratch) -> (f64, usize) {
        match mode {
            Mode::Dbow => self.dbow(pvec, ids, lr, rng, s),
            Mode::Dm => self.dm(pvec, ids, lr, rng, s),
        }
    }
}

/// SplitMix64 finalizer used to derive independent stream seeds.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_init(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..n * dim).map(|_| rng.gen_range(-half..half)).collect()
}

fn keep_table(vocab: &Vocab, t: f64) -> Vec<f64> {
    let total = vocab.total_tokens() as f64;
    (0..vocab.len() as u32)
        .map(|i| keep_probability(vocab.frequency(i) as f64 / total, t))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean logistic loss per predicted word (positive plus its negatives).
    pub mean_loss: f64,
    pub lr: f64,
    pub targets: usize,
    pub paragraphs_per_sec: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub epochs: Vec<EpochStats>,
}

pub fn paragraph_key(p: &Paragraph) -> String {
    format!("{}#{}", p.doc_id, p.ordinal)
}

/// Train paragraph and word matrices on `corpus`.
pub fn train(corpus: &[Paragraph], params: &TrainParams) -> Result<TrainOutcome, EmbedError> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let vocab = build_vocab(corpus.iter().map(|p| p.tokens.as_slice()), params.min_count)?;
    let docs: Vec<Vec<u32>> = corpus.iter().map(|p| vocab.encode(&p.tokens)).collect();
    let keep = keep_table(&vocab, params.subsample_t);
    let negatives = NegativeTable::new(&vocab, NEGATIVE_EXPONENT);
    let dim = params.vector_size;

    let mut init_rng = ChaCha8Rng::seed_from_u64(params.seed);
    let paragraphs = SharedMatrix::new(uniform_init(&mut init_rng, docs.len(), dim), dim);
    let output = SharedMatrix::new(vec![0.0; vocab.len() * dim], dim);
    let input = match params.mode {
        Mode::Dm => Some(SharedMatrix::new(uniform_init(&mut init_rng, vocab.len(), dim), dim)),
        Mode::Dbow => None,
    };

    let ctx = StepCtx {
        output: &output,
        input: input.as_ref(),
        negatives: &negatives,
        keep: &keep,
        n_negative: params.negative,
        window: params.window,
    };

    let total_work = (params.epochs * docs.len()) as f64;
    let done = AtomicUsize::new(0);
    let lr_at = |work: usize| {
        let frac = (work as f64 / total_work).min(1.0);
        params.initial_lr - (params.initial_lr - params.min_lr()) * frac
    };
    let threads = params.threads.max(1).min(docs.len());

    let mut stats = Vec::with_capacity(params.epochs);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..params.epochs {
        let started = Instant::now();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 1, epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let chunk = docs.len().div_ceil(threads);

        let run_chunk = |tid: usize, rows: &[usize]| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 2 + tid as u64, epoch as u64));
            let mut scratch = Scratch::new(dim);
            let mut pvec = vec![0.0; dim];
            let (mut loss, mut targets) = (0.0, 0usize);
            for &row in rows {
                let lr = lr_at(done.fetch_add(1, Ordering::Relaxed));
                paragraphs.read(row, &mut pvec);
                let (l, n) = ctx.step(params.mode, &mut pvec, &docs[row], lr, &mut rng, &mut scratch);
                paragraphs.write(row, &pvec);
                loss += l;
                targets += n;
            }
            (loss, targets)
        };

        let parts: Vec<(f64, usize)> = if threads == 1 {
            vec![run_chunk(0, &order)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = order
                    .chunks(chunk)
                    .enumerate()
                    .map(|(tid, rows)| s.spawn(move || run_chunk(tid, rows)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
            })
        };

        let loss: f64 = parts.iter().map(|p| p.0).sum();
        let targets: usize = parts.iter().map(|p| p.1).sum();
        let mean_loss = if targets > 0 { loss / targets as f64 } else { 0.0 };
        let lr = lr_at(done.load(Ordering::Relaxed));
        if !mean_loss.is_finite() {
            return Err(EmbedError::NonFiniteLoss {
                epoch: epoch + 1,
                loss: mean_loss,
                lr,
            });
        }
        let secs = started.elapsed().as_secs_f64().max(1e-9);
        let st = EpochStats {
            epoch: epoch + 1,
            mean_loss,
            lr,
            targets,
            paragraphs_per_sec: docs.len() as f64 / secs,
        };
        log::info!(
            "epoch {} loss {:.6} lr {:.6} paragraphs/sec {:.0}",
            st.epoch,
            st.mean_loss,
            st.lr,
            st.paragraphs_per_sec
        );
        stats.push(st);
    }

    let model = EmbeddingModel::assemble(
        vocab,
        params.clone(),
        corpus.iter().map(paragraph_key).collect(),
        paragraphs.into_vec(),
        output.into_vec(),
        input.map(SharedMatrix::into_vec).unwrap_or_default(),
    )?;
    if !model.all_finite() {
        return Err(EmbedError::NonFiniteLoss {
            epoch: params.epochs,
            loss: f64::NAN,
            lr: params.min_lr(),
        });
    }
    Ok(TrainOutcome { model, epochs: stats })
}

/// Infer a vector for an unseen paragraph by optimizing a fresh random
/// vector under the training objective with all word matrices frozen.
pub fn infer_vector<S: AsRef<str>>(
    model: &EmbeddingModel,
    tokens: &[S],
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>, EmbedError> {
    let ids = model.vocab.encode(tokens);
    if ids.is_empty() {
        return Err(EmbedError::NoKnownTokens);
    }
    let dim = model.dim();
    let params = &model.params;
    let keep = keep_table(&model.vocab, params.subsample_t);
    let output = Frozen {
        data: &model.word_output,
        dim,
    };
    let input = Frozen {
        data: &model.word_input,
        dim,
    };
    let ctx = StepCtx {
        output: &output,
        input: (params.mode == Mode::Dm).then_some(&input),
        negatives: &model.negatives,
        keep: &keep,
        n_negative: params.negative,
        window: params.window,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pvec = uniform_init(&mut rng, 1, dim);
    let mut scratch = Scratch::new(dim);
    let epochs = epochs.max(1);
    for e in 0..epochs {
        let frac = e as f64 / epochs as f64;
        let lr = params.initial_lr - (params.initial_lr - params.min_lr()) * frac;
        ctx.step(params.mode, &mut pvec, &ids, lr, &mut rng, &mut scratch);
    }
    Ok(pvec)
}

/// Parallel inference; item `i` uses a seed derived from `(seed, i)`, so the
/// result does not depend on the thread count.
pub fn infer_many<T: AsRef<[String]> + Sync>(
    model: &EmbeddingModel,
    paragraphs: &[T],
    epochs: usize,
    seed: u64,
) -> Vec<Result<Vec<f64>, EmbedError>> {
    paragraphs
        .par_iter()
        .enumerate()
        .map(|(i, p)| infer_vector(model, p.as_ref(), epochs, mix_seed(seed, 7, i as u64)))
        .collect()
}
