use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingMeta, EmbeddingTable};
use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub window: usize,
    pub negatives: usize,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    /// word2vec-style frequent-word subsampling threshold; off when `None`.
    pub subsample: Option<f64>,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            window: 10,
            negatives: 45,
            dim: 50,
            epochs: 100,
            learning_rate: 0.05,
            min_count: 5,
            subsample: None,
            seed: 1,
        }
    }
}

impl SgnsConfig {
    /// Hex SHA-256 of the JSON-serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0) {
                return Err(Error::invalid("subsample", "threshold must be positive"));
            }
        }
        Ok(())
    }
}

/// Every `(center, context)` position pair of a sequence of length `len`
/// with `0 < |center - context| <= window`.
pub fn context_pairs(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |i| {
        let (lo, hi) = window_bounds(i, len, window);
        (lo..=hi).filter(move |&j| j != i).map(move |j| (i, j))
    })
}

/// Inclusive context range around position `i`; requires `i < len`.
fn window_bounds(i: usize, len: usize, window: usize) -> (usize, usize) {
    (i.saturating_sub(window), (i + window).min(len - 1))
}

/// Draws word ids with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn new(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::EmptyVocabulary)?;
        Ok(NegativeSampler { dist })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln s(u.v+) - sum ln s(-u.v-)` for one center/context pair.
pub fn sgns_loss(u: &[f64], positive: &[f64], negatives: &[Vec<f64>]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    -sigmoid(dot(u, positive)).ln()
        - negatives
            .iter()
            .map(|n| sigmoid(-dot(u, n)).ln())
            .sum::<f64>()
}

/// Gradients of [`sgns_loss`] with respect to the center vector, the
/// positive context vector and each negative vector.
pub fn sgns_loss_grad(
    u: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gp = sigmoid(dot(u, positive)) - 1.0;
    let mut grad_u: Vec<f64> = positive.iter().map(|p| gp * p).collect();
    let grad_pos: Vec<f64> = u.iter().map(|x| gp * x).collect();
    let mut grad_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let gn = sigmoid(dot(u, n));
        for (g, x) in grad_u.iter_mut().zip(n) {
            *g += gn * x;
        }
        grad_negs.push(u.iter().map(|x| gn * x).collect());
    }
    (grad_u, grad_pos, grad_negs)
}

/// Dot product with eight independent accumulators so the loop vectorizes.
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// One fused SGD step on a center input row against output rows
/// `(row, label)`; equivalent to `theta -= lr * grad` when no row repeats.
fn sgd_step(center: &mut [f32], outputs: &mut [f32], dim: usize, targets: &[(usize, f32)], lr: f32, scratch: &mut [f32]) {
    scratch.fill(0.0);
    for &(t, label) in targets {
        let v = &mut outputs[t * dim..(t + 1) * dim];
        let f = dot_f32(center, v);
        let g = (label - 1.0 / (1.0 + (-f).exp())) * lr;
        for ((e, vi), ci) in scratch.iter_mut().zip(v.iter_mut()).zip(center.iter()) {
            *e += g * *vi;
            *vi += g * ci;
        }
    }
    for (c, e) in center.iter_mut().zip(scratch.iter()) {
        *c += e;
    }
}

struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
}

fn build_vocab(docs: &[Document], min_count: usize) -> Vocab {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for d in docs {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1) as u64)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab {
        words: entries.iter().map(|(w, _)| w.to_string()).collect(),
        counts: entries.iter().map(|(_, c)| *c).collect(),
    }
}

/// Trains skip-gram with negative sampling and returns the center vectors.
///
/// Deterministic for a given config and document order. Input vectors start
/// uniform in `[-0.5/dim, 0.5/dim]`, output vectors at zero; the learning rate
/// decays linearly to a hundredth of its initial value over all epochs.
pub fn train_sgns(docs: &[Document], cfg: &SgnsConfig) -> Result<EmbeddingTable> {
    let (vocab, input, _) = train_matrices(docs, cfg)?;
    let dim = cfg.dim;
    let mut table = EmbeddingTable::new(dim);
    for (i, w) in vocab.words.iter().enumerate() {
        let row: Vec<f64> = input[i * dim..(i + 1) * dim].iter().map(|&x| x as f64).collect();
        table.insert(w.clone(), &row)?;
    }
    Ok(table.with_meta(EmbeddingMeta {
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }))
}

/// Vocabulary plus input and output matrices (row-major, `vocab x dim`).
fn train_matrices(docs: &[Document], cfg: &SgnsConfig) -> Result<(Vocab, Vec<f32>, Vec<f32>)> {
    cfg.validate()?;
    let vocab = build_vocab(docs, cfg.min_count);
    if vocab.words.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let lookup: std::collections::HashMap<&str, usize> = vocab
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let encoded: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.tokens.iter().filter_map(|t| lookup.get(t.as_str()).copied()).collect())
        .collect();
    let total_tokens: u64 = vocab.counts.iter().sum();

    let dim = cfg.dim;
    let v = vocab.words.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 0.5 / dim as f32;
    let mut input: Vec<f32> = (0..v * dim).map(|_| rng.gen_range(-bound..=bound)).collect();
    let mut output = vec![0f32; v * dim];
    let sampler = NegativeSampler::new(&vocab.counts)?;

    let keep_prob: Option<Vec<f64>> = cfg.subsample.map(|t| {
        vocab
            .counts
            .iter()
            .map(|&c| {
                let f = c as f64 / total_tokens as f64;
                ((f / t).sqrt() + 1.0) * t / f
            })
            .collect()
    });

    let total_steps = (cfg.epochs as u64 * total_tokens).max(1) as f64;
    let lr0 = cfg.learning_rate;
    let mut step = 0u64;
    let mut targets: Vec<(usize, f32)> = Vec::with_capacity(cfg.negatives + 1);
    let mut scratch = vec![0f32; dim];
    let mut seq: Vec<usize> = Vec::new();

    for _ in 0..cfg.epochs {
        for doc in &encoded {
            seq.clear();
            match &keep_prob {
                Some(keep) => seq.extend(doc.iter().copied().filter(|&w| rng.gen::<f64>() < keep[w])),
                None => seq.extend_from_slice(doc),
            }
            for i in 0..seq.len() {
                let progress = step as f64 / total_steps;
                let lr = (lr0 * (1.0 - 0.99 * progress)) as f32;
                step += 1;
                let center = seq[i];
                let (lo, hi) = window_bounds(i, seq.len(), cfg.window);
                for (j, &ctx) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    targets.clear();
                    targets.push((ctx, 1.0));
                    if v > 1 {
                        for _ in 0..cfg.negatives {
                            let neg = loop {
                                let n = sampler.sample(&mut rng);
                                if n != ctx {
                                    break n;
                                }
                            };
                            targets.push((neg, 0.0));
                        }
                    }
                    let row = &mut input[center * dim..(center + 1) * dim];
                    sgd_step(row, &mut output, dim, &targets, lr, &mut scratch);
                }
            }
            // skipped subsampled tokens still advance the schedule
            step += (doc.len() - seq.len()) as u64;
        }
    }
    Ok((vocab, input, output))
}
