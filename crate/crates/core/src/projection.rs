//! Linear map between two embedding spaces learned from dictionary pairs.
//!
//! The objective is `f(W) = sum_pairs 1/2 |W^T u - v|^2` over source vectors
//! `u` and target vectors `v`. Its gradient for a single pair is
//! `u (W^T u - v)^T`, an `n x n` matrix indexed like `W`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BilingualDictionary;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, NoPairsReason, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PairProvenance {
    /// Dictionary entries looked at.
    pub entries_examined: usize,
    /// Entries whose source term has a source vector.
    pub sources_in_vocab: usize,
    /// Candidates of those entries.
    pub candidates_examined: usize,
    pub pairs_kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationPairSet {
    pub pairs: Vec<(String, String)>,
    pub provenance: PairProvenance,
}

impl TranslationPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// All `(w_s, w_t)` with `w_s` in the source vocabulary and `w_t` one of its
/// dictionary candidates present in the target vocabulary. Ordered by source
/// term, then dictionary order.
pub fn extract_pairs(
    src_emb: &EmbeddingTable,
    tgt_emb: &EmbeddingTable,
    dict: &BilingualDictionary,
) -> Result<TranslationPairSet> {
    if dict.is_empty() {
        return Err(Error::NoPairs(NoPairsReason::EmptyDictionary));
    }
    let mut prov = PairProvenance::default();
    let mut pairs = Vec::new();
    for (source, candidates) in dict.iter() {
        prov.entries_examined += 1;
        if !src_emb.contains(source) {
            continue;
        }
        prov.sources_in_vocab += 1;
        for c in candidates {
            prov.candidates_examined += 1;
            if tgt_emb.contains(c) {
                pairs.push((source.to_string(), c.clone()));
            }
        }
    }
    prov.pairs_kept = pairs.len();
    if pairs.is_empty() {
        return Err(Error::NoPairs(NoPairsReason::NoVocabularyOverlap));
    }
    Ok(TranslationPairSet {
        pairs,
        provenance: prov,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub eta: f64,
    pub epochs: usize,
    /// Multiplier applied to `eta` after every epoch.
    pub decay: f64,
    /// Initial entries are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            eta: 0.01,
            epochs: 100,
            decay: 0.98,
            init_range: 1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub objective: f64,
    pub eta: f64,
}

/// Square matrix `W`, stored row-major (`w[i * n + j]` is `W_ij`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    n: usize,
    w: Vec<f64>,
    pub train_log: Vec<EpochLog>,
    pub seed: u64,
}

impl ProjectionMatrix {
    pub fn from_rows(n: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: w.len(),
            });
        }
        Ok(ProjectionMatrix {
            n,
            w,
            train_log: Vec::new(),
            seed: 0,
        })
    }

    pub fn zeros(n: usize) -> Self {
        ProjectionMatrix::from_rows(n, vec![0.0; n * n]).expect("square")
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.w[i * n + i] = 1.0;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// `W^T u`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: u.len(),
            });
        }
        Ok(self.project_unchecked(u))
    }

    fn project_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let row = &self.w[i * n..(i + 1) * n];
            for (o, wij) in out.iter_mut().zip(row) {
                *o += ui * wij;
            }
        }
        out
    }

    /// Header line `n`, then `n` rows of `n` values.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for row in self.w.chunks(self.n.max(1)) {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let n: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::parse(1, "expected matrix size"))?;
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| Error::parse(i + 2, "missing row"))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| Error::parse(i + 2, e.to_string()))?;
            if row.len() != n {
                return Err(Error::parse(i + 2, format!("expected {n} values")));
            }
            w.extend(row);
        }
        ProjectionMatrix::from_rows(n, w)
    }

    /// CSV `epoch,objective,eta`.
    pub fn train_log_csv(&self) -> String {
        let mut out = String::from("epoch,objective,eta\n");
        for e in &self.train_log {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.objective, e.eta);
        }
        out
    }
}

/// Free-function form of [`ProjectionMatrix::project`].
pub fn project(w: &ProjectionMatrix, u: &[f64]) -> Result<Vec<f64>> {
    w.project(u)
}

fn pair_vectors<'a>(
    pairs: &TranslationPairSet,
    src_emb: &'a EmbeddingTable,
    tgt_emb: &'a EmbeddingTable,
) -> Result<Vec<(&'a [f64], &'a [f64])>> {
    if src_emb.dim() != tgt_emb.dim() {
        return Err(Error::DimensionMismatch {
            expected: src_emb.dim(),
            actual: tgt_emb.dim(),
        });
    }
    pairs
        .pairs
        .iter()
        .map(|(s, t)| {
            let u = src_emb
                .get(s)
                .ok_or_else(|| Error::invalid("pairs", format!("{s:?} has no source vector")))?;
            let v = tgt_emb
                .get(t)
                .ok_or_else(|| Error::invalid("pairs", format!("{t:?} has no target vector")))?;
            Ok((u, v))
        })
        .collect()
}

fn objective_of(w: &ProjectionMatrix, vectors: &[(&[f64], &[f64])]) -> f64 {
    vectors
        .iter()
        .map(|(u, v)| {
            let p = w.project_unchecked(u);
            0.5 * p.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

/// `sum_pairs 1/2 |W^T u - v|^2`.
pub fn objective(
    w: &ProjectionMatrix,
    pairs: &TranslationPairSet,
    src_emb: &EmbeddingTable,
    tgt_emb: &EmbeddingTable,
) -> Result<f64> {
    let vectors = pair_vectors(pairs, src_emb, tgt_emb)?;
    check_dim(w, src_emb.dim())?;
    Ok(objective_of(w, &vectors))
}

/// Full-batch gradient `sum_pairs u (W^T u - v)^T`, row-major like `W`.
pub fn objective_gradient(
    w: &ProjectionMatrix,
    pairs: &TranslationPairSet,
    src_emb: &EmbeddingTable,
    tgt_emb: &EmbeddingTable,
) -> Result<Vec<f64>> {
    let vectors = pair_vectors(pairs, src_emb, tgt_emb)?;
    check_dim(w, src_emb.dim())?;
    let n = w.n;
    let mut grad = vec![0.0; n * n];
    for (u, v) in vectors {
        let r: Vec<f64> = w.project_unchecked(u).iter().zip(v).map(|(a, b)| a - b).collect();
        for i in 0..n {
            for j in 0..n {
                grad[i * n + j] += u[i] * r[j];
            }
        }
    }
    Ok(grad)
}

fn check_dim(w: &ProjectionMatrix, dim: usize) -> Result<()> {
    if w.n != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: w.n,
        });
    }
    Ok(())
}

/// Per-pair SGD in a seeded shuffled order, `eta` decaying geometrically
/// per epoch. The objective after every epoch goes into `train_log`.
pub fn learn_projection(
    pairs: &TranslationPairSet,
    src_emb: &EmbeddingTable,
    tgt_emb: &EmbeddingTable,
    cfg: &ProjectionConfig,
) -> Result<ProjectionMatrix> {
    if pairs.is_empty() {
        return Err(Error::NoPairs(NoPairsReason::NoVocabularyOverlap));
    }
    if !(cfg.eta > 0.0) {
        return Err(Error::invalid("eta", "must be positive"));
    }
    if !(cfg.decay > 0.0) {
        return Err(Error::invalid("decay", "must be positive"));
    }
    if !(cfg.init_range >= 0.0) {
        return Err(Error::invalid("init_range", "must be non-negative"));
    }
    let vectors = pair_vectors(pairs, src_emb, tgt_emb)?;
    let n = src_emb.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.init_range;
    let init: Vec<f64> = (0..n * n)
        .map(|_| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 })
        .collect();
    let mut w = ProjectionMatrix::from_rows(n, init)?;
    w.seed = cfg.seed;

    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut residual = vec![0.0; n];
    let mut eta = cfg.eta;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &p in &order {
            let (u, v) = vectors[p];
            residual.fill(0.0);
            for (i, &ui) in u.iter().enumerate() {
                let row = &w.w[i * n..(i + 1) * n];
                for (r, wij) in residual.iter_mut().zip(row) {
                    *r += ui * wij;
                }
            }
            for (r, vj) in residual.iter_mut().zip(v.iter()) {
                *r -= vj;
            }
            for (i, &ui) in u.iter().enumerate() {
                let step = eta * ui;
                let row = &mut w.w[i * n..(i + 1) * n];
                for (wij, r) in row.iter_mut().zip(&residual) {
                    *wij -= step * r;
                }
            }
        }
        let objective = objective_of(&w, &vectors);
        if !objective.is_finite() {
            return Err(Error::Diverged { epoch, objective });
        }
        w.train_log.push(EpochLog { epoch, objective, eta });
        eta *= cfg.decay;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_rows(rows[0].1.len(), rows.iter().map(|(w, v)| (*w, v.to_vec()))).unwrap()
    }

    fn single_pair() -> (TranslationPairSet, EmbeddingTable, EmbeddingTable) {
        let src = table(&[("a", &[2.0])]);
        let tgt = table(&[("x", &[6.0])]);
        let pairs = TranslationPairSet {
            pairs: vec![("a".into(), "x".into())],
            provenance: PairProvenance::default(),
        };
        (pairs, src, tgt)
    }

    #[test]
    fn extract_intersection() {
        let src = table(&[("a", &[1.0])]);
        let tgt = table(&[("x", &[1.0])]);
        let mut dict = BilingualDictionary::new();
        dict.add("a", ["x", "y"]);
        let set = extract_pairs(&src, &tgt, &dict).unwrap();
        assert_eq!(set.pairs, vec![("a".to_string(), "x".to_string())]);
        assert_eq!(set.provenance.candidates_examined, 2);
    }

    #[test]
    fn extract_errors_are_distinguished() {
        let src = table(&[("a", &[1.0])]);
        let tgt = table(&[("q", &[1.0])]);
        let mut dict = BilingualDictionary::new();
        dict.add("a", ["x"]);
        assert!(matches!(
            extract_pairs(&src, &tgt, &dict),
            Err(Error::NoPairs(NoPairsReason::NoVocabularyOverlap))
        ));
        assert!(matches!(
            extract_pairs(&src, &tgt, &BilingualDictionary::new()),
            Err(Error::NoPairs(NoPairsReason::EmptyDictionary))
        ));
    }

    #[test]
    fn objective_values() {
        let (pairs, src, tgt) = single_pair();
        assert_eq!(objective(&ProjectionMatrix::zeros(1), &pairs, &src, &tgt).unwrap(), 18.0);
        let exact = ProjectionMatrix::from_rows(1, vec![3.0]).unwrap();
        assert_eq!(objective(&exact, &pairs, &src, &tgt).unwrap(), 0.0);
        let doubled = table(&[("x", &[12.0])]);
        assert_eq!(objective(&ProjectionMatrix::zeros(1), &pairs, &src, &doubled).unwrap(), 72.0);
        assert!(objective(&ProjectionMatrix::zeros(2), &pairs, &src, &tgt).is_err());
    }

    #[test]
    fn one_update_by_hand() {
        let (pairs, src, tgt) = single_pair();
        let cfg = ProjectionConfig {
            eta: 0.1,
            epochs: 1,
            decay: 1.0,
            init_range: 0.0,
            seed: 0,
        };
        let w = learn_projection(&pairs, &src, &tgt, &cfg).unwrap();
        assert_abs_diff_eq!(w.get(0, 0), 1.2, epsilon = 1e-15);
        assert_eq!(w.train_log.len(), 1);
        assert_eq!(w.train_log[0].eta, 0.1);
    }

    #[test]
    fn satisfied_pairs_leave_w_unchanged() {
        let src = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let tgt = table(&[("x", &[0.5, -1.0]), ("y", &[2.0, 0.25])]);
        // W^T e1 = (0.5, -1), W^T e2 = (2, 0.25)  =>  rows of W
        let exact = ProjectionMatrix::from_rows(2, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let pairs = TranslationPairSet {
            pairs: vec![("a".into(), "x".into()), ("b".into(), "y".into())],
            provenance: PairProvenance::default(),
        };
        assert_eq!(objective(&exact, &pairs, &src, &tgt).unwrap(), 0.0);
        let g = objective_gradient(&exact, &pairs, &src, &tgt).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_is_reported() {
        let (pairs, src, tgt) = single_pair();
        let cfg = ProjectionConfig {
            eta: 10.0,
            epochs: 2000,
            decay: 1.0,
            init_range: 0.0,
            seed: 0,
        };
        assert!(matches!(
            learn_projection(&pairs, &src, &tgt, &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn projection_matches_naive_loop() {
        let w = ProjectionMatrix::from_rows(
            4,
            vec![
                0.3, -1.2, 0.7, 2.0, 1.1, 0.0, -0.4, 0.9, -0.6, 0.8, 1.5, -0.2, 0.05, -0.3, 0.25, 1.0,
            ],
        )
        .unwrap();
        let u = [0.9, -0.1, 0.4, 2.2];
        let got = project(&w, &u).unwrap();
        for j in 0..4 {
            let mut expected = 0.0;
            for i in 0..4 {
                expected += w.get(i, j) * u[i];
            }
            assert_abs_diff_eq!(got[j], expected, epsilon = 1e-14);
        }
        assert_eq!(ProjectionMatrix::identity(4).project(&u).unwrap(), u.to_vec());
        let two = ProjectionMatrix::from_rows(2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(two.project(&[1.5, -3.0]).unwrap(), vec![3.0, -6.0]);
        assert!(w.project(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn matrix_text_round_trip() {
        let w = ProjectionMatrix::from_rows(2, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0]).unwrap();
        let back = ProjectionMatrix::from_text(&w.to_text()).unwrap();
        assert_eq!(back.as_slice(), w.as_slice());
        assert!(ProjectionMatrix::from_text("2\n1 2\n").is_err());
    }
}
