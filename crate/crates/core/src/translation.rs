//! Term translation models `p(w^t | w^s)` and query-model translation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{BilingualDictionary, Document};
use crate::embeddings::{cosine, train_sgns, EmbeddingTable, SgnsConfig};
use crate::error::{Error, Result};
use crate::index::QueryModel;
use crate::projection::ProjectionMatrix;

/// What happens to a query term the model cannot score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    UniformOverCandidates,
    DropTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    NoDictionaryEntry,
    NoSourceVector,
    NoCandidateVector,
    /// The model needed per-topic embeddings that could not be built.
    NoEmbeddings,
}

impl FallbackReason {
    pub fn policy(self) -> Fallback {
        match self {
            FallbackReason::NoDictionaryEntry => Fallback::DropTerm,
            _ => Fallback::UniformOverCandidates,
        }
    }
}

/// Rows keyed by source term, candidates in dictionary order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranslationModel {
    rows: BTreeMap<String, Vec<(String, f64)>>,
    fallbacks: BTreeMap<String, FallbackReason>,
}

impl TranslationModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a row, normalizing it. Zero-weight entries are kept.
    pub fn insert_row(&mut self, source: impl Into<String>, row: Vec<(String, f64)>) -> Result<()> {
        if row.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("row", "probabilities must be finite and non-negative"));
        }
        let z: f64 = row.iter().map(|(_, p)| p).sum();
        if !(z > 0.0) {
            return Err(Error::invalid("row", "has no mass"));
        }
        let row = row.into_iter().map(|(t, p)| (t, p / z)).collect();
        self.rows.insert(source.into(), row);
        Ok(())
    }

    pub fn row(&self, source: &str) -> Option<&[(String, f64)]> {
        self.rows.get(source).map(Vec::as_slice)
    }

    pub fn prob(&self, source: &str, target: &str) -> f64 {
        self.row(source)
            .and_then(|r| r.iter().find(|(t, _)| t == target))
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rows.iter().map(|(s, r)| (s.as_str(), r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Terms that took a fallback, and why.
    pub fn fallbacks(&self) -> &BTreeMap<String, FallbackReason> {
        &self.fallbacks
    }

    /// Most probable target; ties go to the earlier candidate.
    pub fn argmax(&self, source: &str) -> Option<&str> {
        let row = self.row(source)?;
        let mut best: Option<&(String, f64)> = None;
        for e in row {
            if best.map_or(true, |b| e.1 > b.1) {
                best = Some(e);
            }
        }
        best.map(|(t, _)| t.as_str())
    }

    /// `source<TAB>target<TAB>prob`, grouped by source.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, row) in &self.rows {
            for (t, p) in row {
                let _ = writeln!(out, "{s}\t{t}\t{p:.12e}");
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [s, t, p] = cols[..] else {
                return Err(Error::parse(i + 1, "expected 3 tab-separated columns"));
            };
            let p: f64 = p.parse().map_err(|_| Error::parse(i + 1, "bad probability"))?;
            rows.entry(s.to_string()).or_default().push((t.to_string(), p));
        }
        let mut tm = TranslationModel::new();
        for (s, row) in rows {
            tm.insert_row(s, row)?;
        }
        Ok(tm)
    }

    fn fall_back(&mut self, term: &str, candidates: Option<&[String]>, reason: FallbackReason) {
        self.fallbacks.insert(term.to_string(), reason);
        if let (Fallback::UniformOverCandidates, Some(c)) = (reason.policy(), candidates) {
            self.rows.insert(term.to_string(), uniform_row(c));
        }
    }
}

fn uniform_row(candidates: &[String]) -> Vec<(String, f64)> {
    let p = 1.0 / candidates.len() as f64;
    candidates.iter().map(|c| (c.clone(), p)).collect()
}

fn distinct_terms<S: AsRef<str>>(query_terms: &[S]) -> BTreeSet<&str> {
    query_terms.iter().map(AsRef::as_ref).collect()
}

fn entry<'a>(dict: &'a BilingualDictionary, term: &str) -> Option<&'a [String]> {
    dict.candidates(term).filter(|c| !c.is_empty())
}

/// `e^{s_i - max} / sum_j e^{s_j - max}`.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Softmax over cosine(query vector, candidate vector).
fn cosine_softmax_model<S, F>(
    query_terms: &[S],
    dict: &BilingualDictionary,
    tgt_emb: &EmbeddingTable,
    query_vector: F,
) -> TranslationModel
where
    S: AsRef<str>,
    F: Fn(&str) -> Option<Vec<f64>>,
{
    let mut tm = TranslationModel::new();
    for term in distinct_terms(query_terms) {
        let Some(cands) = entry(dict, term) else {
            tm.fall_back(term, None, FallbackReason::NoDictionaryEntry);
            continue;
        };
        let Some(u) = query_vector(term) else {
            tm.fall_back(term, Some(cands), FallbackReason::NoSourceVector);
            continue;
        };
        let mut kept = Vec::new();
        let mut scores = Vec::new();
        let mut zero_query = false;
        for c in cands {
            let Some(v) = tgt_emb.get(c) else { continue };
            match cosine(&u, v) {
                Ok(s) => {
                    kept.push(c.clone());
                    scores.push(s);
                }
                Err(_) if u.iter().all(|&x| x == 0.0) => zero_query = true,
                Err(_) => {}
            }
        }
        if zero_query {
            tm.fall_back(term, Some(cands), FallbackReason::NoSourceVector);
        } else if kept.is_empty() {
            tm.fall_back(term, Some(cands), FallbackReason::NoCandidateVector);
        } else {
            let row = kept.into_iter().zip(softmax(&scores)).collect();
            tm.rows.insert(term.to_string(), row);
        }
    }
    tm
}

/// Softmax over cosine(W^T u, v) for each dictionary candidate with a vector.
pub fn clwetm_model<S: AsRef<str>>(
    query_terms: &[S],
    w: &ProjectionMatrix,
    src_emb: &EmbeddingTable,
    tgt_emb: &EmbeddingTable,
    dict: &BilingualDictionary,
) -> Result<TranslationModel> {
    for dim in [src_emb.dim(), tgt_emb.dim()] {
        if dim != w.n() {
            return Err(Error::DimensionMismatch {
                expected: w.n(),
                actual: dim,
            });
        }
    }
    Ok(cosine_softmax_model(query_terms, dict, tgt_emb, |t| {
        src_emb.get(t).map(|u| w.project(u).expect("dimension checked"))
    }))
}

/// Every candidate gets `1 / |T(w^s)|`.
pub fn uniform_model<S: AsRef<str>>(query_terms: &[S], dict: &BilingualDictionary) -> TranslationModel {
    let mut tm = TranslationModel::new();
    for term in distinct_terms(query_terms) {
        match entry(dict, term) {
            Some(c) => {
                tm.rows.insert(term.to_string(), uniform_row(c));
            }
            None => tm.fall_back(term, None, FallbackReason::NoDictionaryEntry),
        }
    }
    tm
}

/// The first dictionary candidate gets probability 1.
pub fn top1_model<S: AsRef<str>>(query_terms: &[S], dict: &BilingualDictionary) -> TranslationModel {
    let mut tm = TranslationModel::new();
    for term in distinct_terms(query_terms) {
        match entry(dict, term) {
            Some(c) => {
                tm.rows.insert(term.to_string(), vec![(c[0].clone(), 1.0)]);
            }
            None => tm.fall_back(term, None, FallbackReason::NoDictionaryEntry),
        }
    }
    tm
}

/// Symmetric windowed co-occurrence counts among `terms`: the number of
/// ordered position pairs `(i, j)`, `0 < |i - j| <= window`, with
/// `tokens[i] = a` and `tokens[j] = b`.
pub fn cooccurrence_counts(
    docs: &[Document],
    terms: &HashSet<&str>,
    window: usize,
) -> HashMap<(String, String), u64> {
    let mut counts: HashMap<(String, String), u64> = HashMap::new();
    for d in docs {
        let hits: Vec<(usize, &str)> = d
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| terms.contains(t.as_str()))
            .map(|(i, t)| (i, t.as_str()))
            .collect();
        for (k, &(i, a)) in hits.iter().enumerate() {
            for &(j, b) in &hits[k + 1..] {
                if j - i > window {
                    break;
                }
                *counts.entry((a.to_string(), b.to_string())).or_insert(0) += 1;
                *counts.entry((b.to_string(), a.to_string())).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Candidate score `1 + sum` of windowed co-occurrences with the candidates
/// of every other query term, normalized per source term.
pub fn cooccur_model<S: AsRef<str>>(
    query_terms: &[S],
    dict: &BilingualDictionary,
    tgt_docs: &[Document],
    window: usize,
) -> Result<TranslationModel> {
    if window == 0 {
        return Err(Error::invalid("window", "must be at least 1"));
    }
    let terms = distinct_terms(query_terms);
    let all_cands: HashSet<&str> = terms
        .iter()
        .filter_map(|t| entry(dict, t))
        .flatten()
        .map(String::as_str)
        .collect();
    let counts = cooccurrence_counts(tgt_docs, &all_cands, window);
    let count = |a: &str, b: &str| counts.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0);

    let mut tm = TranslationModel::new();
    for &term in &terms {
        let Some(cands) = entry(dict, term) else {
            tm.fall_back(term, None, FallbackReason::NoDictionaryEntry);
            continue;
        };
        let row = cands
            .iter()
            .map(|c| {
                let evidence: u64 = terms
                    .iter()
                    .filter(|&&o| o != term)
                    .filter_map(|o| entry(dict, o))
                    .flatten()
                    .map(|o| count(c, o))
                    .sum();
                (c.clone(), 1.0 + evidence as f64)
            })
            .collect();
        tm.insert_row(term, row)?;
    }
    Ok(tm)
}

const SRC_PREFIX: &str = "s:";
const TGT_PREFIX: &str = "t:";

/// Pairs the i-th source document with the i-th target document and
/// shuffles each pair's tokens into one pseudo-bilingual document. Tokens are
/// prefixed `s:` / `t:` so identical spellings stay distinct.
pub fn merge_aligned(f_s: &[Document], f_t: &[Document], seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    f_s.iter()
        .zip(f_t)
        .map(|(s, t)| {
            let mut tokens: Vec<String> = s
                .tokens
                .iter()
                .map(|w| format!("{SRC_PREFIX}{w}"))
                .chain(t.tokens.iter().map(|w| format!("{TGT_PREFIX}{w}")))
                .collect();
            tokens.shuffle(&mut rng);
            Document::new(format!("{}+{}", s.doc_id, t.doc_id), tokens)
        })
        .collect()
}

/// Shared-space baseline: SGNS over merged aligned documents, then softmax
/// over cosine(v_s, v_t) without projection.
pub fn mixwetm_model<S: AsRef<str>>(
    query_terms: &[S],
    f_s: &[Document],
    f_t: &[Document],
    dict: &BilingualDictionary,
    cfg: &SgnsConfig,
    seed: u64,
) -> Result<TranslationModel> {
    if f_s.is_empty() || f_t.is_empty() {
        return Err(Error::invalid("feedback_docs", "both languages need at least one document"));
    }
    let merged = merge_aligned(f_s, f_t, seed);
    let shared = train_sgns(&merged, cfg)?;
    let mut tgt = EmbeddingTable::new(shared.dim());
    for (w, v) in shared.iter() {
        if let Some(t) = w.strip_prefix(TGT_PREFIX) {
            tgt.insert(t, v)?;
        }
    }
    Ok(cosine_softmax_model(query_terms, dict, &tgt, |t| {
        shared.get(&format!("{SRC_PREFIX}{t}")).map(<[f64]>::to_vec)
    }))
}

/// `alpha * p1 + (1 - alpha) * p2` per source term over the union of
/// supports. The endpoints return exact copies.
pub fn interpolate_models(p1: &TranslationModel, p2: &TranslationModel, alpha: f64) -> Result<TranslationModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} is outside [0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(p1.clone());
    }
    if alpha == 0.0 {
        return Ok(p2.clone());
    }
    let mut tm = TranslationModel::new();
    let sources: BTreeSet<&str> = p1.rows.keys().chain(p2.rows.keys()).map(String::as_str).collect();
    for s in sources {
        let mut row: Vec<(String, f64)> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (weight, model) in [(alpha, p1), (1.0 - alpha, p2)] {
            for (t, p) in model.row(s).unwrap_or_default() {
                match pos.get(t.as_str()) {
                    Some(&i) => row[i].1 += weight * p,
                    None => {
                        pos.insert(t, row.len());
                        row.push((t.clone(), weight * p));
                    }
                }
            }
        }
        tm.insert_row(s, row)?;
    }
    for (t, r) in p2.fallbacks.iter().chain(&p1.fallbacks) {
        tm.fallbacks.insert(t.clone(), *r);
    }
    Ok(tm)
}

/// `q^t(w^t) = sum_s p(w^t | w^s) q^s(w^s)`, renormalized over the source
/// terms the model covers.
pub fn translate_query_model(src_query: &QueryModel, tm: &TranslationModel) -> Result<QueryModel> {
    let mut acc: BTreeMap<String, f64> = BTreeMap::new();
    for (s, q) in src_query.iter() {
        for (t, p) in tm.row(s).unwrap_or_default() {
            *acc.entry(t.clone()).or_insert(0.0) += p * q;
        }
    }
    if acc.values().all(|&w| w == 0.0) {
        return Err(Error::AllTermsDropped);
    }
    QueryModel::from_weights(acc)
}
