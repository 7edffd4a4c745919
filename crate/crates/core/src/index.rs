//! Inverted index, query models, and KL-divergence retrieval with Dirichlet
//! smoothing.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::corpus::Document;
use crate::error::{Error, Result};

/// A probability distribution over terms. Weights are positive and sum to one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryModel {
    weights: BTreeMap<String, f64>,
}

impl QueryModel {
    /// Normalizes non-negative weights, merging repeated terms and dropping
    /// zeros. Fails if nothing positive remains.
    pub fn from_weights<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut acc: BTreeMap<String, f64> = BTreeMap::new();
        for (t, w) in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid("weight", format!("{w} is not a finite non-negative weight")));
            }
            if w > 0.0 {
                *acc.entry(t.into()).or_insert(0.0) += w;
            }
        }
        let total: f64 = acc.values().sum();
        if acc.is_empty() || total <= 0.0 {
            return Err(Error::EmptyQuery);
        }
        for w in acc.values_mut() {
            *w /= total;
        }
        Ok(QueryModel { weights: acc })
    }

    /// Maximum-likelihood model of a term sequence.
    pub fn mle<S: AsRef<str>>(terms: &[S]) -> Result<Self> {
        Self::from_weights(terms.iter().map(|t| (t.as_ref().to_string(), 1.0)))
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    /// Terms in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// TSV `term<TAB>weight`, heaviest first.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::new();
        for (t, w) in rows {
            let _ = writeln!(out, "{t}\t{w:.12e}");
        }
        out
    }
}

/// Documents ordered by score descending, ties by doc id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts into canonical order.
    pub fn from_scores(mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RankedList { entries }
    }

    /// Accepts entries that are already in canonical order.
    pub fn from_sorted(entries: Vec<(String, f64)>) -> Result<Self> {
        for pair in entries.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let ordered = a.1 > b.1 || (a.1 == b.1 && a.0 < b.0);
            if !ordered {
                return Err(Error::InvalidRun(format!(
                    "{} ({}) ranked above {} ({})",
                    a.0, a.1, b.0, b.1
                )));
            }
        }
        Ok(RankedList { entries })
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(d, _)| d.as_str())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Term statistics for one collection. Documents are addressed internally by
/// their insertion position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lookup: HashMap<String, u32>,
    doc_lengths: Vec<u64>,
    terms: Vec<String>,
    term_lookup: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    collection_freq: Vec<u64>,
    total_tokens: u64,
}

impl InvertedIndex {
    pub fn build<'a, I>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut index = InvertedIndex::default();
        for doc in docs {
            index.add(doc)?;
        }
        Ok(index)
    }

    fn add(&mut self, doc: &Document) -> Result<()> {
        if self.doc_lookup.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDocId(doc.doc_id.clone()));
        }
        let d = self.doc_ids.len() as u32;
        self.doc_lookup.insert(doc.doc_id.clone(), d);
        self.doc_ids.push(doc.doc_id.clone());
        self.doc_lengths.push(doc.len() as u64);
        self.total_tokens += doc.len() as u64;

        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &doc.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
        for (t, tf) in counts {
            let id = match self.term_lookup.get(t) {
                Some(&id) => id,
                None => {
                    let id = self.terms.len() as u32;
                    self.terms.push(t.to_string());
                    self.term_lookup.insert(t.to_string(), id);
                    self.postings.push(Vec::new());
                    self.collection_freq.push(0);
                    id
                }
            };
            self.postings[id as usize].push(Posting { doc: d, tf });
            self.collection_freq[id as usize] += tf as u64;
        }
        Ok(())
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, doc_id: &str) -> Result<u64> {
        let d = self.doc_index(doc_id)?;
        Ok(self.doc_lengths[d])
    }

    fn doc_index(&self, doc_id: &str) -> Result<usize> {
        self.doc_lookup
            .get(doc_id)
            .map(|&d| d as usize)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))
    }

    pub fn collection_freq(&self, term: &str) -> u64 {
        self.term_lookup
            .get(term)
            .map(|&id| self.collection_freq[id as usize])
            .unwrap_or(0)
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.term_lookup.contains_key(term)
    }

    /// p(term | C) = cf / total_tokens.
    pub fn collection_prob(&self, term: &str) -> f64 {
        if self.total_tokens == 0 {
            return 0.0;
        }
        self.collection_freq(term) as f64 / self.total_tokens as f64
    }

    pub fn term_freq(&self, term: &str, doc_id: &str) -> Result<u64> {
        let d = self.doc_index(doc_id)? as u32;
        Ok(self.tf_by_index(term, d))
    }

    fn tf_by_index(&self, term: &str, d: u32) -> u64 {
        let Some(&id) = self.term_lookup.get(term) else {
            return 0;
        };
        let list = &self.postings[id as usize];
        list.binary_search_by_key(&d, |p| p.doc)
            .map(|i| list[i].tf as u64)
            .unwrap_or(0)
    }

    /// Postings of a term as `(doc_id, tf)`, in document insertion order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u64)> {
        self.term_lookup
            .get(term)
            .map(|&id| {
                self.postings[id as usize]
                    .iter()
                    .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf as u64))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Vocabulary in first-seen order.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Dirichlet-smoothed document model:
/// `(tf + mu * p(w|C)) / (|d| + mu)`.
pub fn smoothed_prob(term: &str, doc_id: &str, index: &InvertedIndex, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::invalid("mu", format!("{mu} must be positive")));
    }
    let d = index.doc_index(doc_id)?;
    let p_c = index.collection_prob(term);
    if p_c == 0.0 {
        return Ok(0.0);
    }
    let tf = index.tf_by_index(term, d as u32) as f64;
    Ok((tf + mu * p_c) / (index.doc_lengths[d] as f64 + mu))
}

/// Ranks documents by `sum_w q(w) * ln p_mu(w|d)` and returns the top `k`.
///
/// Query terms unseen in the collection contribute the same infinite penalty
/// to every document and are skipped. The sum is evaluated as a shared prior
/// part plus per-posting corrections:
///
/// `sum_w q(w) ln(mu p_w) - Q ln(|d| + mu) + sum_{w in d} q(w) ln(1 + tf / (mu p_w))`
pub fn retrieve(query: &QueryModel, index: &InvertedIndex, mu: f64, k: usize) -> Result<RankedList> {
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if !(mu > 0.0) {
        return Err(Error::invalid("mu", format!("{mu} must be positive")));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let mut prior = 0.0;
    let mut mass = 0.0;
    let mut active = Vec::new();
    for (term, q) in query.iter() {
        if let Some(&id) = index.term_lookup.get(term) {
            let p_c = index.collection_freq[id as usize] as f64 / index.total_tokens as f64;
            prior += q * (mu * p_c).ln();
            mass += q;
            active.push((id, q, mu * p_c));
        }
    }
    if active.is_empty() {
        return Ok(RankedList::default());
    }
    let mut scores: Vec<f64> = index
        .doc_lengths
        .iter()
        .map(|&len| prior - mass * (len as f64 + mu).ln())
        .collect();
    for (id, q, mu_pc) in active {
        for p in &index.postings[id as usize] {
            scores[p.doc as usize] += q * (p.tf as f64 / mu_pc).ln_1p();
        }
    }
    let mut ranked = RankedList::from_scores(
        index
            .doc_ids
            .iter()
            .cloned()
            .zip(scores)
            .collect(),
    );
    ranked.truncate(k);
    Ok(ranked)
}

const INDEX_MAGIC: &str = "clir-index";
const INDEX_VERSION: u32 = 1;

impl InvertedIndex {
    /// Line-based serialization.
    ///
    /// ```text
    /// clir-index 1
    /// docs <N> tokens <T>
    /// <doc_id>\t<length>                 (N lines, insertion order)
    /// terms <V>
    /// <term>\t<cf>\t<doc>:<tf> <doc>:<tf> ...   (V lines, first-seen order)
    /// ```
    ///
    /// `<doc>` is the zero-based document position. Doc ids and terms must not
    /// contain tabs or newlines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{INDEX_MAGIC} {INDEX_VERSION}");
        let _ = writeln!(out, "docs {} tokens {}", self.doc_ids.len(), self.total_tokens);
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            let _ = writeln!(out, "{id}\t{len}");
        }
        let _ = writeln!(out, "terms {}", self.terms.len());
        for (i, t) in self.terms.iter().enumerate() {
            let _ = write!(out, "{t}\t{}\t", self.collection_freq[i]);
            for (j, p) in self.postings[i].iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}:{}", p.doc, p.tf);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidIndex(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        match header.split_once(' ') {
            Some((INDEX_MAGIC, v)) if v == INDEX_VERSION.to_string() => {}
            _ => return Err(bad(format!("unsupported header {header:?}"))),
        }
        let counts = lines.next().ok_or_else(|| bad("missing docs line".into()))?;
        let parts: Vec<&str> = counts.split(' ').collect();
        let (n_docs, total_tokens) = match parts[..] {
            ["docs", n, "tokens", t] => (
                n.parse::<usize>().map_err(|e| bad(e.to_string()))?,
                t.parse::<u64>().map_err(|e| bad(e.to_string()))?,
            ),
            _ => return Err(bad(format!("bad docs line {counts:?}"))),
        };
        let mut index = InvertedIndex::default();
        for _ in 0..n_docs {
            let line = lines.next().ok_or_else(|| bad("truncated docs section".into()))?;
            let (id, len) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("bad doc line {line:?}")))?;
            let len: u64 = len.parse().map_err(|_| bad(format!("bad doc length {len:?}")))?;
            if index.doc_lookup.contains_key(id) {
                return Err(Error::DuplicateDocId(id.to_string()));
            }
            index.doc_lookup.insert(id.to_string(), index.doc_ids.len() as u32);
            index.doc_ids.push(id.to_string());
            index.doc_lengths.push(len);
        }
        index.total_tokens = total_tokens;
        let terms_line = lines.next().ok_or_else(|| bad("missing terms line".into()))?;
        let n_terms: usize = terms_line
            .strip_prefix("terms ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(format!("bad terms line {terms_line:?}")))?;
        let mut tf_per_doc = vec![0u64; n_docs];
        for _ in 0..n_terms {
            let line = lines.next().ok_or_else(|| bad("truncated terms section".into()))?;
            let mut cols = line.split('\t');
            let (Some(term), Some(cf), Some(list), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad(format!("bad term line {line:?}")));
            };
            let cf: u64 = cf.parse().map_err(|_| bad(format!("bad cf in {line:?}")))?;
            let mut postings = Vec::new();
            let mut sum = 0;
            for item in list.split(' ').filter(|s| !s.is_empty()) {
                let (d, tf) = item
                    .split_once(':')
                    .ok_or_else(|| bad(format!("bad posting {item:?}")))?;
                let d: u32 = d.parse().map_err(|_| bad(format!("bad posting {item:?}")))?;
                let tf: u32 = tf.parse().map_err(|_| bad(format!("bad posting {item:?}")))?;
                if d as usize >= n_docs || tf == 0 {
                    return Err(bad(format!("posting {item:?} out of range")));
                }
                if postings.last().is_some_and(|p: &Posting| p.doc >= d) {
                    return Err(bad(format!("postings of {term:?} not ascending")));
                }
                tf_per_doc[d as usize] += tf as u64;
                sum += tf as u64;
                postings.push(Posting { doc: d, tf });
            }
            if sum != cf {
                return Err(bad(format!("collection frequency of {term:?} disagrees with postings")));
            }
            if index.term_lookup.contains_key(term) {
                return Err(bad(format!("duplicate term {term:?}")));
            }
            index.term_lookup.insert(term.to_string(), index.terms.len() as u32);
            index.terms.push(term.to_string());
            index.postings.push(postings);
            index.collection_freq.push(cf);
        }
        if lines.next().is_some() {
            return Err(bad("trailing content".into()));
        }
        if tf_per_doc != index.doc_lengths {
            return Err(bad("document lengths disagree with postings".into()));
        }
        if index.doc_lengths.iter().sum::<u64>() != index.total_tokens {
            return Err(bad("token total disagrees with document lengths".into()));
        }
        Ok(index)
    }
}

/// Normalized documents together with their index.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    docs: Vec<Document>,
    index: InvertedIndex,
}

const COLLECTION_MAGIC: &str = "clir-collection";

impl Collection {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let index = InvertedIndex::build(&docs)?;
        Ok(Collection { docs, index })
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, doc_id: &str) -> Result<&Document> {
        let d = self.index.doc_index(doc_id)?;
        Ok(&self.docs[d])
    }

    /// Documents named by a ranked list, in rank order.
    pub fn docs_for(&self, ranked: &RankedList) -> Result<Vec<Document>> {
        ranked.doc_ids().map(|d| self.doc(d).cloned()).collect()
    }

    /// `clir-collection 1`, `docs <N>`, then `<doc_id>\t<space-separated tokens>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{COLLECTION_MAGIC} {INDEX_VERSION}");
        let _ = writeln!(out, "docs {}", self.docs.len());
        for d in &self.docs {
            let _ = writeln!(out, "{}\t{}", d.doc_id, d.tokens.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidIndex(m);
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != format!("{COLLECTION_MAGIC} {INDEX_VERSION}") {
            return Err(bad(format!("unsupported header {header:?}")));
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("docs "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("bad docs line".into()))?;
        let mut docs = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated docs section".into()))?;
            let (id, toks) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("bad doc line {line:?}")))?;
            let tokens = toks.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
            docs.push(Document::new(id, tokens));
        }
        if lines.next().is_some() {
            return Err(bad("trailing content".into()));
        }
        Collection::new(docs)
    }
}
