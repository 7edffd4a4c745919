//! Word vectors: a per-language table, cosine similarity, the word2vec text
//! format, and a skip-gram negative-sampling trainer.

mod sgns;

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub use sgns::{
    context_pairs, sgns_loss, sgns_loss_grad, train_sgns, NegativeSampler, SgnsConfig,
};

/// How a table was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbeddingMeta {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    lookup: HashMap<String, usize>,
    data: Vec<f64>,
    meta: Option<EmbeddingMeta>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            lookup: HashMap::new(),
            data: Vec::new(),
            meta: None,
        }
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut t = EmbeddingTable::new(dim);
        for (w, v) in rows {
            t.insert(w, &v)?;
        }
        Ok(t)
    }

    /// Adds or replaces a vector.
    pub fn insert(&mut self, word: impl Into<String>, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        let word = word.into();
        match self.lookup.get(&word) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.lookup.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn with_meta(mut self, meta: EmbeddingMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<&EmbeddingMeta> {
        self.meta.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.lookup
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup.contains_key(word)
    }

    /// Words in table order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(w, v)| (w.as_str(), v))
    }

    /// word2vec text format: `vocab_size dim`, then `word v1 ... v_dim`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.len(), self.dim);
        for (w, v) in self.iter() {
            out.push_str(w);
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let mut parts = header.split_whitespace();
        let (Some(n), Some(dim), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(1, "expected `vocab_size dim`"));
        };
        let n: usize = n.parse().map_err(|_| Error::parse(1, "bad vocab size"))?;
        let dim: usize = dim.parse().map_err(|_| Error::parse(1, "bad dimension"))?;
        let mut table = EmbeddingTable::new(dim);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(' ');
            let word = cols.next().unwrap_or_default();
            let v: Vec<f64> = cols
                .filter(|c| !c.is_empty())
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if v.len() != dim {
                return Err(Error::parse(i + 1, format!("expected {dim} values, got {}", v.len())));
            }
            if table.contains(word) {
                return Err(Error::parse(i + 1, format!("duplicate word {word:?}")));
            }
            table.insert(word, &v)?;
        }
        if table.len() != n {
            return Err(Error::parse(1, format!("header says {n} words, found {}", table.len())));
        }
        Ok(table)
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `u.v / (|u| |v|)`, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_values() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn insert_checks_dimension() {
        let mut t = EmbeddingTable::new(3);
        assert!(t.insert("a", &[1.0, 2.0]).is_err());
        t.insert("a", &[1.0, 2.0, 3.0]).unwrap();
        t.insert("a", &[0.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap(), &[0.0, 2.0, 3.0]);
    }

    #[test]
    fn text_errors() {
        assert!(EmbeddingTable::from_text("2 2\na 1 2\n").is_err());
        assert!(EmbeddingTable::from_text("1 2\na 1\n").is_err());
        assert!(EmbeddingTable::from_text("1 2\na 1 x\n").is_err());
        let t = EmbeddingTable::from_text("0 4\n").unwrap();
        assert!(t.is_empty());
    }

    proptest! {
        #[test]
        fn text_format_round_trips(rows in proptest::collection::btree_map("[a-z]{1,8}", proptest::collection::vec(-1e3f64..1e3, 4), 0..20)) {
            let t = EmbeddingTable::from_rows(4, rows).unwrap();
            let text = t.to_text();
            let back = EmbeddingTable::from_text(&text).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
