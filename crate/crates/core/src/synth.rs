//! Paired synthetic corpora with a known dictionary and known relevance.
//!
//! Each latent topic owns a disjoint slice of the vocabulary with Zipf
//! weights. Its words are grouped into clusters of related terms; a document
//! is a sequence of segments, each segment drawing from one cluster, so words
//! of a cluster co-occur within short windows. Source word `s_i` and target
//! word `t_i` play the same role in both languages, but documents are drawn
//! independently per language (comparable, not parallel).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BilingualDictionary, Document, Qrels, Topic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub num_topics: usize,
    pub docs_per_lang: usize,
    pub doc_len: usize,
    pub confusers_per_entry: usize,
    /// Probability that a token comes from its segment's cluster rather than
    /// uniform noise.
    pub topicality: f64,
    pub seed: u64,
    pub queries_per_topic: usize,
    pub query_len: usize,
    pub desc_len: usize,
    pub cluster_size: usize,
    pub segment_len: usize,
    /// Share of the vocabulary owned by no topic; such words only occur as
    /// noise.
    pub background_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 500,
            num_topics: 8,
            docs_per_lang: 400,
            doc_len: 100,
            confusers_per_entry: 3,
            topicality: 0.8,
            seed: 1,
            queries_per_topic: 1,
            query_len: 3,
            desc_len: 5,
            cluster_size: 8,
            segment_len: 10,
            background_fraction: 0.5,
        }
    }
}

impl SynthConfig {
    fn words_per_topic(&self) -> usize {
        let topical = ((1.0 - self.background_fraction) * self.vocab_size as f64).round() as usize;
        topical / self.num_topics.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthConfig(m));
        if self.num_topics == 0 {
            return bad("num_topics must be at least 1".into());
        }
        if self.vocab_size < self.num_topics {
            return bad(format!(
                "vocab_size {} is smaller than num_topics {}",
                self.vocab_size, self.num_topics
            ));
        }
        if self.confusers_per_entry >= self.vocab_size {
            return bad(format!(
                "{} confusers need more than {} vocabulary entries",
                self.confusers_per_entry, self.vocab_size
            ));
        }
        if !(self.topicality > 0.0 && self.topicality <= 1.0) {
            return bad(format!("topicality {} is outside (0, 1]", self.topicality));
        }
        if self.docs_per_lang == 0 || self.doc_len == 0 {
            return bad("documents must be non-empty".into());
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return bad(format!("background_fraction {} is outside [0, 1)", self.background_fraction));
        }
        if self.cluster_size == 0 || self.segment_len == 0 {
            return bad("cluster_size and segment_len must be at least 1".into());
        }
        if self.queries_per_topic == 0 || self.query_len == 0 {
            return bad("every topic needs a non-empty query".into());
        }
        let needed = self.queries_per_topic * self.query_len;
        if needed > self.words_per_topic() {
            return bad(format!(
                "{needed} query terms per topic exceed the {} words each topic owns",
                self.words_per_topic()
            ));
        }
        Ok(())
    }
}

pub fn source_word(i: usize) -> String {
    format!("s{i:04}")
}

pub fn target_word(i: usize) -> String {
    format!("t{i:04}")
}

/// Which topic generated each document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationTrace {
    pub source_labels: Vec<usize>,
    pub target_labels: Vec<usize>,
    /// Relevant target documents per topic id, as counted while generating.
    pub relevant_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub source: Vec<Document>,
    pub target: Vec<Document>,
    pub dictionary: BilingualDictionary,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
    /// Ground-truth translation of every source word.
    pub truth: BTreeMap<String, String>,
    pub trace: GenerationTrace,
}

struct TopicModel {
    /// Word ids by descending weight.
    words: Vec<usize>,
    cluster_pick: WeightedIndex<f64>,
    /// Per cluster: member word ids and a sampler over them.
    clusters: Vec<(Vec<usize>, WeightedIndex<f64>)>,
}

impl TopicModel {
    fn new(words: Vec<usize>, cluster_size: usize) -> Self {
        let weight = |rank: usize| 1.0 / (rank + 1) as f64;
        let mut clusters = Vec::new();
        let mut cluster_w = Vec::new();
        for (c, chunk) in words.chunks(cluster_size).enumerate() {
            let ws: Vec<f64> = (0..chunk.len()).map(|j| weight(c * cluster_size + j)).collect();
            cluster_w.push(ws.iter().sum::<f64>());
            clusters.push((chunk.to_vec(), WeightedIndex::new(&ws).expect("positive weights")));
        }
        TopicModel {
            words,
            cluster_pick: WeightedIndex::new(&cluster_w).expect("positive weights"),
            clusters,
        }
    }

    fn sample_doc(&self, rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<usize> {
        let mut out = Vec::with_capacity(cfg.doc_len);
        while out.len() < cfg.doc_len {
            let (members, pick) = &self.clusters[self.cluster_pick.sample(rng)];
            for _ in 0..cfg.segment_len.min(cfg.doc_len - out.len()) {
                if rng.gen_bool(cfg.topicality) {
                    out.push(members[pick.sample(rng)]);
                } else {
                    out.push(rng.gen_range(0..cfg.vocab_size));
                }
            }
        }
        out
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = cfg.vocab_size;

    let mut perm: Vec<usize> = (0..v).collect();
    perm.shuffle(&mut rng);
    let per_topic = cfg.words_per_topic();
    let models: Vec<TopicModel> = (0..cfg.num_topics)
        .map(|k| TopicModel::new(perm[k * per_topic..(k + 1) * per_topic].to_vec(), cfg.cluster_size))
        .collect();

    let mut dictionary = BilingualDictionary::new();
    let mut truth = BTreeMap::new();
    for i in 0..v {
        let mut cands = vec![target_word(i)];
        let others: Vec<usize> = (0..v).filter(|&j| j != i).collect();
        for &j in others.choose_multiple(&mut rng, cfg.confusers_per_entry) {
            cands.push(target_word(j));
        }
        cands.shuffle(&mut rng);
        dictionary.add(source_word(i), cands);
        truth.insert(source_word(i), target_word(i));
    }

    let topic_id = |k: usize| format!("q{:02}", k + 1);
    let mut topics = Vec::new();
    for (k, m) in models.iter().enumerate() {
        for r in 0..cfg.queries_per_topic {
            let start = r * cfg.query_len;
            let title = m.words[start..start + cfg.query_len].iter().map(|&w| source_word(w)).collect();
            let desc_start = cfg.queries_per_topic * cfg.query_len;
            let desc_end = (desc_start + cfg.desc_len).min(m.words.len());
            let desc = m.words[desc_start..desc_end].iter().map(|&w| source_word(w)).collect();
            let id = if cfg.queries_per_topic == 1 {
                topic_id(k)
            } else {
                format!("{}{}", topic_id(k), (b'a' + r as u8) as char)
            };
            topics.push(Topic {
                topic_id: id,
                title_terms: title,
                desc_terms: desc,
            });
        }
    }

    let mut labels: Vec<usize> = (0..cfg.docs_per_lang).map(|i| i % cfg.num_topics).collect();
    labels.shuffle(&mut rng);
    let source_labels = labels.clone();
    labels.shuffle(&mut rng);
    let target_labels = labels;

    let source: Vec<Document> = source_labels
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let toks = models[k].sample_doc(&mut rng, cfg).into_iter().map(source_word).collect();
            Document::new(format!("S{:05}", i + 1), toks)
        })
        .collect();
    let target: Vec<Document> = target_labels
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let toks = models[k].sample_doc(&mut rng, cfg).into_iter().map(target_word).collect();
            Document::new(format!("T{:05}", i + 1), toks)
        })
        .collect();

    let mut qrels = Qrels::new();
    let mut relevant_counts = BTreeMap::new();
    for t in &topics {
        let k: usize = t.topic_id[1..3].parse::<usize>().expect("generated id") - 1;
        let mut n = 0;
        for (d, &label) in target.iter().zip(&target_labels) {
            if label == k {
                qrels.judge(&t.topic_id, &d.doc_id, 1);
                n += 1;
            }
        }
        relevant_counts.insert(t.topic_id.clone(), n);
    }

    Ok(SynthData {
        source,
        target,
        dictionary,
        topics,
        qrels,
        truth,
        trace: GenerationTrace {
            source_labels,
            target_labels,
            relevant_counts,
        },
    })
}

fn jsonl_docs(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        let rec = serde_json::json!({ "id": d.doc_id, "text": d.tokens.join(" ") });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

impl SynthData {
    /// File name and contents of every artifact, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut topics = String::new();
        for t in &self.topics {
            let rec = serde_json::json!({
                "id": t.topic_id,
                "title": t.title_terms.join(" "),
                "desc": t.desc_terms.join(" "),
            });
            topics.push_str(&rec.to_string());
            topics.push('\n');
        }
        let mut truth = String::new();
        for (s, t) in &self.truth {
            let _ = writeln!(truth, "{s}\t{t}");
        }
        let mut trace = String::from("doc\ttopic\n");
        for (docs, labels) in [
            (&self.source, &self.trace.source_labels),
            (&self.target, &self.trace.target_labels),
        ] {
            for (d, k) in docs.iter().zip(labels.iter()) {
                let _ = writeln!(trace, "{}\t{}", d.doc_id, k);
            }
        }
        vec![
            ("source.jsonl", jsonl_docs(&self.source)),
            ("target.jsonl", jsonl_docs(&self.target)),
            ("dictionary.tsv", self.dictionary.to_tsv()),
            ("topics.jsonl", topics),
            ("qrels.txt", self.qrels.to_trec()),
            ("truth.tsv", truth),
            ("trace.tsv", trace),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.files() {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> SynthConfig {
        SynthConfig {
            vocab_size: 80,
            num_topics: 4,
            docs_per_lang: 40,
            doc_len: 30,
            queries_per_topic: 2,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap().files();
        let b = generate(&small()).unwrap().files();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 2, ..small() }).unwrap().files();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        for cfg in [
            SynthConfig { confusers_per_entry: 80, ..small() },
            SynthConfig { vocab_size: 3, ..small() },
            SynthConfig { topicality: 0.0, ..small() },
            SynthConfig { num_topics: 0, ..small() },
            SynthConfig { queries_per_topic: 10, ..small() },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::InvalidSynthConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn single_pure_topic_shares_support() {
        let cfg = SynthConfig {
            vocab_size: 30,
            num_topics: 1,
            topicality: 1.0,
            docs_per_lang: 5,
            ..small()
        };
        let data = generate(&cfg).unwrap();
        let support: BTreeSet<String> = (0..30).map(source_word).collect();
        for d in &data.source {
            assert!(d.tokens.iter().all(|t| support.contains(t)));
        }
    }

    #[test]
    fn pure_topics_stay_in_their_slice() {
        let cfg = SynthConfig { topicality: 1.0, ..small() };
        let data = generate(&cfg).unwrap();
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (d, &k) in data.source.iter().zip(&data.trace.source_labels) {
            for t in &d.tokens {
                assert_eq!(*owner.entry(t).or_insert(k), k, "{t} used by two topics");
            }
        }
    }

    #[test]
    fn dictionary_contains_truth() {
        let data = generate(&small()).unwrap();
        for (s, t) in &data.truth {
            let c = data.dictionary.candidates(s).unwrap();
            assert!(c.contains(t));
            assert_eq!(c.len(), 4);
        }
    }

    #[test]
    fn qrels_match_recount() {
        let data = generate(&small()).unwrap();
        let mut per_label = BTreeMap::new();
        for &k in &data.trace.target_labels {
            *per_label.entry(k).or_insert(0usize) += 1;
        }
        for t in &data.topics {
            let k: usize = t.topic_id[1..3].parse::<usize>().unwrap() - 1;
            let rel = data.qrels.relevant(&t.topic_id).unwrap();
            assert_eq!(rel.len(), per_label[&k]);
            assert_eq!(rel.len(), data.trace.relevant_counts[&t.topic_id]);
            assert_eq!(rel.len(), 40 / 4);
        }
        assert_eq!(data.topics.len(), 8);
    }

    #[test]
    fn languages_have_matching_topic_counts() {
        let data = generate(&small()).unwrap();
        assert_eq!(data.source.len(), data.target.len());
        let count = |l: &[usize]| {
            let mut m = BTreeMap::new();
            for &k in l {
                *m.entry(k).or_insert(0) += 1;
            }
            m
        };
        assert_eq!(count(&data.trace.source_labels), count(&data.trace.target_labels));
        assert!(data.source.iter().all(|d| d.len() == 30));
    }
}
