//! Run files, per-topic effectiveness, and paired significance testing.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::index::RankedList;

pub const DEFAULT_DEPTH: usize = 1000;

/// `(1/|R|) sum_{k: d_k in R} P@k`; zero when nothing is relevant.
pub fn average_precision<S>(ranked: &RankedList, relevant: &HashSet<S>) -> f64
where
    S: std::borrow::Borrow<str> + Eq + std::hash::Hash,
{
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, d) in ranked.doc_ids().enumerate() {
        if relevant.contains(d) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// `|R intersect top-k| / k`, dividing by `k` even when fewer are retrieved.
pub fn precision_at_k<S>(ranked: &RankedList, relevant: &HashSet<S>, k: usize) -> f64
where
    S: std::borrow::Borrow<str> + Eq + std::hash::Hash,
{
    if k == 0 {
        return 0.0;
    }
    let hits = ranked.doc_ids().take(k).filter(|d| relevant.contains(*d)).count();
    hits as f64 / k as f64
}

/// Ranked lists per topic under one run tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub tag: String,
    pub topics: BTreeMap<String, RankedList>,
}

impl RunFile {
    pub fn new(tag: impl Into<String>) -> Self {
        RunFile {
            tag: tag.into(),
            topics: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, topic: impl Into<String>, ranked: RankedList) {
        self.topics.insert(topic.into(), ranked);
    }

    /// `topic Q0 doc rank score tag`, topics in id order.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (topic, ranked) in &self.topics {
            for (i, (doc, score)) in ranked.entries().iter().enumerate() {
                let _ = writeln!(out, "{topic} Q0 {doc} {} {score} {}", i + 1, self.tag);
            }
        }
        out
    }

    /// Parses a run, rejecting non-contiguous ranks, duplicate documents,
    /// mixed tags and lists out of canonical order.
    pub fn from_trec(text: &str) -> Result<Self> {
        let mut tag: Option<String> = None;
        let mut lists: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let [topic, _q0, doc, rank, score, t] = cols[..] else {
                return Err(Error::parse(line_no, "expected 6 columns"));
            };
            let rank: usize = rank.parse().map_err(|_| Error::parse(line_no, "bad rank"))?;
            let score: f64 = score.parse().map_err(|_| Error::parse(line_no, "bad score"))?;
            match &tag {
                None => tag = Some(t.to_string()),
                Some(prev) if prev != t => {
                    return Err(Error::parse(line_no, format!("run tag {t} differs from {prev}")))
                }
                Some(_) => {}
            }
            if !seen.insert((topic.to_string(), doc.to_string())) {
                return Err(Error::InvalidRun(format!("{doc} appears twice for topic {topic}")));
            }
            let list = lists.entry(topic.to_string()).or_default();
            if rank != list.len() + 1 {
                return Err(Error::InvalidRun(format!(
                    "line {line_no}: rank {rank} for topic {topic}, expected {}",
                    list.len() + 1
                )));
            }
            list.push((doc.to_string(), score));
        }
        let mut run = RunFile::new(tag.unwrap_or_default());
        for (topic, entries) in lists {
            let ranked = RankedList::from_sorted(entries)
                .map_err(|e| Error::InvalidRun(format!("topic {topic}: {e}")))?;
            run.insert(topic, ranked);
        }
        Ok(run)
    }
}

pub fn write_run(path: &Path, run: &RunFile) -> Result<()> {
    std::fs::write(path, run.to_trec()).map_err(|e| Error::io(path, e))
}

pub fn read_run(path: &Path) -> Result<RunFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunFile::from_trec(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopicScores {
    pub ap: f64,
    pub p5: f64,
    pub p10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_topic: BTreeMap<String, TopicScores>,
    pub map: f64,
    pub p5: f64,
    pub p10: f64,
    pub num_topics: usize,
}

/// Scores every judged topic. Topics missing from the run score zero;
/// topics the qrels do not judge are ignored.
pub fn evaluate(run: &RunFile, qrels: &Qrels, depth: usize) -> EvalReport {
    let mut per_topic = BTreeMap::new();
    let empty = RankedList::default();
    for topic in qrels.topics() {
        let relevant: HashSet<&str> = qrels
            .relevant(topic)
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let mut ranked = run.topics.get(topic).unwrap_or(&empty).clone();
        ranked.truncate(depth);
        per_topic.insert(
            topic.to_string(),
            TopicScores {
                ap: average_precision(&ranked, &relevant),
                p5: precision_at_k(&ranked, &relevant, 5),
                p10: precision_at_k(&ranked, &relevant, 10),
            },
        );
    }
    let n = per_topic.len();
    let mean = |f: fn(&TopicScores) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_topic.values().map(f).sum::<f64>() / n as f64
        }
    };
    EvalReport {
        map: mean(|s| s.ap),
        p5: mean(|s| s.p5),
        p10: mean(|s| s.p10),
        num_topics: n,
        per_topic,
    }
}

impl EvalReport {
    /// Per-topic AP in topic order.
    pub fn ap_values(&self) -> Vec<f64> {
        self.per_topic.values().map(|s| s.ap).collect()
    }

    /// `topic<TAB>ap<TAB>p5<TAB>p10`, then an `all` row of means.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("topic\tap\tp5\tp10\n");
        for (t, s) in &self.per_topic {
            let _ = writeln!(out, "{t}\t{:.6}\t{:.6}\t{:.6}", s.ap, s.p5, s.p10);
        }
        let _ = writeln!(out, "all\t{:.6}\t{:.6}\t{:.6}", self.map, self.p5, self.p10);
        out
    }

    pub fn to_table(&self) -> String {
        format!(
            "topics  {:>6}\nMAP     {:>6.4}\nP@5     {:>6.4}\nP@10    {:>6.4}\n",
            self.num_topics, self.map, self.p5, self.p10
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestFlag {
    /// Every difference is zero; `p = 1` by convention.
    AllZero,
    /// Differences are constant and nonzero; `p = 0` by convention.
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub flag: Option<TTestFlag>,
}

/// Two-tailed paired t-test on `a - b`. The Student-t tail comes from the
/// regularized incomplete beta function.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::invalid("ttest", format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("ttest", "need at least 2 paired values"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = n - 1;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(TTest {
            t: 0.0,
            p: 1.0,
            df,
            flag: Some(TTestFlag::AllZero),
        });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / df as f64;
    if var == 0.0 {
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
            df,
            flag: Some(TTestFlag::ZeroVariance),
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df, flag: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ranked(ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores(ids.iter().enumerate().map(|(i, d)| (d.to_string(), (n - i) as f64)).collect())
    }

    fn set<'a>(ids: &[&'a str]) -> HashSet<&'a str> {
        ids.iter().copied().collect()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&ranked(&["a", "b"]), &set(&["a"])), 1.0);
        assert_eq!(average_precision(&ranked(&["a", "b"]), &set(&["b"])), 0.5);
        assert_eq!(average_precision(&ranked(&["a"]), &set(&[])), 0.0);
        // unretrieved relevant documents still count in the denominator
        assert_eq!(average_precision(&ranked(&["a"]), &set(&["a", "z"])), 0.5);
    }

    #[test]
    fn ap_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..50 {
            let mut ids: Vec<String> = (0..30).map(|i| format!("d{i:02}")).collect();
            ids.shuffle(&mut rng);
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let r = ranked(&refs);
            let rel: HashSet<&str> = refs.choose_multiple(&mut rng, 5).copied().collect();
            let order: Vec<&str> = r.doc_ids().collect();
            let mut expected = 0.0;
            for k in 1..=order.len() {
                if rel.contains(order[k - 1]) {
                    let prec = order[..k].iter().filter(|d| rel.contains(*d)).count() as f64 / k as f64;
                    expected += prec;
                }
            }
            expected /= 5.0;
            assert_abs_diff_eq!(average_precision(&r, &rel), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn precision_examples() {
        let r = ranked(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        assert_eq!(precision_at_k(&r, &set(&["a", "b", "c", "d", "e"]), 5), 1.0);
        assert_eq!(precision_at_k(&r, &set(&["z"]), 5), 0.0);
        assert_eq!(precision_at_k(&r, &set(&["b", "e", "j"]), 10), 0.3);
        assert_eq!(precision_at_k(&ranked(&["a"]), &set(&["a"]), 10), 0.1);
    }

    #[test]
    fn evaluate_counts_unretrieved_topics() {
        let mut q = Qrels::new();
        q.judge("1", "a", 1);
        q.judge("2", "b", 1);
        q.judge("3", "x", 0);
        let mut run = RunFile::new("r");
        run.insert("1", ranked(&["a", "c"]));
        run.insert("9", ranked(&["a"]));
        let rep = evaluate(&run, &q, DEFAULT_DEPTH);
        assert_eq!(rep.num_topics, 3);
        assert_abs_diff_eq!(rep.map, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(rep.per_topic["2"].ap, 0.0);
        assert_eq!(rep.per_topic["3"].ap, 0.0);
        assert!(rep.to_tsv().ends_with("all\t0.333333\t0.066667\t0.033333\n"));
    }

    #[test]
    fn depth_truncates() {
        let mut q = Qrels::new();
        q.judge("1", "b", 1);
        let mut run = RunFile::new("r");
        run.insert("1", ranked(&["a", "b"]));
        assert_eq!(evaluate(&run, &q, 1).map, 0.0);
        assert_eq!(evaluate(&run, &q, 2).map, 0.5);
    }

    #[test]
    fn run_round_trip_and_validation() {
        let mut run = RunFile::new("tag");
        run.insert("q1", RankedList::from_scores(vec![("d1".into(), -5.123456789012345)]));
        let text = run.to_trec();
        assert_eq!(text, "q1 Q0 d1 1 -5.123456789012345 tag\n");
        assert_eq!(RunFile::from_trec(&text).unwrap(), run);

        assert!(RunFile::from_trec("q Q0 a 1 1.0 t\nq Q0 b 2 2.0 t\n").is_err());
        assert!(RunFile::from_trec("q Q0 a 1 2.0 t\nq Q0 b 3 1.0 t\n").is_err());
        assert!(RunFile::from_trec("q Q0 a 1 2.0 t\nq Q0 a 2 1.0 t\n").is_err());
        assert!(RunFile::from_trec("q Q0 a 1 2.0 t\nq Q0 b 2 1.0 u\n").is_err());
        assert!(RunFile::from_trec("q Q0 a 1 2.0\n").is_err());
    }

    #[test]
    fn large_run_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut run = RunFile::new("big");
        for t in 0..4 {
            let entries = (0..250).map(|i| (format!("D{i:04}"), rng.gen_range(-30.0..0.0))).collect();
            run.insert(format!("t{t}"), RankedList::from_scores(entries));
        }
        let text = run.to_trec();
        assert_eq!(text.lines().count(), 1000);
        assert_eq!(RunFile::from_trec(&text).unwrap(), run);
    }

    /// Two-tailed p from the finite series for integer degrees of freedom.
    fn series_p(t: f64, df: usize) -> f64 {
        let theta = (t.abs() / (df as f64).sqrt()).atan();
        let (s, c) = theta.sin_cos();
        let a = if df % 2 == 1 {
            let mut sum = 0.0;
            if df > 1 {
                let mut term = c;
                sum = term;
                let mut k = 1;
                while 2 * k + 1 < df {
                    term *= c * c * (2 * k) as f64 / (2 * k + 1) as f64;
                    sum += term;
                    k += 1;
                }
            }
            2.0 / std::f64::consts::PI * (theta + s * sum)
        } else {
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut k = 1;
            while 2 * k < df {
                term *= c * c * (2 * k - 1) as f64 / (2 * k) as f64;
                sum += term;
                k += 1;
            }
            s * sum
        };
        1.0 - a
    }

    #[test]
    fn ttest_matches_series() {
        let a = [0.412, 0.305, 0.551, 0.287, 0.634, 0.198, 0.477, 0.369, 0.522, 0.401];
        let b = [0.388, 0.251, 0.560, 0.213, 0.601, 0.210, 0.402, 0.340, 0.498, 0.366];
        let r = paired_ttest(&a, &b).unwrap();
        assert_eq!(r.df, 9);
        assert!(r.flag.is_none());
        assert_abs_diff_eq!(r.p, series_p(r.t, 9), epsilon = 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..15 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let r = paired_ttest(&a, &b).unwrap();
            assert_abs_diff_eq!(r.p, series_p(r.t, n - 1), epsilon = 1e-9);
        }
        assert_abs_diff_eq!(series_p(1.0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(series_p(0.0, 4), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ttest_conventions() {
        let a = [0.1, 0.2, 0.3];
        let eq = paired_ttest(&a, &a).unwrap();
        assert_eq!((eq.p, eq.flag), (1.0, Some(TTestFlag::AllZero)));
        let ones = paired_ttest(&[2.0, 2.0, 2.0, 2.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!((ones.p, ones.flag), (0.0, Some(TTestFlag::ZeroVariance)));
        assert!(paired_ttest(&[1.0], &[2.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[2.0]).is_err());
    }

    proptest! {
        #[test]
        fn ttest_is_symmetric(pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ab = paired_ttest(&a, &b).unwrap();
            let ba = paired_ttest(&b, &a).unwrap();
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
        }

        #[test]
        fn relabeling_preserves_scores(n in 1usize..40, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
            let rel: HashSet<String> = ids.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
            let r = RankedList::from_scores(ids.iter().map(|d| (d.clone(), rng.gen())).collect());
            let relabel = |d: &str| format!("x{d}");
            let r2 = RankedList::from_scores(r.entries().iter().map(|(d, s)| (relabel(d), *s)).collect());
            let rel2: HashSet<String> = rel.iter().map(|d| relabel(d)).collect();
            prop_assert_eq!(average_precision(&r, &rel), average_precision(&r2, &rel2));
            prop_assert_eq!(precision_at_k(&r, &rel, 5), precision_at_k(&r2, &rel2, 5));
        }

        #[test]
        fn perfect_ranking_scores_one(n in 1usize..30, k in 1usize..30) {
            let k = k.min(n);
            let ids: Vec<String> = (0..n).map(|i| format!("d{i:03}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let rel: HashSet<&str> = refs[..k].iter().copied().collect();
            prop_assert_eq!(average_precision(&ranked(&refs), &rel), 1.0);
        }
    }
}
