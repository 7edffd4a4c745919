//! End-to-end per-topic procedure: pseudo-relevant sets in both languages,
//! per-topic embeddings and projection, translation, feedback, retrieval.

mod config;
mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{
    parse_dictionary, parse_qrels, parse_topics, read_documents, BilingualDictionary, Document,
    NormalizationPipeline, Qrels, Topic,
};
use crate::embeddings::{train_sgns, EmbeddingTable, SgnsConfig};
use crate::error::{Error, NoPairsReason, Result, Stage};
use crate::evaluation::{evaluate, RunFile};
use crate::index::{retrieve, Collection, QueryModel, RankedList};
use crate::prf::{estimate_feedback_model, interpolate_query};
use crate::projection::{extract_pairs, learn_projection, PairProvenance, ProjectionConfig, ProjectionMatrix};
use crate::translation::{
    clwetm_model, cooccur_model, interpolate_models, mixwetm_model, top1_model, translate_query_model,
    uniform_model, FallbackReason, TranslationModel,
};

pub use config::{DataConfig, ExperimentConfig, LanguageConfig, Method, PipelineConfig, QueryKind};
pub use manifest::{sha256_hex, Manifest};

/// Everything a run reads: both collections, the dictionary and topics.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub source: Collection,
    pub target: Collection,
    pub dictionary: BilingualDictionary,
    pub topics: Vec<Topic>,
    pub qrels: Option<Qrels>,
}

fn language_pipeline(lang: &LanguageConfig) -> Result<NormalizationPipeline> {
    match &lang.stopwords {
        Some(path) => NormalizationPipeline::with_stopword_file(lang.lowercase, path, lang.stemmer),
        None => Ok(NormalizationPipeline::new(
            lang.lowercase,
            std::iter::empty::<String>(),
            lang.stemmer,
        )),
    }
}

fn load_collection(path: &Path, data: &DataConfig, pipeline: &NormalizationPipeline) -> Result<Collection> {
    if path.extension().is_some_and(|e| e == "collection") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return Collection::from_text(&text);
    }
    Collection::new(read_documents(path, data.format, pipeline)?)
}

impl Experiment {
    pub fn load(data: &DataConfig) -> Result<Self> {
        let src_pipe = language_pipeline(&data.source_lang)?;
        let tgt_pipe = language_pipeline(&data.target_lang)?;
        let (dictionary, _) = parse_dictionary(&data.dictionary, &src_pipe, &tgt_pipe)?;
        Ok(Experiment {
            source: load_collection(&data.source, data, &src_pipe)?,
            target: load_collection(&data.target, data, &tgt_pipe)?,
            dictionary,
            topics: parse_topics(&data.topics, &src_pipe)?,
            qrels: data.qrels.as_deref().map(parse_qrels).transpose()?,
        })
    }
}

impl From<crate::synth::SynthData> for Experiment {
    fn from(d: crate::synth::SynthData) -> Self {
        Experiment {
            source: Collection::new(d.source).expect("generated ids are unique"),
            target: Collection::new(d.target).expect("generated ids are unique"),
            dictionary: d.dictionary,
            topics: d.topics,
            qrels: Some(d.qrels),
        }
    }
}

/// Seed for `topic`, stable across runs and platforms.
pub fn topic_seed(base: u64, topic_id: &str) -> u64 {
    // FNV-1a over the id, mixed with the base seed by splitmix64
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in topic_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(base ^ h)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix(seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocabularyStats {
    pub source_terms: usize,
    pub target_terms: usize,
}

/// Per-topic record of what each stage did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicDiagnostics {
    pub topic_id: String,
    pub seed: u64,
    pub source_feedback: Vec<String>,
    pub target_feedback: Vec<String>,
    /// Distinct terms available to the per-topic embeddings.
    pub vocabulary: VocabularyStats,
    pub pairs: Option<PairProvenance>,
    pub objective: Vec<f64>,
    /// The method's own model could not be built; the partner model was
    /// used instead.
    pub partner_fallback: Option<String>,
    pub fallbacks: BTreeMap<String, FallbackReason>,
    /// Most probable translation of each query term under the method's own
    /// model, before any interpolation.
    pub top_translations: BTreeMap<String, String>,
    pub query_terms: usize,
    pub feedback_applied: bool,
    pub retrieved: usize,
}

/// Stages 1 to 4 for one topic; independent of the translation method.
#[derive(Debug)]
struct Prepared {
    source_query: QueryModel,
    f_s: Vec<Document>,
    f_t: Vec<Document>,
    vocabulary: VocabularyStats,
    embeddings: Mutex<Option<Arc<Result<Projected>>>>,
    shared_space: Mutex<Option<Arc<Result<TranslationModel>>>>,
}

#[derive(Debug)]
struct Projected {
    src: EmbeddingTable,
    tgt: EmbeddingTable,
    w: ProjectionMatrix,
    pairs: PairProvenance,
}

/// Memoizes method-independent work across runs that share inputs.
#[derive(Debug, Default)]
pub struct StageCache {
    entries: Mutex<HashMap<String, Arc<Prepared>>>,
}

impl StageCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Serialize)]
struct PrepKey<'a> {
    topic: &'a str,
    mu: f64,
    pseudo_docs: usize,
    query: QueryKind,
    seed: u64,
    sgns: &'a SgnsConfig,
    projection: &'a ProjectionConfig,
}

fn distinct_terms(docs: &[Document], min_count: usize) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in docs {
        for t in &d.tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts.values().filter(|&&c| c >= min_count).count()
}

fn query_terms(topic: &Topic, kind: QueryKind) -> Vec<String> {
    match kind {
        QueryKind::Short => topic.short_query().to_vec(),
        QueryKind::Verbose => topic.verbose_query(),
    }
}

fn prepare(topic: &Topic, exp: &Experiment, cfg: &PipelineConfig) -> Result<Prepared> {
    let id = topic.topic_id.as_str();
    let terms = query_terms(topic, cfg.query);
    let source_query = QueryModel::mle(&terms).map_err(|e| e.at_stage(Stage::SourceFeedback, id))?;
    let ranked_s = retrieve(&source_query, exp.source.index(), cfg.mu, cfg.pseudo_docs)
        .map_err(|e| e.at_stage(Stage::SourceFeedback, id))?;
    let f_s = exp.source.docs_for(&ranked_s)?;

    let uniform = uniform_model(&terms, &exp.dictionary);
    let q_uniform =
        translate_query_model(&source_query, &uniform).map_err(|e| e.at_stage(Stage::TargetFeedback, id))?;
    let ranked_t = retrieve(&q_uniform, exp.target.index(), cfg.mu, cfg.pseudo_docs)
        .map_err(|e| e.at_stage(Stage::TargetFeedback, id))?;
    let f_t = exp.target.docs_for(&ranked_t)?;

    let vocabulary = VocabularyStats {
        source_terms: distinct_terms(&f_s, cfg.sgns.min_count),
        target_terms: distinct_terms(&f_t, cfg.sgns.min_count),
    };
    Ok(Prepared {
        source_query,
        f_s,
        f_t,
        vocabulary,
        embeddings: Mutex::new(None),
        shared_space: Mutex::new(None),
    })
}

/// Stages 3 and 4, computed at most once per prepared topic.
fn projected(prep: &Prepared, exp: &Experiment, cfg: &PipelineConfig, seed: u64, id: &str) -> Arc<Result<Projected>> {
    let mut slot = prep.embeddings.lock().expect("embedding lock");
    if let Some(p) = slot.as_ref() {
        return Arc::clone(p);
    }
    let compute = || -> Result<Projected> {
        let src_cfg = SgnsConfig {
            seed: sub_seed(seed, 1),
            ..cfg.sgns.clone()
        };
        let tgt_cfg = SgnsConfig {
            seed: sub_seed(seed, 2),
            ..cfg.sgns.clone()
        };
        let src = train_sgns(&prep.f_s, &src_cfg).map_err(|e| e.at_stage(Stage::Embeddings, id))?;
        let tgt = train_sgns(&prep.f_t, &tgt_cfg).map_err(|e| e.at_stage(Stage::Embeddings, id))?;
        let pairs = extract_pairs(&src, &tgt, &exp.dictionary).map_err(|e| e.at_stage(Stage::Projection, id))?;
        let pcfg = ProjectionConfig {
            seed: sub_seed(seed, 3),
            ..cfg.projection.clone()
        };
        let w = learn_projection(&pairs, &src, &tgt, &pcfg).map_err(|e| e.at_stage(Stage::Projection, id))?;
        Ok(Projected {
            src,
            tgt,
            w,
            pairs: pairs.provenance,
        })
    };
    let out = Arc::new(compute());
    *slot = Some(Arc::clone(&out));
    out
}

/// MIXWETM's model, computed at most once per prepared topic.
fn shared_space(
    prep: &Prepared,
    terms: &[String],
    exp: &Experiment,
    cfg: &PipelineConfig,
    seed: u64,
) -> Arc<Result<TranslationModel>> {
    let mut slot = prep.shared_space.lock().expect("model lock");
    if let Some(m) = slot.as_ref() {
        return Arc::clone(m);
    }
    let sgns = SgnsConfig {
        seed: sub_seed(seed, 5),
        ..cfg.sgns.clone()
    };
    let out = Arc::new(mixwetm_model(
        terms,
        &prep.f_s,
        &prep.f_t,
        &exp.dictionary,
        &sgns,
        sub_seed(seed, 4),
    ));
    *slot = Some(Arc::clone(&out));
    out
}

/// Errors that mean "this topic has nothing to train on" rather than a
/// broken run.
fn is_data_shortage(e: &Error) -> bool {
    match e {
        Error::Stage { source, .. } => is_data_shortage(source),
        Error::NoPairs(_) | Error::EmptyVocabulary | Error::EmptyQuery => true,
        Error::InvalidParameter { name, .. } => *name == "feedback_docs",
        _ => false,
    }
}

fn shortage_reason(e: &Error) -> String {
    match e {
        Error::Stage { source, .. } => shortage_reason(source),
        Error::NoPairs(NoPairsReason::EmptyDictionary) => "empty dictionary".into(),
        Error::NoPairs(NoPairsReason::NoVocabularyOverlap) => "no translation pairs".into(),
        other => other.to_string(),
    }
}

fn argmaxes(tm: &TranslationModel) -> BTreeMap<String, String> {
    tm.rows()
        .filter_map(|(s, _)| tm.argmax(s).map(|t| (s.to_string(), t.to_string())))
        .collect()
}

/// Runs stages 1 to 8 for one topic.
pub fn run_topic(
    topic: &Topic,
    exp: &Experiment,
    cfg: &PipelineConfig,
    cache: &StageCache,
) -> Result<(RankedList, TopicDiagnostics)> {
    let id = topic.topic_id.as_str();
    let seed = topic_seed(cfg.seed, id);
    let key = serde_json::to_string(&PrepKey {
        topic: id,
        mu: cfg.mu,
        pseudo_docs: cfg.pseudo_docs,
        query: cfg.query,
        seed: cfg.seed,
        sgns: &cfg.sgns,
        projection: &cfg.projection,
    })?;
    let cached = cache.entries.lock().expect("cache lock").get(&key).cloned();
    let prep = match cached {
        Some(p) => p,
        None => {
            let p = Arc::new(prepare(topic, exp, cfg)?);
            cache
                .entries
                .lock()
                .expect("cache lock")
                .entry(key)
                .or_insert(p)
                .clone()
        }
    };
    let terms = query_terms(topic, cfg.query);

    let mut diag = TopicDiagnostics {
        topic_id: id.to_string(),
        seed,
        source_feedback: prep.f_s.iter().map(|d| d.doc_id.clone()).collect(),
        target_feedback: prep.f_t.iter().map(|d| d.doc_id.clone()).collect(),
        vocabulary: prep.vocabulary.clone(),
        pairs: None,
        objective: Vec::new(),
        partner_fallback: None,
        fallbacks: BTreeMap::new(),
        top_translations: BTreeMap::new(),
        query_terms: 0,
        feedback_applied: false,
        retrieved: 0,
    };

    let tm_stage = |e: Error| e.at_stage(Stage::TranslationModel, id);
    let cooccur = || cooccur_model(&terms, &exp.dictionary, exp.target.docs(), cfg.cooccur_window).map_err(tm_stage);
    let tm = match cfg.method {
        Method::Uniform => uniform_model(&terms, &exp.dictionary),
        Method::Top1 => top1_model(&terms, &exp.dictionary),
        Method::Cooccur => cooccur()?,
        Method::Clwetm => {
            let proj = projected(&prep, exp, cfg, seed, id);
            match proj.as_ref() {
                Ok(p) => {
                    diag.pairs = Some(p.pairs);
                    diag.objective = p.w.train_log.iter().map(|e| e.objective).collect();
                    let own = clwetm_model(&terms, &p.w, &p.src, &p.tgt, &exp.dictionary).map_err(tm_stage)?;
                    diag.top_translations = argmaxes(&own);
                    if cfg.interpolate {
                        interpolate_models(&own, &cooccur()?, cfg.alpha).map_err(tm_stage)?
                    } else {
                        own
                    }
                }
                Err(e) if is_data_shortage(e) => {
                    diag.partner_fallback = Some(shortage_reason(e));
                    cooccur()?
                }
                Err(e) => return Err(clone_error(e)),
            }
        }
        Method::Mixwetm => match shared_space(&prep, &terms, exp, cfg, seed).as_ref() {
            Ok(own) => {
                diag.top_translations = argmaxes(own);
                own.clone()
            }
            Err(e) if is_data_shortage(e) => {
                diag.partner_fallback = Some(shortage_reason(e));
                uniform_model(&terms, &exp.dictionary)
            }
            Err(e) => return Err(tm_stage(clone_error(e))),
        },
    };
    diag.fallbacks = tm.fallbacks().clone();

    let mut query =
        translate_query_model(&prep.source_query, &tm).map_err(|e| e.at_stage(Stage::QueryTranslation, id))?;
    diag.query_terms = query.len();

    if cfg.prf {
        let fb_stage = |e: Error| e.at_stage(Stage::Feedback, id);
        let initial = retrieve(&query, exp.target.index(), cfg.mu, cfg.feedback.num_docs).map_err(fb_stage)?;
        if !initial.is_empty() {
            let docs = exp.target.docs_for(&initial).map_err(fb_stage)?;
            match estimate_feedback_model(&docs, exp.target.index(), &cfg.feedback) {
                Ok(fb) => {
                    query = interpolate_query(&query, &fb, cfg.feedback.interp_coeff).map_err(fb_stage)?;
                    diag.feedback_applied = true;
                }
                Err(Error::EmptyFeedback) => {}
                Err(e) => return Err(fb_stage(e)),
            }
        }
    }

    let ranked =
        retrieve(&query, exp.target.index(), cfg.mu, cfg.depth).map_err(|e| e.at_stage(Stage::FinalRetrieval, id))?;
    diag.retrieved = ranked.len();
    Ok((ranked, diag))
}

/// Errors are not `Clone`; cached failures are re-raised by message with
/// their stage preserved.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Stage { stage, topic, source } => Error::Stage {
            stage: *stage,
            topic: topic.clone(),
            source: Box::new(clone_error(source)),
        },
        other => Error::Config(other.to_string()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: RunFile,
    pub diagnostics: Vec<TopicDiagnostics>,
}

/// All topics in parallel; results are collected in topic order.
pub fn run_experiment(exp: &Experiment, cfg: &PipelineConfig, cache: &StageCache) -> Result<RunOutput> {
    cfg.validate()?;
    let results: Vec<(RankedList, TopicDiagnostics)> = exp
        .topics
        .par_iter()
        .map(|t| run_topic(t, exp, cfg, cache))
        .collect::<Result<_>>()?;
    let mut run = RunFile::new(cfg.run_tag.clone());
    let mut diagnostics = Vec::with_capacity(results.len());
    for (topic, (ranked, diag)) in exp.topics.iter().zip(results) {
        run.insert(topic.topic_id.clone(), ranked);
        diagnostics.push(diag);
    }
    Ok(RunOutput { run, diagnostics })
}

/// Writes the run file, diagnostics and manifest under `dir`.
pub fn write_run_dir(dir: &Path, cfg: &PipelineConfig, out: &RunOutput, inputs: &Manifest) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = inputs.clone();
    manifest.set_config(cfg)?;
    for d in &out.diagnostics {
        manifest.seeds.insert(d.topic_id.clone(), d.seed);
    }
    let run_name = format!("{}.run", cfg.label());
    let diag_name = format!("{}.diagnostics.json", cfg.label());
    let files = [
        (run_name, out.run.to_trec()),
        (diag_name, serde_json::to_string_pretty(&out.diagnostics)? + "\n"),
    ];
    for (name, body) in files {
        let path = dir.join(&name);
        std::fs::write(&path, &body).map_err(|e| Error::io(&path, e))?;
        manifest.add_output(&name, body.as_bytes());
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub n: usize,
    pub map: f64,
    pub run_file: String,
}

/// MAP for every `(alpha, n)` cell. Method-independent stages are shared
/// across cells with the same `n`.
pub fn sweep(
    exp: &Experiment,
    base: &PipelineConfig,
    alphas: &[f64],
    ns: &[usize],
    out_dir: &Path,
    inputs: &Manifest,
) -> Result<Vec<SweepRow>> {
    let qrels = exp
        .qrels
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs qrels".into()))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cache = StageCache::new();
    let mut manifest = inputs.clone();
    manifest.set_config(base)?;
    let mut rows = Vec::new();
    for &n in ns {
        for &alpha in alphas {
            let cfg = PipelineConfig {
                method: Method::Clwetm,
                interpolate: true,
                alpha,
                pseudo_docs: n,
                ..base.clone()
            };
            let out = run_experiment(exp, &cfg, &cache)?;
            let name = format!("a{alpha}_n{n}.run");
            let text = out.run.to_trec();
            let path = out_dir.join(&name);
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            manifest.add_output(&name, text.as_bytes());
            let map = evaluate(&out.run, qrels, cfg.depth).map;
            rows.push(SweepRow {
                alpha,
                n,
                map,
                run_file: name,
            });
        }
    }
    let csv = sweep_csv(&rows);
    let path = out_dir.join("sweep.csv");
    std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    manifest.add_output("sweep.csv", csv.as_bytes());
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,n,map,run_file\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{}\n", r.alpha, r.n, r.map, r.run_file));
    }
    out
}
