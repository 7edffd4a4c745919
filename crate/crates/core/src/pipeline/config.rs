use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DocFormat, StemmerKind};
use crate::embeddings::SgnsConfig;
use crate::error::{Error, Result};
use crate::prf::FeedbackConfig;
use crate::projection::ProjectionConfig;

/// Translation model driving the final query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Uniform,
    Top1,
    Cooccur,
    Clwetm,
    Mixwetm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Top1 => "top1",
            Method::Cooccur => "cooccur",
            Method::Clwetm => "clwetm",
            Method::Mixwetm => "mixwetm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Method::Uniform),
            "top1" => Ok(Method::Top1),
            "cooccur" => Ok(Method::Cooccur),
            "clwetm" => Ok(Method::Clwetm),
            "mixwetm" => Ok(Method::Mixwetm),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    /// Title terms only.
    Short,
    /// Title and description.
    Verbose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub method: Method,
    /// Weight of CLWETM against the co-occurrence model.
    pub alpha: f64,
    /// When false, CLWETM runs alone and `alpha` is ignored.
    pub interpolate: bool,
    pub mu: f64,
    /// Size of the pseudo-relevant sets in each language.
    pub pseudo_docs: usize,
    pub prf: bool,
    pub depth: usize,
    pub query: QueryKind,
    pub cooccur_window: usize,
    /// Base seed; every topic derives its own from it.
    pub seed: u64,
    pub run_tag: String,
    pub feedback: FeedbackConfig,
    pub sgns: SgnsConfig,
    pub projection: ProjectionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            method: Method::Clwetm,
            alpha: 0.6,
            interpolate: true,
            mu: 1000.0,
            pseudo_docs: 10,
            prf: true,
            depth: 1000,
            query: QueryKind::Short,
            cooccur_window: 4,
            seed: 1,
            run_tag: "clir".into(),
            feedback: FeedbackConfig::default(),
            sgns: SgnsConfig::default(),
            projection: ProjectionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} is outside [0, 1]", self.alpha)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config("mu must be positive".into()));
        }
        if self.pseudo_docs == 0 || self.depth == 0 {
            return Err(Error::Config("pseudo_docs and depth must be at least 1".into()));
        }
        if self.run_tag.is_empty() || self.run_tag.contains(char::is_whitespace) {
            return Err(Error::Config("run_tag must be a single non-empty token".into()));
        }
        Ok(())
    }

    /// File-name label such as `clwetm-a0.6` or `cooccur`.
    pub fn label(&self) -> String {
        match self.method {
            Method::Clwetm if self.interpolate => format!("clwetm-a{}", self.alpha),
            m => m.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanguageConfig {
    pub lowercase: bool,
    pub stemmer: StemmerKind,
    pub stopwords: Option<PathBuf>,
}

impl Default for LanguageConfig {
    fn default() -> Self {
        LanguageConfig {
            lowercase: true,
            stemmer: StemmerKind::None,
            stopwords: None,
        }
    }
}

/// Input locations. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Raw documents, or a prebuilt `.collection` file.
    pub source: PathBuf,
    pub target: PathBuf,
    #[serde(default = "default_format")]
    pub format: DocFormat,
    pub dictionary: PathBuf,
    pub topics: PathBuf,
    pub qrels: Option<PathBuf>,
    #[serde(default)]
    pub source_lang: LanguageConfig,
    #[serde(default)]
    pub target_lang: LanguageConfig,
}

fn default_format() -> DocFormat {
    DocFormat::Jsonl
}

impl DataConfig {
    /// Paths under `dir` with the file names `clir synth` writes.
    pub fn synthetic(dir: &Path) -> Self {
        DataConfig {
            source: dir.join("source.jsonl"),
            target: dir.join("target.jsonl"),
            format: DocFormat::Jsonl,
            dictionary: dir.join("dictionary.tsv"),
            topics: dir.join("topics.jsonl"),
            qrels: Some(dir.join("qrels.txt")),
            source_lang: LanguageConfig::default(),
            target_lang: LanguageConfig::default(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.source);
        fix(&mut self.target);
        fix(&mut self.dictionary);
        fix(&mut self.topics);
        if let Some(q) = &mut self.qrels {
            fix(q);
        }
        for lang in [&mut self.source_lang, &mut self.target_lang] {
            if let Some(s) = &mut lang.stopwords {
                fix(s);
            }
        }
    }
}

/// Top-level config file: `[data]` plus `[pipeline]` (with nested
/// `[pipeline.feedback]`, `[pipeline.sgns]`, `[pipeline.projection]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.data.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let text = r#"
[data]
source = "s.jsonl"
target = "t.jsonl"
dictionary = "d.tsv"
topics = "q.jsonl"

[pipeline]
method = "mixwetm"
prf = false

[pipeline.sgns]
epochs = 5
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.pipeline.method, Method::Mixwetm);
        assert!(!cfg.pipeline.prf);
        assert_eq!(cfg.pipeline.sgns.epochs, 5);
        assert_eq!(cfg.pipeline.sgns.negatives, 45);
        assert_eq!(cfg.pipeline.mu, 1000.0);
        assert_eq!(cfg.pipeline.alpha, 0.6);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_configs() {
        let base = "[data]\nsource = \"a\"\ntarget = \"b\"\ndictionary = \"c\"\ntopics = \"d\"\n";
        assert!(ExperimentConfig::from_toml(&format!("{base}[pipeline]\nalpha = 2.0\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}[pipeline]\nbogus = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}[pipeline]\nmethod = \"mt\"\n")).is_err());
    }
}
