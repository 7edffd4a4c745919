use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use clir::corpus::parse_qrels;
use clir::evaluation::{evaluate, paired_ttest, read_run, DEFAULT_DEPTH};
use clir::pipeline::{
    run_experiment, sweep, write_run_dir, Experiment, ExperimentConfig, Manifest, Method, StageCache,
};
use clir::synth::{generate, SynthConfig};

/// Cross-language retrieval with query-dependent translation models.
#[derive(Parser)]
#[command(name = "clir", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bilingual corpus with known translations.
    Synth(SynthArgs),
    /// Normalize and index both collections into `.collection` files.
    Index(ConfigArgs),
    /// Run one method over all topics.
    Run(RunArgs),
    /// Grid of MAP over interpolation weights and feedback-set sizes.
    Sweep(SweepArgs),
    /// Score a run file against qrels.
    Eval(EvalArgs),
    /// Paired t-test on per-topic AP of two run files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    queries_per_topic: Option<usize>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory for artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Override the configured method.
    #[arg(long)]
    method: Option<Method>,
    /// Override the interpolation weight (implies interpolation).
    #[arg(long)]
    alpha: Option<f64>,
    /// Skip the final pseudo-relevance feedback step.
    #[arg(long)]
    no_prf: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Comma-separated interpolation weights.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    alphas: Vec<f64>,
    /// Comma-separated feedback-set sizes.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    ns: Vec<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    /// Write the per-topic report here instead of printing a table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline run.
    a: PathBuf,
    /// Treatment run.
    b: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Synth(a) => ("synth", synth(a)),
        Command::Index(a) => ("index", index(a)),
        Command::Run(a) => ("run", run(a)),
        Command::Sweep(a) => ("sweep", run_sweep(a)),
        Command::Eval(a) => ("eval", eval(a)),
        Command::Compare(a) => ("compare", compare(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clir {name}: {}", render(&e));
            ExitCode::FAILURE
        }
    }
}

/// Error chain on one line. Library errors already embed their sources, so
/// links that repeat the previous message are skipped.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn write_file(path: &Path, body: &str) -> anyhow::Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.topics {
        cfg.num_topics = v;
    }
    if let Some(v) = a.docs {
        cfg.docs_per_lang = v;
    }
    if let Some(v) = a.vocab {
        cfg.vocab_size = v;
    }
    if let Some(v) = a.queries_per_topic {
        cfg.queries_per_topic = v;
    }
    let data = generate(&cfg)?;
    data.write_to(&a.out)?;
    let mut manifest = Manifest::new();
    manifest.set_config(&cfg)?;
    for (name, body) in data.files() {
        manifest.add_output(name, body.as_bytes());
    }
    manifest.write(&a.out.join("manifest.json"))?;
    info!("wrote synthetic corpus to {}", a.out.display());
    Ok(())
}

/// Loads the experiment and hashes every input it read.
fn load(path: &Path) -> anyhow::Result<(ExperimentConfig, Experiment, Manifest)> {
    let cfg = ExperimentConfig::load(path)?;
    let exp = Experiment::load(&cfg.data)?;
    let mut inputs = Manifest::new();
    let d = &cfg.data;
    inputs.add_input_file("source", &d.source)?;
    inputs.add_input_file("target", &d.target)?;
    inputs.add_input_file("dictionary", &d.dictionary)?;
    inputs.add_input_file("topics", &d.topics)?;
    if let Some(q) = &d.qrels {
        inputs.add_input_file("qrels", q)?;
    }
    for (name, lang) in [("source_stopwords", &d.source_lang), ("target_stopwords", &d.target_lang)] {
        if let Some(s) = &lang.stopwords {
            inputs.add_input_file(name, s)?;
        }
    }
    info!(
        "loaded {} source docs, {} target docs, {} topics",
        exp.source.docs().len(),
        exp.target.docs().len(),
        exp.topics.len()
    );
    Ok((cfg, exp, inputs))
}

fn index(a: ConfigArgs) -> anyhow::Result<()> {
    let (cfg, exp, mut manifest) = load(&a.config)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    manifest.set_config(&cfg.data)?;
    for (name, coll) in [("source.collection", &exp.source), ("target.collection", &exp.target)] {
        let body = coll.to_text();
        write_file(&a.out.join(name), &body)?;
        manifest.add_output(name, body.as_bytes());
    }
    manifest.write(&a.out.join("manifest.json"))?;
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let (cfg, exp, inputs) = load(&a.common.config)?;
    let mut p = cfg.pipeline;
    if let Some(m) = a.method {
        p.method = m;
    }
    if let Some(alpha) = a.alpha {
        p.alpha = alpha;
        p.interpolate = true;
    }
    if a.no_prf {
        p.prf = false;
    }
    if let Some(s) = a.seed {
        p.seed = s;
    }
    let out = run_experiment(&exp, &p, &StageCache::new())?;
    let mut manifest = write_run_dir(&a.common.out, &p, &out, &inputs)?;
    if let Some(qrels) = &exp.qrels {
        let report = evaluate(&out.run, qrels, p.depth);
        let name = format!("{}.eval.tsv", p.label());
        let body = report.to_tsv();
        write_file(&a.common.out.join(&name), &body)?;
        manifest.add_output(&name, body.as_bytes());
        manifest.write(&a.common.out.join("manifest.json"))?;
        println!("{}\tMAP {:.4}\tP@10 {:.4}", p.label(), report.map, report.p10);
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> anyhow::Result<()> {
    if a.alphas.is_empty() || a.ns.is_empty() {
        bail!("need at least one alpha and one n");
    }
    let (cfg, exp, inputs) = load(&a.common.config)?;
    let rows = sweep(&exp, &cfg.pipeline, &a.alphas, &a.ns, &a.common.out, &inputs)?;
    for r in rows {
        println!("alpha {}\tn {}\tMAP {:.4}", r.alpha, r.n, r.map);
    }
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let run = read_run(&a.run)?;
    let qrels = parse_qrels(&a.qrels)?;
    let report = evaluate(&run, &qrels, a.depth);
    match &a.out {
        Some(p) => write_file(p, &report.to_tsv())?,
        None => print!("{}", report.to_table()),
    }
    Ok(())
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let qrels = parse_qrels(&a.qrels)?;
    let ra = evaluate(&read_run(&a.a)?, &qrels, a.depth);
    let rb = evaluate(&read_run(&a.b)?, &qrels, a.depth);
    let t = paired_ttest(&ra.ap_values(), &rb.ap_values())?;
    println!("MAP a {:.4}\tMAP b {:.4}", ra.map, rb.map);
    println!("t {:.4}\tdf {}\tp {:.6}\t{:?}", t.t, t.df, t.p, t.flag);
    Ok(())
}
