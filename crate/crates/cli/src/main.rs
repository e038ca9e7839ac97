use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use provmatch::config;
use provmatch::graph::{dot, json, validate, FeatureGraph};
use provmatch::learning::{
    build_inline_corpus, build_pair_corpus, evaluate_inliner, read_jsonl, train_inliner, train_weights,
    write_jsonl, BoostConfig, InlineExample, LabelledPair, PairExample, SvmConfig,
};
use provmatch::matcher::{score_against_ground_truth, MatchOptions, MatchReport, DEFAULT_MAX_ITERATIONS};
use provmatch::pipeline::Pipeline;
use provmatch::sim::{emit_pair, load_pair, simulate, SimPair, SimProfile, SourceOrigin, SourceShape};

/// Exit status for unreadable or invalid input files.
const EXIT_INPUT: u8 = 2;
/// Exit status for failures inside the pipeline itself.
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "provmatch", version, about = "Match binary functions against candidate source code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match a binary feature graph against a source feature graph.
    Match(MatchArgs),
    /// Generate a synthetic source program and compile it.
    Simulate(SimulateArgs),
    /// Learn pair-weight coefficients from labelled pairs.
    TrainWeights(TrainWeightsArgs),
    /// Learn an inlining model from labelled pairs.
    TrainInliner(TrainInlinerArgs),
    /// Convert a feature graph between DOT and JSON.
    Convert(ConvertArgs),
    /// Render a saved match report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct MatchArgs {
    /// Binary-side graph (.json or .dot).
    binary: PathBuf,
    /// Source-side graph (.json or .dot).
    source: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    inline_model: Option<PathBuf>,
    /// Skip pseudo-inlined function synthesis.
    #[arg(long, conflicts_with = "inline_model")]
    no_inline: bool,
    #[arg(long)]
    whitelist: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    max_iter: usize,
    /// Ground truth (binary id to source id) to score the result against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the full report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for weight-matrix construction.
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for interface uniformity; matching draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of source functions.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Compiler preset: identity, o2 or o3.
    #[arg(long, default_value = "o2")]
    profile: String,
    /// JSON profile overriding the preset.
    #[arg(long, conflicts_with = "profile")]
    profile_file: Option<PathBuf>,
    /// JSON source shape overriding the defaults.
    #[arg(long)]
    shape_file: Option<PathBuf>,
    /// Emit this many pairs into numbered subdirectories, seeds counting up from --seed.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorpusInput {
    /// Directories written by `simulate`, or parents of such directories.
    #[arg(long = "pairs")]
    pairs: Vec<PathBuf>,
    /// JSON-lines corpus files.
    #[arg(long = "corpus")]
    corpus: Vec<PathBuf>,
    /// Also write the assembled corpus as JSON lines.
    #[arg(long)]
    dump_corpus: Option<PathBuf>,
}

#[derive(Args)]
struct TrainWeightsArgs {
    #[command(flatten)]
    input: CorpusInput,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Soft-margin penalty.
    #[arg(long, default_value_t = SvmConfig::default().c)]
    c: f64,
    #[arg(long, default_value_t = SvmConfig::default().max_epochs)]
    max_epochs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainInlinerArgs {
    #[command(flatten)]
    input: CorpusInput,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = BoostConfig::default().rounds)]
    rounds: usize,
    /// Held-out pair directories to report true- and false-positive rates on.
    #[arg(long)]
    eval: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    /// Output file; its extension picks the format unless --to is given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    to: Option<GraphFormat>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphFormat {
    Json,
    Dot,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_INPUT, error: e.into() })
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_INTERNAL, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::TrainWeights(a) => cmd_train_weights(a),
        Command::TrainInliner(a) => cmd_train_inliner(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already ends with (library errors embed their source).
fn describe(error: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn is_dot(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("dot" | "gv"))
}

fn read_graph(path: &Path) -> anyhow::Result<FeatureGraph> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let graph = if is_dot(path) {
        dot::ingest_dot(&bytes)
    } else {
        json::ingest_json(&bytes)
    }
    .with_context(|| format!("invalid graph {}", path.display()))?;
    if let Some(v) = validate(&graph).first() {
        bail!("invalid graph {}: {v}", path.display());
    }
    Ok(graph)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_match(a: MatchArgs) -> Result<(), Failure> {
    let binary = read_graph(&a.binary).input()?;
    let source = read_graph(&a.source).input()?;
    let truth: Option<BTreeMap<String, String>> = match &a.truth {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("cannot read {}", p.display())).input()?;
            Some(
                serde_json::from_slice(&bytes)
                    .with_context(|| format!("invalid ground truth {}", p.display()))
                    .input()?,
            )
        }
        None => None,
    };
    if a.threads == Some(0) {
        return Err(anyhow!("--threads must be at least 1")).input();
    }
    let pipeline = Pipeline {
        weights: config::load_weights(a.weights.as_deref()).input()?,
        whitelist: config::load_whitelist(a.whitelist.as_deref()).input()?,
        inline_model: if a.no_inline {
            None
        } else {
            Some(config::load_inline_model(a.inline_model.as_deref()).input()?)
        },
        options: MatchOptions {
            max_iterations: a.max_iter,
            threads: a.threads,
        },
    };

    let mut report = pipeline.run(&binary, &source).internal()?;
    if let Some(truth) = &truth {
        let tallies = score_against_ground_truth(&report, truth).input()?;
        report.tallies = Some(tallies);
    }

    let rendered = |format: Format| match format {
        Format::Json => report.to_json(),
        Format::Text => report.render_text(),
    };
    match (&a.out, a.format) {
        (Some(out), format) => {
            write_file(out, &rendered(format.unwrap_or(Format::Json))).internal()?;
            print!("{}", report.summary());
            println!("report: {}", out.display());
        }
        (None, Some(format)) => print!("{}", rendered(format)),
        (None, None) => print!("{}", report.summary()),
    }
    Ok(())
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("invalid {}", path.display()))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let shape: SourceShape = match &a.shape_file {
        Some(p) => read_json_file(p).input()?,
        None => SourceShape::default(),
    };
    let profile_for = |seed: u64| -> Result<SimProfile, Failure> {
        match &a.profile_file {
            Some(p) => {
                let mut profile: SimProfile = read_json_file(p).input()?;
                profile.seed = seed;
                Ok(profile)
            }
            None => SimProfile::preset(&a.profile, seed)
                .ok_or_else(|| anyhow!("unknown profile `{}` (expected identity, o2 or o3)", a.profile))
                .input(),
        }
    };
    if a.n == 0 {
        return Err(anyhow!("--n must be at least 1")).input();
    }
    let jobs: Vec<(u64, PathBuf)> = match a.count {
        None => vec![(a.seed, a.out.clone())],
        Some(count) => (0..count as u64)
            .map(|k| (a.seed + k, a.out.join(format!("pair-{k:03}"))))
            .collect(),
    };
    for (seed, dir) in jobs {
        let origin = SourceOrigin {
            seed,
            n_functions: a.n,
            shape: shape.clone(),
        };
        let pair = simulate(origin, &profile_for(seed)?).input()?;
        emit_pair(&pair, &dir).internal()?;
        println!(
            "pair: {} source_functions: {} binary_functions: {} inlined_edges: {}",
            dir.display(),
            pair.source.len(),
            pair.binary.len(),
            pair.inlined_edges.len()
        );
    }
    Ok(())
}

/// Pair directories named on the command line, expanding parents of pair directories.
fn collect_pairs(dirs: &[PathBuf]) -> anyhow::Result<Vec<SimPair>> {
    let mut out = Vec::new();
    for dir in dirs {
        if dir.join("profile.json").is_file() {
            out.push(load_pair(dir)?);
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("cannot list {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("profile.json").is_file())
            .collect();
        if children.is_empty() {
            bail!("{} holds no simulated pairs", dir.display());
        }
        children.sort();
        for child in children {
            out.push(load_pair(&child)?);
        }
    }
    Ok(out)
}

fn cmd_train_weights(a: TrainWeightsArgs) -> Result<(), Failure> {
    let pairs = collect_pairs(&a.input.pairs).input()?;
    let labelled: Vec<LabelledPair<'_>> = pairs.iter().map(LabelledPair::from).collect();
    let mut corpus = build_pair_corpus(&labelled, a.seed).input()?;
    for p in &a.input.corpus {
        corpus.extend(read_jsonl::<PairExample>(p).input()?);
    }
    if let Some(p) = &a.input.dump_corpus {
        write_jsonl(p, &corpus).internal()?;
    }
    let cfg = SvmConfig {
        c: a.c,
        max_epochs: a.max_epochs,
        seed: a.seed,
        ..SvmConfig::default()
    };
    let trained = train_weights(&corpus, &cfg).input()?;
    write_file(&a.out, &trained.weights.to_json()).internal()?;
    println!("examples: {}", corpus.len());
    println!("training_accuracy: {:.4}", trained.accuracy(&corpus));
    println!("epochs: {}", trained.epochs);
    for f in provmatch::cost::Feature::ALL {
        println!("{}: {:.4}", f.name(), trained.weights.get(f));
    }
    println!("weights: {}", a.out.display());
    Ok(())
}

fn cmd_train_inliner(a: TrainInlinerArgs) -> Result<(), Failure> {
    let pairs = collect_pairs(&a.input.pairs).input()?;
    let labelled: Vec<LabelledPair<'_>> = pairs.iter().map(LabelledPair::from).collect();
    let mut corpus = build_inline_corpus(&labelled, a.seed);
    for p in &a.input.corpus {
        corpus.extend(read_jsonl::<InlineExample>(p).input()?);
    }
    if let Some(p) = &a.input.dump_corpus {
        write_jsonl(p, &corpus).internal()?;
    }
    let model = train_inliner(&corpus, &BoostConfig { rounds: a.rounds }).input()?;
    write_file(&a.out, &model.to_json()).internal()?;
    let (tpr, fpr) = evaluate_inliner(&model, &corpus);
    println!("examples: {}", corpus.len());
    println!("rules: {}", model.rules.len());
    println!("training_tpr: {tpr:.4}");
    println!("training_fpr: {fpr:.4}");
    if !a.eval.is_empty() {
        let held_out = collect_pairs(&a.eval).input()?;
        let labelled: Vec<LabelledPair<'_>> = held_out.iter().map(LabelledPair::from).collect();
        let test = build_inline_corpus(&labelled, a.seed);
        let (tpr, fpr) = evaluate_inliner(&model, &test);
        println!("eval_examples: {}", test.len());
        println!("eval_tpr: {tpr:.4}");
        println!("eval_fpr: {fpr:.4}");
    }
    println!("model: {}", a.out.display());
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> Result<(), Failure> {
    let graph = read_graph(&a.input).input()?;
    let to = a.to.unwrap_or(match &a.out {
        Some(p) if is_dot(p) => GraphFormat::Dot,
        _ => GraphFormat::Json,
    });
    let text = match to {
        GraphFormat::Json => json::to_json(&graph),
        GraphFormat::Dot => dot::to_dot(&graph),
    };
    match &a.out {
        Some(p) => {
            write_file(p, &text).internal()?;
            println!("functions: {}", graph.len());
            println!("output: {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let bytes = fs::read(&a.report)
        .with_context(|| format!("cannot read {}", a.report.display()))
        .input()?;
    let report = MatchReport::from_json(&bytes)
        .with_context(|| format!("invalid report {}", a.report.display()))
        .input()?;
    let text = match a.format {
        Format::Text => report.render_text(),
        Format::Json => report.to_json(),
    };
    match &a.out {
        Some(p) => {
            write_file(p, &text).internal()?;
            println!("output: {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
