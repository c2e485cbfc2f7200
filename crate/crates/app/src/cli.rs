//! Command-line entry point. Every subcommand reads and writes the artifact
//! formats of the core modules; failures end with one JSON error line on
//! stderr and a nonzero exit.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use misinfo_core::deploy::{self, run_deployment, select_candidates, DeploymentRun, DeploymentStrategy, SeedSet, StrategyKind};
use misinfo_core::features::{extract_by_month, FeatureContext};
use misinfo_core::graph::{build_graph, DEFAULT_EDGE_THRESHOLD};
use misinfo_core::ingest::{aggregate_month, apply_privacy_floor, parse_log, write_records, AliasTable, FloorBasis, LogFormat};
use misinfo_core::labels::{EventLog, PersistentLabelStore, ReviewEvent, ReviewOutcome, Verdict};
use misinfo_core::ml::{self, cross_validate, labeled_set, write_metrics_csv, Algorithm, ClassLabel};
use misinfo_core::synth::{generate, SynthConfig};
use misinfo_core::{Domain, FeatureMatrix, FeatureMode, ModelConfig, Month, TrainedModel};
use serde_json::json;

use crate::artifacts::{
    load_features, load_graphs, load_registry, load_runs, load_store, resolve_created_at, save_features, save_graphs,
};
use crate::config::{Layout, PipelineConfig, DEFAULT_PORT};
use crate::error::{AppError, AppResult};
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "misinfo", version, about = "Navigation-graph misinformation domain detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a referrer log into aggregated monthly traffic records.
    Ingest(IngestArgs),
    /// Threshold traffic records into one navigation graph per month.
    BuildGraph(BuildGraphArgs),
    /// Extract feature matrices, one per month.
    Features(FeaturesArgs),
    /// Fit a classifier on one month's labeled rows.
    Train(TrainArgs),
    /// Temporally shifted 5-fold cross-validation; prints the metrics CSV.
    Evaluate(EvaluateArgs),
    /// Select candidates, score them and persist a run; prints counts.
    Deploy(DeployArgs),
    /// Generate a synthetic benchmark dataset.
    Synth(SynthArgs),
    /// Record a review verdict for a flagged domain.
    Review(ReviewArgs),
    /// Run ingest through deploy from a pipeline config.
    Pipeline(PipelineArgs),
    /// Serve the review API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to the input's extension (`.jsonl` or CSV).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub alias: Option<PathBuf>,
    /// Drop domains whose monthly total is not above this many page views.
    #[arg(long)]
    pub privacy_floor: Option<u64>,
    #[arg(long, value_enum, default_value = "inbound-outbound")]
    pub floor_basis: BasisArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    InboundOutbound,
    InboundOnly,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Traffic CSV (`month,referrer,target,page_views`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub review_log: Option<PathBuf>,
    #[arg(long, default_value = "binary")]
    pub mode: FeatureMode,
    /// `labeled` rows only, or every node of every month.
    #[arg(long, value_enum, default_value = "labeled")]
    pub domains: DomainSet,
    #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DomainSet {
    Labeled,
    All,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model config JSON; flags below override its fields.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to the earliest month present.
    #[arg(long)]
    pub train_month: Option<Month>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub review_log: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub review_log: Option<PathBuf>,
    /// Comma-separated; all four by default.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<Algorithm>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the metrics CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    #[arg(long, value_enum, default_value = "one-hop")]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long, default_value_t = deploy::DEFAULT_TRAFFIC_FLOOR)]
    pub traffic_floor: u64,
    #[arg(long, value_enum, default_value = "misinformation")]
    pub seed_set: SeedSetArg,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    OneHop,
    TwoHop,
    Sampled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SeedSetArg {
    Misinformation,
    Propaganda,
}

impl StrategyArgs {
    pub fn to_strategy(&self) -> AppResult<DeploymentStrategy> {
        let kind = match self.strategy {
            StrategyArg::OneHop => StrategyKind::OneHopEgonet,
            StrategyArg::TwoHop => StrategyKind::TwoHopEgonet,
            StrategyArg::Sampled => StrategyKind::SampledTraffic,
        };
        let sample_size = match kind {
            StrategyKind::SampledTraffic => Some(self.sample_size.unwrap_or(deploy::DEFAULT_SAMPLE_SIZE)),
            _ => self.sample_size,
        };
        let s = DeploymentStrategy {
            kind,
            sample_size,
            traffic_floor: self.traffic_floor,
            seed_set: match self.seed_set {
                SeedSetArg::Misinformation => SeedSet::Misinformation,
                SeedSetArg::Propaganda => SeedSet::Propaganda,
            },
            seed: self.seed,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct DeployArgs {
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Review verdicts to replay over the labels, so confirmed domains seed
    /// the next run.
    #[arg(long)]
    pub review_log: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: u64,
    #[arg(long)]
    pub runs_dir: PathBuf,
    /// RFC 3339 run timestamp; else `SOURCE_DATE_EPOCH`, else now.
    #[arg(long)]
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config JSON; defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Run artifact directory.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub domain: String,
    #[arg(long)]
    pub verdict: Verdict,
    #[arg(long)]
    pub reviewer: String,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub review_log: PathBuf,
    /// RFC 3339; else `SOURCE_DATE_EPOCH`, else now.
    #[arg(long)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Pipeline config; supplies defaults for every other flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub review_log: Option<PathBuf>,
    #[arg(long)]
    pub edge_threshold: Option<u64>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub port: Option<u16>,
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", AppError::new("usage", first).to_json_line());
            return ExitCode::from(2);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> AppResult<()> {
    match command {
        Command::Ingest(a) => ingest(&a, out),
        Command::BuildGraph(a) => build_graphs(&a, out),
        Command::Features(a) => features(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Evaluate(a) => evaluate(&a, out),
        Command::Deploy(a) => deploy_cmd(&a, out),
        Command::Synth(a) => synth(&a, out),
        Command::Review(a) => review(&a, out),
        Command::Pipeline(a) => pipeline(&a, out),
        Command::Serve(a) => serve(&a),
    }
}

fn json_line(out: &mut dyn Write, value: serde_json::Value) -> AppResult<()> {
    writeln!(out, "{value}")?;
    Ok(())
}

fn create(path: &Path) -> AppResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

// ------------------------------------------------------------------ ingest

pub struct IngestOptions<'a> {
    pub input: &'a Path,
    pub format: LogFormat,
    pub alias: Option<&'a Path>,
    pub privacy_floor: Option<u64>,
    pub basis: FloorBasis,
    pub out: &'a Path,
}

fn run_ingest(o: &IngestOptions<'_>, out: &mut dyn Write) -> AppResult<()> {
    let parsed = parse_log(o.input, o.format)?;
    for m in parsed.malformed.iter().take(20) {
        tracing::warn!(line = m.line, reason = %m.reason, "skipping malformed row");
    }
    let (records, aliased) = match o.alias {
        Some(p) => AliasTable::load(p)?.apply(parsed.records),
        None => (parsed.records, 0),
    };
    let aggregated: Vec<_> = aggregate_month(&records).into_values().flatten().collect();
    let kept = match o.privacy_floor {
        Some(f) => apply_privacy_floor(&aggregated, f, o.basis),
        None => aggregated.clone(),
    };
    let mut w = create(o.out)?;
    write_records(&mut w, &kept)?;
    w.flush()?;
    let months: std::collections::BTreeSet<Month> = kept.iter().map(|r| r.month).collect();
    json_line(
        out,
        json!({
            "rows": records.len(),
            "malformed": parsed.malformed.len(),
            "aliased": aliased,
            "aggregated": aggregated.len(),
            "kept": kept.len(),
            "months": months,
        }),
    )
}

fn ingest(a: &IngestArgs, out: &mut dyn Write) -> AppResult<()> {
    let format = match a.format {
        Some(FormatArg::Csv) => LogFormat::Csv,
        Some(FormatArg::Jsonl) => LogFormat::Jsonl,
        None if a.input.extension().is_some_and(|e| e == "jsonl" || e == "json") => LogFormat::Jsonl,
        None => LogFormat::Csv,
    };
    let basis = match a.floor_basis {
        BasisArg::InboundOutbound => FloorBasis::InboundOutbound,
        BasisArg::InboundOnly => FloorBasis::InboundOnly,
    };
    if a.privacy_floor == Some(0) {
        return Err(AppError::invalid("privacy floor must be positive"));
    }
    run_ingest(
        &IngestOptions { input: &a.input, format, alias: a.alias.as_deref(), privacy_floor: a.privacy_floor, basis, out: &a.out },
        out,
    )
}

// ------------------------------------------------------------------- graph

fn run_build_graphs(input: &Path, threshold: u64, out_dir: &Path, out: &mut dyn Write) -> AppResult<()> {
    if threshold == 0 {
        return Err(AppError::invalid("edge threshold must be positive"));
    }
    let parsed = parse_log(input, LogFormat::Csv)?;
    let mut graphs = Vec::new();
    for (_, records) in aggregate_month(&parsed.records) {
        graphs.push(build_graph(&records, threshold)?);
    }
    save_graphs(out_dir, &graphs)?;
    for g in &graphs {
        json_line(out, json!({ "month": g.month(), "nodes": g.node_count(), "edges": g.edge_count() }))?;
    }
    Ok(())
}

fn build_graphs(a: &BuildGraphArgs, out: &mut dyn Write) -> AppResult<()> {
    run_build_graphs(&a.input, a.edge_threshold, &a.out_dir, out)
}

// ---------------------------------------------------------------- features

fn features(a: &FeaturesArgs, out: &mut dyn Write) -> AppResult<()> {
    let graphs = load_graphs(&a.graphs, a.edge_threshold)?;
    let store = load_store(&a.labels, a.review_log.as_deref())?;
    let registry = load_registry(a.registry.as_deref())?;
    let ctx = FeatureContext::new(&store, &registry, a.mode);
    let matrices = match a.domains {
        DomainSet::Labeled => extract_by_month(&graphs, &ctx, labeled_set(&store, a.mode).keys()),
        DomainSet::All => {
            let all: std::collections::BTreeSet<&Domain> = graphs.iter().flat_map(|g| g.nodes()).collect();
            extract_by_month(&graphs, &ctx, all.iter().copied())
        }
    };
    save_features(&a.out_dir, &matrices)?;
    for (m, fm) in &matrices {
        json_line(out, json!({ "month": m, "rows": fm.n_rows(), "schema": fm.schema.version }))?;
    }
    Ok(())
}

// ------------------------------------------------------------------ models

fn model_config(args: &ModelArgs, algorithm: Option<Algorithm>, mode: FeatureMode) -> AppResult<ModelConfig> {
    let mut cfg = match &args.model_config {
        Some(p) => serde_json::from_reader::<_, ModelConfig>(File::open(p)?)
            .map_err(|e| AppError::new("invalid_config", format!("{}: {e}", p.display())))?,
        None => ModelConfig::default(),
    };
    if let Some(alg) = algorithm {
        cfg.algorithm = alg;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.mode = mode;
    cfg.validate()?;
    Ok(cfg)
}

/// Labeled rows of the training month.
fn training_rows(fm: &FeatureMatrix, labels: &BTreeMap<Domain, ClassLabel>) -> (FeatureMatrix, Vec<ClassLabel>) {
    let idx: Vec<usize> = (0..fm.n_rows()).filter(|&i| labels.contains_key(&fm.domains[i])).collect();
    let y = idx.iter().map(|&i| labels[&fm.domains[i]]).collect();
    let sub = FeatureMatrix {
        schema: fm.schema.clone(),
        domains: idx.iter().map(|&i| fm.domains[i].clone()).collect(),
        values: fm.values.select_rows(&idx),
    };
    (sub, y)
}

fn train_month(matrices: &BTreeMap<Month, FeatureMatrix>, requested: Option<Month>) -> AppResult<Month> {
    match requested {
        Some(m) if matrices.contains_key(&m) => Ok(m),
        Some(m) => Err(AppError::new("missing_month", format!("no feature matrix for {m}"))),
        None => Ok(*matrices.keys().next().expect("load_features never returns an empty map")),
    }
}

fn run_train(
    features_dir: &Path,
    labels: &[PathBuf],
    review_log: Option<&Path>,
    algorithm: Option<Algorithm>,
    args: &ModelArgs,
    out_path: &Path,
    out: &mut dyn Write,
) -> AppResult<TrainedModel> {
    let matrices = load_features(features_dir)?;
    let month = train_month(&matrices, args.train_month)?;
    let fm = &matrices[&month];
    let cfg = model_config(args, algorithm, fm.schema.mode())?;
    let store = load_store(labels, review_log)?;
    let (x, y) = training_rows(fm, &labeled_set(&store, cfg.mode));
    let model = ml::train(&cfg, &x, &y)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    model.save(out_path)?;
    json_line(
        out,
        json!({ "algorithm": cfg.algorithm, "mode": cfg.mode, "train_month": month, "rows": y.len(), "schema": model.schema.version }),
    )?;
    Ok(model)
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> AppResult<()> {
    run_train(&a.features, &a.labels, a.review_log.as_deref(), a.algorithm, &a.model, &a.out, out).map(|_| ())
}

fn run_evaluate(
    features_dir: &Path,
    labels: &[PathBuf],
    review_log: Option<&Path>,
    algorithms: &[Algorithm],
    args: &ModelArgs,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> AppResult<()> {
    let matrices = load_features(features_dir)?;
    let month = train_month(&matrices, args.train_month)?;
    let mode = matrices[&month].schema.mode();
    let store = load_store(labels, review_log)?;
    let present: std::collections::BTreeSet<&Domain> = matrices[&month].domains.iter().collect();
    let labels: BTreeMap<Domain, ClassLabel> =
        labeled_set(&store, mode).into_iter().filter(|(d, _)| present.contains(d)).collect();
    let algorithms = if algorithms.is_empty() { Algorithm::ALL.to_vec() } else { algorithms.to_vec() };
    let mut reports = Vec::new();
    for alg in algorithms {
        let cfg = model_config(args, Some(alg), mode)?;
        reports.push(cross_validate(&cfg, &matrices, &labels, month)?);
    }
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &reports)?;
    if let Some(p) = out_path {
        let mut w = create(p)?;
        w.write_all(&buf)?;
        w.flush()?;
    }
    out.write_all(&buf)?;
    Ok(())
}

fn evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> AppResult<()> {
    run_evaluate(&a.features, &a.labels, a.review_log.as_deref(), &a.algorithms, &a.model, a.out.as_deref(), out)
}

// ------------------------------------------------------------------ deploy

pub struct DeployOptions<'a> {
    pub graphs: &'a Path,
    pub edge_threshold: u64,
    pub model: &'a Path,
    pub labels: &'a [PathBuf],
    pub registry: Option<&'a Path>,
    pub review_log: Option<&'a Path>,
    pub strategy: DeploymentStrategy,
    pub runs_dir: &'a Path,
    pub created_at: Option<DateTime<Utc>>,
}

fn run_deploy(o: &DeployOptions<'_>, out: &mut dyn Write) -> AppResult<DeploymentRun> {
    let graphs = load_graphs(o.graphs, o.edge_threshold)?;
    let model = TrainedModel::load(o.model)?;
    let store = load_store(o.labels, o.review_log)?;
    let registry = load_registry(o.registry)?;
    let created_at = resolve_created_at(o.created_at)?;
    let candidates = select_candidates(&graphs, &store, &registry, &o.strategy)?;
    let run = run_deployment(&candidates, &graphs, &model, &store, &registry, None, &o.strategy, created_at)?;
    let dir = o.runs_dir.join(&run.id);
    run.save(&dir)?;
    tracing::info!(run = %run.id, dir = %dir.display(), candidates = run.candidates.len(), positives = run.positives.len(), "run saved");
    deploy::write_counts_csv(&mut *out, &[&run])?;
    Ok(run)
}

fn deploy_cmd(a: &DeployArgs, out: &mut dyn Write) -> AppResult<()> {
    run_deploy(
        &DeployOptions {
            graphs: &a.graphs,
            edge_threshold: a.edge_threshold,
            model: &a.model,
            labels: &a.labels,
            registry: a.registry.as_deref(),
            review_log: a.review_log.as_deref(),
            strategy: a.strategy.to_strategy()?,
            runs_dir: &a.runs_dir,
            created_at: a.created_at,
        },
        out,
    )
    .map(|_| ())
}

// ------------------------------------------------------------------- synth

fn synth(a: &SynthArgs, out: &mut dyn Write) -> AppResult<()> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let data = generate(&cfg)?;
    data.write_dir(&a.out_dir)?;
    let counts = data.label_store().counts();
    json_line(
        out,
        json!({
            "domains": data.truth.len(),
            "records": data.records.len(),
            "months": data.months,
            "misinformation": counts.misinformation,
            "propaganda": counts.propaganda,
            "authoritative": counts.authoritative,
        }),
    )
}

// ------------------------------------------------------------------ review

fn review(a: &ReviewArgs, out: &mut dyn Write) -> AppResult<()> {
    let run = DeploymentRun::load(&a.run)?;
    let domain = Domain::parse(&a.domain)?;
    if !run.is_positive(domain.as_str()) {
        return Err(AppError::new("not_found", format!("{domain} is not a positive of run {}", run.id)));
    }
    if a.reviewer.trim().is_empty() {
        return Err(AppError::invalid("reviewer must not be empty"));
    }
    let mut labels = PersistentLabelStore::open(&a.labels, EventLog::new(&a.review_log))?;
    let event = ReviewEvent {
        domain: domain.clone(),
        verdict: a.verdict,
        reviewer: a.reviewer.clone(),
        timestamp: resolve_created_at(a.timestamp)?,
        run: Some(run.id.clone()),
        checklist: None,
    };
    let outcome = labels.add_review_label(event)?;
    let outcome = match outcome {
        ReviewOutcome::Recorded => "recorded",
        ReviewOutcome::Unchanged => "unchanged",
    };
    json_line(out, json!({ "domain": domain, "verdict": a.verdict, "outcome": outcome }))
}

// ---------------------------------------------------------------- pipeline

fn pipeline(a: &PipelineArgs, out: &mut dyn Write) -> AppResult<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let layout = cfg.layout();
    std::fs::create_dir_all(&layout.root)?;
    let mut sink = std::io::sink();
    if let Some(logs) = &cfg.logs {
        let format = cfg.log_format.unwrap_or(if logs.extension().is_some_and(|e| e == "jsonl") {
            LogFormat::Jsonl
        } else {
            LogFormat::Csv
        });
        run_ingest(
            &IngestOptions {
                input: logs,
                format,
                alias: cfg.aliases.as_deref(),
                privacy_floor: cfg.privacy_floor,
                basis: cfg.floor_basis,
                out: &layout.traffic(),
            },
            &mut sink,
        )?;
    } else if !layout.traffic().exists() {
        return Err(AppError::new("missing_input", "config has no logs and the artifact root has no traffic.csv"));
    }
    run_build_graphs(&layout.traffic(), cfg.edge_threshold, &layout.graphs(), &mut sink)?;
    let graphs = load_graphs(&layout.graphs(), cfg.edge_threshold)?;
    let review_log = cfg.review_log();
    let store = load_store(&cfg.labels, Some(&review_log))?;
    let registry = load_registry(cfg.registry.as_deref())?;
    let ctx = FeatureContext::new(&store, &registry, cfg.model.mode);
    save_features(&layout.features(), &extract_by_month(&graphs, &ctx, labeled_set(&store, cfg.model.mode).keys()))?;

    let model_args = ModelArgs { model_config: None, seed: None, train_month: cfg.train_month };
    let model_cfg_path = layout.root.join("model_config.json");
    std::fs::write(&model_cfg_path, serde_json::to_vec_pretty(&cfg.model)?)?;
    let model_args = ModelArgs { model_config: Some(model_cfg_path), ..model_args };
    run_train(&layout.features(), &cfg.labels, Some(&review_log), None, &model_args, &layout.model(), &mut sink)?;
    run_evaluate(&layout.features(), &cfg.labels, Some(&review_log), &[], &model_args, Some(&layout.metrics()), &mut sink)?;
    let run = run_deploy(
        &DeployOptions {
            graphs: &layout.graphs(),
            edge_threshold: cfg.edge_threshold,
            model: &layout.model(),
            labels: &cfg.labels,
            registry: cfg.registry.as_deref(),
            review_log: Some(&review_log),
            strategy: cfg.strategy(),
            runs_dir: &layout.runs(),
            created_at: a.created_at,
        },
        out,
    )?;
    tracing::info!(run = %run.id, "pipeline finished");
    Ok(())
}

// ------------------------------------------------------------------- serve

fn serve(a: &ServeArgs) -> AppResult<()> {
    let cfg = a.config.as_deref().map(PipelineConfig::load).transpose()?;
    let layout = cfg.as_ref().map(PipelineConfig::layout);
    let pick = |flag: &Option<PathBuf>, from_cfg: Option<PathBuf>, name: &str| -> AppResult<PathBuf> {
        flag.clone().or(from_cfg).ok_or_else(|| AppError::invalid(format!("--{name} or --config is required")))
    };
    let runs_dir = pick(&a.runs_dir, layout.as_ref().map(Layout::runs), "runs-dir")?;
    let graphs_dir = pick(&a.graphs, layout.as_ref().map(Layout::graphs), "graphs")?;
    let review_log = pick(&a.review_log, cfg.as_ref().map(PipelineConfig::review_log), "review-log")?;
    let labels = if a.labels.is_empty() { cfg.as_ref().map(|c| c.labels.clone()).unwrap_or_default() } else { a.labels.clone() };
    if labels.is_empty() {
        return Err(AppError::invalid("--labels or --config is required"));
    }
    let registry = a.registry.clone().or_else(|| cfg.as_ref().and_then(|c| c.registry.clone()));
    let threshold = a.edge_threshold.or(cfg.as_ref().map(|c| c.edge_threshold)).unwrap_or(DEFAULT_EDGE_THRESHOLD);
    let port = a.port.or(cfg.as_ref().map(|c| c.port)).unwrap_or(DEFAULT_PORT);

    let state = server::AppState::load(&server::ServeSources {
        runs_dir: &runs_dir,
        graphs_dir: &graphs_dir,
        edge_threshold: threshold,
        labels: &labels,
        registry: registry.as_deref(),
        review_log: &review_log,
    })?;
    let runs = load_runs(&runs_dir)?.len();
    let addr = format!("{}:{port}", a.host);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        tracing::info!(%addr, runs, "serving review API");
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
