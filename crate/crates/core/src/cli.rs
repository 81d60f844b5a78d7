//! `scenevote` command line: run → eval → ensemble → report, with file handoffs.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration or unreadable input,
//! 4 provider authentication, 5 output I/O, 6 inconsistent data.
//! Failures print a one-line JSON summary on stderr.

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{dataset_stats, filter_frames, load_manifest, DatasetManifest, ManifestError};
use crate::ensemble::{delta_vs_baseline, ensemble_predictions, enumerate_ensembles, DeltaReport, EnsembleError, VotePolicy};
use crate::metrics::{evaluate_predictions, FatalPolicy, Metric, MetricsError, RunSummary};
use crate::parsing::{CoercionMode, CoercionPolicy};
use crate::predictions::{PredictionIoError, PredictionSet};
use crate::prompt::{build_prompt, PROMPT_SHA256};
use crate::providers::{load_provider_configs, run_batch, BatchError, ConfigError};
use crate::report::{
    attribute_table_csv, delta_chart_data, delta_table_csv, emit, radar_chart_data, summary_chart_data, summary_table_csv, Averaging,
    Format, ReportError,
};
use crate::schema::{attribute_registry, AttributeSchema};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_AUTH: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_DATA: i32 = 6;

const TIE_RULE: &str = "plurality; ties go to the highest-priority provider that voted for a tied value";
const VOTE_SPACE: &str = "binarized";

#[derive(Debug, Parser)]
#[command(name = "scenevote", version, about = "Zero-shot traffic-scene labelling benchmark with majority-vote ensembles")]
struct Cli {
    /// Record this Unix time instead of the wall clock in run_meta.json
    #[arg(long, global = true, value_name = "SECS")]
    clock_epoch: Option<i64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Query every provider for every retained frame and write predictions/<provider>.jsonl
    Run(RunArgs),
    /// Score prediction files against the manifest and write metrics/
    Eval(EvalArgs),
    /// Vote over every subset of at least --min-size providers and compare with a baseline
    Ensemble(EnsembleArgs),
    /// Render metrics and ensemble deltas into charts/
    Report(ReportArgs),
    /// Inspect the prompt template
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Inspect a dataset manifest
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Print the attribute schema as JSON
    Schema,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CoercionArg {
    CoerceZero,
    Strict,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FatalArg {
    ScoreAsZero,
    Exclude,
}

impl From<FatalArg> for FatalPolicy {
    fn from(a: FatalArg) -> Self {
        match a {
            FatalArg::ScoreAsZero => FatalPolicy::ScoreAsZero,
            FatalArg::Exclude => FatalPolicy::Exclude,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset manifest (JSONL)
    #[arg(long)]
    manifest: PathBuf,
    /// Provider configuration (TOML, one [[provider]] table each)
    #[arg(long)]
    providers: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Response cache directory [default: <out>/cache]
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// How to treat missing, unknown or out-of-domain keys in model output
    #[arg(long, value_enum, default_value = "coerce-zero")]
    coercion: CoercionArg,
    /// Treat "2" like 2 when parsing model output
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    string_integers: bool,
    /// Cap concurrent requests per provider, overriding the config
    #[arg(long)]
    max_in_flight: Option<usize>,
}

/// Resolved settings for a `run`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub provider_config_path: PathBuf,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub coercion: CoercionPolicy,
    pub max_in_flight: Option<usize>,
}

impl From<RunArgs> for RunConfig {
    fn from(a: RunArgs) -> Self {
        let mode = match a.coercion {
            CoercionArg::CoerceZero => CoercionMode::CoerceZero,
            CoercionArg::Strict => CoercionMode::Strict,
        };
        Self {
            cache_dir: a.cache_dir.unwrap_or_else(|| a.out.join("cache")),
            manifest_path: a.manifest,
            provider_config_path: a.providers,
            output_dir: a.out,
            coercion: CoercionPolicy {
                mode,
                accept_string_integers: a.string_integers,
            },
            max_in_flight: a.max_in_flight,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Records whose output could not be parsed: score the all-zero label, or drop the frame
    #[arg(long, value_enum, default_value = "score-as-zero")]
    fatal: FatalArg,
    /// Prediction files (JSONL), one per provider
    #[arg(required = true)]
    predictions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Provider the ensembles are compared against [default: first in priority]
    #[arg(long)]
    baseline: Option<String>,
    /// Tie-break order, highest first [default: order of the prediction files]
    #[arg(long, value_delimiter = ',')]
    priority: Option<Vec<String>>,
    /// Smallest ensemble size
    #[arg(long, default_value_t = 3)]
    min_size: usize,
    #[arg(long, value_enum, default_value = "score-as-zero")]
    fatal: FatalArg,
    /// Prediction files (JSONL), at least three
    #[arg(required = true)]
    predictions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding metrics/ (and ensembles/, if present)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Metrics to chart
    #[arg(long, value_delimiter = ',', default_value = "f1,recall,precision")]
    metric: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv,svg")]
    formats: Vec<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Debug, Subcommand)]
enum PromptCommand {
    /// Print the prompt text
    Show,
    /// Print the SHA-256 of the prompt text
    Hash,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Frame counts, exclusions and per-attribute class supports
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Print JSON instead of a table
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn kind(&self) -> &'static str {
        match self.code {
            EXIT_USAGE => "usage",
            EXIT_CONFIG => "config",
            EXIT_AUTH => "auth",
            EXIT_IO => "io",
            EXIT_DATA => "data",
            _ => "internal",
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::new(EXIT_USAGE, msg)
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_DATA, e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_IO, format!("{}: {e}", path.display()))
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = if matches!(e, ConfigError::Auth { .. }) { EXIT_AUTH } else { EXIT_CONFIG };
        CliError::new(code, e.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        CliError::new(EXIT_CONFIG, format!("manifest: {e}"))
    }
}

impl From<PredictionIoError> for CliError {
    fn from(e: PredictionIoError) -> Self {
        CliError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Config(c) => c.into(),
            BatchError::Cache { .. } => CliError::new(EXIT_IO, e.to_string()),
            other => data(other),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        data(e)
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        data(e)
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::new(EXIT_IO, e.to_string()),
            other => data(other),
        }
    }
}

struct Clock {
    pinned: Option<i64>,
}

impl Clock {
    fn now(&self) -> String {
        let t = match self.pinned {
            Some(secs) => DateTime::<Utc>::from_timestamp(secs, 0).unwrap_or_default(),
            None => Utc::now(),
        };
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let summary = json!({ "error": { "kind": e.kind(), "exit_code": e.code, "message": e.message } });
            eprintln!("{summary}");
            e.code
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let clock = Clock { pinned: cli.clock_epoch };
    let schema = attribute_registry();
    match cli.command {
        Command::Run(args) => cmd_run(args.into(), &schema, &clock),
        Command::Eval(args) => cmd_eval(args, &schema, &clock),
        Command::Ensemble(args) => cmd_ensemble(args, &schema, &clock),
        Command::Report(args) => cmd_report(args, &clock),
        Command::Prompt(PromptCommand::Show) => {
            let prompt = build_prompt().map_err(data)?;
            print!("{}", prompt.as_str());
            Ok(())
        }
        Command::Prompt(PromptCommand::Hash) => {
            let prompt = build_prompt().map_err(data)?;
            println!("{}", prompt.sha256());
            Ok(())
        }
        Command::Dataset(DatasetCommand::Stats { manifest, json }) => cmd_dataset_stats(&manifest, json, &schema),
        Command::Schema => {
            print!("{}", schema.to_json());
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

/// Merges `entry` under `commands.<command>` in `<out>/run_meta.json`.
fn record_run_meta(out: &Path, command: &str, started_at: String, clock: &Clock, mut entry: Map<String, Value>) -> Result<(), CliError> {
    let path = out.join("run_meta.json");
    let mut meta: Map<String, Value> = fs::read(&path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    meta.insert("tool".into(), json!(format!("scenevote {}", env!("CARGO_PKG_VERSION"))));
    meta.insert("prompt_sha256".into(), json!(PROMPT_SHA256));
    entry.insert("started_at".into(), json!(started_at));
    entry.insert("finished_at".into(), json!(clock.now()));
    let commands = meta.entry("commands").or_insert_with(|| json!({}));
    if !commands.is_object() {
        *commands = json!({});
    }
    commands.as_object_mut().expect("object").insert(command.into(), Value::Object(entry));
    write_file(&path, pretty(&meta))
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn cmd_run(cfg: RunConfig, schema: &AttributeSchema, clock: &Clock) -> Result<(), CliError> {
    let started = clock.now();
    let manifest = load_manifest(&cfg.manifest_path, schema)?;
    let mut providers = load_provider_configs(&cfg.provider_config_path)?;
    if let Some(cap) = cfg.max_in_flight {
        if cap == 0 {
            return Err(usage("--max-in-flight must be at least 1"));
        }
        for p in &mut providers {
            p.max_in_flight = p.max_in_flight.min(cap);
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(1, format!("tokio runtime: {e}")))?;
    let output = runtime.block_on(run_batch(&manifest, &providers, &cfg.cache_dir, schema, cfg.coercion))?;

    for set in &output.sets {
        let path = cfg.output_dir.join("predictions").join(format!("{}.jsonl", set.provider_id));
        set.write_jsonl(&path).map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
    }
    for s in &output.stats {
        println!(
            "{}: {} records, {} cache hits, {} network requests, {} errors, {} fatal parses",
            s.provider_id, s.records, s.cache_hits, s.network_requests, s.errors, s.fatal_parses
        );
    }
    println!("network requests: {}", output.network_requests());

    let entry = json!({
        "config": cfg,
        "providers": providers.iter().map(|p| json!({
            "id": p.id, "adapter": p.adapter.as_str(), "model": p.model, "max_in_flight": p.max_in_flight,
            "decode": p.decode, "retry": p.retry,
        })).collect::<Vec<_>>(),
        "exclusions": output.exclusions,
        "stats": output.stats,
        "network_requests": output.network_requests(),
    });
    record_run_meta(&cfg.output_dir, "run", started, clock, obj(entry))
}

fn load_sets(paths: &[PathBuf]) -> Result<Vec<PredictionSet>, CliError> {
    let sets = paths.iter().map(|p| PredictionSet::read_jsonl(p)).collect::<Result<Vec<_>, _>>()?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = sets.iter().find(|s| !seen.insert(s.provider_id.as_str())) {
        return Err(usage(format!("provider \"{}\" given more than once", dup.provider_id)));
    }
    Ok(sets)
}

fn retained(manifest: &DatasetManifest) -> Result<DatasetManifest, CliError> {
    filter_frames(manifest).map(|(m, _)| m).map_err(data)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    frames_scored: usize,
    frames_excluded: usize,
    fatal_records: usize,
    #[serde(rename = "macro")]
    macro_avg: &'a crate::metrics::Prf,
    support_weighted_macro: &'a crate::metrics::Prf,
}

fn summary_rows(summaries: &IndexMap<String, RunSummary>) -> IndexMap<&str, SummaryRow<'_>> {
    summaries
        .iter()
        .map(|(k, s)| {
            (
                k.as_str(),
                SummaryRow {
                    frames_scored: s.frames_scored,
                    frames_excluded: s.frames_excluded,
                    fatal_records: s.fatal_records,
                    macro_avg: &s.macro_avg,
                    support_weighted_macro: &s.support_weighted_macro,
                },
            )
        })
        .collect()
}

fn cmd_eval(args: EvalArgs, schema: &AttributeSchema, clock: &Clock) -> Result<(), CliError> {
    let started = clock.now();
    let manifest = retained(&load_manifest(&args.manifest, schema)?)?;
    let sets = load_sets(&args.predictions)?;
    let fatal = FatalPolicy::from(args.fatal);
    let mut summaries = IndexMap::new();
    for set in &sets {
        let summary = evaluate_predictions(&manifest, set, schema, fatal)?;
        summaries.insert(set.provider_id.clone(), summary);
    }
    let dir = args.out.join("metrics");
    for (id, s) in &summaries {
        write_file(&dir.join(format!("{id}.json")), pretty(s))?;
        println!(
            "{id}: macro F1 {:.4}, support-weighted F1 {:.4}, {} frames scored, {} fatal",
            s.macro_avg.f1, s.support_weighted_macro.f1, s.frames_scored, s.fatal_records
        );
    }
    write_file(&dir.join("summary.json"), pretty(&summary_rows(&summaries)))?;
    write_file(&dir.join("summary.csv"), summary_table_csv(&summaries))?;
    write_file(&dir.join("attributes.csv"), attribute_table_csv(&summaries))?;

    let entry = json!({
        "manifest": args.manifest,
        "predictions": args.predictions,
        "fatal_policy": fatal,
        "providers": summaries.keys().collect::<Vec<_>>(),
    });
    record_run_meta(&args.out, "eval", started, clock, obj(entry))
}

#[derive(Serialize)]
struct EnsembleDoc<'a> {
    name: &'a str,
    members: &'a [String],
    summary: &'a RunSummary,
    delta: &'a DeltaReport,
}

fn cmd_ensemble(args: EnsembleArgs, schema: &AttributeSchema, clock: &Clock) -> Result<(), CliError> {
    let started = clock.now();
    if args.predictions.len() < 3 {
        return Err(usage(format!("ensemble needs at least 3 prediction files, got {}", args.predictions.len())));
    }
    let manifest = retained(&load_manifest(&args.manifest, schema)?)?;
    let sets = load_sets(&args.predictions)?;
    let ids: Vec<String> = sets.iter().map(|s| s.provider_id.clone()).collect();

    let priority = match args.priority {
        Some(p) => {
            let mut sorted_p = p.clone();
            let mut sorted_ids = ids.clone();
            sorted_p.sort();
            sorted_ids.sort();
            if sorted_p != sorted_ids {
                return Err(usage(format!("--priority must list exactly the providers {ids:?}")));
            }
            p
        }
        None => ids.clone(),
    };
    VotePolicy::new(priority.iter().cloned()).map_err(|e| usage(e.to_string()))?;
    let baseline_id = args.baseline.unwrap_or_else(|| priority[0].clone());
    let Some(baseline_set) = sets.iter().find(|s| s.provider_id == baseline_id) else {
        return Err(usage(format!("baseline \"{baseline_id}\" is not among the providers {ids:?}")));
    };
    let specs = enumerate_ensembles(&priority, args.min_size).map_err(|e| usage(e.to_string()))?;

    let fatal = FatalPolicy::from(args.fatal);
    let baseline = evaluate_predictions(&manifest, baseline_set, schema, fatal)?;
    let set_refs: Vec<&PredictionSet> = sets.iter().collect();
    let dir = args.out.join("ensembles");
    let mut summaries = IndexMap::new();
    let mut deltas = IndexMap::new();
    for spec in &specs {
        let name = spec.name();
        let voted = ensemble_predictions(&set_refs, spec)?;
        let summary = evaluate_predictions(&manifest, &voted, schema, fatal)?;
        let delta = delta_vs_baseline(&summary, &baseline)?;
        voted
            .write_jsonl(&dir.join(format!("{name}.jsonl")))
            .map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
        let doc = EnsembleDoc {
            name: &name,
            members: &spec.members,
            summary: &summary,
            delta: &delta,
        };
        write_file(&dir.join(format!("{name}.json")), pretty(&doc))?;
        println!("{name}: macro F1 {:.4} ({:+.4} vs {baseline_id})", summary.macro_avg.f1, delta.macro_avg.f1);
        summaries.insert(name.clone(), summary);
        deltas.insert(name, delta);
    }
    write_file(&dir.join("summary.csv"), summary_table_csv(&summaries))?;
    write_file(&dir.join("deltas.csv"), delta_table_csv(&deltas))?;
    let index = json!({
        "baseline": baseline_id,
        "priority": priority,
        "tie_break": TIE_RULE,
        "vote_space": VOTE_SPACE,
        "min_size": args.min_size,
        "fatal_policy": fatal,
        "ensembles": summaries.keys().collect::<Vec<_>>(),
    });
    write_file(&dir.join("index.json"), pretty(&index))?;

    let mut entry = obj(index);
    entry.insert("manifest".into(), json!(args.manifest));
    entry.insert("predictions".into(), json!(args.predictions));
    record_run_meta(&args.out, "ensemble", started, clock, entry)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

#[derive(serde::Deserialize)]
struct EnsembleIndex {
    ensembles: Vec<String>,
}

#[derive(serde::Deserialize)]
struct EnsembleFile {
    delta: DeltaReport,
}

fn cmd_report(args: ReportArgs, clock: &Clock) -> Result<(), CliError> {
    let started = clock.now();
    let metrics = args
        .metric
        .iter()
        .map(|m| m.parse::<Metric>().map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let formats: Vec<Format> = args.formats.iter().copied().map(Format::from).collect();
    let metrics_dir = args.out.join("metrics");
    let order: IndexMap<String, Value> = read_json(&metrics_dir.join("summary.json"))?;
    let summaries = order
        .keys()
        .map(|id| Ok((id.clone(), read_json::<RunSummary>(&metrics_dir.join(format!("{id}.json")))?)))
        .collect::<Result<IndexMap<_, _>, CliError>>()?;

    let charts = args.out.join("charts");
    let mut written = Vec::new();
    for &m in &metrics {
        written.extend(emit(&radar_chart_data(&summaries, m)?, &charts, &format!("radar_{m}"), &formats)?);
    }
    for (averaging, name) in [(Averaging::Macro, "summary_macro"), (Averaging::SupportWeighted, "summary_support_weighted")] {
        written.extend(emit(&summary_chart_data(&summaries, averaging)?, &charts, name, &formats)?);
    }

    let ens_dir = args.out.join("ensembles");
    let index_path = ens_dir.join("index.json");
    if index_path.exists() {
        let index: EnsembleIndex = read_json(&index_path)?;
        let deltas = index
            .ensembles
            .iter()
            .map(|name| Ok((name.clone(), read_json::<EnsembleFile>(&ens_dir.join(format!("{name}.json")))?.delta)))
            .collect::<Result<IndexMap<_, _>, CliError>>()?;
        if !deltas.is_empty() {
            for &m in &metrics {
                written.extend(emit(&delta_chart_data(&deltas, m)?, &charts, &format!("delta_{m}"), &formats)?);
            }
        }
    }
    for p in &written {
        println!("{}", p.display());
    }
    let entry = json!({
        "metrics": metrics,
        "formats": formats,
        "providers": summaries.keys().collect::<Vec<_>>(),
        "charts": written.len(),
    });
    record_run_meta(&args.out, "report", started, clock, obj(entry))
}

fn cmd_dataset_stats(manifest: &Path, as_json: bool, schema: &AttributeSchema) -> Result<(), CliError> {
    let m = load_manifest(manifest, schema)?;
    let stats = dataset_stats(&m, schema);
    if as_json {
        print!("{}", pretty(&stats));
        return Ok(());
    }
    println!("frames: {} ({} retained, {} excluded)", stats.frames, stats.exclusions.retained, stats.exclusions.excluded());
    for (reason, n) in &stats.exclusions.by_reason {
        println!("  excluded {}: {n}", serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    }
    if let Some(note) = &stats.source_note {
        println!("source: {note}");
    }
    for (key, support) in &stats.attributes {
        let raw: Vec<String> = support.raw.iter().map(|(v, n)| format!("{v}:{n}")).collect();
        let scored: Vec<String> = support.scored.iter().map(|(v, n)| format!("{v}:{n}")).collect();
        println!("{key}\n  raw    {}\n  scored {}", raw.join(" "), scored.join(" "));
    }
    Ok(())
}
