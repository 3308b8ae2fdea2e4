//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 incomplete campaign, 64 usage, 65 data error,
//! 70 internal error. Settings resolve as flag, then `--config` file, then
//! built-in default.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::client::campaign::{read_manifest, CampaignOptions};
use crate::client::{
    load_sample_records, run_campaign, ChatClient, ModelConfig, RecordFilter, SampleStore,
    DEFAULT_REPETITIONS, DEFAULT_TEMPERATURE,
};
use crate::curves::CurveParams;
use crate::dataset::{load_dataset, validate_dataset, QuestionSet};
use crate::parsing::{check_corpus, parse_corpus};
use crate::prompting::{build_prompt, load_exemplars, prompt_hash, PromptTemplate};
use crate::report::{curves_csv, stats_csv, write_report, ReportConfig, ReportMeta};
use crate::simulator::{serve_mock, MockOptions, ResponderScript, SimSeed};
use crate::stats::{summarize, ProbabilityBase, DEFAULT_BINS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INCOMPLETE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;
pub const EXIT_INTERNAL: u8 = 70;

/// Parser corpus shipped with the crate.
pub const BUILTIN_PARSER_CORPUS: &str = include_str!("../fixtures/parser_corpus.v1.jsonl");

#[derive(Debug, Parser)]
#[command(name = "mcq-entropy", version, about = "Answer-entropy harness for multiple-choice evaluation of chat models")]
pub struct Cli {
    /// JSON file whose keys mirror the long flag names.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run or resume a sampling campaign.
    Run(RunArgs),
    /// Build tables and figures from a completed store.
    Report(ReportArgs),
    /// Sample closed-form entropy/error-rate curves.
    Curves(CurvesArgs),
    /// Serve the scripted responder over HTTP.
    MockServe(MockServeArgs),
    /// Replay the parser corpus.
    ParseCheck(ParseCheckArgs),
    /// Load a dataset and print per-category counts.
    ValidateDataset(ValidateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    backoff_ms: Option<u64>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Runs always resume; the flag only makes that explicit.
    #[arg(long)]
    resume: bool,
    /// Serve this responder script in-process and sample from it.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    probability_base: Option<ProbabilityBase>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    repetitions: Option<u32>,
    /// Output directory (default: `<store>.report`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bins per axis.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    entropy_bins: Option<usize>,
    #[arg(long)]
    error_bins: Option<usize>,
    #[arg(long)]
    curve_points: Option<usize>,
    #[arg(long)]
    probability_base: Option<ProbabilityBase>,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long)]
    order: usize,
    /// Comma-separated incorrect masses; repeat for a family of curves.
    #[arg(long)]
    masses: Vec<String>,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MockServeArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "127.0.0.1:8089")]
    bind: String,
}

#[derive(Debug, Args)]
struct ParseCheckArgs {
    /// Corpus file (default: the shipped corpus).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
}

/// `--config` file contents; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub repetitions: Option<u32>,
    pub parallelism: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_ms: Option<u64>,
    pub backoff_ms: Option<u64>,
    pub api_key_env: Option<String>,
    pub store: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub seed: Option<u64>,
    pub probability_base: Option<ProbabilityBase>,
    pub out: Option<PathBuf>,
    pub bins: Option<usize>,
    pub entropy_bins: Option<usize>,
    pub error_bins: Option<usize>,
    pub curve_points: Option<usize>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl ToString) -> Self {
        Self { code: EXIT_DATA, message: message.to_string() }
    }

    fn internal(message: impl ToString) -> Self {
        Self { code: EXIT_INTERNAL, message: message.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Run(a) => cmd_run(a, &file),
        Command::Report(a) => cmd_report(a, &file),
        Command::Curves(a) => cmd_curves(a),
        Command::MockServe(a) => cmd_mock_serve(a, &file),
        Command::ParseCheck(a) => cmd_parse_check(a),
        Command::ValidateDataset(a) => cmd_validate(a, &file),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Failure::internal)
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::usage(format!("--{flag} is required")))
}

fn dataset(path: &Path) -> Result<QuestionSet, Failure> {
    load_dataset(path).map_err(Failure::data)
}

fn template(path: Option<&Path>) -> Result<PromptTemplate, Failure> {
    load_exemplars(path).map_err(Failure::data)
}

/// Settings of `run` after applying precedence.
#[derive(Debug, Clone, Serialize)]
struct RunSettings {
    dataset: PathBuf,
    exemplars: Option<PathBuf>,
    store: PathBuf,
    mock_script: Option<PathBuf>,
    seed: Option<u64>,
    repetitions: u32,
    probability_base: ProbabilityBase,
    model: ModelConfig,
}

fn resolve_run(a: &RunArgs, f: &FileConfig) -> Result<RunSettings, Failure> {
    let mock_script = a.mock_script.clone().or_else(|| f.mock_script.clone());
    let endpoint = a.endpoint.clone().or_else(|| f.endpoint.clone());
    let endpoint = match (&mock_script, endpoint) {
        // replaced by the in-process server's address
        (Some(_), e) => e.unwrap_or_default(),
        (None, e) => required(e, "endpoint")?,
    };
    let model_name = a.model.clone().or_else(|| f.model.clone());
    let model_name = match (&mock_script, model_name) {
        (Some(_), m) => m.unwrap_or_else(|| "mock".into()),
        (None, m) => required(m, "model")?,
    };
    let mut model = ModelConfig::new(endpoint, model_name);
    model.temperature = a.temperature.or(f.temperature).unwrap_or(DEFAULT_TEMPERATURE);
    if let Some(v) = a.parallelism.or(f.parallelism) {
        model.parallelism = v;
    }
    if let Some(v) = a.max_retries.or(f.max_retries) {
        model.max_retries = v;
    }
    if let Some(v) = a.timeout_ms.or(f.timeout_ms) {
        model.request_timeout = Duration::from_millis(v);
    }
    if let Some(v) = a.backoff_ms.or(f.backoff_ms) {
        model.initial_backoff = Duration::from_millis(v);
    }
    model.api_key_ref = a.api_key_env.clone().or_else(|| f.api_key_env.clone());
    model.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let repetitions = a.repetitions.or(f.repetitions).unwrap_or(DEFAULT_REPETITIONS);
    if repetitions == 0 {
        return Err(Failure::usage("--repetitions must be >= 1"));
    }
    Ok(RunSettings {
        dataset: required(a.dataset.clone().or_else(|| f.dataset.clone()), "dataset")?,
        exemplars: a.exemplars.clone().or_else(|| f.exemplars.clone()),
        store: required(a.store.clone().or_else(|| f.store.clone()), "store")?,
        seed: a.seed.or(f.seed).or(mock_script.as_ref().map(|_| 0)),
        mock_script,
        repetitions,
        probability_base: a.probability_base.or(f.probability_base).unwrap_or_default(),
        model,
    })
}

fn cmd_run(a: RunArgs, f: &FileConfig) -> CmdResult {
    let mut s = resolve_run(&a, f)?;
    let set = dataset(&s.dataset)?;
    let template = template(s.exemplars.as_deref())?;
    let store = SampleStore::new(&s.store);
    let script = match &s.mock_script {
        Some(p) => Some(ResponderScript::load(p).map_err(Failure::data)?),
        None => None,
    };
    if a.resume {
        eprintln!("resuming campaign in {}", store.path().display());
    }

    let rt = runtime()?;
    let outcome = rt.block_on(async {
        let _mock = match script {
            Some(script) => {
                let seed = SimSeed(s.seed.unwrap_or(0));
                let handle = serve_mock(script, seed, &set, "127.0.0.1:0", MockOptions::default())
                    .await
                    .map_err(Failure::internal)?;
                s.model.endpoint_url = handle.url();
                Some(handle)
            }
            None => None,
        };
        let client = ChatClient::new(s.model.clone()).map_err(|e| Failure::usage(e.to_string()))?;
        let options = CampaignOptions {
            seed: s.seed,
            ..CampaignOptions::default()
        };
        run_campaign(&set, &template, &s.model, s.repetitions, &store, &client, options)
            .await
            .map_err(|e| match e {
                crate::client::campaign::CampaignError::Store(e) => Failure::data(e),
                other => Failure::internal(other),
            })
    })?;

    let m = &outcome.manifest;
    println!(
        "{} new samples; {} of {} present",
        m.new_samples,
        m.total_samples,
        set.len() * s.repetitions as usize
    );
    if !m.complete {
        if let Some(reason) = &m.halted_by {
            eprintln!("campaign halted: {reason}");
        }
        println!("incomplete: {} missing pairs", m.missing.len());
        for pair in &m.missing {
            println!("missing {pair}");
        }
        return Ok(EXIT_INCOMPLETE);
    }
    let (stats, flagged) = summarize(&set, &outcome.records, s.probability_base);
    std::fs::write(store.stats_path(), stats_csv(&stats)).map_err(Failure::internal)?;
    if !flagged.is_empty() {
        eprintln!("{} question(s) without valid replies excluded", flagged.len());
    }
    println!("stats written to {}", store.stats_path().display());
    Ok(EXIT_OK)
}

fn cmd_report(a: ReportArgs, f: &FileConfig) -> CmdResult {
    let dataset_path = required(a.dataset.or_else(|| f.dataset.clone()), "dataset")?;
    let store_path = required(a.store.or_else(|| f.store.clone()), "store")?;
    let store = SampleStore::new(&store_path);
    let manifest = read_manifest(&store);
    let set = dataset(&dataset_path)?;
    let template = template(a.exemplars.or_else(|| f.exemplars.clone()).as_deref())?;

    let all = load_sample_records(&store, &RecordFilter::default()).map_err(Failure::data)?;
    let model = match a.model.or_else(|| f.model.clone()) {
        Some(m) => m,
        None => match &manifest {
            Some(m) => m.model.model_name.clone(),
            None => {
                let models = crate::client::store::models_in_store(&all);
                match models.len() {
                    0 => return Err(Failure::data(format!("store {} is empty", store_path.display()))),
                    1 => models.into_keys().next().expect("one model"),
                    _ => return Err(Failure::usage("store holds several models; pass --model")),
                }
            }
        },
    };
    let repetitions = a
        .repetitions
        .or(f.repetitions)
        .or(manifest.as_ref().map(|m| m.repetitions))
        .unwrap_or(DEFAULT_REPETITIONS);

    let records: Vec<_> = all.into_iter().filter(|r| r.model_name == model).collect();
    if records.is_empty() {
        return Err(Failure::data(format!("store has no samples for model {model}")));
    }

    let mut kept = Vec::new();
    let mut missing = Vec::new();
    for q in set.questions() {
        let hash = prompt_hash(&build_prompt(q, &template));
        let mut have = vec![false; repetitions as usize];
        for r in records.iter().filter(|r| r.question_id == q.id && r.prompt_hash == hash) {
            if let Some(slot) = have.get_mut(r.sample_index as usize) {
                *slot = true;
                kept.push(r.clone());
            }
        }
        missing.extend(have.iter().enumerate().filter(|(_, h)| !**h).map(|(i, _)| format!("{}#{i}", q.id)));
    }
    if !missing.is_empty() {
        println!("incomplete store: {} missing pairs", missing.len());
        for m in &missing {
            println!("missing {m}");
        }
        return Ok(EXIT_INCOMPLETE);
    }

    let bins = a.bins.or(f.bins);
    let cfg = ReportConfig {
        entropy_bins: a.entropy_bins.or(f.entropy_bins).or(bins).unwrap_or(DEFAULT_BINS),
        error_bins: a.error_bins.or(f.error_bins).or(bins).unwrap_or(DEFAULT_BINS),
        curve_points: a.curve_points.or(f.curve_points).unwrap_or(201),
    };
    if cfg.entropy_bins == 0 || cfg.error_bins == 0 || cfg.curve_points < 2 {
        return Err(Failure::usage("bins must be >= 1 and curve points >= 2"));
    }
    let base = a.probability_base.or(f.probability_base).unwrap_or_default();
    let (stats, flagged) = summarize(&set, &kept, base);

    let out = a
        .out
        .or_else(|| f.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.report", store_path.display())));
    let meta = ReportMeta {
        model: model.clone(),
        dataset_digest: set.source_digest().to_string(),
        repetitions,
        config: serde_json::json!({
            "dataset": dataset_path,
            "store": store_path,
            "entropy_bins": cfg.entropy_bins,
            "error_bins": cfg.error_bins,
            "curve_points": cfg.curve_points,
            "probability_base": base,
            "prompt_template_hash": template.hash(),
        }),
        latest_sample_at: kept.iter().map(|r| r.timestamp).max(),
    };
    let bundle = write_report(&stats, &flagged, &cfg, &meta, &out).map_err(Failure::internal)?;
    println!(
        "report for {model}: {} questions, {} excluded, written to {}",
        stats.len(),
        flagged.len(),
        out.display()
    );
    for fig in &bundle.rendered_figures {
        println!("figure {}", fig.display());
    }
    Ok(EXIT_OK)
}

fn cmd_curves(a: CurvesArgs) -> CmdResult {
    if a.grid < 2 {
        return Err(Failure::usage("--grid must be >= 2"));
    }
    let mass_sets: Vec<Vec<f64>> = if a.masses.is_empty() {
        vec![Vec::new()]
    } else {
        a.masses
            .iter()
            .map(|s| {
                s.split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| t.trim().parse::<f64>().map_err(|e| Failure::usage(format!("bad mass {t:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_, _>>()?
    };
    let families: Vec<CurveParams> = mass_sets
        .into_iter()
        .map(|m| CurveParams::new(a.order, m).map_err(|e| Failure::usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    let text = curves_csv(&families, a.grid);
    match a.out {
        Some(path) => std::fs::write(&path, text).map_err(Failure::internal)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn cmd_mock_serve(a: MockServeArgs, f: &FileConfig) -> CmdResult {
    let set = dataset(&required(a.dataset.or_else(|| f.dataset.clone()), "dataset")?)?;
    let script = ResponderScript::load(&a.script).map_err(Failure::data)?;
    let seed = SimSeed(a.seed.or(f.seed).unwrap_or(0));
    let rt = runtime()?;
    rt.block_on(async {
        let handle = serve_mock(script, seed, &set, &a.bind, MockOptions::default())
            .await
            .map_err(|e| Failure::usage(format!("cannot bind {}: {e}", a.bind)))?;
        println!("listening on {}", handle.url());
        handle.wait().await;
        Ok(EXIT_OK)
    })
}

fn cmd_parse_check(a: ParseCheckArgs) -> CmdResult {
    let text = match &a.corpus {
        Some(p) => std::fs::read_to_string(p).map_err(Failure::data)?,
        None => BUILTIN_PARSER_CORPUS.to_string(),
    };
    let cases = parse_corpus(&text).map_err(Failure::data)?;
    let mismatches = check_corpus(&cases);
    for m in &mismatches {
        println!(
            "FAIL {:?}: expected {:?}/{}, got {:?}/{}",
            m.case.raw, m.case.expected, m.case.reason, m.got.value, m.got.reason
        );
    }
    println!("{}/{} cases agree", cases.len() - mismatches.len(), cases.len());
    Ok(if mismatches.is_empty() { EXIT_OK } else { EXIT_DATA })
}

fn cmd_validate(a: ValidateArgs, f: &FileConfig) -> CmdResult {
    let set = dataset(&required(a.dataset.or_else(|| f.dataset.clone()), "dataset")?)?;
    let report = validate_dataset(&set);
    print!("{report}");
    println!("digest: {}", set.source_digest());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let args = RunArgs::parse_from_for_test(&["--dataset", "d.jsonl", "--store", "s.jsonl", "--repetitions", "5", "--endpoint", "http://x", "--model", "m"]);
        let file = FileConfig {
            repetitions: Some(9),
            temperature: Some(0.2),
            parallelism: Some(7),
            ..FileConfig::default()
        };
        let s = resolve_run(&args, &file).unwrap();
        assert_eq!(s.repetitions, 5);
        assert_eq!(s.model.temperature, 0.2);
        assert_eq!(s.model.parallelism, 7);
        let s = resolve_run(&args, &FileConfig::default()).unwrap();
        assert_eq!(s.model.temperature, 0.7);
    }

    #[test]
    fn config_keys_mirror_flags() {
        let cfg: FileConfig = serde_json::from_str(r#"{"max-retries": 1, "probability-base": "total"}"#).unwrap();
        assert_eq!(cfg.max_retries, Some(1));
        assert_eq!(cfg.probability_base, Some(ProbabilityBase::Total));
        assert!(serde_json::from_str::<FileConfig>(r#"{"nope": 1}"#).is_err());
    }

    impl RunArgs {
        fn parse_from_for_test(args: &[&str]) -> Self {
            #[derive(Parser)]
            struct W {
                #[command(flatten)]
                a: RunArgs,
            }
            W::parse_from(std::iter::once("x").chain(args.iter().copied())).a
        }
    }
}
