//! `selbench`: generate benchmarks, evaluate selection tools, serve the
//! baselines over the wire, and render reports.

use std::collections::BTreeMap;
use std::fmt;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use selbench_core::baselines::{BaselineKind, BaselineProvider, RandomSelectorConfig};
use selbench_core::dataset::{
    self, DEFAULT_FAIL_THRESHOLD, GeneratorConfig, JsonSuiteReader, SplitSpec, SuiteReader,
};
use selbench_core::evaluator::{
    EvaluationOptions, RunConfig, SuiteRef, Timeouts, ToolConfig, ToolSource, ToolSpec, run_evaluation,
};
use selbench_core::geometry::ProfileMode;
use selbench_core::model::TestSuite;
use selbench_core::protocol::{DecisionMode, ToolProvider};
use selbench_core::report;
use selbench_core::validate::validate_suite;
use selbench_rpc::client::RemoteProvider;
use tracing::info;

/// Evaluation harness for regression test selection tools on simulated
/// self-driving car test suites.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 a tool failed on
/// every suite (partial results are still written).
#[derive(Debug, Parser)]
#[command(name = "selbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic benchmark: one JSON file per suite plus manifest.json.
    Generate(GenerateArgs),
    /// Evaluate tools on suites, persist the run and print the aggregate table.
    Evaluate(EvaluateArgs),
    /// Serve a baseline selector over gRPC until interrupted.
    ServeBaseline(ServeArgs),
    /// Render the tables of a persisted run.
    Report(ReportArgs),
    /// Check suite files against the schema and the structural rules.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of suites.
    #[arg(long, default_value_t = 36)]
    suites: usize,
    /// Test cases per suite.
    #[arg(long, default_value_t = 950)]
    cases: usize,
    /// Master seed; suite i uses stream i of this seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Max |curvature| (1/m) above which a road is labeled FAIL.
    #[arg(long, default_value_t = DEFAULT_FAIL_THRESHOLD)]
    fail_threshold: f64,
    /// Probability of flipping a label.
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    /// Road width in meters, used by the self-intersection check.
    #[arg(long, default_value_t = 8.0)]
    road_width: f64,
    /// Output directory.
    #[arg(short, long, default_value = "bench")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// Curvature on the stored road points.
    Raw,
    /// Curvature after resampling the road at --resample-step meters.
    Resampled,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Suite files or benchmark directories (manifest order, else file name order).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Tool to evaluate, repeatable: a baseline (random, select-all, threshold)
    /// or NAME=HOST:PORT for a running tool server.
    #[arg(short, long = "tool", env = "SELBENCH_TOOLS", value_delimiter = ',', default_value = "random")]
    tools: Vec<String>,
    /// Accept replies that list only the selected ids for the named tool.
    #[arg(long = "lenient", value_name = "NAME")]
    lenient: Vec<String>,
    /// Start a tool server before evaluating the named tool: NAME=COMMAND
    /// (whitespace separated arguments). The process is killed afterwards.
    #[arg(long = "launch", value_name = "NAME=COMMAND")]
    launch: Vec<String>,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Selection probability of the random baseline.
    #[arg(long, default_value_t = 0.5)]
    p_select: f64,
    /// Fraction of each suite used for initialization (floor rule).
    #[arg(long, default_value_t = 0.8)]
    init_fraction: f64,
    /// Shuffle each suite with this seed before splitting (default: stored order).
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Budget for connecting and the name handshake, seconds.
    #[arg(long, env = "SELBENCH_CONNECT_TIMEOUT", default_value_t = 10.0)]
    connect_timeout: f64,
    /// Budget for the initialization phase, seconds.
    #[arg(long, env = "SELBENCH_INIT_TIMEOUT", default_value_t = 600.0)]
    init_timeout: f64,
    /// Budget for the selection phase, seconds.
    #[arg(long, env = "SELBENCH_SELECT_TIMEOUT", default_value_t = 300.0)]
    select_timeout: f64,
    /// Curvature profile used by the diversity metric.
    #[arg(long, value_enum, default_value_t = Profile::Raw)]
    profile: Profile,
    /// Resampling step in meters for --profile resampled.
    #[arg(long, default_value_t = 1.0)]
    resample_step: f64,
    /// Evaluate tools concurrently. Timings then include cross-tool contention.
    #[arg(long)]
    parallel_tools: bool,
    /// Keep per-session transcripts in run.json.
    #[arg(long)]
    keep_transcripts: bool,
    /// Output directory for run.json, config.json and the tables.
    #[arg(short, long, env = "SELBENCH_OUT", default_value = "selbench-run")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Baseline to serve: random, select-all or threshold.
    name: String,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Selection probability of the random baseline.
    #[arg(long, default_value_t = 0.5)]
    p_select: f64,
    /// Port to listen on; 0 picks a free port.
    #[arg(long, default_value_t = 4545)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    /// Aggregate table as aligned text.
    Text,
    /// Aggregate table as CSV.
    Csv,
    /// One CSV row per (tool, suite).
    Detail,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// run.json, or a run directory containing it.
    run: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Suite files or benchmark directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    ToolFailure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::ToolFailure(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::ToolFailure(m) => f.write_str(m),
        }
    }
}

fn data<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ServeBaseline(a) => serve_baseline(a),
        Command::Report(a) => report_cmd(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let config = GeneratorConfig {
        n_suites: a.suites,
        cases_per_suite: a.cases,
        seed: a.seed,
        road_width: a.road_width,
        fail_curvature_threshold: a.fail_threshold,
        label_noise: a.label_noise,
        ..GeneratorConfig::default()
    };
    let manifest = dataset::write_benchmark(&config, &a.out).map_err(data)?;
    let total: usize = manifest.suites.iter().map(|s| s.cases).sum();
    let faults: f64 = manifest.suites.iter().map(|s| s.failure_rate * s.cases as f64).sum();
    println!(
        "wrote {} suites ({} cases, pooled failure rate {:.4}) to {}",
        manifest.suites.len(),
        total,
        faults / total as f64,
        a.out.display()
    );
    Ok(())
}

/// Expands directories into their suite files.
fn suite_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(dataset::benchmark_files(p).map_err(data)?);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Data("no suite files found".into()));
    }
    Ok(out)
}

fn parse_secs(flag: &str, v: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(v).map_err(|_| CliError::Usage(format!("--{flag} must be a non-negative number")))
}

/// `NAME=VALUE` pairs keyed by NAME.
fn keyed(flag: &str, items: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| CliError::Usage(format!("--{flag} expects NAME=VALUE, got {s:?}")))
        })
        .collect()
}

fn build_tools(a: &EvaluateArgs, timeouts: Timeouts) -> Result<Vec<ToolSpec>, CliError> {
    let random = RandomSelectorConfig::new(a.p_select, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut launch = keyed("launch", &a.launch)?;
    let mut tools = Vec::new();
    for spec in a.tools.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let (config, provider): (ToolConfig, Arc<dyn ToolProvider>) = match spec.split_once('=') {
            Some((name, address)) => {
                let (name, address) = (name.trim(), address.trim());
                if name.is_empty() || address.is_empty() {
                    return Err(CliError::Usage(format!("tool {spec:?} must look like NAME=HOST:PORT")));
                }
                let config = ToolConfig {
                    tool_name: name.to_owned(),
                    source: ToolSource::Endpoint { address: address.to_owned() },
                    decision_mode: DecisionMode::Strict,
                    launch: None,
                };
                (config, Arc::new(RemoteProvider::new(address, timeouts)))
            }
            None => {
                let kind: BaselineKind = spec.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
                let config = ToolConfig {
                    tool_name: kind.tool_name().to_owned(),
                    source: ToolSource::Baseline { baseline: kind.id().to_owned() },
                    decision_mode: DecisionMode::Strict,
                    launch: None,
                };
                (config, Arc::new(BaselineProvider::new(kind, random)))
            }
        };
        let mut config = config;
        if a.lenient.iter().any(|n| *n == config.tool_name) {
            config.decision_mode = DecisionMode::Lenient;
        }
        if let Some(cmd) = launch.remove(&config.tool_name) {
            config.launch = Some(cmd.split_whitespace().map(str::to_owned).collect());
        }
        tools.push(ToolSpec::new(config, provider));
    }
    if tools.is_empty() {
        return Err(CliError::Usage("no tool given".into()));
    }
    let names: Vec<&str> = tools.iter().map(|t| t.name()).collect();
    for n in a.lenient.iter().chain(launch.keys()) {
        if !names.contains(&n.as_str()) {
            return Err(CliError::Usage(format!("{n:?} does not name an evaluated tool ({})", names.join(", "))));
        }
    }
    Ok(tools)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let timeouts = Timeouts {
        connect: parse_secs("connect-timeout", a.connect_timeout)?,
        initialize: parse_secs("init-timeout", a.init_timeout)?,
        select: parse_secs("select-timeout", a.select_timeout)?,
    };
    if !(a.init_fraction > 0.0 && a.init_fraction < 1.0) {
        return Err(CliError::Usage(format!("--init-fraction {} must lie strictly between 0 and 1", a.init_fraction)));
    }
    let profile_mode = match a.profile {
        Profile::Raw => ProfileMode::Raw,
        Profile::Resampled if a.resample_step > 0.0 && a.resample_step.is_finite() => {
            ProfileMode::Resampled { step_m: a.resample_step }
        }
        Profile::Resampled => return Err(CliError::Usage("--resample-step must be positive".into())),
    };
    let tools = build_tools(&a, timeouts)?;

    let paths = suite_paths(&a.inputs)?;
    let suites: Vec<TestSuite> =
        paths.iter().map(|p| JsonSuiteReader.read_suite(p)).collect::<Result<_, _>>().map_err(data)?;
    let split = SplitSpec { init_fraction: a.init_fraction, shuffle_seed: a.shuffle_seed };
    for s in &suites {
        dataset::split_suite(s, &split).map_err(|e| CliError::Data(format!("suite {}: {e}", s.suite_id)))?;
    }

    let mut seeds = BTreeMap::new();
    if tools.iter().any(|t| t.config.source == ToolSource::Baseline { baseline: BaselineKind::Random.id().into() }) {
        seeds.insert("random".to_owned(), a.seed);
    }
    if let Some(s) = a.shuffle_seed {
        seeds.insert("split".to_owned(), s);
    }
    let config = RunConfig {
        suites: suites
            .iter()
            .zip(&paths)
            .map(|(s, p)| SuiteRef { suite_id: s.suite_id.clone(), path: Some(p.display().to_string()), cases: s.len() })
            .collect(),
        tools: tools.iter().map(|t| t.config.clone()).collect(),
        options: EvaluationOptions {
            split,
            timeouts,
            profile_mode,
            keep_transcripts: a.keep_transcripts,
            parallel_tools: a.parallel_tools,
        },
        seeds,
    };
    info!(suites = suites.len(), tools = tools.len(), "starting evaluation");
    let run = run_evaluation(&tools, &suites, config).map_err(|e| CliError::Usage(e.to_string()))?;
    let written = report::persist_run(&run, &a.out).map_err(data)?;
    print!("{}", report::render_aggregate_text(&run));
    eprintln!("run {} written to {} ({} files)", run.run_id, a.out.display(), written.len());

    let failed = run.fully_failed_tools();
    if !failed.is_empty() {
        return Err(CliError::ToolFailure(format!("no successful suite for: {}", failed.join(", "))));
    }
    Ok(())
}

fn serve_baseline(a: ServeArgs) -> Result<(), CliError> {
    let kind: BaselineKind = a.name.parse().map_err(data)?;
    let random = RandomSelectorConfig::new(a.p_select, a.seed).map_err(data)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid host/port {}:{}: {e}", a.host, a.port)))?;
    let listener = TcpListener::bind(addr).map_err(|e| CliError::Data(format!("cannot listen on {addr}: {e}")))?;
    let bound = listener.local_addr().map_err(data)?;
    println!("serving {} on {bound}", kind.tool_name());
    use std::io::Write as _;
    let _ = std::io::stdout().flush();
    selbench_rpc::server::serve_until_interrupted(BaselineProvider::new(kind, random).bare_selector(), listener)
        .map_err(|e| CliError::Data(format!("server error: {e}")))
}

fn run_file(path: &Path) -> PathBuf {
    if path.is_dir() { path.join(report::RUN_FILE) } else { path.to_owned() }
}

fn report_cmd(a: ReportArgs) -> Result<(), CliError> {
    let run = report::load_run(run_file(&a.run)).map_err(data)?;
    let text = match a.format {
        ReportFormat::Text => report::render_aggregate_text(&run),
        ReportFormat::Csv => report::render_aggregate_csv(&run).map_err(data)?,
        ReportFormat::Detail => report::render_detail_csv(&run.rows).map_err(data)?,
    };
    print!("{text}");
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let paths = suite_paths(&a.inputs)?;
    let mut bad = 0usize;
    for p in &paths {
        // Read without the reader's own validation so that every violation
        // gets listed, not only the first failing file.
        let parsed = std::fs::read_to_string(p)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<TestSuite>(&t).map_err(|e| e.to_string()));
        match parsed {
            Err(e) => {
                bad += 1;
                println!("{}: INVALID: {e}", p.display());
            }
            Ok(suite) => {
                let rep = validate_suite(&suite);
                if rep.is_valid() {
                    println!("{}: ok ({} cases, {} faults)", p.display(), suite.len(), suite.fault_count());
                } else {
                    bad += 1;
                    println!("{}: INVALID: {rep}", p.display());
                }
            }
        }
    }
    if bad > 0 {
        return Err(CliError::Data(format!("{bad} of {} suite file(s) invalid", paths.len())));
    }
    Ok(())
}
