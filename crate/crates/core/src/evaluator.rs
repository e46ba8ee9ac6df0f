//! Orchestration of full evaluations.
//!
//! For every (tool, suite) pair the evaluator splits the suite, opens a fresh
//! session, streams the labeled init split, streams the unlabeled eval split,
//! checks the replies and scores them. Each session runs on its own worker
//! thread; the evaluator waits for every phase with a budget and records a
//! failure row instead of aborting when a tool misbehaves.

use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::dataset::{SplitSpec, split_suite};
use crate::geometry::ProfileMode;
use crate::metrics::{PhaseTimings, compute_suite_metrics};
use crate::model::{AggregateStats, Metric, MetricStats, SelectionDecision, SuiteMetrics, TestSuite};
use crate::protocol::{DecisionMode, InitializationItem, Phase, Selector, ToolError, ToolProvider, check_decisions};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no successful suite evaluation for tool {0:?}")]
    NoData(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

/// Per-phase budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timeouts {
    /// Session setup plus name handshake.
    #[serde(with = "secs")]
    pub connect: Duration,
    #[serde(with = "secs")]
    pub initialize: Duration,
    #[serde(with = "secs")]
    pub select: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            connect: Duration::from_secs(10),
            initialize: Duration::from_secs(600),
            select: Duration::from_secs(300),
        }
    }
}

impl Timeouts {
    pub fn budget(&self, phase: Phase) -> Duration {
        match phase {
            Phase::Handshake => self.connect,
            Phase::Initialize => self.initialize,
            Phase::Select => self.select,
        }
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

/// Serializable description of where a tool comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolSource {
    Baseline { baseline: String },
    Endpoint { address: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    pub tool_name: String,
    pub source: ToolSource,
    #[serde(default)]
    pub decision_mode: DecisionMode,
    /// Command that starts the tool server; spawned before the first suite
    /// and killed after the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launch: Option<Vec<String>>,
}

/// A tool ready to be evaluated.
#[derive(Clone)]
pub struct ToolSpec {
    pub config: ToolConfig,
    pub provider: Arc<dyn ToolProvider>,
}

impl ToolSpec {
    pub fn new(config: ToolConfig, provider: Arc<dyn ToolProvider>) -> Self {
        Self { config, provider }
    }

    pub fn name(&self) -> &str {
        &self.config.tool_name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub split: SplitSpec,
    pub timeouts: Timeouts,
    pub profile_mode: ProfileMode,
    /// Keep the per-session transcripts in the run document.
    pub keep_transcripts: bool,
    /// Evaluate tools concurrently (suites of one tool stay sequential).
    /// Timings then include contention between tools.
    pub parallel_tools: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            timeouts: Timeouts::default(),
            profile_mode: ProfileMode::Raw,
            keep_transcripts: false,
            parallel_tools: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Unreachable,
    Timeout,
    ToolError,
    StreamBroken,
    ProtocolViolation,
    InvalidSuite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub kind: FailureKind,
    pub phase: Option<Phase>,
    pub detail: String,
}

impl FailureRecord {
    fn from_tool(phase: Phase, err: &ToolError) -> Self {
        let kind = match err {
            ToolError::Unreachable(_) => FailureKind::Unreachable,
            ToolError::Timeout { .. } => FailureKind::Timeout,
            ToolError::Tool(_) => FailureKind::ToolError,
            ToolError::StreamBroken(_) => FailureKind::StreamBroken,
            ToolError::ProtocolViolation(_) => FailureKind::ProtocolViolation,
        };
        Self { kind, phase: Some(phase), detail: err.to_string() }
    }

    /// Compact reason for tables, e.g. `timeout(initialize)`.
    pub fn reason(&self) -> String {
        let kind = serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        match self.phase {
            Some(p) => format!("{kind}({p}): {}", self.detail),
            None => format!("{kind}: {}", self.detail),
        }
    }
}

/// What crossed the tool boundary in one session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub reported_name: Option<String>,
    pub init_ids: Vec<String>,
    pub eval_ids: Vec<String>,
    /// Replies exactly as received, before any checking.
    pub replies: Vec<SelectionDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub tool_name: String,
    pub suite_id: String,
    pub metrics: Option<SuiteMetrics>,
    pub failure: Option<FailureRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<SessionTranscript>,
}

impl RowResult {
    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    fn failed(tool: &str, suite: &str, failure: FailureRecord, transcript: SessionTranscript) -> Self {
        Self {
            tool_name: tool.to_owned(),
            suite_id: suite.to_owned(),
            metrics: None,
            failure: Some(failure),
            transcript: Some(transcript),
        }
    }
}

enum PhaseEvent {
    Named(Result<String, ToolError>),
    Initialized(Result<crate::protocol::InitializationAck, ToolError>, Duration),
    Selected(Result<Vec<SelectionDecision>, ToolError>, Duration),
}

/// Runs one session of `tool` on `suite` and scores it. Tool failures come
/// back as a failed row.
pub fn evaluate_tool_on_suite(tool: &ToolSpec, suite: &TestSuite, options: &EvaluationOptions) -> RowResult {
    let name = tool.name();
    let mut transcript = SessionTranscript::default();
    let (init, eval) = match split_suite(suite, &options.split) {
        Ok(parts) => parts,
        Err(e) => {
            let failure = FailureRecord { kind: FailureKind::InvalidSuite, phase: None, detail: e.to_string() };
            return RowResult::failed(name, &suite.suite_id, failure, transcript);
        }
    };
    transcript.init_ids = init.ids().map(str::to_owned).collect();
    transcript.eval_ids = eval.ids().map(str::to_owned).collect();

    let init = Arc::new(init);
    let eval = Arc::new(eval);
    let (tx, rx) = mpsc::channel();
    {
        let provider = Arc::clone(&tool.provider);
        let (init, eval) = (Arc::clone(&init), Arc::clone(&eval));
        thread::Builder::new()
            .name(format!("session-{name}-{}", suite.suite_id))
            .spawn(move || run_session(provider.as_ref(), &init, &eval, &tx))
            .expect("spawn session thread");
    }

    let budgets = options.timeouts;
    let wait = |phase: Phase| -> Result<PhaseEvent, ToolError> {
        let budget = budgets.budget(phase);
        rx.recv_timeout(budget).map_err(|e| match e {
            RecvTimeoutError::Timeout => ToolError::Timeout { phase, budget },
            RecvTimeoutError::Disconnected => ToolError::StreamBroken(format!("tool session terminated during {phase}")),
        })
    };
    let fail = |phase: Phase, err: ToolError, transcript: SessionTranscript| {
        warn!(tool = name, suite = %suite.suite_id, %phase, error = %err, "session failed");
        RowResult::failed(name, &suite.suite_id, FailureRecord::from_tool(phase, &err), transcript)
    };

    match wait(Phase::Handshake) {
        Ok(PhaseEvent::Named(Ok(reported))) => transcript.reported_name = Some(reported),
        Ok(PhaseEvent::Named(Err(e))) | Err(e) => return fail(Phase::Handshake, e, transcript),
        Ok(_) => unreachable!("phases arrive in order"),
    }
    let time_to_initialize = match wait(Phase::Initialize) {
        Ok(PhaseEvent::Initialized(Ok(ack), dt)) if ack.done => dt,
        Ok(PhaseEvent::Initialized(Ok(ack), _)) => {
            let detail = ack.detail.unwrap_or_else(|| "initialization not acknowledged".into());
            return fail(Phase::Initialize, ToolError::Tool(detail), transcript);
        }
        Ok(PhaseEvent::Initialized(Err(e), _)) | Err(e) => return fail(Phase::Initialize, e, transcript),
        Ok(_) => unreachable!("phases arrive in order"),
    };
    let (replies, time_to_select) = match wait(Phase::Select) {
        Ok(PhaseEvent::Selected(Ok(replies), dt)) => (replies, dt),
        Ok(PhaseEvent::Selected(Err(e), _)) | Err(e) => return fail(Phase::Select, e, transcript),
        Ok(_) => unreachable!("phases arrive in order"),
    };
    transcript.replies = replies.clone();
    let decisions = match check_decisions(eval.ids(), replies, tool.config.decision_mode) {
        Ok(d) => d,
        Err(e) => return fail(Phase::Select, e, transcript),
    };
    let timings = PhaseTimings {
        time_to_initialize: time_to_initialize.as_secs_f64(),
        time_to_select_tests: time_to_select.as_secs_f64(),
    };
    let metrics = compute_suite_metrics(name, &decisions, &eval, timings, options.profile_mode);
    RowResult {
        tool_name: name.to_owned(),
        suite_id: suite.suite_id.clone(),
        metrics: Some(metrics),
        failure: None,
        transcript: Some(transcript),
    }
}

/// Session body; runs on the session's own thread so that phase timing is
/// not shared with harness work.
fn run_session(provider: &dyn ToolProvider, init: &TestSuite, eval: &TestSuite, tx: &mpsc::Sender<PhaseEvent>) {
    let mut session: Box<dyn Selector> = match provider.open_session() {
        Ok(s) => s,
        Err(e) => {
            let _ = tx.send(PhaseEvent::Named(Err(e)));
            return;
        }
    };
    let named = session.name().map(|id| id.name);
    let ok = named.is_ok();
    if tx.send(PhaseEvent::Named(named)).is_err() || !ok {
        return;
    }

    let mut items = init.cases.iter().map(InitializationItem::from);
    let start = Instant::now();
    let ack = session.initialize(&mut items);
    let elapsed = start.elapsed();
    let ok = matches!(&ack, Ok(a) if a.done);
    if tx.send(PhaseEvent::Initialized(ack, elapsed)).is_err() || !ok {
        return;
    }

    let mut cases = eval.cases.iter().map(|c| c.case.clone());
    let start = Instant::now();
    let replies = session.select(&mut cases);
    let elapsed = start.elapsed();
    let _ = tx.send(PhaseEvent::Selected(replies, elapsed));
}

/// Welford accumulator for one metric.
#[derive(Default)]
struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn finish(self, missing: usize) -> MetricStats {
        if self.n == 0 {
            return MetricStats { max: None, mean: None, std: None, min: None, count: 0, missing };
        }
        let std = (self.n > 1).then(|| (self.m2.max(0.0) / (self.n - 1) as f64).sqrt());
        MetricStats {
            max: Some(self.max),
            mean: Some(self.mean.clamp(self.min, self.max)),
            std,
            min: Some(self.min),
            count: self.n,
            missing,
        }
    }
}

/// max / mean / sample std / min of every metric over the successful rows
/// of one tool.
pub fn aggregate(tool_name: &str, rows: &[RowResult]) -> Result<AggregateStats, EvalError> {
    let ok: Vec<&SuiteMetrics> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    if ok.is_empty() {
        return Err(EvalError::NoData(tool_name.to_owned()));
    }
    let metrics = Metric::ALL
        .into_iter()
        .map(|metric| {
            let mut acc = Accumulator::default();
            let mut missing = 0;
            for row in &ok {
                match row.value(metric) {
                    Some(v) => acc.push(v),
                    None => missing += 1,
                }
            }
            (metric, acc.finish(missing))
        })
        .collect();
    Ok(AggregateStats {
        tool_name: tool_name.to_owned(),
        n_suites: ok.len(),
        n_failed: rows.len() - ok.len(),
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRef {
    pub suite_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub cases: usize,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub suites: Vec<SuiteRef>,
    pub tools: Vec<ToolConfig>,
    pub options: EvaluationOptions,
    /// Seeds used by in-process tools and the split, by name.
    pub seeds: std::collections::BTreeMap<String, u64>,
}

impl RunConfig {
    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSummary {
    pub tool_name: String,
    pub aggregate: Option<AggregateStats>,
}

/// Wall-clock facts about a run. Kept apart from the deterministic content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub started_at_unix: f64,
    pub wall_clock_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub run_id: String,
    pub harness_version: String,
    pub config: RunConfig,
    pub rows: Vec<RowResult>,
    pub summaries: Vec<ToolSummary>,
    pub timing: RunTiming,
}

impl EvaluationRun {
    pub fn rows_for<'a>(&'a self, tool: &'a str) -> impl Iterator<Item = &'a RowResult> + 'a {
        self.rows.iter().filter(move |r| r.tool_name == tool)
    }

    /// Tools for which every suite failed.
    pub fn fully_failed_tools(&self) -> Vec<&str> {
        self.summaries.iter().filter(|s| s.aggregate.is_none()).map(|s| s.tool_name.as_str()).collect()
    }

    pub fn n_suites(&self) -> usize {
        self.config.suites.len()
    }
}

/// A spawned tool server, killed on drop.
struct Launched(Child);

impl Drop for Launched {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn launch(tool: &ToolSpec, timeouts: &Timeouts) -> Result<Option<Launched>, ToolError> {
    let Some(cmd) = tool.config.launch.as_ref().filter(|c| !c.is_empty()) else {
        return Ok(None);
    };
    let child = Command::new(&cmd[0])
        .args(&cmd[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .map_err(|e| ToolError::Unreachable(format!("launch {:?}: {e}", cmd[0])))?;
    let guard = Launched(child);
    let deadline = Instant::now() + timeouts.connect;
    loop {
        let ready = tool.provider.open_session().and_then(|mut s| s.name());
        match ready {
            Ok(_) => return Ok(Some(guard)),
            Err(e) if Instant::now() >= deadline => {
                return Err(ToolError::Unreachable(format!("launched tool never became ready: {e}")));
            }
            Err(_) => thread::sleep(Duration::from_millis(100)),
        }
    }
}

fn evaluate_tool(tool: &ToolSpec, suites: &[TestSuite], options: &EvaluationOptions) -> Vec<RowResult> {
    let _server = match launch(tool, &options.timeouts) {
        Ok(s) => s,
        Err(e) => {
            let failure = FailureRecord::from_tool(Phase::Handshake, &e);
            return suites
                .iter()
                .map(|s| RowResult::failed(tool.name(), &s.suite_id, failure.clone(), SessionTranscript::default()))
                .collect();
        }
    };
    suites
        .iter()
        .map(|suite| {
            let mut row = evaluate_tool_on_suite(tool, suite, options);
            if !options.keep_transcripts {
                row.transcript = None;
            }
            info!(tool = tool.name(), suite = %suite.suite_id, failed = row.is_failed(), "suite evaluated");
            row
        })
        .collect()
}

/// Evaluates every tool on every suite and aggregates per tool. Rows are
/// ordered by tool (config order), then suite (input order).
pub fn run_evaluation(
    tools: &[ToolSpec],
    suites: &[TestSuite],
    config: RunConfig,
) -> Result<EvaluationRun, EvalError> {
    if tools.is_empty() || suites.is_empty() {
        return Err(EvalError::InvalidConfig("need at least one tool and one suite".into()));
    }
    let mut names = std::collections::HashSet::new();
    if let Some(dup) = tools.iter().find(|t| !names.insert(t.name())) {
        return Err(EvalError::InvalidConfig(format!("duplicate tool name {:?}", dup.name())));
    }
    let started = SystemTime::now();
    let clock = Instant::now();
    let options = &config.options;
    let per_tool: Vec<Vec<RowResult>> = if options.parallel_tools {
        thread::scope(|scope| {
            let handles: Vec<_> =
                tools.iter().map(|t| scope.spawn(move || evaluate_tool(t, suites, options))).collect();
            handles.into_iter().map(|h| h.join().expect("tool evaluation thread")).collect()
        })
    } else {
        tools.iter().map(|t| evaluate_tool(t, suites, options)).collect()
    };
    let summaries = tools
        .iter()
        .zip(&per_tool)
        .map(|(t, rows)| ToolSummary { tool_name: t.name().to_owned(), aggregate: aggregate(t.name(), rows).ok() })
        .collect();
    Ok(EvaluationRun {
        run_id: config.run_id(),
        harness_version: env!("CARGO_PKG_VERSION").to_owned(),
        rows: per_tool.into_iter().flatten().collect(),
        summaries,
        timing: RunTiming {
            started_at_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_clock_sec: clock.elapsed().as_secs_f64(),
        },
        config,
    })
}
