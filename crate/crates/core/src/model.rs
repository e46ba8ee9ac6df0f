//! Shared domain types: test cases, oracle labels, suites, selection
//! decisions and metric records.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A point on the planar map, in meters.
///
/// Stored as `[x, y]`. A third (elevation) coordinate is accepted on input
/// and dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        match v[..] {
            [x, y] | [x, y, _] => Ok(Self { x, y }),
            _ => Err(format!("road point must have 2 or 3 coordinates, got {}", v.len())),
        }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// One road the driving agent is tested on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub test_id: String,
    pub road_points: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn is_fault(self) -> bool {
        matches!(self, Outcome::Fail)
    }
}

/// Ground-truth label of an executed test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub test_id: String,
    pub outcome: Outcome,
    pub sim_time_sec: f64,
}

/// A test case together with its oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCase {
    pub case: TestCase,
    pub oracle: OracleRecord,
}

impl LabeledCase {
    pub fn new(test_id: impl Into<String>, road_points: Vec<Point>, outcome: Outcome, sim_time_sec: f64) -> Self {
        let test_id = test_id.into();
        Self {
            case: TestCase { test_id: test_id.clone(), road_points },
            oracle: OracleRecord { test_id, outcome, sim_time_sec },
        }
    }

    pub fn test_id(&self) -> &str {
        &self.case.test_id
    }
}

/// Flat on-disk representation of a labeled case.
#[derive(Serialize, Deserialize)]
struct CaseRecord {
    test_id: String,
    road_points: Vec<Point>,
    outcome: Outcome,
    sim_time_sec: f64,
}

impl Serialize for LabeledCase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CaseRecord {
            test_id: self.case.test_id.clone(),
            road_points: self.case.road_points.clone(),
            outcome: self.oracle.outcome,
            sim_time_sec: self.oracle.sim_time_sec,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabeledCase {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = CaseRecord::deserialize(deserializer)?;
        Ok(LabeledCase::new(r.test_id, r.road_points, r.outcome, r.sim_time_sec))
    }
}

/// An ordered collection of labeled cases; one benchmark sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub suite_id: String,
    pub cases: Vec<LabeledCase>,
}

/// Smallest suite that can be split into non-empty init and eval parts.
pub const MIN_SUITE_SIZE: usize = 5;

impl TestSuite {
    pub fn new(suite_id: impl Into<String>, cases: Vec<LabeledCase>) -> Self {
        Self { suite_id: suite_id.into(), cases }
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(|c| c.test_id())
    }

    /// Index from test id to case. Assumes unique ids.
    pub fn by_id(&self) -> HashMap<&str, &LabeledCase> {
        self.cases.iter().map(|c| (c.test_id(), c)).collect()
    }

    pub fn fault_count(&self) -> usize {
        self.cases.iter().filter(|c| c.oracle.outcome.is_fault()).count()
    }

    pub fn total_sim_time(&self) -> f64 {
        self.cases.iter().map(|c| c.oracle.sim_time_sec).sum()
    }
}

/// A tool's verdict on one evaluation case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub test_id: String,
    pub selected: bool,
}

impl SelectionDecision {
    pub fn new(test_id: impl Into<String>, selected: bool) -> Self {
        Self { test_id: test_id.into(), selected }
    }
}

/// The six per-suite metric values for one tool on one suite.
///
/// `None` encodes MISSING: the ratio or diversity is undefined for the
/// selection (empty selection, or no selected faults).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub suite_id: String,
    pub tool_name: String,
    pub selection_cnt: u64,
    pub time_to_initialize: f64,
    pub time_to_select_tests: f64,
    pub time_to_fault_ratio: Option<f64>,
    pub fault_to_selection_ratio: Option<f64>,
    pub diversity: Option<f64>,
    /// Spread of per-case mean |curvature| across the selection. Detail
    /// report only.
    pub diversity_std: Option<f64>,
}

/// The six reported metric columns, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SelectionCnt,
    TimeToInitialize,
    TimeToSelectTests,
    TimeToFaultRatio,
    FaultToSelectionRatio,
    Diversity,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::SelectionCnt,
        Metric::TimeToInitialize,
        Metric::TimeToSelectTests,
        Metric::TimeToFaultRatio,
        Metric::FaultToSelectionRatio,
        Metric::Diversity,
    ];

    /// Column header used in summary tables. The two ratio columns keep the
    /// historical competition spelling ("ration") so tables line up with
    /// published results.
    pub fn column(self) -> &'static str {
        match self {
            Metric::SelectionCnt => "selection_cnt",
            Metric::TimeToInitialize => "time_to_initialize",
            Metric::TimeToSelectTests => "time_to_select_tests",
            Metric::TimeToFaultRatio => "time_to_fault_ration",
            Metric::FaultToSelectionRatio => "fault_to_selection_ration",
            Metric::Diversity => "diversity",
        }
    }

    /// Wall-clock derived metrics; excluded from determinism comparisons.
    pub fn is_timing(self) -> bool {
        matches!(self, Metric::TimeToInitialize | Metric::TimeToSelectTests)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl SuiteMetrics {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::SelectionCnt => Some(self.selection_cnt as f64),
            Metric::TimeToInitialize => Some(self.time_to_initialize),
            Metric::TimeToSelectTests => Some(self.time_to_select_tests),
            Metric::TimeToFaultRatio => self.time_to_fault_ratio,
            Metric::FaultToSelectionRatio => self.fault_to_selection_ratio,
            Metric::Diversity => self.diversity,
        }
    }
}

/// max/mean/std/min of one metric over the non-MISSING per-suite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub max: Option<f64>,
    pub mean: Option<f64>,
    /// Sample standard deviation; MISSING with fewer than two values.
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub count: usize,
    pub missing: usize,
}

/// Per-tool summary over all successfully evaluated suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub tool_name: String,
    pub n_suites: usize,
    pub n_failed: usize,
    pub metrics: BTreeMap<Metric, MetricStats>,
}

impl AggregateStats {
    pub fn get(&self, metric: Metric) -> &MetricStats {
        &self.metrics[&metric]
    }
}
