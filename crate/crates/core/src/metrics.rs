//! Per-suite selection metrics.
//!
//! Every function takes the decisions for the evaluation split and the split
//! itself. Sums run over the split in stored order, so results do not depend
//! on the order in which a tool replied.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geometry::ProfileMode;
use crate::model::{LabeledCase, SelectionDecision, SuiteMetrics, TestSuite};

/// Wall-clock durations of the two streamed phases, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub time_to_initialize: f64,
    pub time_to_select_tests: f64,
}

fn selected<'a>(decisions: &'a [SelectionDecision], eval: &'a TestSuite) -> impl Iterator<Item = &'a LabeledCase> {
    let ids: HashSet<&str> = decisions.iter().filter(|d| d.selected).map(|d| d.test_id.as_str()).collect();
    eval.cases.iter().filter(move |c| ids.contains(c.test_id()))
}

pub fn selection_count(decisions: &[SelectionDecision]) -> u64 {
    decisions.iter().filter(|d| d.selected).count() as u64
}

/// Simulation seconds spent per revealed fault: total sim time of the
/// selected cases over the number of selected failing cases. Lower is
/// better. `None` when the selection contains no fault.
pub fn time_to_fault_ratio(decisions: &[SelectionDecision], eval: &TestSuite) -> Option<f64> {
    let (time, faults) = selected(decisions, eval).fold((0.0, 0u64), |(t, f), c| {
        (t + c.oracle.sim_time_sec, f + c.oracle.outcome.is_fault() as u64)
    });
    (faults > 0).then(|| time / faults as f64)
}

/// Precision of the selection. `None` for an empty selection.
pub fn fault_to_selection_ratio(decisions: &[SelectionDecision], eval: &TestSuite) -> Option<f64> {
    let (n, faults) =
        selected(decisions, eval).fold((0u64, 0u64), |(n, f), c| (n + 1, f + c.oracle.outcome.is_fault() as u64));
    (n > 0).then(|| faults as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    /// Mean over the selected cases of each road's mean |curvature|.
    pub mean: Option<f64>,
    /// Sample standard deviation of the same per-road values.
    pub std: Option<f64>,
}

/// Roads with fewer than three points contribute zero curvature.
pub fn curvature_diversity(decisions: &[SelectionDecision], eval: &TestSuite, mode: ProfileMode) -> Diversity {
    let values: Vec<f64> = selected(decisions, eval)
        .map(|c| mode.profile(&c.case.road_points).map(|p| p.mean_abs_kappa).unwrap_or(0.0))
        .collect();
    if values.is_empty() {
        return Diversity { mean: None, std: None };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Diversity { mean: Some(mean), std }
}

/// Assembles the six metric columns for one completed session.
pub fn compute_suite_metrics(
    tool_name: &str,
    decisions: &[SelectionDecision],
    eval: &TestSuite,
    timings: PhaseTimings,
    mode: ProfileMode,
) -> SuiteMetrics {
    let diversity = curvature_diversity(decisions, eval, mode);
    SuiteMetrics {
        suite_id: eval.suite_id.clone(),
        tool_name: tool_name.to_owned(),
        selection_cnt: selection_count(decisions),
        time_to_initialize: timings.time_to_initialize,
        time_to_select_tests: timings.time_to_select_tests,
        time_to_fault_ratio: time_to_fault_ratio(decisions, eval),
        fault_to_selection_ratio: fault_to_selection_ratio(decisions, eval),
        diversity: diversity.mean,
        diversity_std: diversity.std,
    }
}
