//! Reference selectors: a seeded random selector, a select-all selector
//! and a one-parameter curvature threshold classifier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::curvature_profile;
use crate::model::{SelectionDecision, TestCase};
use crate::protocol::{
    InitializationAck, InitializationItem, OrderedSession, Selector, ToolError, ToolIdentity, ToolProvider,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("no training item has a curvature profile (all roads have fewer than 3 points)")]
    NoTrainableData,
    #[error("threshold selector used before training")]
    Untrained,
    #[error("selection probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("unknown baseline {0:?}; expected one of random, select-all, threshold")]
    Unknown(String),
}

/// The `index`-th output (0-based) of a SplitMix64 generator seeded with
/// `seed`, mapped to `[0, 1)` via its top 53 bits.
///
/// The random baseline draws case `i` of a selection stream from
/// `order_keyed_uniform(seed, i)`. The scheme is fixed so implementations in
/// other languages reproduce the exact same decisions.
pub fn order_keyed_uniform(seed: u64, index: u64) -> f64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSelectorConfig {
    pub p_select: f64,
    pub seed: u64,
}

impl Default for RandomSelectorConfig {
    fn default() -> Self {
        Self { p_select: 0.5, seed: 0 }
    }
}

impl RandomSelectorConfig {
    pub fn new(p_select: f64, seed: u64) -> Result<Self, BaselineError> {
        if !(0.0..=1.0).contains(&p_select) {
            return Err(BaselineError::InvalidProbability(p_select));
        }
        Ok(Self { p_select, seed })
    }
}

/// Decision for the case at position `order` of the selection stream.
pub fn random_select(config: &RandomSelectorConfig, order: u64, case: &TestCase) -> SelectionDecision {
    let selected = order_keyed_uniform(config.seed, order) < config.p_select;
    SelectionDecision::new(case.test_id.clone(), selected)
}

pub const RANDOM_NAME: &str = "random-baseline";
pub const SELECT_ALL_NAME: &str = "select-all-baseline";
pub const THRESHOLD_NAME: &str = "threshold-baseline";

#[derive(Debug, Clone)]
pub struct RandomSelector {
    config: RandomSelectorConfig,
}

impl RandomSelector {
    pub fn new(config: RandomSelectorConfig) -> Self {
        Self { config }
    }
}

impl Selector for RandomSelector {
    fn name(&mut self) -> Result<ToolIdentity, ToolError> {
        Ok(ToolIdentity { name: RANDOM_NAME.into() })
    }

    fn initialize(
        &mut self,
        items: &mut dyn Iterator<Item = InitializationItem>,
    ) -> Result<InitializationAck, ToolError> {
        items.for_each(drop);
        Ok(InitializationAck::ok())
    }

    fn select(&mut self, cases: &mut dyn Iterator<Item = TestCase>) -> Result<Vec<SelectionDecision>, ToolError> {
        Ok(cases.enumerate().map(|(i, c)| random_select(&self.config, i as u64, &c)).collect())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelectAllSelector;

impl Selector for SelectAllSelector {
    fn name(&mut self) -> Result<ToolIdentity, ToolError> {
        Ok(ToolIdentity { name: SELECT_ALL_NAME.into() })
    }

    fn initialize(
        &mut self,
        items: &mut dyn Iterator<Item = InitializationItem>,
    ) -> Result<InitializationAck, ToolError> {
        items.for_each(drop);
        Ok(InitializationAck::ok())
    }

    fn select(&mut self, cases: &mut dyn Iterator<Item = TestCase>) -> Result<Vec<SelectionDecision>, ToolError> {
        Ok(cases.map(|c| SelectionDecision::new(c.test_id, true)).collect())
    }
}

/// Learned decision point on a road's maximum |curvature|.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdSelectorState {
    /// `None` until trained.
    pub threshold: Option<f64>,
    pub training_accuracy: Option<f64>,
}

fn max_abs_kappa(case: &TestCase) -> Option<f64> {
    curvature_profile(&case.road_points).ok().map(|p| p.max_abs_kappa())
}

/// Fits the threshold that maximises training accuracy of the rule
/// "FAIL iff max |kappa| >= threshold".
///
/// Candidates are the smallest observed value (select everything), the
/// midpoints between adjacent distinct sorted values, and the value just
/// above the largest observation (select nothing). The smallest candidate
/// among those with the best accuracy wins.
pub fn threshold_train(items: &[InitializationItem]) -> Result<ThresholdSelectorState, BaselineError> {
    let mut points: Vec<(f64, bool)> = items
        .iter()
        .filter_map(|it| max_abs_kappa(&it.test_case).map(|k| (k, it.oracle.outcome.is_fault())))
        .collect();
    if points.is_empty() {
        return Err(BaselineError::NoTrainableData);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = points.len();
    let total_fail = points.iter().filter(|p| p.1).count();

    // threshold at points[0].0: everything predicted FAIL
    let mut correct = total_fail;
    let mut best = (correct, points[0].0);
    let mut i = 0;
    while i < n {
        // move every point equal to points[i].0 below the threshold
        let v = points[i].0;
        while i < n && points[i].0 == v {
            if points[i].1 {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        let candidate = if i < n { 0.5 * (v + points[i].0) } else { v.next_up() };
        if correct > best.0 {
            best = (correct, candidate);
        }
    }
    Ok(ThresholdSelectorState { threshold: Some(best.1), training_accuracy: Some(best.0 as f64 / n as f64) })
}

/// Selects roads at least as curved as the learned threshold. Roads without
/// a profile (two points) are never selected.
pub fn threshold_select(state: &ThresholdSelectorState, case: &TestCase) -> Result<SelectionDecision, BaselineError> {
    let threshold = state.threshold.ok_or(BaselineError::Untrained)?;
    let selected = max_abs_kappa(case).is_some_and(|k| k >= threshold);
    Ok(SelectionDecision::new(case.test_id.clone(), selected))
}

#[derive(Debug, Clone, Default)]
pub struct ThresholdSelector {
    state: ThresholdSelectorState,
    /// Set when the last initialization carried no trainable road; the
    /// selector then selects nothing.
    untrainable: bool,
}

impl ThresholdSelector {
    pub fn state(&self) -> &ThresholdSelectorState {
        &self.state
    }
}

impl Selector for ThresholdSelector {
    fn name(&mut self) -> Result<ToolIdentity, ToolError> {
        Ok(ToolIdentity { name: THRESHOLD_NAME.into() })
    }

    fn initialize(
        &mut self,
        items: &mut dyn Iterator<Item = InitializationItem>,
    ) -> Result<InitializationAck, ToolError> {
        let items: Vec<_> = items.collect();
        *self = Self::default();
        match threshold_train(&items) {
            Ok(state) => {
                self.state = state;
                Ok(InitializationAck::ok())
            }
            Err(BaselineError::NoTrainableData) => {
                self.untrainable = true;
                Ok(InitializationAck { done: true, detail: Some("no trainable data; selecting nothing".into()) })
            }
            Err(e) => Err(ToolError::Tool(e.to_string())),
        }
    }

    fn select(&mut self, cases: &mut dyn Iterator<Item = TestCase>) -> Result<Vec<SelectionDecision>, ToolError> {
        if self.untrainable {
            return Ok(cases.map(|c| SelectionDecision::new(c.test_id, false)).collect());
        }
        cases
            .map(|c| threshold_select(&self.state, &c).map_err(|e| ToolError::ProtocolViolation(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Random,
    SelectAll,
    Threshold,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Random, BaselineKind::SelectAll, BaselineKind::Threshold];

    pub fn tool_name(self) -> &'static str {
        match self {
            BaselineKind::Random => RANDOM_NAME,
            BaselineKind::SelectAll => SELECT_ALL_NAME,
            BaselineKind::Threshold => THRESHOLD_NAME,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::SelectAll => "select-all",
            BaselineKind::Threshold => "threshold",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BaselineKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.id() == s || k.tool_name() == s)
            .ok_or_else(|| BaselineError::Unknown(s.to_owned()))
    }
}

/// Builds fresh, order-checked baseline sessions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineProvider {
    pub kind: BaselineKind,
    pub random: RandomSelectorConfig,
}

impl BaselineProvider {
    pub fn new(kind: BaselineKind, random: RandomSelectorConfig) -> Self {
        Self { kind, random }
    }

    /// A selector without session-order checks, for hosts that enforce the
    /// ordering themselves (such as a tool server).
    pub fn bare_selector(&self) -> Box<dyn Selector> {
        match self.kind {
            BaselineKind::Random => Box::new(RandomSelector::new(self.random)),
            BaselineKind::SelectAll => Box::new(SelectAllSelector),
            BaselineKind::Threshold => Box::new(ThresholdSelector::default()),
        }
    }

    pub fn selector(&self) -> Box<dyn Selector> {
        match self.kind {
            BaselineKind::Random => Box::new(OrderedSession::new(RandomSelector::new(self.random))),
            BaselineKind::SelectAll => Box::new(OrderedSession::new(SelectAllSelector)),
            BaselineKind::Threshold => Box::new(OrderedSession::new(ThresholdSelector::default())),
        }
    }
}

impl ToolProvider for BaselineProvider {
    fn open_session(&self) -> Result<Box<dyn Selector>, ToolError> {
        Ok(self.selector())
    }
}
