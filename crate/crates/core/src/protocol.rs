//! The evaluator/tool contract.
//!
//! A session runs strictly in order: name handshake, one streamed
//! initialization with labeled cases, then one streamed selection over
//! unlabeled cases. In-process selectors and remote tools both implement
//! [`Selector`]; the evaluator cannot tell them apart.

use std::collections::HashSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabeledCase, OracleRecord, SelectionDecision, TestCase};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolIdentity {
    pub name: String,
}

/// One labeled training case streamed during initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct InitializationItem {
    pub test_case: TestCase,
    pub oracle: OracleRecord,
}

impl From<&LabeledCase> for InitializationItem {
    fn from(c: &LabeledCase) -> Self {
        Self { test_case: c.case.clone(), oracle: c.oracle.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitializationAck {
    pub done: bool,
    pub detail: Option<String>,
}

impl InitializationAck {
    pub fn ok() -> Self {
        Self { done: true, detail: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Handshake,
    Initialize,
    Select,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Handshake => "handshake",
            Phase::Initialize => "initialize",
            Phase::Select => "select",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("tool unreachable: {0}")]
    Unreachable(String),
    #[error("{phase} exceeded its {budget:?} budget")]
    Timeout { phase: Phase, budget: Duration },
    #[error("tool reported failure: {0}")]
    Tool(String),
    #[error("stream broken: {0}")]
    StreamBroken(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

/// A test selection tool as seen from the evaluator.
pub trait Selector: Send {
    fn name(&mut self) -> Result<ToolIdentity, ToolError>;

    /// Consumes the whole training stream before acknowledging. A repeated
    /// call starts over from a fresh tool state.
    fn initialize(&mut self, items: &mut dyn Iterator<Item = InitializationItem>)
    -> Result<InitializationAck, ToolError>;

    /// Returns one decision per input case, in any order.
    fn select(&mut self, cases: &mut dyn Iterator<Item = TestCase>) -> Result<Vec<SelectionDecision>, ToolError>;
}

/// Opens one fresh session per suite evaluation.
pub trait ToolProvider: Send + Sync {
    fn open_session(&self) -> Result<Box<dyn Selector>, ToolError>;
}

impl<F> ToolProvider for F
where
    F: Fn() -> Result<Box<dyn Selector>, ToolError> + Send + Sync,
{
    fn open_session(&self) -> Result<Box<dyn Selector>, ToolError> {
        self()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum SessionState {
    #[default]
    Fresh,
    Named,
    Initialized,
}

/// Enforces handshake, then initialize, then select on a wrapped selector.
#[derive(Debug)]
pub struct OrderedSession<S> {
    inner: S,
    state: SessionState,
}

impl<S: Selector> OrderedSession<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, state: SessionState::Fresh }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Selector> Selector for OrderedSession<S> {
    fn name(&mut self) -> Result<ToolIdentity, ToolError> {
        let id = self.inner.name()?;
        if self.state == SessionState::Fresh {
            self.state = SessionState::Named;
        }
        Ok(id)
    }

    fn initialize(
        &mut self,
        items: &mut dyn Iterator<Item = InitializationItem>,
    ) -> Result<InitializationAck, ToolError> {
        if self.state == SessionState::Fresh {
            return Err(ToolError::ProtocolViolation("initialize before name handshake".into()));
        }
        let ack = self.inner.initialize(items)?;
        self.state = if ack.done { SessionState::Initialized } else { SessionState::Named };
        Ok(ack)
    }

    fn select(&mut self, cases: &mut dyn Iterator<Item = TestCase>) -> Result<Vec<SelectionDecision>, ToolError> {
        if self.state != SessionState::Initialized {
            return Err(ToolError::ProtocolViolation("select before a completed initialize".into()));
        }
        self.inner.select(cases)
    }
}

/// How replies of the select phase are matched against the sent cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Exactly one decision per sent case.
    #[default]
    Strict,
    /// The tool may reply with the selected ids only; unanswered ids count
    /// as not selected. Duplicates and unknown ids are still violations.
    Lenient,
}

/// Checks the replies against the sent ids and returns one decision per
/// sent id, in sent order.
pub fn check_decisions<'a>(
    sent_ids: impl IntoIterator<Item = &'a str>,
    decisions: Vec<SelectionDecision>,
    mode: DecisionMode,
) -> Result<Vec<SelectionDecision>, ToolError> {
    let sent: Vec<&str> = sent_ids.into_iter().collect();
    let known: HashSet<&str> = sent.iter().copied().collect();
    let mut answered = std::collections::HashMap::with_capacity(decisions.len());
    for d in &decisions {
        if !known.contains(d.test_id.as_str()) {
            return Err(ToolError::ProtocolViolation(format!("decision for unknown test_id {:?}", d.test_id)));
        }
        if answered.insert(d.test_id.as_str(), d.selected).is_some() {
            return Err(ToolError::ProtocolViolation(format!("duplicate decision for test_id {:?}", d.test_id)));
        }
    }
    let mut out = Vec::with_capacity(sent.len());
    for id in sent {
        let selected = match (answered.get(id), mode) {
            (Some(&s), _) => s,
            (None, DecisionMode::Lenient) => false,
            (None, DecisionMode::Strict) => {
                return Err(ToolError::ProtocolViolation(format!("no decision for test_id {id:?}")));
            }
        };
        out.push(SelectionDecision::new(id, selected));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;

    struct Echo;

    impl Selector for Echo {
        fn name(&mut self) -> Result<ToolIdentity, ToolError> {
            Ok(ToolIdentity { name: "echo".into() })
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

    fn case(id: &str) -> TestCase {
        TestCase { test_id: id.into(), road_points: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)] }
    }

    #[test]
    fn session_order_is_enforced() {
        let mut s = OrderedSession::new(Echo);
        assert!(matches!(s.select(&mut std::iter::once(case("a"))), Err(ToolError::ProtocolViolation(_))));
        assert!(matches!(s.initialize(&mut std::iter::empty()), Err(ToolError::ProtocolViolation(_))));
        assert_eq!(s.name().unwrap().name, "echo");
        assert!(matches!(s.select(&mut std::iter::once(case("a"))), Err(ToolError::ProtocolViolation(_))));
        assert!(s.initialize(&mut std::iter::empty()).unwrap().done);
        assert_eq!(s.select(&mut std::iter::once(case("a"))).unwrap().len(), 1);
    }

    #[test]
    fn strict_decisions() {
        let ids = ["a", "b", "c"];
        let d = vec![
            SelectionDecision::new("c", true),
            SelectionDecision::new("a", false),
            SelectionDecision::new("b", true),
        ];
        let ok = check_decisions(ids, d, DecisionMode::Strict).unwrap();
        assert_eq!(ok.iter().map(|d| d.test_id.as_str()).collect::<Vec<_>>(), ids);
        assert_eq!(ok.iter().map(|d| d.selected).collect::<Vec<_>>(), [false, true, true]);

        let missing = vec![SelectionDecision::new("a", true), SelectionDecision::new("b", true)];
        match check_decisions(ids, missing, DecisionMode::Strict) {
            Err(ToolError::ProtocolViolation(m)) => assert!(m.contains("\"c\""), "{m}"),
            other => panic!("{other:?}"),
        }
        let dup = vec![
            SelectionDecision::new("a", true),
            SelectionDecision::new("a", false),
            SelectionDecision::new("b", true),
            SelectionDecision::new("c", true),
        ];
        assert!(matches!(check_decisions(ids, dup, DecisionMode::Strict), Err(ToolError::ProtocolViolation(_))));
        let unknown = vec![SelectionDecision::new("z", true)];
        assert!(matches!(check_decisions(ids, unknown, DecisionMode::Lenient), Err(ToolError::ProtocolViolation(_))));
    }

    #[test]
    fn lenient_infers_unselected() {
        let ok = check_decisions(["a", "b", "c"], vec![SelectionDecision::new("b", true)], DecisionMode::Lenient)
            .unwrap();
        assert_eq!(ok.iter().map(|d| d.selected).collect::<Vec<_>>(), [false, true, false]);
    }
}
