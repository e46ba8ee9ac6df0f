//! Structural validation of test suites.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{MIN_SUITE_SIZE, TestSuite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewCases { count: usize, min: usize },
    EmptyTestId { index: usize },
    DuplicateTestId { test_id: String },
    /// Test case and oracle disagree on the id.
    OracleMismatch { test_id: String, oracle_id: String },
    TooFewPoints { test_id: String, count: usize },
    NonFiniteCoordinate { test_id: String, index: usize },
    ConsecutiveDuplicatePoints { test_id: String, index: usize },
    /// `road_points[index]` equals `road_points[index + 2]`; the curvature
    /// of that triple is undefined.
    DegenerateTriple { test_id: String, index: usize },
    InvalidSimTime { test_id: String, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewCases { count, min } => write!(f, "suite has {count} cases, at least {min} required"),
            Violation::EmptyTestId { index } => write!(f, "case #{index} has an empty test_id"),
            Violation::DuplicateTestId { test_id } => write!(f, "duplicate test_id {test_id:?}"),
            Violation::OracleMismatch { test_id, oracle_id } => {
                write!(f, "{test_id}: oracle record is for {oracle_id:?}")
            }
            Violation::TooFewPoints { test_id, count } => {
                write!(f, "{test_id}: road has {count} points, at least 2 required")
            }
            Violation::NonFiniteCoordinate { test_id, index } => {
                write!(f, "{test_id}: road point {index} is not finite")
            }
            Violation::ConsecutiveDuplicatePoints { test_id, index } => {
                write!(f, "{test_id}: road points {index} and {} coincide", index + 1)
            }
            Violation::DegenerateTriple { test_id, index } => {
                write!(f, "{test_id}: road points {index} and {} coincide", index + 2)
            }
            Violation::InvalidSimTime { test_id, value } => {
                write!(f, "{test_id}: sim_time_sec {value} is not a finite non-negative number")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collects every invariant violation of `suite`.
pub fn validate_suite(suite: &TestSuite) -> ValidationReport {
    let mut violations = Vec::new();
    if suite.cases.len() < MIN_SUITE_SIZE {
        violations.push(Violation::TooFewCases { count: suite.cases.len(), min: MIN_SUITE_SIZE });
    }
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for (index, labeled) in suite.cases.iter().enumerate() {
        let id = labeled.test_id();
        if id.is_empty() {
            violations.push(Violation::EmptyTestId { index });
        } else if !seen.insert(id) && reported.insert(id) {
            violations.push(Violation::DuplicateTestId { test_id: id.to_owned() });
        }
        if labeled.oracle.test_id != id {
            violations.push(Violation::OracleMismatch {
                test_id: id.to_owned(),
                oracle_id: labeled.oracle.test_id.clone(),
            });
        }
        let sim = labeled.oracle.sim_time_sec;
        if !(sim.is_finite() && sim >= 0.0) {
            violations.push(Violation::InvalidSimTime { test_id: id.to_owned(), value: sim });
        }

        let pts = &labeled.case.road_points;
        if pts.len() < 2 {
            violations.push(Violation::TooFewPoints { test_id: id.to_owned(), count: pts.len() });
        }
        if let Some(index) = pts.iter().position(|p| !p.is_finite()) {
            violations.push(Violation::NonFiniteCoordinate { test_id: id.to_owned(), index });
        }
        for (index, w) in pts.windows(2).enumerate() {
            if w[0] == w[1] {
                violations.push(Violation::ConsecutiveDuplicatePoints { test_id: id.to_owned(), index });
            }
        }
        for (index, w) in pts.windows(3).enumerate() {
            if w[0] == w[2] {
                violations.push(Violation::DegenerateTriple { test_id: id.to_owned(), index });
            }
        }
    }
    ValidationReport { violations }
}
