//! gRPC transport for the selection tool protocol.
//!
//! [`server`] exposes any in-process [`Selector`](selbench_core::protocol::Selector)
//! as a `SelectionTool` service; [`client`] wraps a remote endpoint back into
//! a `Selector` so the evaluator drives both the same way.

pub mod client;
pub mod server;

pub mod pb {
    tonic::include_proto!("selbench.v1");
}

use selbench_core::model::{OracleRecord, Outcome, Point, TestCase};
use selbench_core::protocol::InitializationItem;

impl From<&TestCase> for pb::TestCase {
    fn from(c: &TestCase) -> Self {
        pb::TestCase {
            test_id: c.test_id.clone(),
            road_points: c.road_points.iter().map(|p| pb::RoadPoint { x: p.x, y: p.y }).collect(),
        }
    }
}

impl From<pb::TestCase> for TestCase {
    fn from(c: pb::TestCase) -> Self {
        TestCase { test_id: c.test_id, road_points: c.road_points.into_iter().map(|p| Point::new(p.x, p.y)).collect() }
    }
}

impl From<&OracleRecord> for pb::Oracle {
    fn from(o: &OracleRecord) -> Self {
        pb::Oracle { test_id: o.test_id.clone(), has_failed: o.outcome.is_fault(), sim_time_sec: o.sim_time_sec }
    }
}

impl From<pb::Oracle> for OracleRecord {
    fn from(o: pb::Oracle) -> Self {
        OracleRecord {
            test_id: o.test_id,
            outcome: if o.has_failed { Outcome::Fail } else { Outcome::Pass },
            sim_time_sec: o.sim_time_sec,
        }
    }
}

impl From<&InitializationItem> for pb::InitializationRequest {
    fn from(item: &InitializationItem) -> Self {
        pb::InitializationRequest {
            test_case: Some((&item.test_case).into()),
            oracle: Some((&item.oracle).into()),
        }
    }
}

impl TryFrom<pb::InitializationRequest> for InitializationItem {
    type Error = tonic::Status;

    fn try_from(r: pb::InitializationRequest) -> Result<Self, Self::Error> {
        let test_case: TestCase =
            r.test_case.ok_or_else(|| tonic::Status::invalid_argument("initialization item without test_case"))?.into();
        let oracle: OracleRecord =
            r.oracle.ok_or_else(|| tonic::Status::invalid_argument("initialization item without oracle"))?.into();
        if oracle.test_id != test_case.test_id {
            return Err(tonic::Status::invalid_argument(format!(
                "oracle {:?} does not belong to test case {:?}",
                oracle.test_id, test_case.test_id
            )));
        }
        Ok(InitializationItem { test_case, oracle })
    }
}
