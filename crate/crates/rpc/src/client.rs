//! Remote tools seen through the [`Selector`] interface.

use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use prost::Message;
use selbench_core::evaluator::Timeouts;
use selbench_core::model::{SelectionDecision, TestCase};
use selbench_core::protocol::{
    InitializationAck, InitializationItem, OrderedSession, Phase, Selector, ToolError, ToolIdentity, ToolProvider,
};
use tonic::transport::{Channel, Endpoint};
use tonic::{Code, Status};

use crate::pb;
use crate::pb::selection_tool_client::SelectionToolClient;

const MAX_MESSAGE_BYTES: usize = 64 * 1024 * 1024;

/// Encoded request messages exactly as they were put on the wire.
#[derive(Debug, Clone, Default)]
pub struct WireCapture {
    pub initialize: Vec<Vec<u8>>,
    pub select: Vec<Vec<u8>>,
}

/// Maps a gRPC status to the harness error taxonomy.
pub fn tool_error_from_status(phase: Phase, status: &Status) -> ToolError {
    let detail = format!("{:?}: {}", status.code(), status.message());
    match status.code() {
        Code::FailedPrecondition => ToolError::ProtocolViolation(detail),
        Code::Unavailable | Code::Cancelled | Code::Aborted => ToolError::StreamBroken(detail),
        Code::DeadlineExceeded => ToolError::Timeout { phase, budget: Duration::ZERO },
        // A connection that dies mid-call surfaces as UNKNOWN/INTERNAL with
        // a transport error attached rather than a status from the tool.
        Code::Unknown | Code::Internal if std::error::Error::source(status).is_some() => {
            ToolError::StreamBroken(detail)
        }
        _ => ToolError::Tool(detail),
    }
}

fn endpoint_uri(address: &str) -> String {
    if address.contains("://") { address.to_owned() } else { format!("http://{address}") }
}

/// One connection to a remote tool, driven synchronously.
pub struct RemoteSession {
    runtime: tokio::runtime::Runtime,
    client: SelectionToolClient<Channel>,
    timeouts: Timeouts,
    capture: Option<Arc<Mutex<WireCapture>>>,
}

impl RemoteSession {
    /// Connects to `address` (`host:port` or a full URI) within the connect
    /// budget.
    pub fn connect(address: &str, timeouts: Timeouts) -> Result<Self, ToolError> {
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| ToolError::Unreachable(format!("client runtime: {e}")))?;
        let endpoint = Endpoint::from_shared(endpoint_uri(address))
            .map_err(|e| ToolError::Unreachable(format!("invalid address {address:?}: {e}")))?
            .connect_timeout(timeouts.connect);
        let channel = runtime
            .block_on(async { tokio::time::timeout(timeouts.connect, endpoint.connect()).await })
            .map_err(|_| ToolError::Unreachable(format!("{address}: no connection within {:?}", timeouts.connect)))?
            .map_err(|e| ToolError::Unreachable(format!("{address}: {e}")))?;
        let client = SelectionToolClient::new(channel)
            .max_decoding_message_size(MAX_MESSAGE_BYTES)
            .max_encoding_message_size(MAX_MESSAGE_BYTES);
        Ok(Self { runtime, client, timeouts, capture: None })
    }

    /// Records every request message sent by this session into `capture`.
    pub fn with_capture(mut self, capture: Arc<Mutex<WireCapture>>) -> Self {
        self.capture = Some(capture);
        self
    }

    fn record(&self, f: impl FnOnce(&mut WireCapture)) {
        if let Some(c) = &self.capture {
            f(&mut c.lock().expect("capture lock"));
        }
    }

    fn run<T>(&self, phase: Phase, fut: impl Future<Output = Result<T, Status>>) -> Result<T, ToolError> {
        let budget = self.timeouts.budget(phase);
        match self.runtime.block_on(async { tokio::time::timeout(budget, fut).await }) {
            Err(_) => Err(ToolError::Timeout { phase, budget }),
            Ok(Err(status)) => Err(match tool_error_from_status(phase, &status) {
                ToolError::Timeout { phase, .. } => ToolError::Timeout { phase, budget },
                other => other,
            }),
            Ok(Ok(v)) => Ok(v),
        }
    }
}

impl Selector for RemoteSession {
    fn name(&mut self) -> Result<ToolIdentity, ToolError> {
        let mut client = self.client.clone();
        let reply = self.run(Phase::Handshake, async move { client.name(pb::NameRequest {}).await })?;
        Ok(ToolIdentity { name: reply.into_inner().name })
    }

    fn initialize(
        &mut self,
        items: &mut dyn Iterator<Item = InitializationItem>,
    ) -> Result<InitializationAck, ToolError> {
        let requests: Vec<pb::InitializationRequest> = items.map(|i| pb::InitializationRequest::from(&i)).collect();
        self.record(|c| c.initialize = requests.iter().map(Message::encode_to_vec).collect());
        let mut client = self.client.clone();
        let reply =
            self.run(Phase::Initialize, async move { client.initialize(tokio_stream::iter(requests)).await })?;
        let reply = reply.into_inner();
        Ok(InitializationAck { done: reply.done, detail: (!reply.detail.is_empty()).then_some(reply.detail) })
    }

    fn select(&mut self, cases: &mut dyn Iterator<Item = TestCase>) -> Result<Vec<SelectionDecision>, ToolError> {
        let requests: Vec<pb::SelectionRequest> =
            cases.map(|c| pb::SelectionRequest { test_case: Some((&c).into()) }).collect();
        self.record(|c| c.select = requests.iter().map(Message::encode_to_vec).collect());
        let mut client = self.client.clone();
        self.run(Phase::Select, async move {
            let mut stream = client.select(tokio_stream::iter(requests)).await?.into_inner();
            let mut out = Vec::new();
            while let Some(reply) = stream.message().await? {
                out.push(SelectionDecision::new(reply.test_id, reply.selected));
            }
            Ok(out)
        })
    }
}

/// Opens a fresh connection to the same endpoint for every suite.
#[derive(Clone)]
pub struct RemoteProvider {
    address: String,
    timeouts: Timeouts,
    capture: Option<Arc<Mutex<WireCapture>>>,
}

impl RemoteProvider {
    pub fn new(address: impl Into<String>, timeouts: Timeouts) -> Self {
        Self { address: address.into(), timeouts, capture: None }
    }

    /// Every session opened by this provider records its requests into
    /// `capture` (later sessions overwrite earlier ones).
    pub fn with_capture(mut self, capture: Arc<Mutex<WireCapture>>) -> Self {
        self.capture = Some(capture);
        self
    }

    pub fn address(&self) -> &str {
        &self.address
    }
}

impl ToolProvider for RemoteProvider {
    fn open_session(&self) -> Result<Box<dyn Selector>, ToolError> {
        let mut session = RemoteSession::connect(&self.address, self.timeouts)?;
        if let Some(c) = &self.capture {
            session = session.with_capture(Arc::clone(c));
        }
        Ok(Box::new(OrderedSession::new(session)))
    }
}
