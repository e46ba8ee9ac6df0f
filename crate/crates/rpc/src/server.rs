//! Serving an in-process selector over gRPC.

use std::net::SocketAddr;
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::thread;

use selbench_core::protocol::{InitializationItem, Selector, ToolError};
use tokio::sync::oneshot;
use tokio_stream::wrappers::TcpListenerStream;
use tokio_stream::{Stream, StreamExt};
use tonic::{Request, Response, Status, Streaming};
use tracing::{debug, warn};

use crate::pb;
use crate::pb::selection_tool_server::{SelectionTool, SelectionToolServer};

struct ToolState {
    selector: Box<dyn Selector>,
    initialized: bool,
}

/// `SelectionTool` service backed by one in-process selector.
///
/// Calls are serialized; the service tracks whether an initialization has
/// completed and rejects selection before that.
#[derive(Clone)]
pub struct ToolService {
    state: Arc<Mutex<ToolState>>,
}

impl ToolService {
    pub fn new(selector: Box<dyn Selector>) -> Self {
        Self { state: Arc::new(Mutex::new(ToolState { selector, initialized: false })) }
    }

    pub fn into_server(self) -> SelectionToolServer<Self> {
        SelectionToolServer::new(self)
            .max_decoding_message_size(64 * 1024 * 1024)
            .max_encoding_message_size(64 * 1024 * 1024)
    }

    /// Runs `f` on the selector off the async executor. A panicking tool
    /// surfaces as an internal error and leaves the service uninitialized.
    async fn with_state<T, F>(&self, f: F) -> Result<T, Status>
    where
        T: Send + 'static,
        F: FnOnce(&mut ToolState) -> Result<T, Status> + Send + 'static,
    {
        let state = Arc::clone(&self.state);
        tokio::task::spawn_blocking(move || {
            let mut guard = state.lock().unwrap_or_else(|poisoned| {
                let mut g = poisoned.into_inner();
                g.initialized = false;
                g
            });
            f(&mut guard)
        })
        .await
        .map_err(|e| Status::internal(format!("tool crashed: {e}")))?
    }
}

pub(crate) fn status_from_tool(err: ToolError) -> Status {
    match err {
        ToolError::Tool(detail) => Status::internal(detail),
        ToolError::ProtocolViolation(detail) => Status::failed_precondition(detail),
        ToolError::Timeout { .. } => Status::deadline_exceeded(err.to_string()),
        ToolError::Unreachable(detail) | ToolError::StreamBroken(detail) => Status::unavailable(detail),
    }
}

type SelectStream = Pin<Box<dyn Stream<Item = Result<pb::SelectionReply, Status>> + Send>>;

#[tonic::async_trait]
impl SelectionTool for ToolService {
    async fn name(&self, _request: Request<pb::NameRequest>) -> Result<Response<pb::NameReply>, Status> {
        let name = self.with_state(|s| s.selector.name().map_err(status_from_tool)).await?;
        Ok(Response::new(pb::NameReply { name: name.name }))
    }

    async fn initialize(
        &self,
        request: Request<Streaming<pb::InitializationRequest>>,
    ) -> Result<Response<pb::InitializationReply>, Status> {
        let mut stream = request.into_inner();
        let mut items = Vec::new();
        while let Some(msg) = stream.next().await {
            items.push(InitializationItem::try_from(msg?)?);
        }
        debug!(items = items.len(), "initialization stream consumed");
        let ack = self
            .with_state(move |s| {
                s.initialized = false;
                let ack = s.selector.initialize(&mut items.into_iter()).map_err(status_from_tool)?;
                s.initialized = ack.done;
                Ok(ack)
            })
            .await?;
        Ok(Response::new(pb::InitializationReply { done: ack.done, detail: ack.detail.unwrap_or_default() }))
    }

    type SelectStream = SelectStream;

    async fn select(
        &self,
        request: Request<Streaming<pb::SelectionRequest>>,
    ) -> Result<Response<Self::SelectStream>, Status> {
        let mut stream = request.into_inner();
        let mut cases = Vec::new();
        while let Some(msg) = stream.next().await {
            let case = msg?.test_case.ok_or_else(|| Status::invalid_argument("selection request without test_case"))?;
            cases.push(case.into());
        }
        let decisions = self
            .with_state(move |s| {
                if !s.initialized {
                    return Err(Status::failed_precondition("select called before a completed initialize"));
                }
                s.selector.select(&mut cases.into_iter()).map_err(status_from_tool)
            })
            .await?;
        let replies = decisions
            .into_iter()
            .map(|d| Ok(pb::SelectionReply { test_id: d.test_id, selected: d.selected }));
        Ok(Response::new(Box::pin(tokio_stream::iter(replies))))
    }
}

/// Serves `service` on an already bound listener until `shutdown` resolves.
pub async fn serve(
    service: ToolService,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), tonic::transport::Error> {
    tonic::transport::Server::builder()
        .add_service(service.into_server())
        .serve_with_incoming_shutdown(TcpListenerStream::new(listener), shutdown)
        .await
}

/// A tool server running on a background thread. Dropping the handle stops
/// the server.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `host:port` form accepted by the client.
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `selector` from a
/// background thread.
pub fn spawn_server(selector: Box<dyn Selector>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let service = ToolService::new(selector);
    let thread = thread::Builder::new().name(format!("tool-server-{addr}")).spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tool server runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("register listener");
            if let Err(e) = serve(service, listener, async {
                let _ = rx.await;
            })
            .await
            {
                warn!(error = %e, "tool server stopped with error");
            }
        });
    })?;
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}

/// Serves `selector` on `listener` from the calling thread until the process
/// receives Ctrl-C.
pub fn serve_until_interrupted(selector: Box<dyn Selector>, listener: std::net::TcpListener) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        serve(ToolService::new(selector), listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(std::io::Error::other)
    })
}
