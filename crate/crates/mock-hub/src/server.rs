use std::net::{SocketAddr, TcpListener};
use std::thread::JoinHandle;

use axum::Router;
use tokio::sync::oneshot;

use crate::MockHubError;

pub(crate) fn bind(port: u16) -> Result<TcpListener, MockHubError> {
    let listener = TcpListener::bind(("127.0.0.1", port))
        .map_err(|source| MockHubError::PortUnavailable { port, source })?;
    listener.set_nonblocking(true).map_err(MockHubError::Runtime)?;
    Ok(listener)
}

/// A router served on its own thread and runtime; stops on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub(crate) fn spawn(listener: TcpListener, router: Router) -> Result<ServerHandle, MockHubError> {
    let addr = listener.local_addr().map_err(MockHubError::Runtime)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(MockHubError::Runtime)?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name(format!("mock-server-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("register listener");
                axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("mock server");
            });
        })
        .map_err(MockHubError::Runtime)?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serve `router` on an ephemeral port.
pub fn serve_router(router: Router) -> Result<ServerHandle, MockHubError> {
    spawn(bind(0)?, router)
}
