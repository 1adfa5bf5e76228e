//! Configuration and query surface: entities, users and roles, buildings,
//! floors with maps, scanner placement and density limits, plus historical
//! density, journeys and a per-floor realtime WebSocket.

pub mod api;
pub mod auth;
pub mod config;
pub mod error;
pub mod history;
pub mod relay;

use std::future::Future;

pub use api::{router, AppState};
pub use auth::TokenTable;
pub use config::{Caller, ConfigService, Role};
pub use error::{ApiError, ErrorBody};

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
