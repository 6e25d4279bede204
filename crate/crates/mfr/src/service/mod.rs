//! HTTP/JSON service under `/api/v1`.

mod app;
mod auth;
mod config;
mod error;
mod http;

pub use app::{App, IdentifyMatch, IdentifyResponse, PersonSubmission, PersonSummary, Published};
pub use auth::{AuthError, Credentials, CredentialsError, Principal, Role};
pub use config::{ConfigError, ServiceConfig};
pub use error::ServiceError;
pub use http::{router, Ctx, Health, MAX_BODY_BYTES};

use std::sync::Arc;

use thiserror::Error;

use crate::blobs::BlobStore;
use crate::model_file::{load_model, ModelFileError};
use crate::registry::{Store, StoreError, StoreOptions};

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Credentials(#[from] CredentialsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the data directory and builds the request context.
pub fn open(config: &ServiceConfig) -> Result<Arc<Ctx>, StartError> {
    let credentials = match &config.tokens {
        Some(p) => Credentials::load(p)?,
        None => Credentials::default(),
    };
    let store = Store::open(
        config.store_dir(),
        StoreOptions {
            sync: config.sync_writes,
            snapshot_every: config.snapshot_every,
            ..StoreOptions::default()
        },
    )?;
    let blobs = BlobStore::open(config.blob_dir())?;
    let model_path = config.model_path();
    let model = if model_path.exists() {
        Some(load_model(&model_path)?)
    } else {
        tracing::warn!(path = %model_path.display(), "no model file; identify and enrollment are disabled");
        None
    };
    let app = App::new(
        store,
        blobs,
        model,
        config.detector.clone(),
        config.threshold,
        config.top_n,
    )?;
    Ok(Arc::new(Ctx { app, credentials }))
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), StartError> {
    let ctx = {
        let config = config.clone();
        tokio::task::spawn_blocking(move || open(&config))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))??
    };
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(ctx))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
