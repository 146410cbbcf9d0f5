use anyhow::Context;
use clap::Parser;
use tracing_subscriber::EnvFilter;
use vst_service::{api, Config, Service};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let config = Config::parse();
    let backends = config.backends()?;
    let (service, recovery) = Service::open(&config.data_dir, backends, config.settings())
        .with_context(|| format!("opening data dir {}", config.data_dir.display()))?;
    tracing::info!(
        loaded = recovery.loaded,
        interrupted = recovery.interrupted.len(),
        backends = %config.describe_backends(),
        "session store ready"
    );

    let listener = tokio::net::TcpListener::bind(config.bind_addr)
        .await
        .with_context(|| format!("binding {}", config.bind_addr))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, api::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
