use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use diffx_service::{build_pipeline, router, AppState, ServiceConfig};

/// Serve the interactive session API.
#[derive(Parser)]
#[command(name = "diffx-serve", version)]
struct Args {
    /// Flat key = value TOML config; DIFFX_<KEY> variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("diffx-serve: {msg}");
    ExitCode::from(code)
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let config = match ServiceConfig::load(args.config.as_deref(), std::env::vars()) {
        Ok(c) => c,
        Err(e) => return fail(4, e),
    };
    let pipeline = match build_pipeline(&config) {
        Ok(p) => p,
        Err(e) => return fail(4, e),
    };
    if !config.predictor_enabled {
        eprintln!(
            "diffx-serve: PREDICTOR DISABLED, every edit uses fixed strength {}",
            config.fixed_strength
        );
    }
    let state = match AppState::open(pipeline, &config.persistence_path, config.seed) {
        Ok(s) => s,
        Err(e) => return fail(4, e),
    };
    let listener = match tokio::net::TcpListener::bind(&config.listen_addr).await {
        Ok(l) => l,
        Err(e) => return fail(4, format!("bind {}: {e}", config.listen_addr)),
    };
    eprintln!("diffx-serve: listening on {}", config.listen_addr);
    let served = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    match served {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}
