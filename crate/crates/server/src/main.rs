use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use defect_sage::{api, repl};
use defect_sage_core::clock::SystemClock;
use defect_sage_core::eval::{load_manifest, render_csv, run_ablation};
use defect_sage_core::session::{
    export_report, Engine, FeatureFlags, ServiceConfig, Transcript, DEFAULT_LISTEN_ADDR, KB_PATH_VAR,
};

#[derive(Parser)]
#[command(name = "defect-sage", version, about = "LPBF defect analysis: REPL, HTTP API and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive terminal session.
    Repl {
        #[command(flatten)]
        engine: EngineArgs,
        /// Directory for exported HTML reports.
        #[arg(long, default_value = ".")]
        report_dir: PathBuf,
        /// Write the session transcript (JSON) here on exit.
        #[arg(long)]
        save_session: Option<PathBuf>,
    },
    /// HTTP API.
    Serve {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value = DEFAULT_LISTEN_ADDR)]
        addr: String,
    },
    /// Ablation report from a manifest of labeled record sets.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write ablation_report.csv and .html into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HTML report from a saved session transcript.
    Export {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EngineArgs {
    /// Knowledge-base JSON file (defaults to the shipped one).
    #[arg(long, env = KB_PATH_VAR)]
    kb: Option<PathBuf>,
    #[arg(long)]
    descriptors: Option<PathBuf>,
    /// Use this material without prompting.
    #[arg(long)]
    material: Option<String>,
    /// Pure knowledge-base mode: no retrieval, no image analysis.
    #[arg(long)]
    offline: bool,
    /// Replay search results from a recorded transcript.
    #[arg(long)]
    search_transcript: Option<PathBuf>,
    /// Replay model answers from a recorded transcript.
    #[arg(long)]
    model_transcript: Option<PathBuf>,
}

impl EngineArgs {
    fn engine(self) -> anyhow::Result<Engine> {
        let config = ServiceConfig {
            kb_path: self.kb,
            descriptors_path: self.descriptors,
            material: self.material,
            flags: if self.offline { FeatureFlags::OFFLINE } else { FeatureFlags::ALL_ON },
            search_transcript: self.search_transcript,
            model_transcript: self.model_transcript,
            ..ServiceConfig::default()
        };
        Engine::from_config(&config, Arc::new(SystemClock)).context("cannot start engine")
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Repl { engine, report_dir, save_session } => {
            let engine = engine.engine()?;
            let stdin = std::io::stdin();
            let session = repl::run(&engine, stdin.lock(), &mut std::io::stdout(), &report_dir)?;
            if let Some(path) = save_session {
                std::fs::write(&path, session.transcript().to_json())
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
        }
        Command::Serve { engine, addr } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .init();
            let engine = engine.engine()?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener =
                    tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("cannot bind {addr}"))?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, api::router(engine))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::Eval { manifest, out } => {
            let manifest = load_manifest(&manifest)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
            }
            let report = run_ablation(&manifest, out.as_deref())?;
            print!("{}", render_csv(&report));
        }
        Command::Export { session, out } => {
            let text = std::fs::read_to_string(&session).with_context(|| format!("cannot read {}", session.display()))?;
            let transcript = Transcript::from_json(&text).context("not a session transcript")?;
            if transcript.is_empty() {
                bail!("{} holds an empty transcript", session.display());
            }
            std::fs::write(&out, export_report(&transcript)?)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
