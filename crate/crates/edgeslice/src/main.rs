use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use edgeslice::assets;
use edgeslice::experiments::{self, ExperimentKind, ExperimentSpec};
use edgeslice_core::workload_sim::WorkloadParams;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "edgeslice",
    version,
    about = "Edge application slice orchestrator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the orchestration API.
    Serve {
        /// Cluster topology JSON; the bundled testbed when omitted.
        #[arg(long, requires_all = ["template_dir", "acf_dir"])]
        cluster: Option<PathBuf>,
        #[arg(long)]
        template_dir: Option<PathBuf>,
        #[arg(long)]
        acf_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
    /// Run one experiment against a private in-process server.
    Experiment {
        name: ExperimentKind,
        /// Length of each phase or configuration run.
        #[arg(long, default_value_t = 60)]
        phase_seconds: u64,
        /// Use 360 s phases.
        #[arg(long, conflicts_with = "phase_seconds")]
        full_length: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        /// Output directory for CSVs, summary.json and table.md.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulate seeds in parallel.
        #[arg(long)]
        parallel: bool,
        /// Workload parameters JSON overriding the bundled calibration.
        #[arg(long)]
        workload: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Serve {
            cluster,
            template_dir,
            acf_dir,
            listen,
        } => {
            let meco = match (cluster, template_dir, acf_dir) {
                (Some(c), Some(t), Some(a)) => assets::meco_from_files(&c, &t, &a)?,
                _ => assets::default_meco()?,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&listen)
                    .await
                    .with_context(|| format!("binding {listen}"))?;
                tracing::info!(addr = %listener.local_addr()?, "listening");
                edgeslice::server::serve(listener, Arc::new(meco)).await?;
                anyhow::Ok(())
            })?;
            Ok(true)
        }
        Command::Experiment {
            name,
            phase_seconds,
            full_length,
            seeds,
            out,
            parallel,
            workload,
        } => {
            let mut spec = ExperimentSpec::new(name);
            spec.phase_ms = if full_length {
                360_000
            } else {
                phase_seconds * 1000
            };
            spec.seeds = seeds;
            spec.parallel = parallel;
            if let Some(path) = workload {
                let doc = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                spec.workload = serde_json::from_str::<WorkloadParams>(&doc)
                    .with_context(|| format!("parsing {}", path.display()))?;
            }
            let outcome = experiments::run_local(&spec)?;
            let out = out.unwrap_or_else(|| PathBuf::from("results").join(name.as_str()));
            outcome.write(&out)?;
            println!("{}", outcome.table());
            print!("{}", outcome.predicate_lines());
            println!("results written to {}", out.display());
            Ok(outcome.passed())
        }
    }
}
