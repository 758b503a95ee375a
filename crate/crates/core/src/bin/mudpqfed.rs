use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mudpqfed::harness::{
    prepare, run_experiment, summarize, sweep_detection, sweep_tpr_surface, table_placements,
    write_detection, write_outputs, write_tpr_surface, ExperimentConfig, ExperimentOutcome,
    TransportKind,
};
use mudpqfed::transport::{connect_tcp, serve_tcp, TcpOptions};
use mudpqfed::Result;

#[derive(Parser)]
#[command(
    version,
    about = "Quantized federated learning with malicious-client detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Sim,
    Tcp,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, summary.json and (sim) transcript.log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        transport: Option<TransportArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// TPR/FPR over attacker placements; writes detection.csv and detection.json.
    SweepDetection {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// TPR over change size and tampered count; writes tpr_surface.csv and tpr_surface.json.
    SweepTpr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the server over TCP, then write metrics.csv and summary.json.
    Serve {
        #[arg(long)]
        listen: SocketAddr,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one client over TCP.
    Client {
        #[arg(long)]
        connect: SocketAddr,
        #[arg(long)]
        id: usize,
        #[arg(long)]
        config: PathBuf,
    },
}

fn out_dir(config: &ExperimentConfig, out: Option<PathBuf>, config_path: &Path) -> PathBuf {
    out.unwrap_or_else(|| {
        if config.output.is_relative() {
            config_path
                .parent()
                .unwrap_or(Path::new("."))
                .join(&config.output)
        } else {
            config.output.clone()
        }
    })
}

fn report(outcome: &ExperimentOutcome, dir: &Path) {
    let s = &outcome.summary;
    println!(
        "rounds={} final_accuracy={:.4} tpr={:.4} fpr={:.4} total_bytes={} -> {}",
        s.rounds,
        s.final_accuracy,
        s.tpr,
        s.fpr,
        s.total_bytes,
        dir.display()
    );
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            transport,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(t) = transport {
                cfg.transport = match t {
                    TransportArg::Sim => TransportKind::Sim,
                    TransportArg::Tcp => TransportKind::Tcp,
                };
            }
            let dir = out_dir(&cfg, out, &config);
            let outcome = run_experiment(&cfg)?;
            write_outputs(&outcome, &dir)?;
            report(&outcome, &dir);
        }
        Command::SweepDetection { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let placements = if cfg.sweep.placements.is_empty() {
                table_placements()
            } else {
                cfg.sweep.placements.clone()
            };
            let rows = sweep_detection(&cfg, &placements)?;
            let dir = out_dir(&cfg, out, &config);
            write_detection(&dir, &rows)?;
            println!("n_c d n_a same_group tpr% fpr%");
            for r in &rows {
                println!(
                    "{} {} {} {} {} {}",
                    r.clients,
                    r.d,
                    r.attackers,
                    r.same_group,
                    r.tpr_percent(),
                    r.fpr_percent()
                );
            }
        }
        Command::SweepTpr { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = &cfg.sweep;
            let cells = sweep_tpr_surface(&cfg, &s.change_sizes, &s.counts, &s.seeds)?;
            let dir = out_dir(&cfg, out, &config);
            write_tpr_surface(&dir, &cells)?;
            for c in &cells {
                println!(
                    "change={} count={} tpr={:.3}",
                    c.change_size, c.count, c.tpr
                );
            }
        }
        Command::Serve {
            listen,
            config,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = prepare(&cfg)?;
            let listener = TcpListener::bind(listen)?;
            log::info!("listening on {}", listener.local_addr()?);
            let served = serve_tcp(listener, setup.server(&cfg), &TcpOptions::from(cfg.tcp))?;
            let history = served.server.history().to_vec();
            let (metrics, summary) =
                summarize(&cfg, &setup, &history, &served.counters, TransportKind::Tcp)?;
            let outcome = ExperimentOutcome {
                metrics,
                summary,
                history,
                counters: served.counters,
                transcript: None,
            };
            let dir = out_dir(&cfg, out, &config);
            write_outputs(&outcome, &dir)?;
            report(&outcome, &dir);
        }
        Command::Client {
            connect,
            id,
            config,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = prepare(&cfg)?;
            let client = connect_tcp(connect, setup.client(&cfg, id)?, &TcpOptions::from(cfg.tcp))?;
            println!(
                "client {id} finished at round {}",
                client.round().min(cfg.rounds)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
