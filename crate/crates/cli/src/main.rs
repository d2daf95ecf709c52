use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use microfrac::app;
use microfrac::config::{parse_config, Backend, RunConfig};

#[derive(Parser)]
#[command(name = "microfrac", version, about = "Fracture energies on periodically microfractured bodies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to output_dir of the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// discrete or phasefield.
    #[arg(long)]
    backend: Option<Backend>,
    /// Fill the wall_time_ms column.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print N(ε) and the coverage ratio.
    Lattice {
        #[arg(long)]
        config: PathBuf,
    },
    /// One (ε, l) run: results.csv, damage.svg, manifest.toml.
    Solve(Common),
    /// Every (ε, l) pair of the configuration.
    Sweep(Common),
    /// Greedy run checked against the exhaustive oracle.
    Oracle(Common),
    /// Redraw the figures of a manifest.
    Render {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &PathBuf) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_config(&text)?)
}

fn configured(common: &Common) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut cfg = load(&common.config)?;
    if let Some(b) = common.backend {
        cfg.backend = b;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn report(outcome: &app::Outcome) -> bool {
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for r in &outcome.rows {
        println!(
            "epsilon={} l={} achieved={} M={} chain={}{}",
            r.epsilon,
            r.l,
            r.achieved_total,
            r.m_count(),
            if r.chain_pass() { "pass" } else { "FAIL" },
            r.delta_certificate.map(|d| format!(" delta={d}")).unwrap_or_default()
        );
    }
    outcome.ok
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Lattice { config } => {
            print!("{}", app::lattice_report(&load(&config)?)?);
            Ok(true)
        }
        Command::Solve(c) => {
            let (cfg, out) = configured(&c)?;
            Ok(report(&app::solve(&cfg, &out, c.timing, false)?))
        }
        Command::Oracle(c) => {
            let (cfg, out) = configured(&c)?;
            Ok(report(&app::solve(&cfg, &out, c.timing, true)?))
        }
        Command::Sweep(c) => {
            let (cfg, out) = configured(&c)?;
            Ok(report(&app::sweep(&cfg, &out, cfg.workers, c.timing)?))
        }
        Command::Render { manifest, out } => {
            let text = fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
            for f in app::render(&text, &out)? {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("microfrac: a run did not converge or a chain check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("microfrac: {e:#}");
            ExitCode::from(2)
        }
    }
}
