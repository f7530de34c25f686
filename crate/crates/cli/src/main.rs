use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nht_cli::{output, run, Config, Suite};

#[derive(Parser)]
#[command(name = "nht", about = "Numerical checks of the local Tb machinery on discrete measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration; defaults throughout when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials of the pairing scenario.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Directory for the JSON report and CSV tables; the report goes to stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict `all` to these suites (repeatable).
    #[arg(long, global = true, value_enum)]
    suite: Vec<Suite>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    VerifyKernel,
    Growth,
    Stopping,
    Martingale,
    McGoodbad,
    Surgery,
    Pairing,
    All,
}

impl Command {
    fn suite(self) -> Option<Suite> {
        Some(match self {
            Command::VerifyKernel => Suite::VerifyKernel,
            Command::Growth => Suite::Growth,
            Command::Stopping => Suite::Stopping,
            Command::Martingale => Suite::Martingale,
            Command::McGoodbad => Suite::McGoodbad,
            Command::Surgery => Suite::Surgery,
            Command::Pairing => Suite::Pairing,
            Command::All => return None,
        })
    }
}

fn threads() -> Result<()> {
    let Ok(v) = std::env::var("NHT_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("NHT_THREADS={v}"))?;
    if n == 0 {
        bail!("NHT_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main_inner(cli: Cli) -> Result<bool> {
    threads()?;
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply(cli.seed, cli.trials);
    let suites = match cli.command.suite() {
        Some(s) => {
            if cli.suite.iter().any(|&x| x != s) {
                bail!("--suite only selects suites under `all`");
            }
            vec![s]
        }
        None if cli.suite.is_empty() => Suite::ALL.to_vec(),
        None => {
            let mut s = cli.suite.clone();
            s.sort();
            s.dedup();
            s
        }
    };
    let name = match cli.command.suite() {
        Some(s) => s.name(),
        None => "all",
    };
    let report = run(name, &cfg, &suites)?;
    let json = output::to_json(&report)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            std::fs::write(dir.join(format!("{name}.json")), &json)?;
            for t in report.suites.iter().flat_map(|o| &o.tables) {
                std::fs::write(dir.join(&t.file), &t.content)?;
            }
        }
        None => print!("{json}"),
    }
    for line in report.summary_lines() {
        eprintln!("{line}");
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
