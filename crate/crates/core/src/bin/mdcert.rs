use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdcert::app::{cmd_certify, cmd_plotdata, cmd_verify, Config};

#[derive(Parser)]
#[command(
    name = "mdcert",
    version,
    about = "Certify and check moderate-deviation constants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count (overrides the config).
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the certification pipeline and write certify.json and summary.txt.
    Certify(Common),
    /// Run the configured checks and write report.json and report.csv.
    Verify(Common),
    /// Turn a finished run directory into plot-ready CSV curves.
    Plotdata {
        /// Directory written by `certify` or `verify`.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the curves; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> mdcert::Result<Config> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.samples {
        cfg.override_samples(n);
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if cfg.threads > 0 {
        // only fails if a global pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> mdcert::Result<bool> {
    match cli.command {
        Command::Certify(common) => {
            let cfg = load(&common)?;
            let outcome = cmd_certify(&cfg)?;
            print!("{}", outcome.summary());
            Ok(true)
        }
        Command::Verify(common) => {
            let cfg = load(&common)?;
            let out = cmd_verify(&cfg)?;
            let report = &out.report;
            for anchor in &out.anchors {
                let rows: Vec<_> = report.rows.iter().filter(|r| &r.anchor == anchor).collect();
                let failed = rows.iter().filter(|r| !r.pass).count();
                let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
                println!(
                    "{anchor}: {} rows, {failed} failed, min slack {min_slack}",
                    rows.len()
                );
            }
            println!("refused (outside window): {}", report.refused);
            for r in report.failures() {
                println!(
                    "FAIL {} {} lambda={} lhs={} rhs={}",
                    r.anchor, r.instance, r.lambda, r.lhs, r.rhs
                );
            }
            Ok(report.all_pass())
        }
        Command::Plotdata { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            for p in cmd_plotdata(&run, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
