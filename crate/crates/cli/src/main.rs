use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use h1gap::config::{ExperimentConfig, Overrides};
use h1gap::report::{cmd_construct, cmd_diagnose, cmd_oracle, cmd_simulate, cmd_verify};
use h1gap::verify::{Fault, VerifyConfig};
use h1gap::Error;

#[derive(Parser)]
#[command(name = "h1gap", version, about = "Uniformly integrable martingales that are not in H^1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        ExperimentConfig::resolve(
            self.config.as_deref(),
            &Overrides {
                seed: self.seed,
                paths: self.paths,
                out: self.out.clone(),
                workers: self.workers,
            },
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    MiscodedC0,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the raw model and write per-path summaries.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write every path point to paths.csv.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Apply the stopping construction and write the stopped ensemble.
    Construct {
        #[command(flatten)]
        common: Common,
    },
    /// Write tail, series, UI and truncated-norm reports.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance battery; exit status 1 if any criterion fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// 10^4 paths with widened tolerances.
        #[arg(long)]
        quick: bool,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Print exact values: sup_tail, c, y_pmf, stopped_tail, divergence_bound, enumeration.
    Oracle {
        model: String,
        query: String,
        args: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate { common, dump_paths } => {
            let cfg = common.resolve()?;
            cmd_simulate(&cfg, dump_paths)?;
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Construct { common } => {
            let cfg = common.resolve()?;
            cmd_construct(&cfg)?;
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Diagnose { common } => {
            let cfg = common.resolve()?;
            cmd_diagnose(&cfg)?;
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Verify {
            common,
            quick,
            inject_fault,
        } => {
            let base = common.resolve()?;
            let mut vcfg = VerifyConfig::new(base.master_seed, quick);
            vcfg.workers = base.workers;
            if let Some(n) = common.paths {
                vcfg.n_paths = n;
            }
            vcfg.fault = inject_fault.map(|FaultArg::MiscodedC0| Fault::MiscodedC0);
            let out = common.out.clone().unwrap_or_else(|| base.out_dir.clone());
            let report = cmd_verify(&vcfg, &out)?;
            print!("{}", report.render());
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Oracle { model, query, args } => {
            print!("{}", cmd_oracle(&model, &query, &args)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(64),
                Error::Config { .. } | Error::Json(_) => ExitCode::from(78),
                Error::Io(_) => ExitCode::from(74),
                _ => ExitCode::from(2),
            }
        }
    }
}
