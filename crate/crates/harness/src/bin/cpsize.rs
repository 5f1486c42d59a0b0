use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use cpsize_harness::{evaluate, records, render_report, run_sweep, run_trial, BoundRequest, ExperimentConfig, GridPoint};

#[derive(Parser)]
#[command(name = "cpsize", version, about = "Conformal prediction set-size experiments and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs all trials at one grid point (the first of each grid unless overridden).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_tr: Option<usize>,
        #[arg(long)]
        n_cal: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Runs the full grid; resumes from completed grid points in the output directory.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluates a bound from a JSON request (file or stdin) and prints the result as JSON.
    Bound {
        /// Request file; reads stdin when absent.
        #[arg(long)]
        query: Option<PathBuf>,
    },
    /// Renders SVG and markdown from a records CSV.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "Normalized set size vs 1 - alpha")]
        title: String,
    },
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            common,
            n_tr,
            n_cal,
            alpha,
        } => {
            let cfg = common.load()?;
            let alpha_index = match alpha {
                Some(a) => cfg.alpha.iter().position(|&x| x == a).unwrap_or(cfg.alpha.len()),
                None => 0,
            };
            let point = GridPoint {
                n_tr: n_tr.unwrap_or(cfg.n_tr[0]),
                n_cal: n_cal.unwrap_or(cfg.n_cal[0]),
                alpha: alpha.unwrap_or(cfg.alpha[0]),
                alpha_index,
            };
            if point.n_tr > cfg.max_n_tr() || point.n_cal > cfg.max_n_cal() {
                bail!("n_tr and n_cal may not exceed the largest grid values");
            }
            let recs = (0..cfg.n_trials)
                .map(|t| run_trial(&cfg, &point, t))
                .collect::<Result<Vec<_>, _>>()?;
            let path = cfg.out_dir.join("simulate.csv");
            records::write_records_atomic(&path, &recs)?;
            print!("{}", String::from_utf8(records::records_to_csv(&recs)?)?);
            log::info!("wrote {}", path.display());
        }
        Command::Sweep { common } => {
            let cfg = common.load()?;
            let out = run_sweep(&cfg)?;
            println!(
                "{} records ({} grid points computed) -> {}",
                out.records.len(),
                out.computed.len(),
                out.records_path.display()
            );
        }
        Command::Bound { query } => {
            let text = match query {
                Some(p) => std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                None => {
                    let mut s = String::new();
                    std::io::stdin().read_to_string(&mut s)?;
                    s
                }
            };
            let req: BoundRequest = serde_json::from_str(&text).context("parsing bound request")?;
            println!("{}", serde_json::to_string_pretty(&evaluate(&req)?)?);
        }
        Command::Report { records, out, title } => {
            let files = render_report(&records, &out, &title)?;
            println!("{}\n{}", files.svg.display(), files.markdown.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
