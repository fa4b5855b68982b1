//! `hacl`: run, sweep, resume and report curriculum experiments.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for a
//! numeric failure during a run, 1 for anything else (I/O, corrupt
//! checkpoints).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hacl::harness::report::{self, render_table, write_summary_csv};
use hacl::harness::sweep::{self as sweeps, SweepOptions};
use hacl::harness::ExperimentConfig;
use hacl::metrics::RunSummary;
use hacl::Error;

#[derive(Parser)]
#[command(name = "hacl", version, about = "History-aware curriculum learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single seed.
    Run(RunArgs),
    /// Run every configured method against every configured seed.
    Sweep(SweepArgs),
    /// Continue a run from a checkpoint file.
    Resume(ResumeArgs),
    /// Summarize a sweep's summary.csv into a comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Episodes per run; overrides `run.budget`.
    #[arg(long)]
    budget: Option<u64>,
    /// Checkpoint period in episodes (0 disables); overrides `run.checkpoint_every`.
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Root seed; defaults to the first entry of `run.seeds`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Sweep this single seed instead of `run.seeds`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run the (method, seed) pairs one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ResumeArgs {
    /// Checkpoint written by `run` or `sweep`.
    checkpoint: PathBuf,
    /// New total episode count (at least the checkpointed episode).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// A sweep output directory or a summary.csv path.
    input: PathBuf,
}

fn load_config(c: &Common) -> hacl::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(b) = c.budget {
        cfg.budget = b;
    }
    if let Some(e) = c.checkpoint_every {
        cfg.checkpoint_every = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &RunSummary) {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} seed={} episodes={} episodes_to_90={} v_max_x={:.2} v_cap={} success={:.3} regret={:.3} cot={} stability={}",
        s.method,
        s.seed,
        s.episodes,
        s.episodes_to_90.map_or("-".to_string(), |e| e.to_string()),
        s.final_v_max[0],
        opt(s.final_v_cap),
        s.success.rate,
        s.cumulative_regret,
        opt(s.mean_cot),
        opt(s.stability),
    );
}

fn run(args: RunArgs) -> hacl::Result<()> {
    let cfg = load_config(&args.common)?;
    let seed = match args.seed {
        Some(s) => s,
        None => *cfg
            .seeds
            .first()
            .ok_or_else(|| Error::Config {
                path: "run.seeds".into(),
                message: "empty; pass --seed".into(),
            })?,
    };
    let out = &args.common.out;
    let summary = sweeps::run_to_dir(&cfg, seed, out)?;
    write_summary_csv(&out.join("summary.csv"), std::slice::from_ref(&summary))?;
    print_summary(&summary);
    Ok(())
}

fn sweep(args: SweepArgs) -> hacl::Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    let runs = sweeps::sweep(
        &cfg,
        &SweepOptions {
            out: Some(args.common.out.clone()),
            parallel: !args.sequential,
        },
    )?;
    for r in &runs {
        print_summary(&r.summary);
    }
    print!("{}", render_table(&sweeps::compare(&runs)?));
    Ok(())
}

fn resume(args: ResumeArgs) -> hacl::Result<()> {
    let summary = sweeps::resume(&args.checkpoint, args.budget, args.checkpoint_every)?;
    print_summary(&summary);
    Ok(())
}

fn report_cmd(args: ReportArgs) -> hacl::Result<()> {
    let (_, table) = report::report(Path::new(&args.input))?;
    print!("{table}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Numeric { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => run(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Resume(a) => resume(a),
        Cmd::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
