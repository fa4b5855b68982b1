//! Running experiments to disk: single runs, resumable runs and sweeps.
//!
//! File layout under the output directory, with `<stem>` = `<label>_seed<seed>`:
//!
//! - `<stem>.jsonl`: one [`RunRecord`] per episode
//! - `<stem>.ckpt`: latest checkpoint (only when `run.checkpoint_every > 0`)
//! - `<stem>.summary.json`: the run's [`RunSummary`]
//! - `summary.csv`: one row per run
//! - `comparison.csv`: per-method medians (sweeps only)

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::checkpoint;
use super::config::{ExperimentConfig, Method};
use super::experiment::{Experiment, RunRecord};
use super::report::{comparison_rows, write_comparison, write_summary_csv};
use crate::error::{Error, Result};
use crate::metrics::RunSummary;
use crate::par;

pub fn run_stem(config: &ExperimentConfig, seed: u64) -> String {
    format!("{}_seed{seed}", sanitize(&config.run_label()))
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn write_record(w: &mut impl Write, rec: &RunRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, rec).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_summary_json(path: &Path, s: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(s).map_err(|e| Error::Io(e.into()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Drive `exp` to its budget, appending records to `jsonl` and
/// checkpointing every `checkpoint_every` episodes and at the end.
fn drive(exp: &mut Experiment, out: &Path, stem: &str, jsonl: File) -> Result<RunSummary> {
    let every = exp.config().checkpoint_every;
    let ckpt = out.join(format!("{stem}.ckpt"));
    let records = format!("{stem}.jsonl");
    let mut w = BufWriter::new(jsonl);
    let summary = exp.run_with(|e, rec| {
        write_record(&mut w, rec)?;
        if every > 0 && e.episode() % every == 0 {
            w.flush()?;
            checkpoint::save(&ckpt, e, Some(&records))?;
        }
        Ok(())
    })?;
    w.flush()?;
    if every > 0 {
        checkpoint::save(&ckpt, exp, Some(&records))?;
    }
    write_summary_json(&out.join(format!("{stem}.summary.json")), &summary)?;
    Ok(summary)
}

/// Run one seed, writing its files under `out`.
pub fn run_to_dir(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let stem = run_stem(config, seed);
    let mut exp = Experiment::new(config.clone(), seed)?;
    let jsonl = File::create(out.join(format!("{stem}.jsonl")))?;
    drive(&mut exp, out, &stem, jsonl)
}

/// Continue a run from its checkpoint. The JSONL next to the checkpoint is
/// cut back to the checkpointed episode and extended, so the finished file
/// matches an uninterrupted run. `budget` raises the total episode count.
pub fn resume(ckpt: &Path, budget: Option<u64>, checkpoint_every: Option<u64>) -> Result<RunSummary> {
    let restored = checkpoint::load(ckpt)?;
    let mut exp = restored.experiment;
    if let Some(every) = checkpoint_every {
        exp.set_checkpoint_every(every);
    }
    if let Some(b) = budget {
        if b < exp.episode() {
            return Err(Error::config(
                "--budget",
                format!("{b} is below the checkpointed episode {}", exp.episode()),
            ));
        }
        exp.set_budget(b)?;
    }
    let out = ckpt.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let stem = run_stem(exp.config(), exp.seed());
    let records = restored.records.unwrap_or_else(|| format!("{stem}.jsonl"));
    let path = out.join(&records);
    truncate_lines(&path, exp.episode())?;
    let jsonl = OpenOptions::new().append(true).open(&path)?;
    drive(&mut exp, &out, &stem, jsonl)
}

/// Keep the first `n` lines of `path`, which must have at least that many.
fn truncate_lines(path: &Path, n: u64) -> Result<()> {
    if !path.exists() {
        if n == 0 {
            File::create(path)?;
            return Ok(());
        }
        return Err(Error::Argument(format!("{} is missing", path.display())));
    }
    let mut reader = BufReader::new(File::open(path)?);
    let mut keep = 0u64;
    let mut line = Vec::new();
    for i in 0..n {
        line.clear();
        let read = reader.read_until(b'\n', &mut line)?;
        if read == 0 || line.last() != Some(&b'\n') {
            return Err(Error::Argument(format!(
                "{} has {i} complete records, checkpoint is at episode {n}",
                path.display()
            )));
        }
        keep += read as u64;
    }
    OpenOptions::new().write(true).open(path)?.set_len(keep)?;
    Ok(())
}

/// One finished run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub method: Method,
    pub config: ExperimentConfig,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Write per-run files and CSVs here; `None` keeps everything in memory.
    pub out: Option<PathBuf>,
    /// Run (method, seed) pairs on the thread pool.
    pub parallel: bool,
}

/// Every method in `sweep.methods` against every seed in `run.seeds`.
pub fn sweep(config: &ExperimentConfig, opts: &SweepOptions) -> Result<Vec<SweepRun>> {
    config.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::config("run.seeds", "a sweep needs at least one seed"));
    }
    if let Some(out) = &opts.out {
        fs::create_dir_all(out)?;
    }
    let jobs: Vec<(Method, ExperimentConfig, u64)> = config
        .sweep_methods()
        .into_iter()
        .flat_map(|m| {
            let mut c = config.with_method(m);
            c.name = None;
            config.seeds.iter().map(move |&s| (m, c.clone(), s)).collect::<Vec<_>>()
        })
        .collect();
    let one = |(m, c, s): &(Method, ExperimentConfig, u64)| -> Result<SweepRun> {
        let summary = match &opts.out {
            Some(out) => run_to_dir(c, *s, out)?,
            None => Experiment::new(c.clone(), *s)?.run_with(|_, _| Ok(()))?,
        };
        Ok(SweepRun {
            method: *m,
            config: c.clone(),
            summary,
        })
    };
    let runs: Vec<SweepRun> = if opts.parallel {
        par::map_slice(&jobs, one)
    } else {
        par::map_slice_sequential(&jobs, one)
    }
    .into_iter()
    .collect::<Result<_>>()?;

    if let Some(out) = &opts.out {
        let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
        write_summary_csv(&out.join("summary.csv"), &summaries)?;
        write_comparison(&out.join("comparison.csv"), &compare(&runs)?)?;
    }
    Ok(runs)
}

/// Per-method aggregates. Refuses to mix runs whose settings differ in
/// anything other than the method.
pub fn compare(runs: &[SweepRun]) -> Result<Vec<super::report::ComparisonRow>> {
    if let Some(first) = runs.first() {
        if let Some(bad) = runs.iter().find(|r| !r.config.same_setting(&first.config)) {
            return Err(Error::Argument(format!(
                "run `{}` seed {} was produced under a different setting",
                bad.summary.method, bad.summary.seed
            )));
        }
    }
    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    Ok(comparison_rows(&summaries))
}
