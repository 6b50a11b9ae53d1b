//! Command implementations behind the `fgq` binary. Each `cmd_*` takes a
//! resolved [`RunConfig`] and returns a serializable report.

pub mod analyze;
pub mod config;
pub mod perf;
pub mod simulate;
pub mod synth;
pub mod ternarize;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use fgq::io::load_npy;
use fgq::WeightTensor;

pub use analyze::{cmd_analyze, AnalyzeReport};
pub use config::{Command, Flags, ReportFormat, RunConfig, UsageError};
pub use perf::{cmd_perf, PerfReport};
pub use simulate::{cmd_simulate, SimulateReport};
pub use synth::{cmd_synth, SynthReport};
pub use ternarize::{cmd_ternarize, TernarizeReport};

/// Expands directories to the `.npy` files they contain, sorted by name.
pub fn weight_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|e| e == "npy") && !is_activation_file(f));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn is_activation_file(p: &Path) -> bool {
    p.file_stem().is_some_and(|s| s == "activations")
}

/// Loads every weight file, naming each layer after its file stem.
pub fn load_weights(paths: &[PathBuf]) -> Result<Vec<(String, WeightTensor<f64>)>> {
    weight_files(paths)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let name = f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("layer{i}"));
            let w = load_npy(&f).with_context(|| format!("layer {i} ({})", f.display()))?;
            Ok((name, w))
        })
        .collect()
}

pub(crate) fn csv_line(fields: &[String]) -> String {
    let mut line = fields
        .iter()
        .map(|f| {
            if f.contains([',', '"', '\n']) {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

/// Pretty JSON with a trailing newline. Non-finite numbers become `null`.
pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

/// A report from any subcommand.
#[derive(Debug, Clone)]
pub enum Report {
    Analyze(AnalyzeReport),
    Ternarize(TernarizeReport),
    Simulate(SimulateReport),
    Perf(PerfReport),
    Synth(SynthReport),
}

impl Report {
    pub fn render(&self, format: ReportFormat) -> String {
        match (self, format) {
            (Report::Analyze(r), ReportFormat::Csv) => r.to_csv(),
            (Report::Ternarize(r), ReportFormat::Csv) => r.to_csv(),
            (Report::Simulate(r), ReportFormat::Csv) => r.to_csv(),
            (Report::Perf(r), ReportFormat::Csv) => r.to_csv(),
            (Report::Analyze(r), _) => to_json(r),
            (Report::Ternarize(r), _) => to_json(r),
            (Report::Simulate(r), _) => to_json(r),
            (Report::Perf(r), _) => to_json(r),
            (Report::Synth(r), _) => to_json(r),
        }
    }
}

/// Runs one command. Reports from `analyze` and `perf` go to `--out` when
/// it is set; the other commands use `--out` for their artifact.
pub fn run(cfg: &RunConfig) -> Result<Option<String>> {
    let report = match cfg.command {
        Command::Analyze => Report::Analyze(cmd_analyze(cfg)?),
        Command::Ternarize => Report::Ternarize(cmd_ternarize(cfg)?),
        Command::Simulate => Report::Simulate(cmd_simulate(cfg)?),
        Command::Perf => Report::Perf(cmd_perf(cfg)?),
        Command::Synth => Report::Synth(cmd_synth(cfg)?),
    };
    let text = report.render(cfg.report);
    match (cfg.command, &cfg.out) {
        (Command::Analyze | Command::Perf, Some(out)) => {
            std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
            Ok(None)
        }
        _ => Ok(Some(text)),
    }
}
