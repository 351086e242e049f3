use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RunMetrics, Scenario, SweepAxis, SweepTable};
use crate::error::{Result, SimError};
use crate::xapps::{Mode, TraceRecord};

pub const MANIFEST_SCHEMA: u32 = 1;
/// Bumped whenever a CSV column is added, removed or reinterpreted.
pub const RUN_CSV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub slot: u64,
    pub throughput_bps: f64,
    pub reward: f64,
    pub cumulative_pdr: f64,
}

#[derive(Debug, Serialize)]
struct RunSummaryRow<'a> {
    mode: Mode,
    seed: u64,
    n_slots: u64,
    tail_throughput_bps: f64,
    pdr_final: f64,
    env_trace_hash: &'a str,
}

#[derive(Debug, Serialize)]
struct GainRow {
    value: f64,
    seed: u64,
    relative_gain: f64,
    throughput_diff_bps: f64,
    pdr_diff: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OutputFile {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    schema: u32,
    csv_schema: u32,
    generator: String,
    kind: &'static str,
    scenario: &'a Scenario,
    outputs: Vec<OutputFile>,
}

#[derive(Debug, Serialize)]
struct SweepManifest<'a> {
    schema: u32,
    csv_schema: u32,
    generator: String,
    kind: &'static str,
    axis: SweepAxis,
    values: &'a [f64],
    seeds: &'a [u64],
    base: &'a Scenario,
    outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub series_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub sweep_csv: PathBuf,
    pub gains_csv: PathBuf,
    pub manifest: PathBuf,
}

fn generator() -> String {
    format!("teamlearn {}", env!("CARGO_PKG_VERSION"))
}

fn digest(path: &Path) -> Result<OutputFile> {
    let bytes = fs::read(path)?;
    Ok(OutputFile {
        file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| SimError::Serialize(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes `run.csv`, `summary.csv` and `manifest.toml` into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, m: &RunMetrics) -> Result<RunArtifacts> {
    fs::create_dir_all(dir)?;
    let series_csv = dir.join("run.csv");
    let summary_csv = dir.join("summary.csv");
    let manifest = dir.join("manifest.toml");
    write_csv(
        &series_csv,
        (0..m.throughput_series.len()).map(|t| RunRow {
            slot: t as u64,
            throughput_bps: m.throughput_series[t],
            reward: m.reward_series[t],
            cumulative_pdr: m.pdr_series[t],
        }),
    )?;
    write_csv(
        &summary_csv,
        [RunSummaryRow {
            mode: scenario.mode,
            seed: scenario.seed,
            n_slots: scenario.n_slots,
            tail_throughput_bps: m.throughput_tail_mean,
            pdr_final: m.pdr_final,
            env_trace_hash: &m.env_trace_hash,
        }],
    )?;
    write_manifest(
        &manifest,
        &RunManifest {
            schema: MANIFEST_SCHEMA,
            csv_schema: RUN_CSV_SCHEMA,
            generator: generator(),
            kind: "run",
            scenario,
            outputs: vec![digest(&series_csv)?, digest(&summary_csv)?],
        },
    )?;
    Ok(RunArtifacts {
        series_csv,
        summary_csv,
        manifest,
    })
}

pub fn read_run_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Writes `sweep.csv`, `paired_gain.csv` and `manifest.toml` into `dir`.
pub fn write_sweep(
    dir: &Path,
    base: &Scenario,
    values: &[f64],
    seeds: &[u64],
    table: &SweepTable,
) -> Result<SweepArtifacts> {
    fs::create_dir_all(dir)?;
    let sweep_csv = dir.join("sweep.csv");
    let gains_csv = dir.join("paired_gain.csv");
    let manifest = dir.join("manifest.toml");
    write_csv(&sweep_csv, &table.rows)?;
    write_csv(
        &gains_csv,
        table.gains.iter().map(|g| GainRow {
            value: g.value,
            seed: g.seed,
            relative_gain: g.relative_gain,
            throughput_diff_bps: g.throughput_diff,
            pdr_diff: g.pdr_diff,
        }),
    )?;
    write_manifest(
        &manifest,
        &SweepManifest {
            schema: MANIFEST_SCHEMA,
            csv_schema: RUN_CSV_SCHEMA,
            generator: generator(),
            kind: "sweep",
            axis: table.axis,
            values,
            seeds,
            base,
            outputs: vec![digest(&sweep_csv)?, digest(&gains_csv)?],
        },
    )?;
    Ok(SweepArtifacts {
        sweep_csv,
        gains_csv,
        manifest,
    })
}

/// One JSON object per line.
pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| SimError::Serialize(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
