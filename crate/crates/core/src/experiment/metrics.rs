//! Line-oriented metrics: one JSON object per generation.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_SCHEMA: &str = "coegan.metrics/1";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMetrics {
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub mean_layers: f64,
    pub mean_gene_reuse: f64,
    pub species: usize,
    /// Speciation threshold in effect this generation.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based generation index.
    pub generation: usize,
    pub generator: PopulationMetrics,
    pub discriminator: PopulationMetrics,
    pub best_fid: f64,
    pub rmse: f64,
    pub classifier_score: Option<f64>,
    pub mode_coverage: Option<usize>,
    pub mean_d_loss: f64,
    pub mean_g_loss: f64,
    pub bouts: usize,
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    schema: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub generation: usize,
    pub seconds: f64,
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string(value).expect("metrics serialize");
    writeln!(file, "{text}").map_err(|e| Error::io(path, e))
}

/// Appends one record to `out_dir/metrics.jsonl`.
pub fn persist_metrics(record: &MetricsRecord, out_dir: &Path) -> Result<()> {
    append_line(
        &out_dir.join(METRICS_FILE),
        &Line {
            schema: METRICS_SCHEMA.to_string(),
            body: record,
        },
    )
}

/// Wall-clock time is kept apart from the metrics so equal runs give equal metrics files.
pub fn persist_timing(timing: &Timing, out_dir: &Path) -> Result<()> {
    append_line(&out_dir.join(TIMINGS_FILE), timing)
}

pub fn read_metrics(out_dir: &Path) -> Result<Vec<MetricsRecord>> {
    let path = out_dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut offset = 0u64;
    let mut records = Vec::new();
    for line in text.lines() {
        let parsed: Line<MetricsRecord> = serde_json::from_str(line).map_err(|e| Error::Format {
            offset,
            message: format!("{}: {e}", path.display()),
        })?;
        if parsed.schema != METRICS_SCHEMA {
            return Err(Error::Format {
                offset,
                message: format!("{}: unsupported schema `{}`", path.display(), parsed.schema),
            });
        }
        records.push(parsed.body);
        offset += line.len() as u64 + 1;
    }
    Ok(records)
}

/// Keeps only the first `generations` lines of a metrics-style file.
pub fn truncate_lines(path: &Path, generations: usize) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let kept: String = text.lines().take(generations).map(|l| format!("{l}\n")).collect();
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}_{k}") };
                flatten(&key, v, out);
            }
        }
        serde_json::Value::Null => {
            out.insert(prefix.to_string(), "nan".to_string());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Writes one `generation value` column file per metric into `run_dir/plots`.
pub fn export_metrics(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_metrics(run_dir)?;
    let mut columns: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for record in &records {
        let value = serde_json::to_value(record).expect("metrics serialize");
        let mut flat = BTreeMap::new();
        flatten("", &value, &mut flat);
        for (key, v) in flat {
            if key != "generation" {
                columns.entry(key).or_default().push((record.generation, v));
            }
        }
    }
    let dir = run_dir.join("plots");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    for (key, rows) in columns {
        let path = dir.join(format!("{key}.dat"));
        let mut text = format!("# generation {key}\n");
        for (generation, value) in rows {
            text.push_str(&format!("{generation} {value}\n"));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
