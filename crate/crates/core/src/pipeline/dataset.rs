//! JSON Lines dataset IO and CSV report writers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::trajectory::TaskRecord;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads one `TaskRecord` per line. Line numbers in errors are 1-based.
pub fn read_task_records(path: &Path) -> Result<Vec<TaskRecord>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::BadRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_task_records(path: &Path, records: &[TaskRecord]) -> Result<(), DatasetError> {
    let mut file =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?);
    for record in records {
        serde_json::to_writer(&mut file, record)
            .map_err(|e| io_err(path, std::io::Error::from(e)))?;
        file.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    file.flush().map_err(|e| io_err(path, e))
}

/// Writes a metric report as `metric,dataset,value` rows.
pub fn write_metric_csv(
    path: &Path,
    dataset_name: &str,
    metrics: &[(&str, f64)],
) -> Result<(), DatasetError> {
    let mut out = String::from("metric,dataset,value\n");
    for (name, value) in metrics {
        out.push_str(&format!("{name},{dataset_name},{value}\n"));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes the per-round training curve as plot-ready CSV.
pub fn write_training_csv(
    path: &Path,
    rows: &[crate::policy::RoundReport],
) -> Result<(), DatasetError> {
    let mut out = String::from("round,mean_reward,mean_tool_calls,accuracy,effi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.round, r.mean_reward, r.mean_tool_calls, r.accuracy, r.effi
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes a group-stats table as `question_id,s_corr,s_tool` rows.
pub fn write_stats_csv(path: &Path, stats: &[crate::pareto::GroupStats]) -> Result<(), DatasetError> {
    let mut out = String::from("question_id,s_corr,s_tool\n");
    for s in stats {
        out.push_str(&format!("{},{},{}\n", s.question_id, s.s_corr, s.s_tool));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a group-stats table written by [`write_stats_csv`].
pub fn read_stats_csv(path: &Path) -> Result<Vec<crate::pareto::GroupStats>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut stats = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let parse = |j: usize| -> Result<f64, DatasetError> {
            parts
                .get(j)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| DatasetError::BadRecord {
                    line: i + 1,
                    message: format!("expected question_id,s_corr,s_tool, got {line:?}"),
                })
        };
        if parts.len() != 3 {
            return Err(DatasetError::BadRecord {
                line: i + 1,
                message: format!("expected 3 columns, got {}", parts.len()),
            });
        }
        stats.push(crate::pareto::GroupStats {
            question_id: parts[0].trim().to_string(),
            s_corr: parse(1)?,
            s_tool: parse(2)?,
            k: 0,
        });
    }
    Ok(stats)
}
