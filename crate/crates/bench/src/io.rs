//! CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fbf_core::diagnostics::TraceRow;
use fbf_core::flow::Trajectory;
use serde::Serialize;

use crate::Result;

pub const TRACE_HEADER: &str = "iter,lambda,rho,residual,dist_ref,step_norm,f_evals,proj_calls,elapsed_ns";

pub fn trace_path(prefix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_trace.csv"))
}

pub fn report_path(prefix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_report.json"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_trace_to<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(TRACE_HEADER.split(','))?;
    for row in trace {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_trace_to(create(path)?, trace)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(crate::BenchError::Config(format!(
            "{} does not start with the trace header",
            path.display()
        )));
    }
    reader.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// Writes `t, x_1..x_n, dist_ref, gap`, one row per sample.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    let n = traj.states.first().map_or(0, |x| x.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(["dist_ref".to_string(), "gap".to_string()]);
    writer.write_record(&header)?;
    let dist = traj.dist_ref();
    for (((t, x), d), gap) in traj.times.iter().zip(&traj.states).zip(&dist).zip(&traj.gap) {
        let mut record = vec![t.to_string()];
        record.extend(x.iter().map(f64::to_string));
        record.push(d.to_string());
        record.push(gap.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Writes rows of an arbitrary serializable record type with headers.
pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Replaces the `elapsed_ns` column with a fixed value so traces can be
/// compared byte for byte.
pub fn strip_elapsed(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|line| match line.rsplit_once(',') {
            Some((head, _)) => format!("{head},-"),
            None => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn nan_round_trips() {
        let row = TraceRow {
            iter: 3,
            lambda: 0.1,
            rho: 1.0,
            residual: 1e-300,
            dist_ref: f64::NAN,
            step_norm: 0.3,
            f_evals: 8,
            proj_calls: 4,
            elapsed_ns: 12,
        };
        let dir = std::env::temp_dir().join(format!("fbf-io-{}", std::process::id()));
        let path = dir.join("t_trace.csv");
        write_trace(&path, &[row]).unwrap();
        let back = read_trace(&path).unwrap();
        assert!(back[0].same_numbers(&row));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
