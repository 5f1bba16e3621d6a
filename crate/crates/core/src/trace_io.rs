//! Stable on-disk trace layout: a CSV with one row per recorded instant and
//! a JSON sidecar carrying the discrete data (events, configuration echo,
//! the resolved optimum).
//!
//! CSV columns: `time`, `y{i}_{k}` for agent `i` and output coordinate `k`,
//! `error`, and `lyapunov` (empty when the series was not recorded).

use std::path::Path;

use serde::Serialize;

use crate::scenario::ScenarioFile;
use crate::sim::SimulationTrace;
use crate::Result;

/// Write the time-series portion of a trace as CSV.
pub fn write_csv<W: std::io::Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = trace.outputs[0].len();
    let q = trace.outputs[0][0].len();

    let mut header = vec!["time".to_string()];
    for i in 0..n {
        for k in 0..q {
            header.push(format!("y{i}_{k}"));
        }
    }
    header.push("error".into());
    header.push("lyapunov".into());
    w.write_record(&header).map_err(io_err)?;

    for (s, &t) in trace.times.iter().enumerate() {
        let mut row = vec![format!("{t:.6}")];
        for i in 0..n {
            for k in 0..q {
                row.push(format!("{:.12e}", trace.outputs[s][i][k]));
            }
        }
        row.push(format!("{:.12e}", trace.error[s]));
        row.push(match &trace.lyapunov {
            Some(v) => format!("{:.12e}", v[s]),
            None => String::new(),
        });
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

/// Sidecar document: everything a plotting or re-run script needs besides
/// the CSV.
#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub scheme: String,
    pub delta: f64,
    pub dt: f64,
    pub record_every: usize,
    pub y_star: Vec<f64>,
    pub events: &'a [Vec<f64>],
    pub total_events: usize,
    pub final_error: f64,
    pub min_error: f64,
    pub min_error_time: f64,
    /// Echo of the scenario that produced this trace, when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<&'a ScenarioFile>,
}

impl<'a> Sidecar<'a> {
    pub fn new(trace: &'a SimulationTrace, scenario: Option<&'a ScenarioFile>) -> Self {
        Sidecar {
            scheme: trace.scheme.to_string(),
            delta: trace.delta,
            dt: trace.dt,
            record_every: trace.record_every,
            y_star: trace.y_star.iter().copied().collect(),
            events: &trace.events,
            total_events: trace.total_events(),
            final_error: trace.final_error(),
            min_error: trace.min_error,
            min_error_time: trace.min_error_time,
            scenario,
        }
    }
}

/// Write the CSV and JSON sidecar under `dir` with the given stem.
pub fn write_trace(
    trace: &SimulationTrace,
    scenario: Option<&ScenarioFile>,
    dir: &Path,
    stem: &str,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_csv(trace, std::fs::File::create(&csv_path)?)?;
    let sidecar = Sidecar::new(trace, scenario);
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar).unwrap())?;
    Ok((csv_path, json_path))
}

/// Joined error-series CSV for side-by-side scheme comparison. Traces must
/// share the recording grid; rows stop at the shortest trace.
pub fn write_comparison_csv<W: std::io::Write>(
    traces: &[(String, &SimulationTrace)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(traces.iter().map(|(name, _)| format!("error_{name}")));
    w.write_record(&header).map_err(io_err)?;
    let rows = traces.iter().map(|(_, t)| t.times.len()).min().unwrap_or(0);
    for s in 0..rows {
        let mut row = vec![format!("{:.6}", traces[0].1.times[s])];
        for (_, t) in traces {
            row.push(format!("{:.12e}", t.error[s]));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}
