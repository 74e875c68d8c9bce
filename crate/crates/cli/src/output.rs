//! Report files: JSON plus one CSV per metric.

use std::fs;
use std::io;
use std::path::Path;

use edgesim_core::sim::{ByteClass, MetricsReport};

pub const CONTROL_BYTES_HEADER: [&str; 5] =
    ["second", "manage_cluster", "data_path_control", "stats_collection", "other_control_msg"];
pub const THROUGHPUT_HEADER: [&str; 3] = ["second", "flow", "rate_bps"];
pub const RTT_HEADER: [&str; 3] = ["ping", "try", "rtt_ms"];
pub const PACKET_IN_HEADER: [&str; 4] = ["controller", "cont_id", "received", "processed"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

pub fn write_json(report: &MetricsReport, dir: &Path) -> Result<(), OutputError> {
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), OutputError> {
    let wrap = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_csvs(report: &MetricsReport, dir: &Path) -> Result<(), OutputError> {
    let control: Vec<Vec<String>> = report
        .control_bytes
        .per_second
        .iter()
        .enumerate()
        .map(|(s, row)| {
            let mut r = vec![s.to_string()];
            r.extend(ByteClass::ALL.iter().map(|c| row.get(c).copied().unwrap_or(0).to_string()));
            r
        })
        .collect();
    write_csv(&dir.join("control_bytes.csv"), &CONTROL_BYTES_HEADER, control)?;

    let mut throughput = Vec::new();
    for (s, v) in report.throughput_series.iter().enumerate() {
        throughput.push(vec![s.to_string(), "aggregate".into(), v.to_string()]);
        for (name, f) in &report.flows {
            let rate = f.rate_series.get(s).copied().unwrap_or(0.0);
            throughput.push(vec![s.to_string(), name.clone(), rate.to_string()]);
        }
    }
    write_csv(&dir.join("throughput.csv"), &THROUGHPUT_HEADER, throughput)?;

    let rtt = report
        .rtt
        .iter()
        .flat_map(|(name, tries)| {
            tries.iter().enumerate().map(move |(i, r)| {
                vec![name.clone(), i.to_string(), r.map(|v| v.to_string()).unwrap_or_default()]
            })
        })
        .collect();
    write_csv(&dir.join("rtt.csv"), &RTT_HEADER, rtt)?;

    let packet_in = report
        .packet_in
        .per_controller
        .iter()
        .map(|(name, l)| {
            vec![
                name.clone(),
                l.cont_ids.last().map(|v| v.to_string()).unwrap_or_default(),
                l.received.to_string(),
                l.processed.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("packet_in.csv"), &PACKET_IN_HEADER, packet_in)
}
