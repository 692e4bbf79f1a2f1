//! Per-run metrics record and its CSV form.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llc::HandoverScheme;
use crate::traffic::FlowKind;

/// CSV column order. Documented in the README.
pub const CSV_COLUMNS: [&str; 16] = [
    "scheme",
    "application",
    "rate",
    "speed",
    "seed",
    "sim_time",
    "handover_count",
    "sent",
    "received",
    "late",
    "lost",
    "in_flight",
    "loss_rate",
    "mos",
    "mean_delay",
    "handover_gaps",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scheme: HandoverScheme,
    pub application: FlowKind,
    /// Video stream rate or VoIP codec rate, bits/second.
    pub rate: f64,
    pub speed: f64,
    pub seed: u64,
    pub sim_time: f64,
    pub handover_count: u32,
    /// Totals over both flow directions.
    pub sent: u64,
    pub received: u64,
    pub late: u64,
    pub lost: u64,
    pub in_flight: u64,
    pub loss_rate: f64,
    /// VoIP only.
    pub mos: Option<f64>,
    /// Mean one-way delay of received packets, seconds.
    pub mean_delay: f64,
    /// Seconds without a serving interface, one entry per handover.
    pub handover_gaps: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    scheme: String,
    application: String,
    rate: f64,
    speed: f64,
    seed: u64,
    sim_time: f64,
    handover_count: u32,
    sent: u64,
    received: u64,
    late: u64,
    lost: u64,
    in_flight: u64,
    loss_rate: f64,
    mos: Option<f64>,
    mean_delay: f64,
    handover_gaps: String,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad value in column {column}: {value}")]
    Value { column: &'static str, value: String },
}

impl From<&MetricsRecord> for Row {
    fn from(r: &MetricsRecord) -> Self {
        Row {
            scheme: r.scheme.to_string(),
            application: r.application.to_string(),
            rate: r.rate,
            speed: r.speed,
            seed: r.seed,
            sim_time: r.sim_time,
            handover_count: r.handover_count,
            sent: r.sent,
            received: r.received,
            late: r.late,
            lost: r.lost,
            in_flight: r.in_flight,
            loss_rate: r.loss_rate,
            mos: r.mos,
            mean_delay: r.mean_delay,
            handover_gaps: r
                .handover_gaps
                .iter()
                .map(|g| g.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

impl TryFrom<Row> for MetricsRecord {
    type Error = CsvError;

    fn try_from(r: Row) -> Result<Self, CsvError> {
        let scheme = r.scheme.parse().map_err(|_| CsvError::Value {
            column: "scheme",
            value: r.scheme.clone(),
        })?;
        let application = match r.application.as_str() {
            "video" => FlowKind::Video,
            "voip" => FlowKind::Voip,
            _ => {
                return Err(CsvError::Value {
                    column: "application",
                    value: r.application,
                })
            }
        };
        let handover_gaps = if r.handover_gaps.is_empty() {
            Vec::new()
        } else {
            r.handover_gaps
                .split(';')
                .map(|g| {
                    g.parse().map_err(|_| CsvError::Value {
                        column: "handover_gaps",
                        value: g.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?
        };
        Ok(MetricsRecord {
            scheme,
            application,
            rate: r.rate,
            speed: r.speed,
            seed: r.seed,
            sim_time: r.sim_time,
            handover_count: r.handover_count,
            sent: r.sent,
            received: r.received,
            late: r.late,
            lost: r.lost,
            in_flight: r.in_flight,
            loss_rate: r.loss_rate,
            mos: r.mos,
            mean_delay: r.mean_delay,
            handover_gaps,
        })
    }
}

/// Header plus one row per record. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_csv<W: io::Write>(records: &[MetricsRecord], out: W) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.serialize(Row::from(r))?;
    }
    w.flush().map_err(|e| CsvError::Csv(e.into()))?;
    Ok(())
}

pub fn emit_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<(), CsvError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| CsvError::Write {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(records, io::BufWriter::new(file))
}

pub fn parse_csv<R: io::Read>(input: R) -> Result<Vec<MetricsRecord>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<Row>()
        .map(|row| MetricsRecord::try_from(row?))
        .collect()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>, CsvError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| CsvError::Csv(e.into()))?;
    parse_csv(file)
}
