//! CSV and JSON renderings of a [`CostReport`].

use serde::Serialize;

use super::IoError;
use crate::arch::ArchConfig;
use crate::cost::CostReport;

pub const CSV_COLUMNS: [&str; 10] = [
    "layer",
    "cycles",
    "latency_ms",
    "weights_bytes",
    "inputs_bytes",
    "outputs_bytes",
    "total_bytes",
    "nominal_macs",
    "gops",
    "utilization",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (csv|json)")),
        }
    }
}

/// One flat report row; the same struct feeds both formats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub layer: String,
    pub cycles: u64,
    pub latency_ms: f64,
    pub weights_bytes: u64,
    pub inputs_bytes: u64,
    pub outputs_bytes: u64,
    pub total_bytes: u64,
    pub nominal_macs: u64,
    pub gops: f64,
    pub utilization: f64,
}

#[derive(Debug, Serialize)]
struct JsonReport<'a> {
    arch: &'a ArchConfig,
    layers: Vec<ReportRow>,
    total: ReportRow,
    total_mib: f64,
    total_mb: f64,
}

pub fn report_rows(report: &CostReport) -> (Vec<ReportRow>, ReportRow) {
    let layers = report
        .layers
        .iter()
        .map(|l| ReportRow {
            layer: l.name.clone(),
            cycles: l.cycles,
            latency_ms: l.latency_ms,
            weights_bytes: l.traffic.weights_read,
            inputs_bytes: l.traffic.inputs_read,
            outputs_bytes: l.traffic.outputs_written,
            total_bytes: l.traffic.total,
            nominal_macs: l.nominal_macs,
            gops: l.gops,
            utilization: l.utilization,
        })
        .collect();
    let t = &report.total;
    let total = ReportRow {
        layer: "total".to_string(),
        cycles: t.cycles,
        latency_ms: t.latency_ms,
        weights_bytes: t.traffic.weights_read,
        inputs_bytes: t.traffic.inputs_read,
        outputs_bytes: t.traffic.outputs_written,
        total_bytes: t.traffic.total,
        nominal_macs: t.nominal_macs,
        gops: t.gops,
        utilization: t.utilization,
    };
    (layers, total)
}

/// Renders the report. Floats use the shortest representation that parses
/// back to the identical value.
pub fn emit_report(report: &CostReport, format: ReportFormat) -> Result<String, IoError> {
    let (layers, total) = report_rows(report);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in layers.iter().chain(std::iter::once(&total)) {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Json => {
            let doc = JsonReport {
                arch: &report.arch,
                layers,
                total_mib: report.total.traffic.mib(),
                total_mb: report.total.traffic.mb(),
                total,
            };
            Ok(serde_json::to_string_pretty(&doc)?)
        }
    }
}
