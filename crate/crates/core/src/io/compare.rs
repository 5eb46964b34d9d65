//! Comparison of a VGG-16 cost report against the published reference figures.

use std::fmt;

use serde::Serialize;

use super::IoError;
use crate::arch::vgg16_conv_preset;
use crate::cost::CostReport;

/// Published latency of the reference design on VGG-16, in ms.
pub const REFERENCE_LATENCY_MS: f64 = 393.0;
/// Published DRAM traffic, read as MiB.
pub const REFERENCE_DRAM_MIB: f64 = 251.5;
/// Published throughput in Gops.
pub const REFERENCE_GOPS: f64 = 78.1;
/// Relative tolerance applied to every row.
pub const TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub ours: f64,
    pub reference: f64,
    pub rel_error: f64,
    pub pass: bool,
}

impl ComparisonRow {
    fn new(metric: &'static str, ours: f64, reference: f64) -> Self {
        let rel_error = (ours - reference).abs() / reference;
        Self {
            metric,
            ours,
            reference,
            rel_error,
            pass: rel_error <= TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub pass: bool,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>12} {:>12} {:>10}  status",
            "metric", "ours", "reference", "rel_err"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>12.3} {:>12.1} {:>9.4}%  {}",
                r.metric,
                r.ours,
                r.reference,
                r.rel_error * 100.0,
                if r.pass { "ok" } else { "FAIL" }
            )?;
        }
        write!(f, "overall: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Checks latency, DRAM traffic and throughput against the reference within
/// 0.5 %. The report must cover the 13 VGG-16 conv layers on the reference
/// architecture.
pub fn compare_to_paper(report: &CostReport) -> Result<Comparison, IoError> {
    if !report.arch.is_reference_design() {
        let a = &report.arch;
        return Err(IoError::NotDefaultConfig(format!(
            "got u={} n={} sram_depth={} sram_word_bits={} data_bits={} clock_hz={}",
            a.u, a.n, a.sram_depth, a.sram_word_bits, a.data_bits, a.clock_hz
        )));
    }
    let preset = vgg16_conv_preset();
    let shapes: Vec<_> = report.layers.iter().map(|l| l.shape).collect();
    let expected: Vec<_> = preset.layers().iter().map(|l| l.shape).collect();
    if shapes != expected {
        return Err(IoError::NotVgg16(format!(
            "report has {} layers with different geometry",
            shapes.len()
        )));
    }

    let t = &report.total;
    let rows = vec![
        ComparisonRow::new("latency_ms", t.latency_ms, REFERENCE_LATENCY_MS),
        ComparisonRow::new("dram_mib", t.traffic.mib(), REFERENCE_DRAM_MIB),
        ComparisonRow::new("gops", t.gops, REFERENCE_GOPS),
    ];
    let pass = rows.iter().all(|r| r.pass);
    Ok(Comparison { rows, pass })
}
