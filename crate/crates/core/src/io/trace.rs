//! DRAM transaction log as CSV: `cycle,layer,category,words`.

use std::path::Path;

use super::IoError;
use crate::engine::DramTrace;

/// Renders the logs of several layers, in order. Each entry pairs a layer
/// label with its trace.
pub fn render_trace(traces: &[(String, &DramTrace)]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cycle", "layer", "category", "words"])?;
    for (layer, trace) in traces {
        let log = trace.log.as_ref().ok_or(IoError::LoggingDisabled)?;
        for t in log {
            w.write_record([
                t.cycle.to_string(),
                layer.clone(),
                t.category.code().to_string(),
                t.words.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn dump_trace(traces: &[(String, &DramTrace)], path: &Path) -> Result<(), IoError> {
    let text = render_trace(traces)?;
    std::fs::write(path, text).map_err(|e| IoError::file(path, e))
}
