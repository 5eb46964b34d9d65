//! Closed-form cycle, DRAM-traffic and throughput model.
//!
//! Every count here is derived from the same pass nest the engine executes:
//! one cycle per streamed input feature, one weight-register load per
//! (tile, channel, filter row), one DRAM word read per streamed feature and
//! one word written per output feature.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arch::{validate_arch, ArchConfig, LayerShape, NetworkSpec, RawArch};
use crate::schedule::{
    check_dataflow, derive_tiling, retained_products_per_pass, row_pass_count, tile_filter_rows,
    ScheduleError, Tiling,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("layer {index} ({name}): {source}")]
    Layer {
        index: usize,
        name: String,
        source: ScheduleError,
    },
    #[error("sweep range for {0} is empty")]
    EmptyRange(&'static str),
}

/// DRAM bytes by category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrafficBreakdown {
    pub weights_read: u64,
    pub inputs_read: u64,
    pub outputs_written: u64,
    pub total: u64,
}

impl TrafficBreakdown {
    pub fn new(weights_read: u64, inputs_read: u64, outputs_written: u64) -> Self {
        Self {
            weights_read,
            inputs_read,
            outputs_written,
            total: weights_read + inputs_read + outputs_written,
        }
    }

    pub fn mib(&self) -> f64 {
        self.total as f64 / (1u64 << 20) as f64
    }

    pub fn mb(&self) -> f64 {
        self.total as f64 / 1e6
    }
}

impl std::ops::Add for TrafficBreakdown {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.weights_read + rhs.weights_read,
            self.inputs_read + rhs.inputs_read,
            self.outputs_written + rhs.outputs_written,
        )
    }
}

pub fn analytic_cycles(layer: &LayerShape, arch: &ArchConfig) -> Result<u64, ScheduleError> {
    check_dataflow(arch, layer)?;
    let tiling = derive_tiling(arch, layer)?;
    Ok(cycles_for(layer, &tiling))
}

fn cycles_for(layer: &LayerShape, tiling: &Tiling) -> u64 {
    (tiling.g * layer.ic * layer.il) as u64 * row_pass_count(layer)
}

pub fn analytic_traffic(
    layer: &LayerShape,
    arch: &ArchConfig,
) -> Result<TrafficBreakdown, ScheduleError> {
    check_dataflow(arch, layer)?;
    let tiling = derive_tiling(arch, layer)?;
    Ok(traffic_for(layer, arch, &tiling))
}

fn traffic_for(layer: &LayerShape, arch: &ArchConfig, tiling: &Tiling) -> TrafficBreakdown {
    let word = arch.word_bytes();
    // filters present across all groups; idle units fetch nothing
    let real_filters: u64 = (0..tiling.g)
        .map(|g| tiling.filters_in_group(arch, layer, g) as u64)
        .sum();
    // a tile reloads only the filter rows some of its output rows use; with
    // two or more rows per tile this is every row
    let loads_per_filter: u64 = (0..tiling.t)
        .map(|t| (layer.ic * tile_filter_rows(tiling, layer, t).len()) as u64)
        .sum();
    let weights = real_filters * loads_per_filter * arch.n as u64 * word;
    let inputs = cycles_for(layer, tiling) * word;
    let outputs = (layer.ol * layer.ol * layer.oc) as u64 * word;
    TrafficBreakdown::new(weights, inputs, outputs)
}

/// Products that contribute to a real output value, summed over all units.
pub fn analytic_retained_products(
    layer: &LayerShape,
    arch: &ArchConfig,
) -> Result<u64, ScheduleError> {
    check_dataflow(arch, layer)?;
    derive_tiling(arch, layer)?;
    Ok(retained_for(layer))
}

fn retained_for(layer: &LayerShape) -> u64 {
    let passes_per_filter = layer.ic as u64 * row_pass_count(layer);
    layer.m as u64 * passes_per_filter * retained_products_per_pass(layer)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub shape: LayerShape,
    pub tiling: Tiling,
    pub cycles: u64,
    pub latency_ms: f64,
    pub traffic: TrafficBreakdown,
    pub nominal_macs: u64,
    pub gops: f64,
    pub utilization: f64,
    pub retained_products: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostTotals {
    pub cycles: u64,
    pub latency_ms: f64,
    pub traffic: TrafficBreakdown,
    pub nominal_macs: u64,
    pub gops: f64,
    pub utilization: f64,
    pub retained_products: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub arch: ArchConfig,
    pub layers: Vec<LayerCost>,
    pub total: CostTotals,
}

fn latency_ms(cycles: u64, arch: &ArchConfig) -> f64 {
    cycles as f64 / arch.clock_hz as f64 * 1e3
}

fn gops(nominal_macs: u64, cycles: u64, arch: &ArchConfig) -> f64 {
    if cycles == 0 {
        return 0.0;
    }
    let seconds = cycles as f64 / arch.clock_hz as f64;
    2.0 * nominal_macs as f64 / seconds / 1e9
}

fn utilization(retained: u64, cycles: u64, arch: &ArchConfig) -> f64 {
    if cycles == 0 {
        return 0.0;
    }
    retained as f64 / (arch.u as u64 * arch.n as u64 * cycles) as f64
}

pub fn layer_cost(
    name: &str,
    layer: &LayerShape,
    arch: &ArchConfig,
) -> Result<LayerCost, ScheduleError> {
    check_dataflow(arch, layer)?;
    let tiling = derive_tiling(arch, layer)?;
    let cycles = cycles_for(layer, &tiling);
    let nominal_macs = layer.nominal_macs();
    let retained = retained_for(layer);
    Ok(LayerCost {
        name: name.to_string(),
        shape: *layer,
        tiling,
        cycles,
        latency_ms: latency_ms(cycles, arch),
        traffic: traffic_for(layer, arch, &tiling),
        nominal_macs,
        gops: gops(nominal_macs, cycles, arch),
        utilization: utilization(retained, cycles, arch),
        retained_products: retained,
    })
}

impl CostReport {
    pub fn from_layers(arch: ArchConfig, layers: Vec<LayerCost>) -> Self {
        let cycles = layers.iter().map(|l| l.cycles).sum();
        let nominal_macs = layers.iter().map(|l| l.nominal_macs).sum();
        let retained = layers.iter().map(|l| l.retained_products).sum();
        let traffic = layers
            .iter()
            .fold(TrafficBreakdown::default(), |acc, l| acc + l.traffic);
        let total = CostTotals {
            cycles,
            latency_ms: latency_ms(cycles, &arch),
            traffic,
            nominal_macs,
            gops: gops(nominal_macs, cycles, &arch),
            utilization: utilization(retained, cycles, &arch),
            retained_products: retained,
        };
        Self {
            arch,
            layers,
            total,
        }
    }
}

pub fn network_cost(net: &NetworkSpec, arch: &ArchConfig) -> Result<CostReport, CostError> {
    network_cost_with_threads(net, arch, 1)
}

/// Same as [`network_cost`], evaluating layers on up to `threads` workers.
pub fn network_cost_with_threads(
    net: &NetworkSpec,
    arch: &ArchConfig,
    threads: usize,
) -> Result<CostReport, CostError> {
    let eval = |(index, l): (usize, &crate::arch::NetworkLayer)| {
        layer_cost(&l.name, &l.shape, arch).map_err(|source| CostError::Layer {
            index,
            name: l.name.clone(),
            source,
        })
    };
    let layers: Result<Vec<_>, _> = if threads > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| net.layers().par_iter().enumerate().map(eval).collect()),
            Err(_) => net.layers().iter().enumerate().map(eval).collect(),
        }
    } else {
        net.layers().iter().enumerate().map(eval).collect()
    };
    Ok(CostReport::from_layers(*arch, layers?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub cycles: u64,
    pub latency_ms: f64,
    pub traffic: TrafficBreakdown,
    pub gops: f64,
    /// Layers left out because their filter width differs from `n`.
    pub skipped_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sram_depth: usize,
    pub u: usize,
    pub outcome: Result<SweepPoint, String>,
}

/// Evaluates the network at every `(sram_depth, u)` combination. Points that
/// fail validation are reported in their row rather than aborting the sweep.
pub fn sweep(
    net: &NetworkSpec,
    base: &ArchConfig,
    sram_depths: &[usize],
    units: &[usize],
) -> Result<Vec<SweepRow>, CostError> {
    if sram_depths.is_empty() {
        return Err(CostError::EmptyRange("sram_depth"));
    }
    if units.is_empty() {
        return Err(CostError::EmptyRange("u"));
    }
    let grid: Vec<(usize, usize)> = sram_depths
        .iter()
        .flat_map(|&d| units.iter().map(move |&u| (d, u)))
        .collect();
    Ok(grid
        .into_par_iter()
        .map(|(sram_depth, u)| SweepRow {
            sram_depth,
            u,
            outcome: sweep_point(net, base, sram_depth, u),
        })
        .collect())
}

fn sweep_point(
    net: &NetworkSpec,
    base: &ArchConfig,
    sram_depth: usize,
    u: usize,
) -> Result<SweepPoint, String> {
    let arch = validate_arch(RawArch {
        sram_depth,
        u,
        ..base.raw()
    })
    .map_err(|e| e.to_string())?;
    let compatible: Vec<_> = net
        .layers()
        .iter()
        .filter(|l| l.shape.fl == arch.n && l.shape.fh == arch.n)
        .collect();
    let mut layers = Vec::with_capacity(compatible.len());
    for l in &compatible {
        layers.push(layer_cost(&l.name, &l.shape, &arch).map_err(|e| format!("{}: {e}", l.name))?);
    }
    let report = CostReport::from_layers(arch, layers);
    Ok(SweepPoint {
        cycles: report.total.cycles,
        latency_ms: report.total.latency_ms,
        traffic: report.total.traffic,
        gops: report.total.gops,
        skipped_layers: net.len() - compatible.len(),
    })
}
