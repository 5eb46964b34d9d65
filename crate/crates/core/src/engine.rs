//! Cycle-accurate model of the convolution engine.
//!
//! `u` convolution units (CUs) run in lock step. Each holds `n` weight
//! registers, `n` multipliers, a chain of `n - 1` accumulator registers and
//! two ping-pong SRAM banks of 32-bit partial sums. One input feature is
//! broadcast to every unit per cycle. Within a unit the partial sum ripples
//! left to right one stage per cycle until the last multiplier adds it to the
//! word read back from SRAM (or the bias, on the first pass over a row) and
//! writes the result.
//!
//! Cycle numbering starts at 1. The broadcast pipeline registers between
//! units only skew arrival by a constant per unit, so delivery is modelled as
//! same-cycle.

use std::iter::Peekable;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchConfig, LayerShape};
use crate::fixed::FixedPointRules;
use crate::schedule::{self, derive_tiling, PassDescriptor, Passes, ScheduleError, Tiling};
use crate::tensor::{check_input, FilterSet, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0} cycles wrote a bank while it was being drained")]
    PingPongViolation(u64),
    #[error("could not build a worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TrafficCategory {
    Weights,
    Inputs,
    Outputs,
}

impl TrafficCategory {
    pub fn code(self) -> &'static str {
        match self {
            TrafficCategory::Weights => "W",
            TrafficCategory::Inputs => "I",
            TrafficCategory::Outputs => "O",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub cycle: u64,
    pub category: TrafficCategory,
    pub words: u64,
}

/// DRAM traffic of one layer in bytes, with an optional transaction log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DramTrace {
    pub weights_read: u64,
    pub inputs_read: u64,
    pub outputs_written: u64,
    pub log: Option<Vec<Transaction>>,
}

impl DramTrace {
    pub fn total(&self) -> u64 {
        self.weights_read + self.inputs_read + self.outputs_written
    }

    fn record(&mut self, cycle: u64, category: TrafficCategory, words: u64, word_bytes: u64) {
        let bytes = words * word_bytes;
        match category {
            TrafficCategory::Weights => self.weights_read += bytes,
            TrafficCategory::Inputs => self.inputs_read += bytes,
            TrafficCategory::Outputs => self.outputs_written += bytes,
        }
        if let Some(log) = self.log.as_mut() {
            log.push(Transaction {
                cycle,
                category,
                words,
            });
        }
    }

    /// Sums logged words for one category.
    pub fn logged_words(&self, category: TrafficCategory) -> Option<u64> {
        self.log.as_ref().map(|log| {
            log.iter()
                .filter(|t| t.category == category)
                .map(|t| t.words)
                .sum()
        })
    }

    fn merge(&mut self, other: DramTrace) {
        self.weights_read += other.weights_read;
        self.inputs_read += other.inputs_read;
        self.outputs_written += other.outputs_written;
        if let (Some(log), Some(more)) = (self.log.as_mut(), other.log) {
            log.extend(more);
        }
    }
}

/// Registers and SRAM banks of one convolution unit.
#[derive(Debug, Clone)]
pub struct CuState {
    pub wr: Vec<i16>,
    pub acc: Vec<i32>,
    pub sram: [Vec<i32>; 2],
    pub bias_reg: i32,
}

impl CuState {
    fn new(n: usize, depth: usize) -> Self {
        Self {
            wr: vec![0; n],
            acc: vec![0; n - 1],
            sram: [vec![0; depth], vec![0; depth]],
            bias_reg: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Assert ping-pong safety on every SRAM write.
    pub checked: bool,
    /// Keep a per-transaction DRAM log.
    pub log_transactions: bool,
    /// Worker threads for filter-group parallelism; 0 or 1 runs inline.
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SramWrite {
    pub bank: usize,
    pub addr: usize,
    /// Value written by unit 0.
    pub value: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    Compute { pass: PassDescriptor, q: usize },
    Stall,
    Flush,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleEvent {
    pub cycle: u64,
    pub kind: CycleKind,
    /// Feature on the broadcast input this cycle.
    pub feature: Option<i16>,
    pub write: Option<SramWrite>,
}

#[derive(Debug, Clone, Copy)]
struct TileRef {
    group: usize,
    tile: usize,
    bank: usize,
}

/// Right-border write of a finished pass, retired in the following cycle.
#[derive(Debug, Clone, Copy)]
struct TailWrite {
    bank: usize,
    row_in_tile: usize,
    first_touch: bool,
    completes: Option<TileRef>,
}

#[derive(Debug, Clone, Copy)]
struct ActivePass {
    pass: PassDescriptor,
    q: usize,
    bank: usize,
    starts_tile: bool,
    ends_tile: bool,
    started: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Timing {
    cycle: u64,
    /// First cycle in which each bank may be written again.
    free_at: [u64; 2],
    /// Cycle in which each bank's latest drain was scheduled.
    drain_since: [u64; 2],
}

impl Timing {
    fn draining(&self, bank: usize, cycle: u64) -> bool {
        self.drain_since[bank] < cycle && cycle < self.free_at[bank]
    }
}

/// Outcome of simulating one layer (or a contiguous range of its filter groups).
#[derive(Debug, Clone)]
pub struct LayerRun {
    pub output: Tensor,
    pub cycles: u64,
    pub stall_cycles: u64,
    pub trace: DramTrace,
    pub retained_products: u64,
    pub utilization: f64,
}

pub struct Engine<'a> {
    arch: ArchConfig,
    layer: LayerShape,
    tiling: Tiling,
    rules: FixedPointRules,
    input: &'a Tensor,
    filters: &'a FilterSet,
    options: EngineOptions,
    datapath: bool,
    final_chunk: bool,
    cus: Vec<CuState>,
    active: usize,
    passes: Peekable<Passes>,
    current: Option<ActivePass>,
    pending_tail: Option<TailWrite>,
    loaded_group: Option<usize>,
    weight_key: Option<(usize, usize, usize, usize)>,
    timing: Timing,
    stall_cycles: u64,
    retained: u64,
    violations: u64,
    finished: bool,
    trace: DramTrace,
    output: Tensor,
}

impl<'a> Engine<'a> {
    /// An engine over every filter group of the layer.
    pub fn new(
        arch: &ArchConfig,
        layer: &LayerShape,
        input: &'a Tensor,
        filters: &'a FilterSet,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let tiling = derive_tiling(arch, layer)?;
        Self::for_groups(arch, layer, input, filters, options, 0..tiling.g)
    }

    /// An engine over groups `groups`, resuming at the exact cycle and bank
    /// state a sequential run would have reached when the first of them starts.
    pub fn for_groups(
        arch: &ArchConfig,
        layer: &LayerShape,
        input: &'a Tensor,
        filters: &'a FilterSet,
        options: EngineOptions,
        groups: Range<usize>,
    ) -> Result<Self, EngineError> {
        schedule::check_dataflow(arch, layer)?;
        let tiling = derive_tiling(arch, layer)?;
        check_input(layer, input)?;
        filters.check_layer(layer)?;
        input.check_range(arch.data_bits)?;
        filters.check_range(arch.data_bits)?;

        let mut engine = Self::build(
            arch,
            layer,
            tiling,
            input,
            filters,
            options,
            groups.clone(),
            true,
        );
        if groups.start > 0 {
            let mut prefix = Self::build(
                arch,
                layer,
                tiling,
                input,
                filters,
                options,
                0..groups.start,
                false,
            );
            while prefix.step().is_some() {}
            engine.timing = prefix.timing;
        }
        Ok(engine)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        arch: &ArchConfig,
        layer: &LayerShape,
        tiling: Tiling,
        input: &'a Tensor,
        filters: &'a FilterSet,
        options: EngineOptions,
        groups: Range<usize>,
        datapath: bool,
    ) -> Self {
        let final_chunk = groups.end == tiling.g;
        let cus = if datapath {
            (0..arch.u)
                .map(|_| CuState::new(arch.n, arch.sram_depth))
                .collect()
        } else {
            Vec::new()
        };
        let output = if datapath {
            Tensor::zeros(layer.oc, layer.ol, layer.ol)
        } else {
            Tensor::zeros(0, 0, 0)
        };
        Self {
            arch: *arch,
            layer: *layer,
            tiling,
            rules: arch.rules(),
            input,
            filters,
            options,
            datapath,
            final_chunk,
            cus,
            active: 0,
            passes: Passes::new(*layer, tiling, groups).peekable(),
            current: None,
            pending_tail: None,
            loaded_group: None,
            weight_key: None,
            timing: Timing::default(),
            stall_cycles: 0,
            retained: 0,
            violations: 0,
            finished: false,
            trace: DramTrace {
                log: options.log_transactions.then(Vec::new),
                ..DramTrace::default()
            },
            output,
        }
    }

    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }

    pub fn cu(&self, k: usize) -> &CuState {
        &self.cus[k]
    }

    pub fn cycle(&self) -> u64 {
        self.timing.cycle
    }

    pub fn stall_cycles(&self) -> u64 {
        self.stall_cycles
    }

    pub fn trace(&self) -> &DramTrace {
        &self.trace
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }

    fn bank_of(&self, pass: &PassDescriptor) -> usize {
        pass.global_tile(&self.tiling) % 2
    }

    fn activate(&mut self, pass: PassDescriptor) -> ActivePass {
        let bank = self.bank_of(&pass);
        let key = (pass.group, pass.tile);
        let ends_tile = match self.passes.peek() {
            Some(next) => (next.group, next.tile) != key,
            None => true,
        };
        let starts_tile = self.weight_key.is_none_or(|(g, t, _, _)| (g, t) != key);
        ActivePass {
            pass,
            q: 0,
            bank,
            starts_tile,
            ends_tile,
            started: false,
        }
    }

    /// Advances the engine by one clock cycle. Returns `None` once the layer
    /// (including the terminal flush cycle) is complete.
    pub fn step(&mut self) -> Option<CycleEvent> {
        if self.finished {
            return None;
        }
        if self.current.is_none() {
            if let Some(pass) = self.passes.next() {
                self.current = Some(self.activate(pass));
            } else if !self.final_chunk {
                // The next group's first cycle retires our tail; it costs no cycle here.
                let cycle = self.timing.cycle + 1;
                self.retire_tail(cycle);
                self.finished = true;
                return None;
            }
        }

        self.timing.cycle += 1;
        let cycle = self.timing.cycle;

        let Some(mut cur) = self.current else {
            let write = self.retire_tail(cycle);
            self.finished = true;
            return Some(CycleEvent {
                cycle,
                kind: CycleKind::Flush,
                feature: None,
                write,
            });
        };

        let mut write = None;
        if !cur.started {
            if cur.starts_tile && cycle < self.timing.free_at[cur.bank] {
                let write = self.retire_tail(cycle);
                self.stall_cycles += 1;
                return Some(CycleEvent {
                    cycle,
                    kind: CycleKind::Stall,
                    feature: None,
                    write,
                });
            }
            write = self.retire_tail(cycle);
            self.start_pass(&cur.pass, cycle);
            cur.started = true;
        }

        let q = cur.q;
        let pass = cur.pass;
        let feature = if self.datapath {
            self.input.get(pass.channel, pass.in_row, q)
        } else {
            0
        };
        if let Some(w) = self.compute(&cur, feature, cycle) {
            write = Some(w);
        }

        cur.q += 1;
        if cur.q == self.layer.il {
            let tile = TileRef {
                group: pass.group,
                tile: pass.tile,
                bank: cur.bank,
            };
            if self.layer.z > 0 {
                self.pending_tail = Some(TailWrite {
                    bank: cur.bank,
                    row_in_tile: pass.row_in_tile,
                    first_touch: pass.first_touch,
                    completes: cur.ends_tile.then_some(tile),
                });
            } else if cur.ends_tile {
                self.drain_bank(tile, cycle);
            }
            self.current = None;
        } else {
            self.current = Some(cur);
        }

        Some(CycleEvent {
            cycle,
            kind: CycleKind::Compute { pass, q },
            feature: Some(feature),
            write,
        })
    }

    fn start_pass(&mut self, pass: &PassDescriptor, cycle: u64) {
        if self.loaded_group != Some(pass.group) {
            self.loaded_group = Some(pass.group);
            self.active = self
                .tiling
                .filters_in_group(&self.arch, &self.layer, pass.group);
            if self.datapath {
                let base = pass.group * self.arch.u;
                for (k, cu) in self.cus.iter_mut().take(self.active).enumerate() {
                    cu.bias_reg = self.filters.bias(base + k);
                }
            }
        }
        if self.weight_key != Some(pass.weight_key()) {
            self.weight_key = Some(pass.weight_key());
            self.load_pass_weights(pass, cycle);
        }
        if self.datapath {
            let words = self.layer.il as u64;
            self.trace.record(
                cycle,
                TrafficCategory::Inputs,
                words,
                self.arch.word_bytes(),
            );
        }
    }

    /// Fetches filter row `j` of channel `c` into the weight registers of
    /// every unit that holds a real filter.
    fn load_pass_weights(&mut self, pass: &PassDescriptor, cycle: u64) {
        if !self.datapath {
            return;
        }
        let base = pass.group * self.arch.u;
        for (k, cu) in self.cus.iter_mut().take(self.active).enumerate() {
            cu.wr.copy_from_slice(
                self.filters
                    .filter_row(base + k, pass.channel, pass.filter_row),
            );
        }
        let words = (self.arch.n * self.active) as u64;
        self.trace.record(
            cycle,
            TrafficCategory::Weights,
            words,
            self.arch.word_bytes(),
        );
    }

    fn compute(&mut self, cur: &ActivePass, feature: i16, cycle: u64) -> Option<SramWrite> {
        let n = self.arch.n;
        let z = self.layer.z as isize;
        let ol = self.layer.ol as isize;
        let q = cur.q as isize;

        // product x * wr[i] feeds output column q - i + z
        let lands = |i: usize| (0..ol).contains(&(q - i as isize + z));
        let write_col = q - (n as isize - 1) + z;
        let writes = (0..ol).contains(&write_col);

        if !self.datapath {
            return None;
        }

        let retained = (0..n).filter(|&i| lands(i)).count() as u64;
        self.retained += retained * self.active as u64;

        // accumulator stage i is loaded only when its product lands in a real
        // column; the enabled stages form the range [load_lo, load_hi]
        let load_lo = (q + z - ol + 1).max(0) as usize;
        let load_hi = q + z;

        let addr = cur.pass.row_in_tile * self.layer.ol + write_col.max(0) as usize;
        if writes && self.options.checked && self.timing.draining(cur.bank, cycle) {
            self.violations += 1;
        }
        // left border: carried partials are forced to zero on the first cycle
        let carry_zero = cur.q == 0;
        let x = feature as i32;
        let rules = self.rules;
        let bank = cur.bank;
        let first_touch = cur.pass.first_touch;
        let mut written = None;

        for (k, cu) in self.cus.iter_mut().take(self.active).enumerate() {
            if writes {
                let carried = if n >= 2 && !carry_zero {
                    cu.acc[n - 2]
                } else {
                    0
                };
                let f0 = if first_touch {
                    cu.bias_reg
                } else {
                    cu.sram[bank][addr]
                };
                let value = rules.wrap_acc(
                    carried
                        .wrapping_add(x.wrapping_mul(cu.wr[n - 1] as i32))
                        .wrapping_add(f0),
                );
                cu.sram[bank][addr] = value;
                if k == 0 {
                    written = Some(SramWrite { bank, addr, value });
                }
            }
            for i in (1..n.saturating_sub(1)).rev() {
                if i >= load_lo && i as isize <= load_hi {
                    let carried = if carry_zero { 0 } else { cu.acc[i - 1] };
                    cu.acc[i] = carried.wrapping_add(x.wrapping_mul(cu.wr[i] as i32));
                }
            }
            if n >= 2 && load_lo == 0 && load_hi >= 0 {
                cu.acc[0] = x.wrapping_mul(cu.wr[0] as i32);
            }
        }
        written
    }

    /// Writes the right-border column of the previous pass (the missing
    /// product is forced to zero) and starts the drain of a finished tile.
    fn retire_tail(&mut self, cycle: u64) -> Option<SramWrite> {
        let tail = self.pending_tail.take()?;
        let mut written = None;
        if self.datapath {
            let n = self.arch.n;
            let col = self.layer.ol - self.layer.z;
            let addr = tail.row_in_tile * self.layer.ol + col;
            if self.options.checked && self.timing.draining(tail.bank, cycle) {
                self.violations += 1;
            }
            let rules = self.rules;
            for (k, cu) in self.cus.iter_mut().take(self.active).enumerate() {
                let carried = if n >= 2 { cu.acc[n - 2] } else { 0 };
                let f0 = if tail.first_touch {
                    cu.bias_reg
                } else {
                    cu.sram[tail.bank][addr]
                };
                let value = rules.wrap_acc(carried.wrapping_add(f0));
                cu.sram[tail.bank][addr] = value;
                if k == 0 {
                    written = Some(SramWrite {
                        bank: tail.bank,
                        addr,
                        value,
                    });
                }
            }
        }
        if let Some(tile) = tail.completes {
            self.drain_bank(tile, cycle);
        }
        written
    }

    /// Requantizes a finished tile into the output tensor and occupies its
    /// bank for the transfer time. The drain runs from the next cycle on.
    fn drain_bank(&mut self, tile: TileRef, cycle: u64) {
        let rows = self.tiling.tile_rows(&self.layer, tile.tile);
        let words = (rows.len() * self.layer.ol) as u64;
        let busy = self.arch.drain_cycles(words);
        self.timing.drain_since[tile.bank] = cycle;
        self.timing.free_at[tile.bank] = cycle + busy + 1;
        if !self.datapath {
            return;
        }

        let ol = self.layer.ol;
        let base = tile.group * self.arch.u;
        for (k, cu) in self.cus.iter().take(self.active).enumerate() {
            let bank = &cu.sram[tile.bank];
            for (row_in_tile, out_row) in rows.clone().enumerate() {
                for col in 0..ol {
                    let value = self.rules.requantize(bank[row_in_tile * ol + col]);
                    self.output.set(base + k, out_row, col, value);
                }
            }
        }
        self.trace.record(
            cycle,
            TrafficCategory::Outputs,
            words * self.active as u64,
            self.arch.word_bytes(),
        );
    }

    pub fn run(mut self) -> Result<LayerRun, EngineError> {
        while self.step().is_some() {}
        if self.violations > 0 {
            return Err(EngineError::PingPongViolation(self.violations));
        }
        let cycles = self.timing.cycle;
        let utilization = utilization(self.retained, &self.arch, cycles);
        Ok(LayerRun {
            output: self.output,
            cycles,
            stall_cycles: self.stall_cycles,
            trace: self.trace,
            retained_products: self.retained,
            utilization,
        })
    }
}

/// Cycle and stall counts of a layer run without the datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingRun {
    pub cycles: u64,
    pub stall_cycles: u64,
}

/// Steps the pass schedule and bank timing only. Cycle and stall counts are
/// those of [`run_layer`] on any data.
pub fn run_timing(arch: &ArchConfig, layer: &LayerShape) -> Result<TimingRun, EngineError> {
    schedule::check_dataflow(arch, layer)?;
    let tiling = derive_tiling(arch, layer)?;
    let input = Tensor::zeros(0, 0, 0);
    let filters = FilterSet::new(0, 0, 0, 0, Vec::new(), Vec::new())?;
    let options = EngineOptions::default();
    let mut engine = Engine::build(
        arch,
        layer,
        tiling,
        &input,
        &filters,
        options,
        0..tiling.g,
        false,
    );
    while engine.step().is_some() {}
    Ok(TimingRun {
        cycles: engine.timing.cycle,
        stall_cycles: engine.stall_cycles,
    })
}

fn utilization(retained: u64, arch: &ArchConfig, cycles: u64) -> f64 {
    if cycles == 0 {
        return 0.0;
    }
    retained as f64 / (arch.u as u64 * arch.n as u64 * cycles) as f64
}

/// Simulates a whole layer. With `options.threads > 1` the filter groups are
/// split into contiguous chunks on separate engines; the merged result is
/// bit-identical to a sequential run.
pub fn run_layer(
    arch: &ArchConfig,
    layer: &LayerShape,
    input: &Tensor,
    filters: &FilterSet,
    options: EngineOptions,
) -> Result<LayerRun, EngineError> {
    schedule::check_dataflow(arch, layer)?;
    let tiling = derive_tiling(arch, layer)?;
    let workers = options.threads.max(1).min(tiling.g);
    if workers <= 1 {
        return Engine::new(arch, layer, input, filters, options)?.run();
    }

    let per = tiling.g.div_ceil(workers);
    let chunks: Vec<Range<usize>> = (0..tiling.g)
        .step_by(per)
        .map(|start| start..(start + per).min(tiling.g))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let runs: Vec<Result<LayerRun, EngineError>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|groups| {
                Engine::for_groups(arch, layer, input, filters, options, groups.clone())?.run()
            })
            .collect()
    });

    let mut trace = DramTrace {
        log: options.log_transactions.then(Vec::new),
        ..DramTrace::default()
    };
    let plane = layer.ol * layer.ol;
    let mut stall_cycles = 0;
    let mut retained = 0;
    let mut cycles = 0;
    let mut data = vec![0i16; layer.oc * plane];
    for (groups, run) in chunks.iter().zip(runs) {
        let run = run?;
        let channels = (groups.start * arch.u)..(groups.end * arch.u).min(layer.m);
        let span = channels.start * plane..channels.end * plane;
        data[span.clone()].copy_from_slice(&run.output.data()[span]);
        stall_cycles += run.stall_cycles;
        retained += run.retained_products;
        cycles = run.cycles;
        trace.merge(run.trace);
    }
    Ok(LayerRun {
        output: Tensor::new(layer.oc, layer.ol, layer.ol, data)?,
        cycles,
        stall_cycles,
        trace,
        retained_products: retained,
        utilization: utilization(retained, arch, cycles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{validate_arch, validate_layer, RawArch, RawLayer};
    use crate::golden::golden_conv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(il: usize, ic: usize, z: usize, m: usize) -> LayerShape {
        validate_layer(RawLayer {
            il,
            ic,
            fl: 3,
            fh: 3,
            z,
            s: 1,
            m,
        })
        .unwrap()
    }

    fn arch(u: usize, sram_depth: usize, out_shift: u32) -> ArchConfig {
        validate_arch(RawArch {
            u,
            sram_depth,
            out_shift,
            ..RawArch::default()
        })
        .unwrap()
    }

    fn case(seed: u64, l: &LayerShape) -> (Tensor, FilterSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Tensor::random(l.ic, l.il, l.il, -128..=128, &mut rng);
        let filters = FilterSet::random(l, -64..=64, -4096..=4096, &mut rng);
        (input, filters)
    }

    #[test]
    fn all_ones_window_example() {
        let l = layer(3, 1, 1, 1);
        let a = arch(64, 448, 0);
        let input = Tensor::new(1, 3, 3, (1..=9).collect()).unwrap();
        let filters = FilterSet::new(1, 1, 3, 3, vec![1; 9], vec![0]).unwrap();
        let run = run_layer(&a, &l, &input, &filters, EngineOptions::default()).unwrap();
        assert_eq!(run.output.data(), &[12, 21, 16, 27, 45, 33, 24, 39, 28]);
    }

    #[test]
    fn matches_oracle_on_tiled_layers() {
        // small banks force several tiles and both banks
        for (seed, (il, ic, z, m, u, depth)) in [
            (9, 2, 1, 5, 2, 20),
            (8, 3, 0, 3, 4, 12),
            (7, 1, 1, 7, 3, 7),
            (12, 2, 1, 4, 4, 40),
        ]
        .into_iter()
        .enumerate()
        {
            let l = layer(il, ic, z, m);
            let a = arch(u, depth, 3);
            let (input, filters) = case(seed as u64, &l);
            let run = run_layer(
                &a,
                &l,
                &input,
                &filters,
                EngineOptions {
                    checked: true,
                    ..Default::default()
                },
            )
            .unwrap();
            let golden = golden_conv(&l, &input, &filters, &a.rules()).unwrap();
            assert_eq!(run.output, golden, "case {seed}");
        }
    }

    #[test]
    fn border_write_at_second_cycle() {
        // z = 1: local cycle 1 writes column 0 from x(0) * w[1] + x(1) * w[2]
        let l = layer(5, 1, 1, 1);
        let a = arch(1, 448, 0);
        let input = Tensor::new(1, 5, 5, (1..=25).collect()).unwrap();
        let weights: Vec<i16> = (1..=9).collect();
        let filters = FilterSet::new(1, 1, 3, 3, weights, vec![0]).unwrap();
        let mut engine = Engine::new(&a, &l, &input, &filters, EngineOptions::default()).unwrap();
        let first = engine.step().unwrap();
        assert!(first.write.is_none());
        // first pass: filter row 0 over input row 0, into output row 1
        let second = engine.step().unwrap();
        let w = second.write.unwrap();
        let x = |q: usize| input.get(0, 0, q) as i32;
        let wr = |i: usize| filters.weight(0, 0, 0, i) as i32;
        assert_eq!(w.addr, 5);
        assert_eq!(w.value, x(0) * wr(1) + x(1) * wr(2));
        assert_eq!(w.value, 8);
    }

    #[test]
    fn slow_drain_stalls_but_stays_exact() {
        let l = layer(8, 1, 1, 2);
        let slow = validate_arch(RawArch {
            u: 2,
            sram_depth: 16,
            drain_words_per_cycle: 0.05,
            out_shift: 2,
            ..RawArch::default()
        })
        .unwrap();
        let (input, filters) = case(11, &l);
        let opts = EngineOptions {
            checked: true,
            ..Default::default()
        };
        let run = run_layer(&slow, &l, &input, &filters, opts).unwrap();
        assert!(run.stall_cycles > 0);
        assert_eq!(
            run.output,
            golden_conv(&l, &input, &filters, &slow.rules()).unwrap()
        );

        let fast = validate_arch(RawArch {
            drain_words_per_cycle: 1.0,
            ..slow.raw()
        })
        .unwrap();
        let base = run_layer(&fast, &l, &input, &filters, opts).unwrap();
        assert_eq!(base.stall_cycles, 0);
        assert_eq!(run.cycles - run.stall_cycles, base.cycles);
        assert_eq!(run.trace, base.trace);
    }

    #[test]
    fn threads_are_bit_identical() {
        let l = layer(10, 3, 1, 13);
        let a = arch(2, 30, 4);
        let (input, filters) = case(5, &l);
        let opts = EngineOptions {
            checked: true,
            log_transactions: true,
            threads: 1,
        };
        let seq = run_layer(&a, &l, &input, &filters, opts).unwrap();
        for threads in [2, 3, 7, 16] {
            let par =
                run_layer(&a, &l, &input, &filters, EngineOptions { threads, ..opts }).unwrap();
            assert_eq!(par.output, seq.output);
            assert_eq!(par.cycles, seq.cycles);
            assert_eq!(par.stall_cycles, seq.stall_cycles);
            assert_eq!(par.trace, seq.trace);
            assert_eq!(par.retained_products, seq.retained_products);
        }
    }

    #[test]
    fn log_reconciles_with_counters() {
        let l = layer(9, 2, 1, 5);
        let a = arch(2, 20, 2);
        let (input, filters) = case(2, &l);
        let run = run_layer(
            &a,
            &l,
            &input,
            &filters,
            EngineOptions {
                log_transactions: true,
                ..Default::default()
            },
        )
        .unwrap();
        let t = &run.trace;
        assert_eq!(
            t.logged_words(TrafficCategory::Weights).unwrap() * 2,
            t.weights_read
        );
        assert_eq!(
            t.logged_words(TrafficCategory::Inputs).unwrap() * 2,
            t.inputs_read
        );
        assert_eq!(
            t.logged_words(TrafficCategory::Outputs).unwrap() * 2,
            t.outputs_written
        );
        let log = t.log.as_ref().unwrap();
        assert_eq!(log[0].category, TrafficCategory::Weights);
        assert!(log.windows(2).all(|w| w[0].cycle <= w[1].cycle));
    }

    #[test]
    fn timing_only_matches_full_run() {
        let l = layer(8, 1, 1, 2);
        let slow = validate_arch(RawArch {
            u: 2,
            sram_depth: 16,
            drain_words_per_cycle: 0.05,
            ..RawArch::default()
        })
        .unwrap();
        let (input, filters) = case(3, &l);
        let full = run_layer(&slow, &l, &input, &filters, EngineOptions::default()).unwrap();
        let timing = run_timing(&slow, &l).unwrap();
        assert!(timing.stall_cycles > 0);
        assert_eq!(
            (timing.cycles, timing.stall_cycles),
            (full.cycles, full.stall_cycles)
        );
    }

    #[test]
    fn rejects_unsupported_layers() {
        let a = ArchConfig::default();
        let l = validate_layer(RawLayer {
            il: 9,
            ic: 1,
            fl: 3,
            fh: 3,
            z: 0,
            s: 2,
            m: 1,
        })
        .unwrap();
        let (input, filters) = case(1, &l);
        assert!(matches!(
            run_layer(&a, &l, &input, &filters, EngineOptions::default()),
            Err(EngineError::Schedule(ScheduleError::UnsupportedStride(2)))
        ));
        let l = layer(500, 1, 1, 1);
        let (input, filters) = case(1, &l);
        assert!(matches!(
            run_layer(&a, &l, &input, &filters, EngineOptions::default()),
            Err(EngineError::Schedule(ScheduleError::RowTooWide { .. }))
        ));
    }
}
