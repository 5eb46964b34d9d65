//! Runs a chain of conv layers through the cost model, the cycle engine, or
//! the engine plus the golden oracle, applying host ops between layers.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::load_config;
use super::report::{emit_report, ReportFormat};
use super::tensor_file::{read_filters, read_tensor, write_tensor};
use super::trace::dump_trace;
use super::IoError;
use crate::arch::{vgg16_conv_preset, ArchConfig, HostOp, LayerShape, NetworkSpec};
use crate::cost::{analytic_cycles, network_cost_with_threads, CostReport};
use crate::engine::{run_layer, DramTrace, EngineOptions};
use crate::golden::{golden_conv, host_maxpool2x2, host_relu};
use crate::tensor::{FilterSet, Tensor};

/// Seeded data ranges. Inputs and weights stay small so that most outputs
/// exercise the arithmetic instead of saturating.
pub const INPUT_RANGE: std::ops::RangeInclusive<i16> = -128..=128;
pub const WEIGHT_RANGE: std::ops::RangeInclusive<i16> = -64..=64;
pub const BIAS_RANGE: std::ops::RangeInclusive<i32> = -1024..=1024;
pub const DEFAULT_SEED: u64 = 0x5acc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Cost,
    Simulate,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    /// Layer `k` (0-based position in the full network) draws from
    /// `ChaCha8Rng::seed_from_u64(seed + 1 + k)`.
    Seeded(u64),
    /// One `<layer name>.sacw` file per layer.
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    /// `ChaCha8Rng::seed_from_u64(seed)`, uniform in [`INPUT_RANGE`].
    Seeded(u64),
    File(PathBuf),
}

pub fn seeded_input(shape: &LayerShape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::random(shape.ic, shape.il, shape.il, INPUT_RANGE, &mut rng)
}

pub fn seeded_filters(shape: &LayerShape, seed: u64, index: usize) -> FilterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + index as u64));
    FilterSet::random(shape, WEIGHT_RANGE, BIAS_RANGE, &mut rng)
}

/// Parses a 1-based inclusive layer selection such as `3` or `1-2` into a
/// 0-based half-open range.
pub fn parse_layer_range(text: &str, len: usize) -> Result<Range<usize>, IoError> {
    let bad = || {
        IoError::Format(format!(
            "bad layer range {text:?} for a {len}-layer network"
        ))
    };
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (a.trim().parse::<usize>(), b.trim().parse::<usize>()),
        None => (text.trim().parse::<usize>(), text.trim().parse::<usize>()),
    };
    let (lo, hi) = (lo.map_err(|_| bad())?, hi.map_err(|_| bad())?);
    if lo == 0 || lo > hi || hi > len {
        return Err(bad());
    }
    Ok(lo - 1..hi)
}

/// Fully resolved inputs of a network run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub mode: RunMode,
    pub arch: ArchConfig,
    pub net: NetworkSpec,
    /// Layers to execute, 0-based half-open.
    pub layers: Range<usize>,
    pub weights: WeightSource,
    pub input: InputSource,
    pub threads: usize,
    pub checked: bool,
    pub log_transactions: bool,
}

impl RunPlan {
    pub fn new(mode: RunMode, arch: ArchConfig, net: NetworkSpec) -> Self {
        let layers = 0..net.len();
        Self {
            mode,
            arch,
            net,
            layers,
            weights: WeightSource::Seeded(DEFAULT_SEED),
            input: InputSource::Seeded(DEFAULT_SEED),
            threads: 1,
            checked: false,
            log_transactions: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimSummary {
    pub cycles: u64,
    pub stall_cycles: u64,
    pub analytic_cycles: u64,
    pub trace: DramTrace,
    pub utilization: f64,
}

#[derive(Debug, Clone)]
pub struct LayerOutcome {
    pub index: usize,
    pub name: String,
    pub sim: Option<SimSummary>,
    /// Verify mode only: number of output words differing from the oracle.
    pub mismatches: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub cost: CostReport,
    pub layers: Vec<LayerOutcome>,
    /// Output of the last executed layer after its host op.
    pub output: Option<Tensor>,
}

impl NetworkRun {
    /// False when any verified layer differed from the oracle.
    pub fn verified(&self) -> bool {
        self.layers.iter().all(|l| l.mismatches.unwrap_or(0) == 0)
    }

    pub fn traces(&self) -> Vec<(String, &DramTrace)> {
        self.layers
            .iter()
            .filter_map(|l| l.sim.as_ref().map(|s| (l.name.clone(), &s.trace)))
            .collect()
    }
}

fn apply_host_op(op: HostOp, t: Tensor) -> Result<Tensor, IoError> {
    Ok(match op {
        HostOp::None => t,
        HostOp::Relu => host_relu(&t),
        HostOp::ReluMaxpool => host_maxpool2x2(&host_relu(&t))?,
    })
}

pub fn execute(plan: &RunPlan) -> Result<NetworkRun, IoError> {
    let selected = plan.net.slice(plan.layers.clone())?;
    let cost = network_cost_with_threads(&selected, &plan.arch, plan.threads)?;
    if plan.mode == RunMode::Cost {
        let layers = selected
            .layers()
            .iter()
            .enumerate()
            .map(|(k, l)| LayerOutcome {
                index: plan.layers.start + k,
                name: l.name.clone(),
                sim: None,
                mismatches: None,
            })
            .collect();
        return Ok(NetworkRun {
            cost,
            layers,
            output: None,
        });
    }

    let mut current = match (&plan.input, selected.layers().first()) {
        (_, None) => None,
        (InputSource::Seeded(seed), Some(first)) => Some(seeded_input(&first.shape, *seed)),
        (InputSource::File(path), Some(_)) => Some(read_tensor(path)?),
    };
    let options = EngineOptions {
        checked: plan.checked,
        log_transactions: plan.log_transactions,
        threads: plan.threads,
    };

    let mut outcomes = Vec::with_capacity(selected.len());
    for (k, layer) in selected.layers().iter().enumerate() {
        let index = plan.layers.start + k;
        let input = current.take().expect("input present for every layer");
        let filters = match &plan.weights {
            WeightSource::Seeded(seed) => seeded_filters(&layer.shape, *seed, index),
            WeightSource::Dir(dir) => read_filters(&dir.join(format!("{}.sacw", layer.name)))?,
        };
        let annotate = |source| IoError::Layer {
            index,
            name: layer.name.clone(),
            source,
        };
        let run =
            run_layer(&plan.arch, &layer.shape, &input, &filters, options).map_err(annotate)?;
        let mismatches = if plan.mode == RunMode::Verify {
            let golden = golden_conv(&layer.shape, &input, &filters, &plan.arch.rules())?;
            Some(
                golden
                    .data()
                    .iter()
                    .zip(run.output.data())
                    .filter(|(a, b)| a != b)
                    .count(),
            )
        } else {
            None
        };
        let analytic = analytic_cycles(&layer.shape, &plan.arch).map_err(|e| annotate(e.into()))?;
        outcomes.push(LayerOutcome {
            index,
            name: layer.name.clone(),
            sim: Some(SimSummary {
                cycles: run.cycles,
                stall_cycles: run.stall_cycles,
                analytic_cycles: analytic,
                trace: run.trace,
                utilization: run.utilization,
            }),
            mismatches,
        });
        current = Some(apply_host_op(layer.host_op, run.output)?);
    }
    Ok(NetworkRun {
        cost,
        layers: outcomes,
        output: current,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsEntry {
    pub seed: Option<u64>,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsEntry {
    pub report: Option<PathBuf>,
    /// `csv` (default) or `json`.
    pub format: Option<String>,
    pub tensor: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// TOML run description. Relative paths resolve against the manifest's
/// directory.
///
/// ```toml
/// mode = "verify"          # cost | simulate | verify
/// arch = "arch.toml"       # optional, reference design when absent
/// net = "vgg16"            # or a config file path
/// layers = "1-2"           # optional, 1-based inclusive
/// threads = 4
/// checked = true
/// input = "input.sacc"     # optional, seeded otherwise
///
/// [weights]
/// seed = 7                 # or: dir = "weights/"
///
/// [outputs]
/// report = "report.csv"
/// format = "csv"
/// tensor = "out.sacc"
/// trace = "trace.csv"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub mode: RunMode,
    #[serde(default)]
    pub arch: Option<PathBuf>,
    #[serde(default = "default_net")]
    pub net: String,
    #[serde(default)]
    pub layers: Option<String>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub checked: bool,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub weights: WeightsEntry,
    #[serde(default)]
    pub outputs: OutputsEntry,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_net() -> String {
    "vgg16".to_string()
}

fn require(path: &Path) -> Result<(), IoError> {
    if !path.exists() {
        return Err(IoError::file(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file not found"),
        ));
    }
    Ok(())
}

impl RunManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, IoError> {
        let mut manifest: RunManifest = toml::from_str(text).map_err(|e| IoError::Parse {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        manifest.base_dir = base_dir.to_path_buf();
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolves every referenced file and builds the plan. Missing inputs
    /// fail here, before any work starts.
    pub fn plan(&self) -> Result<RunPlan, IoError> {
        let arch = match &self.arch {
            Some(p) => {
                let p = self.resolve(p);
                load_config(&p)?.arch()?
            }
            None => ArchConfig::default(),
        };
        let net = if self.net == "vgg16" {
            vgg16_conv_preset()
        } else {
            load_config(&self.resolve(Path::new(&self.net)))?.network()?
        };
        let layers = match &self.layers {
            Some(text) => parse_layer_range(text, net.len())?,
            None => 0..net.len(),
        };
        let weights = match (&self.weights.dir, self.weights.seed) {
            (Some(_), Some(_)) => {
                return Err(IoError::Format(
                    "weights: give either `seed` or `dir`, not both".into(),
                ))
            }
            (Some(dir), None) => {
                let dir = self.resolve(dir);
                for l in &net.layers()[layers.clone()] {
                    require(&dir.join(format!("{}.sacw", l.name)))?;
                }
                WeightSource::Dir(dir)
            }
            (None, seed) => WeightSource::Seeded(seed.unwrap_or(DEFAULT_SEED)),
        };
        let input = match &self.input {
            Some(p) => {
                let p = self.resolve(p);
                require(&p)?;
                InputSource::File(p)
            }
            None => InputSource::Seeded(self.weights.seed.unwrap_or(DEFAULT_SEED)),
        };
        Ok(RunPlan {
            mode: self.mode,
            arch,
            net,
            layers,
            weights,
            input,
            threads: self.threads.unwrap_or(1),
            checked: self.checked,
            log_transactions: self.outputs.trace.is_some(),
        })
    }
}

/// Executes a manifest and writes the outputs it names.
pub fn run_network(manifest: &RunManifest) -> Result<NetworkRun, IoError> {
    let plan = manifest.plan()?;
    let run = execute(&plan)?;
    let out = &manifest.outputs;
    if let Some(path) = &out.report {
        let format: ReportFormat = out
            .format
            .as_deref()
            .unwrap_or("csv")
            .parse()
            .map_err(IoError::Format)?;
        let path = manifest.resolve(path);
        let text = emit_report(&run.cost, format)?;
        std::fs::write(&path, text).map_err(|e| IoError::file(&path, e))?;
    }
    if let (Some(path), Some(t)) = (&out.tensor, &run.output) {
        write_tensor(&manifest.resolve(path), t)?;
    }
    if let Some(path) = &out.trace {
        if plan.mode == RunMode::Cost {
            return Err(IoError::LoggingDisabled);
        }
        dump_trace(&run.traces(), &manifest.resolve(path))?;
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_ranges() {
        assert_eq!(parse_layer_range("1-2", 13).unwrap(), 0..2);
        assert_eq!(parse_layer_range("13", 13).unwrap(), 12..13);
        assert!(parse_layer_range("0-2", 13).is_err());
        assert!(parse_layer_range("3-2", 13).is_err());
        assert!(parse_layer_range("12-14", 13).is_err());
        assert!(parse_layer_range("a", 13).is_err());
    }

    #[test]
    fn seeded_filters_are_position_stable() {
        let net = vgg16_conv_preset();
        let shape = net.layers()[2].shape;
        assert_eq!(seeded_filters(&shape, 9, 2), seeded_filters(&shape, 9, 2));
        assert_ne!(seeded_filters(&shape, 9, 2), seeded_filters(&shape, 9, 3));
    }

    #[test]
    fn missing_weight_dir_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let text = "mode = \"simulate\"\nlayers = \"1\"\n[weights]\ndir = \"w\"\n";
        let manifest = RunManifest::parse(text, dir.path()).unwrap();
        match manifest.plan() {
            Err(IoError::File { path, .. }) => {
                assert!(path.ends_with("w/conv1_1.sacw"), "{path:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cost_mode_on_vgg() {
        let manifest = RunManifest::parse("mode = \"cost\"\n", Path::new(".")).unwrap();
        let run = run_network(&manifest).unwrap();
        assert_eq!(run.cost.total.cycles, 78_610_112);
        assert!(run.output.is_none());
    }
}
