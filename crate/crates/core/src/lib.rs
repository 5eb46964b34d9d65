//! Simulator and cost model of a serial-accumulation CNN convolution engine.
//!
//! The crate is organised bottom-up:
//!
//! * [`arch`] and [`fixed`]: layer geometry, accelerator parameters and the
//!   fixed-point rules shared by everything else.
//! * [`golden`]: direct-summation reference convolution and host-side ops.
//! * [`schedule`]: tiling and the ordered pass sequence.
//! * [`engine`]: the cycle-accurate engine, checked bit-exactly against
//!   [`golden`].
//! * [`cost`]: closed-form cycles, DRAM traffic and throughput.
//! * [`io`]: config files, tensor files, reports, traces and the network runner.

pub mod arch;
pub mod cost;
pub mod engine;
pub mod fixed;
pub mod golden;
pub mod io;
pub mod schedule;
pub mod tensor;

pub use arch::{vgg16_conv_preset, ArchConfig, HostOp, LayerShape, NetworkLayer, NetworkSpec};
pub use cost::{analytic_cycles, analytic_traffic, network_cost, CostReport, TrafficBreakdown};
pub use engine::{run_layer, run_timing, DramTrace, Engine, EngineOptions, LayerRun, TimingRun};
pub use fixed::{requantize, FixedPointRules};
pub use golden::{golden_conv, host_maxpool2x2, host_relu};
pub use schedule::{derive_tiling, pass_sequence, PassDescriptor, Tiling};
pub use tensor::{FilterSet, Tensor};
