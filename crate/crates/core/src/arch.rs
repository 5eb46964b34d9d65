//! Layer geometry, network presets and accelerator parameters.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::FixedPointRules;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be at least {min}, got {value}")]
    NonPositive {
        field: &'static str,
        min: i64,
        value: i64,
    },
    #[error("(il - fl + 2z) = {numerator} is not divisible by stride {stride}")]
    NonIntegerOutput { numerator: i64, stride: usize },
    #[error("out_shift {shift} must be below the accumulator width {word_bits}")]
    ShiftOutOfRange { shift: u32, word_bits: u32 },
    #[error("drain_words_per_cycle must be a positive finite number, got {0}")]
    InvalidRate(f64),
    #[error("{field} = {value} bits is outside the supported range {min}..={max}")]
    WidthOutOfRange {
        field: &'static str,
        value: u32,
        min: u32,
        max: u32,
    },
    #[error("layer {index} expects {expected} input channels of side {expected_side}, previous stage yields {got} of side {got_side}")]
    ChainMismatch {
        index: usize,
        expected: usize,
        expected_side: usize,
        got: usize,
        got_side: usize,
    },
    #[error("layer {index}: maxpool2x2 needs an even side length, got {side}")]
    OddPoolInput { index: usize, side: usize },
}

/// Geometry of one convolutional layer as supplied by a user or a config file,
/// before the output side is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLayer {
    pub il: usize,
    pub ic: usize,
    pub fl: usize,
    pub fh: usize,
    pub z: usize,
    pub s: usize,
    pub m: usize,
}

/// Validated convolution geometry. `ol` and `oc` are derived.
///
/// Field names follow the usual accelerator shorthand: input length/channels,
/// filter length/height, zero pad, stride, filter count, output length/channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct LayerShape {
    pub il: usize,
    pub ic: usize,
    pub fl: usize,
    pub fh: usize,
    pub z: usize,
    pub s: usize,
    pub m: usize,
    pub ol: usize,
    pub oc: usize,
}

impl LayerShape {
    pub fn new(raw: RawLayer) -> Result<Self, ConfigError> {
        validate_layer(raw)
    }

    pub fn raw(&self) -> RawLayer {
        RawLayer {
            il: self.il,
            ic: self.ic,
            fl: self.fl,
            fh: self.fh,
            z: self.z,
            s: self.s,
            m: self.m,
        }
    }

    /// Multiply-accumulates of the layer counted over every output position,
    /// padded ones included.
    pub fn nominal_macs(&self) -> u64 {
        (self.ol * self.ol * self.m * self.fl * self.fh * self.ic) as u64
    }

    pub fn weight_count(&self) -> usize {
        self.m * self.ic * self.fh * self.fl
    }
}

impl fmt::Display for LayerShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} * {}x({}x{}) z={} s={} -> {}x{}x{}",
            self.il,
            self.il,
            self.ic,
            self.m,
            self.fh,
            self.fl,
            self.z,
            self.s,
            self.ol,
            self.ol,
            self.oc
        )
    }
}

fn at_least(field: &'static str, value: usize, min: usize) -> Result<(), ConfigError> {
    if value < min {
        return Err(ConfigError::NonPositive {
            field,
            min: min as i64,
            value: value as i64,
        });
    }
    Ok(())
}

/// Checks a raw geometry and derives the output side length.
pub fn validate_layer(raw: RawLayer) -> Result<LayerShape, ConfigError> {
    at_least("il", raw.il, 1)?;
    at_least("ic", raw.ic, 1)?;
    at_least("fl", raw.fl, 1)?;
    at_least("fh", raw.fh, 1)?;
    at_least("s", raw.s, 1)?;
    at_least("m", raw.m, 1)?;

    let numerator = raw.il as i64 - raw.fl as i64 + 2 * raw.z as i64;
    if numerator < 0 {
        return Err(ConfigError::NonPositive {
            field: "il - fl + 2z",
            min: 0,
            value: numerator,
        });
    }
    if numerator % raw.s as i64 != 0 {
        return Err(ConfigError::NonIntegerOutput {
            numerator,
            stride: raw.s,
        });
    }
    let ol = numerator as usize / raw.s + 1;
    Ok(LayerShape {
        il: raw.il,
        ic: raw.ic,
        fl: raw.fl,
        fh: raw.fh,
        z: raw.z,
        s: raw.s,
        m: raw.m,
        ol,
        oc: raw.m,
    })
}

/// Host-side work performed between two accelerator layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostOp {
    #[default]
    None,
    Relu,
    ReluMaxpool,
}

impl HostOp {
    pub fn side_after(self, side: usize) -> usize {
        match self {
            HostOp::ReluMaxpool => side / 2,
            _ => side,
        }
    }
}

impl fmt::Display for HostOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HostOp::None => "none",
            HostOp::Relu => "relu",
            HostOp::ReluMaxpool => "relu+maxpool2x2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkLayer {
    pub name: String,
    pub shape: LayerShape,
    pub host_op: HostOp,
}

/// An ordered chain of convolution layers. Construction checks that each
/// layer consumes exactly what the previous layer plus its host op produces.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct NetworkSpec {
    layers: Vec<NetworkLayer>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<NetworkLayer>) -> Result<Self, ConfigError> {
        for (index, pair) in layers.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            if prev.host_op == HostOp::ReluMaxpool && prev.shape.ol % 2 != 0 {
                return Err(ConfigError::OddPoolInput {
                    index,
                    side: prev.shape.ol,
                });
            }
            let side = prev.host_op.side_after(prev.shape.ol);
            if next.shape.ic != prev.shape.oc || next.shape.il != side {
                return Err(ConfigError::ChainMismatch {
                    index: index + 1,
                    expected: next.shape.ic,
                    expected_side: next.shape.il,
                    got: prev.shape.oc,
                    got_side: side,
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn layers(&self) -> &[NetworkLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Keeps layers `range` (0-based, half open). The result is re-validated.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, ConfigError> {
        Self::new(self.layers[range].to_vec())
    }
}

/// The 13 convolution layers of VGG-16 on a 224x224 RGB input.
pub fn vgg16_conv_preset() -> NetworkSpec {
    // (stage, layers in stage, output channels)
    const STAGES: [(usize, usize, usize); 5] = [
        (1, 2, 64),
        (2, 2, 128),
        (3, 3, 256),
        (4, 3, 512),
        (5, 3, 512),
    ];

    let mut layers = Vec::with_capacity(13);
    let mut side = 224;
    let mut channels = 3;
    for (stage, count, width) in STAGES {
        for idx in 0..count {
            let shape = validate_layer(RawLayer {
                il: side,
                ic: channels,
                fl: 3,
                fh: 3,
                z: 1,
                s: 1,
                m: width,
            })
            .expect("VGG-16 geometry is valid");
            let host_op = if idx + 1 == count {
                HostOp::ReluMaxpool
            } else {
                HostOp::Relu
            };
            layers.push(NetworkLayer {
                name: format!("conv{}_{}", stage, idx + 1),
                shape,
                host_op,
            });
            channels = width;
            side = host_op.side_after(shape.ol);
        }
    }
    NetworkSpec::new(layers).expect("VGG-16 chains")
}

/// Accelerator parameters as supplied, before validation. Fields missing
/// from a config file take the reference-design values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawArch {
    pub u: usize,
    pub n: usize,
    pub sram_depth: usize,
    pub sram_word_bits: u32,
    pub data_bits: u32,
    pub clock_hz: u64,
    pub drain_words_per_cycle: f64,
    pub out_shift: u32,
}

impl Default for RawArch {
    fn default() -> Self {
        Self {
            u: 64,
            n: 3,
            sram_depth: 448,
            sram_word_bits: 32,
            data_bits: 16,
            clock_hz: 200_000_000,
            drain_words_per_cycle: 1.0,
            out_shift: 8,
        }
    }
}

/// Validated accelerator parameters.
///
/// `u` convolution units each hold `n` weight registers and multipliers and
/// two ping-pong SRAM banks of `sram_depth` words. `drain_words_per_cycle`
/// is the per-unit SRAM to DRAM rate and may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArchConfig {
    pub u: usize,
    pub n: usize,
    pub sram_depth: usize,
    pub sram_word_bits: u32,
    pub data_bits: u32,
    pub clock_hz: u64,
    pub drain_words_per_cycle: f64,
    pub out_shift: u32,
}

impl Default for ArchConfig {
    fn default() -> Self {
        validate_arch(RawArch::default()).expect("default arch is valid")
    }
}

impl ArchConfig {
    pub fn raw(&self) -> RawArch {
        RawArch {
            u: self.u,
            n: self.n,
            sram_depth: self.sram_depth,
            sram_word_bits: self.sram_word_bits,
            data_bits: self.data_bits,
            clock_hz: self.clock_hz,
            drain_words_per_cycle: self.drain_words_per_cycle,
            out_shift: self.out_shift,
        }
    }

    /// Cycles a bank stays busy draining `words` words.
    pub fn drain_cycles(&self, words: u64) -> u64 {
        (words as f64 / self.drain_words_per_cycle).ceil() as u64
    }

    pub fn rules(&self) -> FixedPointRules {
        FixedPointRules {
            data_bits: self.data_bits,
            acc_bits: self.sram_word_bits,
            out_shift: self.out_shift,
        }
    }

    /// Bytes moved per DRAM word.
    pub fn word_bytes(&self) -> u64 {
        self.data_bits.div_ceil(8) as u64
    }

    /// True when every parameter that shapes timing and traffic matches the
    /// 64x3, 448-word, 16/32-bit, 200 MHz reference design. The drain rate and
    /// requantization shift are free.
    pub fn is_reference_design(&self) -> bool {
        let reference = RawArch::default();
        self.u == reference.u
            && self.n == reference.n
            && self.sram_depth == reference.sram_depth
            && self.sram_word_bits == reference.sram_word_bits
            && self.data_bits == reference.data_bits
            && self.clock_hz == reference.clock_hz
    }
}

pub fn validate_arch(raw: RawArch) -> Result<ArchConfig, ConfigError> {
    at_least("u", raw.u, 1)?;
    at_least("n", raw.n, 1)?;
    at_least("sram_depth", raw.sram_depth, 1)?;
    if !(raw.drain_words_per_cycle.is_finite() && raw.drain_words_per_cycle > 0.0) {
        return Err(ConfigError::InvalidRate(raw.drain_words_per_cycle));
    }
    if raw.clock_hz == 0 {
        return Err(ConfigError::NonPositive {
            field: "clock_hz",
            min: 1,
            value: 0,
        });
    }
    if !(2..=16).contains(&raw.data_bits) {
        return Err(ConfigError::WidthOutOfRange {
            field: "data_bits",
            value: raw.data_bits,
            min: 2,
            max: 16,
        });
    }
    if !(raw.data_bits..=32).contains(&raw.sram_word_bits) {
        return Err(ConfigError::WidthOutOfRange {
            field: "sram_word_bits",
            value: raw.sram_word_bits,
            min: raw.data_bits,
            max: 32,
        });
    }
    if raw.out_shift >= raw.sram_word_bits {
        return Err(ConfigError::ShiftOutOfRange {
            shift: raw.out_shift,
            word_bits: raw.sram_word_bits,
        });
    }
    Ok(ArchConfig {
        u: raw.u,
        n: raw.n,
        sram_depth: raw.sram_depth,
        sram_word_bits: raw.sram_word_bits,
        data_bits: raw.data_bits,
        clock_hz: raw.clock_hz,
        drain_words_per_cycle: raw.drain_words_per_cycle,
        out_shift: raw.out_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(il: usize, fl: usize, z: usize, s: usize) -> RawLayer {
        RawLayer {
            il,
            ic: 1,
            fl,
            fh: fl,
            z,
            s,
            m: 1,
        }
    }

    #[test]
    fn vgg_first_layer_keeps_side() {
        let shape = validate_layer(RawLayer {
            il: 224,
            ic: 3,
            fl: 3,
            fh: 3,
            z: 1,
            s: 1,
            m: 64,
        })
        .unwrap();
        assert_eq!(shape.ol, 224);
        assert_eq!(shape.oc, 64);
    }

    #[test]
    fn full_cover_filter_gives_single_output() {
        assert_eq!(validate_layer(raw(5, 5, 0, 1)).unwrap().ol, 1);
    }

    #[test]
    fn non_integral_output_rejected() {
        assert!(matches!(
            validate_layer(raw(6, 3, 0, 2)),
            Err(ConfigError::NonIntegerOutput {
                numerator: 3,
                stride: 2
            })
        ));
    }

    #[test]
    fn zero_fields_rejected() {
        let mut r = raw(5, 3, 0, 1);
        r.ic = 0;
        assert!(matches!(
            validate_layer(r),
            Err(ConfigError::NonPositive { field: "ic", .. })
        ));
        let mut r = raw(5, 3, 0, 1);
        r.s = 0;
        assert!(validate_layer(r).is_err());
        // filter larger than padded input
        assert!(validate_layer(raw(2, 5, 0, 1)).is_err());
    }

    #[test]
    fn vgg_preset_layers() {
        let net = vgg16_conv_preset();
        assert_eq!(net.len(), 13);
        let first = net.layers()[0].shape;
        assert_eq!((first.il, first.ic, first.m), (224, 3, 64));
        let last = net.layers()[12].shape;
        assert_eq!((last.il, last.ic, last.m), (14, 512, 512));
        assert_eq!(net.layers()[12].name, "conv5_3");
        let pools: Vec<usize> = net
            .layers()
            .iter()
            .enumerate()
            .filter(|(_, l)| l.host_op == HostOp::ReluMaxpool)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(pools, vec![1, 3, 6, 9, 12]);
        for layer in net.layers() {
            assert_eq!(validate_layer(layer.shape.raw()).unwrap(), layer.shape);
        }
    }

    #[test]
    fn broken_chain_rejected() {
        let net = vgg16_conv_preset();
        let mut layers = net.layers().to_vec();
        layers[3].host_op = HostOp::Relu;
        assert!(matches!(
            NetworkSpec::new(layers),
            Err(ConfigError::ChainMismatch {
                index: 4,
                got_side: 112,
                ..
            })
        ));
    }

    #[test]
    fn arch_defaults() {
        let arch = validate_arch(RawArch::default()).unwrap();
        assert_eq!((arch.u, arch.n, arch.sram_depth), (64, 3, 448));
        assert_eq!(arch.sram_word_bits, 32);
        assert_eq!(arch.data_bits, 16);
        assert_eq!(arch.clock_hz, 200_000_000);
        assert!(arch.is_reference_design());
    }

    #[test]
    fn arch_errors() {
        let bad = RawArch {
            u: 0,
            ..RawArch::default()
        };
        assert!(matches!(
            validate_arch(bad),
            Err(ConfigError::NonPositive { field: "u", .. })
        ));
        let bad = RawArch {
            out_shift: 32,
            ..RawArch::default()
        };
        assert!(matches!(
            validate_arch(bad),
            Err(ConfigError::ShiftOutOfRange {
                shift: 32,
                word_bits: 32
            })
        ));
        let bad = RawArch {
            sram_word_bits: 40,
            ..RawArch::default()
        };
        assert!(matches!(
            validate_arch(bad),
            Err(ConfigError::WidthOutOfRange { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_side_inverts(ol in 1usize..64, fl in 1usize..8, z in 0usize..4, s in 1usize..4) {
                // build il from a chosen ol so the geometry is always integral
                let il = (ol - 1) * s + fl;
                prop_assume!(il > 2 * z);
                let il = il - 2 * z;
                let shape = validate_layer(raw(il, fl, z, s)).unwrap();
                prop_assert_eq!(shape.ol, ol);
                prop_assert_eq!((shape.ol - 1) * shape.s + shape.fl, shape.il + 2 * shape.z);
            }
        }
    }
}
