//! TOML architecture/network configuration.
//!
//! ```toml
//! [arch]
//! u = 64
//! n = 3
//! sram_depth = 448
//! sram_word_bits = 32
//! data_bits = 16
//! clock_hz = 200000000
//! drain_words_per_cycle = 1.0
//! out_shift = 8
//!
//! [[layer]]
//! name = "conv1_1"      # optional
//! il = 224
//! ic = 3
//! fl = 3
//! fh = 3
//! z = 1
//! s = 1
//! m = 64
//! host_op = "relu"      # none | relu | relu_maxpool
//! ```
//!
//! Every key except `name` is required. A file may carry only `[arch]`, only
//! layers, or both.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::arch::{
    validate_arch, validate_layer, ArchConfig, HostOp, NetworkLayer, NetworkSpec, RawArch,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub il: usize,
    pub ic: usize,
    pub fl: usize,
    pub fh: usize,
    pub z: usize,
    pub s: usize,
    pub m: usize,
    #[serde(default)]
    pub host_op: HostOp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<RawArch>,
    #[serde(default, rename = "layer", skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerEntry>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_parts(arch: Option<&ArchConfig>, net: Option<&NetworkSpec>) -> Self {
        Self {
            arch: arch.map(ArchConfig::raw),
            layers: net
                .map(|net| {
                    net.layers()
                        .iter()
                        .map(|l| LayerEntry {
                            name: Some(l.name.clone()),
                            il: l.shape.il,
                            ic: l.shape.ic,
                            fl: l.shape.fl,
                            fh: l.shape.fh,
                            z: l.shape.z,
                            s: l.shape.s,
                            m: l.shape.m,
                            host_op: l.host_op,
                        })
                        .collect()
                })
                .unwrap_or_default(),
        }
    }

    /// The validated architecture, or the reference defaults when absent.
    pub fn arch(&self) -> Result<ArchConfig, IoError> {
        Ok(validate_arch(self.arch.unwrap_or_default())?)
    }

    pub fn network(&self) -> Result<NetworkSpec, IoError> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(index, e)| {
                let shape = validate_layer(crate::arch::RawLayer {
                    il: e.il,
                    ic: e.ic,
                    fl: e.fl,
                    fh: e.fh,
                    z: e.z,
                    s: e.s,
                    m: e.m,
                })?;
                Ok(NetworkLayer {
                    name: e
                        .name
                        .clone()
                        .unwrap_or_else(|| format!("layer{}", index + 1)),
                    shape,
                    host_op: e.host_op,
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(NetworkSpec::new(layers)?)
    }
}

pub fn load_config(path: &Path) -> Result<ConfigFile, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    ConfigFile::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::vgg16_conv_preset;

    #[test]
    fn vgg_round_trips() {
        let arch = ArchConfig::default();
        let net = vgg16_conv_preset();
        let file = ConfigFile::from_parts(Some(&arch), Some(&net));
        let text = file.to_toml();
        let back = ConfigFile::parse(&text, Path::new("mem")).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.arch().unwrap(), arch);
        assert_eq!(back.network().unwrap(), net);
    }

    #[test]
    fn partial_arch_takes_defaults() {
        let file = ConfigFile::parse("[arch]\nsram_depth = 224\n", Path::new("a.toml")).unwrap();
        let arch = file.arch().unwrap();
        assert_eq!((arch.u, arch.sram_depth), (64, 224));
    }

    #[test]
    fn missing_or_unknown_key_rejected() {
        let missing = "[[layer]]\nil = 6\nic = 1\nfl = 3\nfh = 3\nz = 0\ns = 1\n";
        assert!(matches!(
            ConfigFile::parse(missing, Path::new("n.toml")),
            Err(IoError::Parse { .. })
        ));
        assert!(matches!(
            ConfigFile::parse("[arch]\ndepth = 4\n", Path::new("a.toml")),
            Err(IoError::Parse { .. })
        ));
    }

    #[test]
    fn invalid_values_surface_validation_errors() {
        let text = r#"
[[layer]]
il = 6
ic = 1
fl = 3
fh = 3
z = 0
s = 2
m = 1
host_op = "none"
"#;
        let file = ConfigFile::parse(text, Path::new("n.toml")).unwrap();
        assert!(matches!(file.network(), Err(IoError::Config(_))));
        assert_eq!(file.arch().unwrap(), ArchConfig::default());
    }
}
