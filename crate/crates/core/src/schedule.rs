//! Tiling and the ordered pass sequence that drives both the cycle engine and
//! the analytic cost model.
//!
//! Loop nest, outermost first: filter group, row tile, input channel, filter
//! row, output row within the tile. Keeping the output row innermost means a
//! weight-register load is shared by every row of the tile. Passes whose
//! input row falls in the zero-pad border contribute nothing and are skipped.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchConfig, LayerShape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("output row of {ol} words does not fit an SRAM bank of {sram_depth} words")]
    RowTooWide { ol: usize, sram_depth: usize },
    #[error("stride {0} is not supported by the row-streaming dataflow")]
    UnsupportedStride(usize),
    #[error("filter {fh}x{fl} does not match {n} multipliers per unit")]
    FilterWidthMismatch { fl: usize, fh: usize, n: usize },
    #[error("zero pad {z} cannot be realized with {n} multipliers per unit")]
    UnsupportedPadding { z: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Tiling {
    /// Filter groups, one filter per unit.
    pub g: usize,
    /// Output rows held by one SRAM bank.
    pub r: usize,
    /// Row tiles per group.
    pub t: usize,
}

impl Tiling {
    pub fn tiles(&self) -> usize {
        self.g * self.t
    }

    /// Global output rows covered by `tile`; the last tile may be short.
    pub fn tile_rows(&self, layer: &LayerShape, tile: usize) -> Range<usize> {
        let start = tile * self.r;
        start..(start + self.r).min(layer.ol)
    }

    /// Filters that really exist in `group`; the rest of the units idle.
    pub fn filters_in_group(&self, arch: &ArchConfig, layer: &LayerShape, group: usize) -> usize {
        (layer.m - group * arch.u).min(arch.u)
    }
}

pub fn derive_tiling(arch: &ArchConfig, layer: &LayerShape) -> Result<Tiling, ScheduleError> {
    let r = arch.sram_depth / layer.ol;
    if r == 0 {
        return Err(ScheduleError::RowTooWide {
            ol: layer.ol,
            sram_depth: arch.sram_depth,
        });
    }
    Ok(Tiling {
        g: layer.m.div_ceil(arch.u),
        r,
        t: layer.ol.div_ceil(r),
    })
}

/// Checks that a layer maps onto the row-streaming engine: unit stride,
/// `n x n` filters, and a pad narrow enough that the right-border write of
/// one pass fits in the silent first cycle of the next.
pub fn check_dataflow(arch: &ArchConfig, layer: &LayerShape) -> Result<(), ScheduleError> {
    if layer.s != 1 {
        return Err(ScheduleError::UnsupportedStride(layer.s));
    }
    if layer.fl != arch.n || layer.fh != arch.n {
        return Err(ScheduleError::FilterWidthMismatch {
            fl: layer.fl,
            fh: layer.fh,
            n: arch.n,
        });
    }
    if layer.z > 1 || 2 * layer.z + 1 > arch.n {
        return Err(ScheduleError::UnsupportedPadding {
            z: layer.z,
            n: arch.n,
        });
    }
    Ok(())
}

/// Filter rows `j` whose input row `out_row * s + j - z` lies inside the input.
pub fn valid_filter_rows(out_row: usize, layer: &LayerShape) -> Range<usize> {
    valid_taps(out_row, layer.s, layer.z, layer.il, layer.fh)
}

/// Filter columns `i` whose input column lies inside the input.
pub fn valid_filter_cols(out_col: usize, layer: &LayerShape) -> Range<usize> {
    valid_taps(out_col, layer.s, layer.z, layer.il, layer.fl)
}

fn valid_taps(pos: usize, s: usize, z: usize, il: usize, taps: usize) -> Range<usize> {
    let base = (pos * s) as isize - z as isize;
    let lo = (-base).clamp(0, taps as isize) as usize;
    let hi = (il as isize - base).clamp(0, taps as isize) as usize;
    lo..hi.max(lo)
}

/// Products per pass that land in a real output column.
pub fn retained_products_per_pass(layer: &LayerShape) -> u64 {
    (0..layer.ol)
        .map(|col| valid_filter_cols(col, layer).len() as u64)
        .sum()
}

/// Σ over output rows of the number of valid filter rows.
pub fn row_pass_count(layer: &LayerShape) -> u64 {
    (0..layer.ol)
        .map(|row| valid_filter_rows(row, layer).len() as u64)
        .sum()
}

/// Filter rows used by at least one row of `tile`. With the row tiles being
/// contiguous this is a single range.
pub fn tile_filter_rows(tiling: &Tiling, layer: &LayerShape, tile: usize) -> Range<usize> {
    let rows = tiling.tile_rows(layer, tile);
    let lo = rows
        .clone()
        .map(|row| valid_filter_rows(row, layer).start)
        .min()
        .unwrap_or(0);
    let hi = rows
        .map(|row| valid_filter_rows(row, layer).end)
        .max()
        .unwrap_or(0);
    lo..hi.max(lo)
}

/// One streaming pass: one input row of one channel against one filter row,
/// accumulating into one output row of the current tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PassDescriptor {
    pub group: usize,
    /// Tile index within the group.
    pub tile: usize,
    pub channel: usize,
    pub filter_row: usize,
    /// Output row relative to the start of the tile.
    pub row_in_tile: usize,
    pub out_row: usize,
    pub in_row: usize,
    /// First pass that touches this output row, so its writes start from the bias.
    pub first_touch: bool,
}

impl PassDescriptor {
    pub fn global_tile(&self, tiling: &Tiling) -> usize {
        self.group * tiling.t + self.tile
    }

    /// The weight registers must be reloaded whenever this changes.
    pub fn weight_key(&self) -> (usize, usize, usize, usize) {
        (self.group, self.tile, self.channel, self.filter_row)
    }
}

/// Lazily walks the pass nest. Use [`pass_sequence`] for a checked entry point.
#[derive(Debug, Clone)]
pub struct Passes {
    layer: LayerShape,
    tiling: Tiling,
    groups: Range<usize>,
    group: usize,
    tile: usize,
    channel: usize,
    filter_row: usize,
    row_in_tile: usize,
    done: bool,
}

impl Passes {
    pub fn new(layer: LayerShape, tiling: Tiling, groups: Range<usize>) -> Self {
        let done = groups.is_empty();
        Self {
            layer,
            tiling,
            group: groups.start,
            groups,
            tile: 0,
            channel: 0,
            filter_row: 0,
            row_in_tile: 0,
            done,
        }
    }

    fn advance(&mut self) {
        let rows = self.tiling.tile_rows(&self.layer, self.tile).len();
        self.row_in_tile += 1;
        if self.row_in_tile < rows {
            return;
        }
        self.row_in_tile = 0;
        self.filter_row += 1;
        if self.filter_row < self.layer.fh {
            return;
        }
        self.filter_row = 0;
        self.channel += 1;
        if self.channel < self.layer.ic {
            return;
        }
        self.channel = 0;
        self.tile += 1;
        if self.tile < self.tiling.t {
            return;
        }
        self.tile = 0;
        self.group += 1;
        if self.group >= self.groups.end {
            self.done = true;
        }
    }
}

impl Iterator for Passes {
    type Item = PassDescriptor;

    fn next(&mut self) -> Option<PassDescriptor> {
        while !self.done {
            let out_row = self.tile * self.tiling.r + self.row_in_tile;
            let valid = valid_filter_rows(out_row, &self.layer);
            let pass = valid.contains(&self.filter_row).then(|| PassDescriptor {
                group: self.group,
                tile: self.tile,
                channel: self.channel,
                filter_row: self.filter_row,
                row_in_tile: self.row_in_tile,
                out_row,
                in_row: out_row * self.layer.s + self.filter_row - self.layer.z,
                first_touch: self.channel == 0 && self.filter_row == valid.start,
            });
            self.advance();
            if pass.is_some() {
                return pass;
            }
        }
        None
    }
}

pub fn passes(
    arch: &ArchConfig,
    layer: &LayerShape,
    tiling: &Tiling,
    groups: Range<usize>,
) -> Result<Passes, ScheduleError> {
    check_dataflow(arch, layer)?;
    Ok(Passes::new(*layer, *tiling, groups))
}

pub fn pass_sequence(
    arch: &ArchConfig,
    tiling: &Tiling,
    layer: &LayerShape,
) -> Result<Vec<PassDescriptor>, ScheduleError> {
    Ok(passes(arch, layer, tiling, 0..tiling.g)?.collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{validate_layer, vgg16_conv_preset, RawArch, RawLayer};
    use std::collections::HashSet;

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

    fn arch_with_depth(sram_depth: usize) -> ArchConfig {
        crate::arch::validate_arch(RawArch {
            sram_depth,
            ..RawArch::default()
        })
        .unwrap()
    }

    #[test]
    fn conv1_1_tiling() {
        let t = derive_tiling(&ArchConfig::default(), &layer(224, 3, 1, 64)).unwrap();
        assert_eq!(t, Tiling { g: 1, r: 2, t: 112 });
    }

    #[test]
    fn conv5_tiling() {
        let t = derive_tiling(&ArchConfig::default(), &layer(14, 512, 1, 512)).unwrap();
        assert_eq!(t, Tiling { g: 8, r: 32, t: 1 });
    }

    #[test]
    fn row_too_wide() {
        assert_eq!(
            derive_tiling(&ArchConfig::default(), &layer(500, 1, 1, 1)),
            Err(ScheduleError::RowTooWide {
                ol: 500,
                sram_depth: 448
            })
        );
    }

    #[test]
    fn tiling_bounds_hold() {
        for l in vgg16_conv_preset().layers() {
            for depth in [224, 448, 896, 1000] {
                let t = derive_tiling(&arch_with_depth(depth), &l.shape).unwrap();
                assert!(t.r >= 1);
                assert!((t.t - 1) * t.r < l.shape.ol && l.shape.ol <= t.t * t.r);
            }
        }
    }

    #[test]
    fn border_rows() {
        let l = layer(224, 3, 1, 64);
        assert_eq!(valid_filter_rows(0, &l), 1..3);
        assert_eq!(valid_filter_rows(5, &l), 0..3);
        assert_eq!(valid_filter_rows(223, &l), 0..2);
    }

    #[test]
    fn conv1_1_first_tile_passes() {
        let arch = ArchConfig::default();
        let l = layer(224, 3, 1, 64);
        let tiling = derive_tiling(&arch, &l).unwrap();
        let seq: Vec<_> = passes(&arch, &l, &tiling, 0..1)
            .unwrap()
            .take_while(|p| p.tile == 0)
            .collect();
        let rows = |c: usize, j: usize| -> Vec<usize> {
            seq.iter()
                .filter(|p| p.channel == c && p.filter_row == j)
                .map(|p| p.out_row)
                .collect()
        };
        assert_eq!(rows(0, 0), vec![1]);
        assert_eq!(rows(0, 1), vec![0, 1]);
        assert_eq!(rows(0, 2), vec![0, 1]);
        assert_eq!(seq.len(), 3 * 5);
        // row 0 under filter row 0 would read the pad row and is skipped
        assert!(seq[0].first_touch && seq[0].out_row == 1 && seq[0].filter_row == 0);
        assert_eq!(seq[0].in_row, 0);
        assert!(seq[1].first_touch && seq[1].out_row == 0 && seq[1].filter_row == 1);
        assert!(!seq[2].first_touch && seq[2].out_row == 1);
    }

    #[test]
    fn conv5_passes_per_channel() {
        let arch = ArchConfig::default();
        let l = layer(14, 512, 1, 512);
        let tiling = derive_tiling(&arch, &l).unwrap();
        let count = passes(&arch, &l, &tiling, 0..1)
            .unwrap()
            .filter(|p| p.channel == 7)
            .count();
        assert_eq!(count, 3 * 14 - 2);
        assert_eq!(row_pass_count(&l), 40);
    }

    #[test]
    fn unpadded_layer_emits_everything() {
        let arch = ArchConfig::default();
        let l = layer(10, 4, 0, 3);
        let tiling = derive_tiling(&arch, &l).unwrap();
        let seq = pass_sequence(&arch, &tiling, &l).unwrap();
        assert_eq!(tiling.t, 1);
        assert_eq!(seq.len(), 4 * 3 * tiling.r.min(l.ol));
    }

    #[test]
    fn preconditions() {
        let arch = ArchConfig::default();
        let strided = validate_layer(RawLayer {
            il: 7,
            ic: 1,
            fl: 3,
            fh: 3,
            z: 0,
            s: 2,
            m: 1,
        })
        .unwrap();
        let tiling = derive_tiling(&arch, &strided).unwrap();
        assert_eq!(
            pass_sequence(&arch, &tiling, &strided),
            Err(ScheduleError::UnsupportedStride(2))
        );
        let wide = validate_layer(RawLayer {
            il: 7,
            ic: 1,
            fl: 5,
            fh: 5,
            z: 2,
            s: 1,
            m: 1,
        })
        .unwrap();
        let tiling = derive_tiling(&arch, &wide).unwrap();
        assert!(matches!(
            pass_sequence(&arch, &tiling, &wide),
            Err(ScheduleError::FilterWidthMismatch { fl: 5, .. })
        ));
    }

    #[test]
    fn coverage_and_weight_economy() {
        let arch = crate::arch::validate_arch(RawArch {
            u: 4,
            sram_depth: 20,
            ..RawArch::default()
        })
        .unwrap();
        for (il, z, m) in [(9, 1, 10), (9, 0, 4), (6, 1, 5)] {
            let l = layer(il, 3, z, m);
            let tiling = derive_tiling(&arch, &l).unwrap();
            let seq = pass_sequence(&arch, &tiling, &l).unwrap();

            let mut seen = HashSet::new();
            for p in &seq {
                assert!(seen.insert((p.group, p.out_row, p.channel, p.filter_row)));
                assert!(p.row_in_tile * l.ol + l.ol <= arch.sram_depth);
                assert!(p.in_row < l.il);
            }
            assert_eq!(
                seq.len() as u64,
                (tiling.g * l.ic) as u64 * row_pass_count(&l)
            );

            // one weight load per (tile, channel, filter row), runs are contiguous
            let mut loads = 0;
            let mut last = None;
            let mut keys = HashSet::new();
            for p in &seq {
                if last != Some(p.weight_key()) {
                    loads += 1;
                    assert!(keys.insert(p.weight_key()));
                    last = Some(p.weight_key());
                }
            }
            let expected: usize = (0..tiling.g)
                .map(|_| {
                    (0..tiling.t)
                        .map(|t| l.ic * tile_filter_rows(&tiling, &l, t).len())
                        .sum::<usize>()
                })
                .sum();
            assert_eq!(loads, expected);

            // each output row is bias-initialised exactly once per group
            let firsts = seq.iter().filter(|p| p.first_touch).count();
            assert_eq!(firsts, tiling.g * l.ol);
        }
    }

    #[test]
    fn retained_products() {
        assert_eq!(retained_products_per_pass(&layer(14, 1, 1, 1)), 3 * 14 - 2);
        assert_eq!(retained_products_per_pass(&layer(14, 1, 0, 1)), 3 * 12);
    }
}
