//! Channel-major feature tensors and filter banks.

use std::ops::RangeInclusive;

use rand::Rng;
use thiserror::Error;

use crate::arch::LayerShape;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{what}: expected {expected} elements, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} shape {got:?} does not match expected {expected:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize, usize, usize),
        got: (usize, usize, usize, usize),
    },
    #[error("maxpool2x2 needs even rows and columns, got {rows}x{cols}")]
    OddDimension { rows: usize, cols: usize },
    #[error("{what} value {value} does not fit in {bits} signed bits")]
    ValueOutOfRange {
        what: &'static str,
        value: i16,
        bits: u32,
    },
}

/// A `channels x rows x cols` block of 16-bit features, channel outermost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<i16>,
}

impl Tensor {
    pub fn new(
        channels: usize,
        rows: usize,
        cols: usize,
        data: Vec<i16>,
    ) -> Result<Self, TensorError> {
        let expected = channels * rows * cols;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                what: "tensor",
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            channels,
            rows,
            cols,
            data: vec![0; channels * rows * cols],
        }
    }

    pub fn random<R: Rng>(
        channels: usize,
        rows: usize,
        cols: usize,
        range: RangeInclusive<i16>,
        rng: &mut R,
    ) -> Self {
        let data = (0..channels * rows * cols)
            .map(|_| rng.gen_range(range.clone()))
            .collect();
        Self {
            channels,
            rows,
            cols,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.rows, self.cols)
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<i16> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, r: usize, q: usize) -> usize {
        (c * self.rows + r) * self.cols + q
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, q: usize) -> i16 {
        self.data[self.index(c, r, q)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, q: usize, value: i16) {
        let idx = self.index(c, r, q);
        self.data[idx] = value;
    }

    /// One row of one channel as a contiguous slice.
    pub fn row(&self, c: usize, r: usize) -> &[i16] {
        let start = self.index(c, r, 0);
        &self.data[start..start + self.cols]
    }

    pub fn check_range(&self, bits: u32) -> Result<(), TensorError> {
        check_words("tensor", &self.data, bits)
    }

    /// Copy with a `pad`-wide zero border on every side of each channel.
    pub fn zero_padded(&self, pad: usize) -> Self {
        let rows = self.rows + 2 * pad;
        let cols = self.cols + 2 * pad;
        let mut out = Self::zeros(self.channels, rows, cols);
        for c in 0..self.channels {
            for r in 0..self.rows {
                for q in 0..self.cols {
                    out.set(c, r + pad, q + pad, self.get(c, r, q));
                }
            }
        }
        out
    }
}

fn check_words(what: &'static str, words: &[i16], bits: u32) -> Result<(), TensorError> {
    let lo = -(1i32 << (bits - 1));
    let hi = (1i32 << (bits - 1)) - 1;
    match words.iter().find(|&&w| !(lo..=hi).contains(&(w as i32))) {
        Some(&value) => Err(TensorError::ValueOutOfRange { what, value, bits }),
        None => Ok(()),
    }
}

/// `m` filters of `ic x fh x fl` weights plus one accumulator-width bias each.
/// Weights are stored filter-major, then channel, row, column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSet {
    m: usize,
    ic: usize,
    fh: usize,
    fl: usize,
    weights: Vec<i16>,
    biases: Vec<i32>,
}

impl FilterSet {
    pub fn new(
        m: usize,
        ic: usize,
        fh: usize,
        fl: usize,
        weights: Vec<i16>,
        biases: Vec<i32>,
    ) -> Result<Self, TensorError> {
        let expected = m * ic * fh * fl;
        if weights.len() != expected {
            return Err(TensorError::LengthMismatch {
                what: "weights",
                expected,
                got: weights.len(),
            });
        }
        if biases.len() != m {
            return Err(TensorError::LengthMismatch {
                what: "biases",
                expected: m,
                got: biases.len(),
            });
        }
        Ok(Self {
            m,
            ic,
            fh,
            fl,
            weights,
            biases,
        })
    }

    pub fn random<R: Rng>(
        layer: &LayerShape,
        weight_range: RangeInclusive<i16>,
        bias_range: RangeInclusive<i32>,
        rng: &mut R,
    ) -> Self {
        let weights = (0..layer.weight_count())
            .map(|_| rng.gen_range(weight_range.clone()))
            .collect();
        let biases = (0..layer.m)
            .map(|_| rng.gen_range(bias_range.clone()))
            .collect();
        Self {
            m: layer.m,
            ic: layer.ic,
            fh: layer.fh,
            fl: layer.fl,
            weights,
            biases,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ic(&self) -> usize {
        self.ic
    }

    pub fn fh(&self) -> usize {
        self.fh
    }

    pub fn fl(&self) -> usize {
        self.fl
    }

    /// `(m, ic, fh, fl)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.m, self.ic, self.fh, self.fl)
    }

    pub fn weights(&self) -> &[i16] {
        &self.weights
    }

    pub fn biases(&self) -> &[i32] {
        &self.biases
    }

    #[inline]
    pub fn weight(&self, k: usize, c: usize, j: usize, i: usize) -> i16 {
        self.weights[((k * self.ic + c) * self.fh + j) * self.fl + i]
    }

    /// The `fl` weights of filter `k`, channel `c`, row `j`.
    pub fn filter_row(&self, k: usize, c: usize, j: usize) -> &[i16] {
        let start = ((k * self.ic + c) * self.fh + j) * self.fl;
        &self.weights[start..start + self.fl]
    }

    pub fn bias(&self, k: usize) -> i32 {
        self.biases[k]
    }

    pub fn check_range(&self, bits: u32) -> Result<(), TensorError> {
        check_words("weights", &self.weights, bits)
    }

    pub fn check_layer(&self, layer: &LayerShape) -> Result<(), TensorError> {
        let expected = (layer.m, layer.ic, layer.fh, layer.fl);
        if self.dims() != expected {
            return Err(TensorError::ShapeMismatch {
                what: "filters",
                expected,
                got: self.dims(),
            });
        }
        Ok(())
    }
}

pub fn check_input(layer: &LayerShape, input: &Tensor) -> Result<(), TensorError> {
    let (c, r, q) = input.dims();
    if (c, r, q) != (layer.ic, layer.il, layer.il) {
        return Err(TensorError::ShapeMismatch {
            what: "input",
            expected: (1, layer.ic, layer.il, layer.il),
            got: (1, c, r, q),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_checked() {
        assert!(Tensor::new(2, 2, 2, vec![0; 7]).is_err());
        assert!(FilterSet::new(2, 1, 3, 3, vec![0; 18], vec![0]).is_err());
    }

    #[test]
    fn channel_major_layout() {
        let t = Tensor::new(2, 2, 3, (0..12).collect()).unwrap();
        assert_eq!(t.get(1, 0, 2), 8);
        assert_eq!(t.row(0, 1), &[3, 4, 5]);
    }

    #[test]
    fn range_check() {
        let t = Tensor::new(1, 1, 2, vec![127, -128]).unwrap();
        assert!(t.check_range(8).is_ok());
        let t = Tensor::new(1, 1, 2, vec![128, 0]).unwrap();
        assert!(matches!(
            t.check_range(8),
            Err(TensorError::ValueOutOfRange { value: 128, .. })
        ));
    }

    #[test]
    fn padding_embeds() {
        let t = Tensor::new(1, 1, 1, vec![5]).unwrap();
        let p = t.zero_padded(1);
        assert_eq!(p.dims(), (1, 3, 3));
        assert_eq!(p.data(), &[0, 0, 0, 0, 5, 0, 0, 0, 0]);
    }
}
