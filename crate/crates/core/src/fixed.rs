//! Fixed-point arithmetic shared by the oracle and the engine.
//!
//! Products and partial sums wrap in two's complement at the accumulator
//! width. Saturation happens only when a partial sum is requantized to a
//! `data_bits` output word.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FixedPointRules {
    pub data_bits: u32,
    pub acc_bits: u32,
    pub out_shift: u32,
}

impl Default for FixedPointRules {
    fn default() -> Self {
        Self {
            data_bits: 16,
            acc_bits: 32,
            out_shift: 0,
        }
    }
}

impl FixedPointRules {
    pub fn with_shift(out_shift: u32) -> Self {
        Self {
            out_shift,
            ..Self::default()
        }
    }

    pub fn data_min(&self) -> i32 {
        -(1i32 << (self.data_bits - 1))
    }

    pub fn data_max(&self) -> i32 {
        (1i32 << (self.data_bits - 1)) - 1
    }

    pub fn fits_data(&self, value: i16) -> bool {
        (self.data_min()..=self.data_max()).contains(&(value as i32))
    }

    /// Reduces a native 32-bit wrapped value to the accumulator width.
    ///
    /// Wrapping is a ring homomorphism, so doing the arithmetic in `i32` and
    /// reducing once gives the same result as reducing after every operation.
    #[inline]
    pub fn wrap_acc(&self, value: i32) -> i32 {
        let spare = 32 - self.acc_bits;
        (value << spare) >> spare
    }

    #[inline]
    pub fn requantize(&self, acc: i32) -> i16 {
        requantize(acc, self)
    }
}

/// Arithmetic right shift (floor division by a power of two) followed by
/// saturation to the signed `data_bits` range.
#[inline]
pub fn requantize(acc: i32, rules: &FixedPointRules) -> i16 {
    let shifted = rules.wrap_acc(acc) >> rules.out_shift;
    shifted.clamp(rules.data_min(), rules.data_max()) as i16
}

#[inline]
pub fn saturate(value: i32, rules: &FixedPointRules) -> i16 {
    value.clamp(rules.data_min(), rules.data_max()) as i16
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn passes_small_values() {
        assert_eq!(requantize(300, &FixedPointRules::with_shift(0)), 300);
    }

    #[test]
    fn saturates() {
        let rules = FixedPointRules::with_shift(0);
        assert_eq!(requantize(1 << 20, &rules), 32767);
        assert_eq!(requantize(-(1 << 20), &rules), -32768);
    }

    #[test]
    fn shift_rounds_toward_negative_infinity() {
        assert_eq!(requantize(-5, &FixedPointRules::with_shift(1)), -3);
        assert_eq!(requantize(5, &FixedPointRules::with_shift(1)), 2);
    }

    #[test]
    fn narrow_accumulator_wraps() {
        let rules = FixedPointRules {
            data_bits: 8,
            acc_bits: 12,
            out_shift: 0,
        };
        assert_eq!(rules.wrap_acc(0x800), -2048);
        assert_eq!(rules.wrap_acc(0x7ff), 2047);
        assert_eq!(requantize(0x900, &rules), -128);
        assert_eq!(rules.data_max(), 127);
    }

    proptest! {
        #[test]
        fn zero_shift_is_saturation(x in any::<i32>()) {
            let rules = FixedPointRules::with_shift(0);
            prop_assert_eq!(requantize(x, &rules), saturate(x, &rules));
        }

        #[test]
        fn monotone(a in any::<i32>(), b in any::<i32>(), shift in 0u32..32) {
            let rules = FixedPointRules::with_shift(shift);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(requantize(lo, &rules) <= requantize(hi, &rules));
        }

        #[test]
        fn wrapped_sum_order_free(mut xs in proptest::collection::vec(any::<i32>(), 1..32)) {
            let forward = xs.iter().fold(0i32, |a, &x| a.wrapping_add(x));
            xs.reverse();
            let backward = xs.iter().fold(0i32, |a, &x| a.wrapping_add(x));
            prop_assert_eq!(forward, backward);
        }
    }
}
