//! Golden reference convolution and the host-side inter-layer operations.
//!
//! `golden_conv` is a plain direct summation with index-guarded zero padding.
//! It is the ground truth the cycle engine is checked against, so it stays
//! deliberately naive.

use crate::arch::LayerShape;
use crate::fixed::{requantize, FixedPointRules};
use crate::tensor::{check_input, FilterSet, Tensor, TensorError};

pub fn golden_conv(
    layer: &LayerShape,
    input: &Tensor,
    filters: &FilterSet,
    rules: &FixedPointRules,
) -> Result<Tensor, TensorError> {
    check_input(layer, input)?;
    filters.check_layer(layer)?;

    let il = layer.il as isize;
    let z = layer.z as isize;
    let s = layer.s as isize;
    let mut out = Tensor::zeros(layer.oc, layer.ol, layer.ol);
    for k in 0..layer.m {
        for row in 0..layer.ol {
            for col in 0..layer.ol {
                let mut acc = filters.bias(k);
                for c in 0..layer.ic {
                    for j in 0..layer.fh {
                        let r = row as isize * s + j as isize - z;
                        if r < 0 || r >= il {
                            continue;
                        }
                        for i in 0..layer.fl {
                            let q = col as isize * s + i as isize - z;
                            if q < 0 || q >= il {
                                continue;
                            }
                            let x = input.get(c, r as usize, q as usize) as i32;
                            let w = filters.weight(k, c, j, i) as i32;
                            acc = acc.wrapping_add(x.wrapping_mul(w));
                        }
                    }
                }
                out.set(k, row, col, requantize(acc, rules));
            }
        }
    }
    Ok(out)
}

pub fn host_relu(t: &Tensor) -> Tensor {
    let (c, r, q) = t.dims();
    let data = t.data().iter().map(|&x| x.max(0)).collect();
    Tensor::new(c, r, q, data).expect("same shape")
}

pub fn host_maxpool2x2(t: &Tensor) -> Result<Tensor, TensorError> {
    let (channels, rows, cols) = t.dims();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(TensorError::OddDimension { rows, cols });
    }
    let mut out = Tensor::zeros(channels, rows / 2, cols / 2);
    for c in 0..channels {
        for r in 0..rows / 2 {
            for q in 0..cols / 2 {
                let v = t
                    .get(c, 2 * r, 2 * q)
                    .max(t.get(c, 2 * r, 2 * q + 1))
                    .max(t.get(c, 2 * r + 1, 2 * q))
                    .max(t.get(c, 2 * r + 1, 2 * q + 1));
                out.set(c, r, q, v);
            }
        }
    }
    Ok(out)
}
