use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2×2 stride-2 max pooling. Returns the pooled tensor and, per output cell,
/// the flat input index of the window maximum. Ties resolve to the first
/// maximal element in row-major scan order.
pub fn maxpool2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max-pool needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for idx in [
                    base + 2 * oy * w + 2 * ox + 1,
                    base + (2 * oy + 1) * w + 2 * ox,
                    base + (2 * oy + 1) * w + 2 * ox + 1,
                ] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, argmax))
}

pub fn maxpool2_backward<T: Scalar>(
    gout: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if gout.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "upstream gradient has {} cells, argmax has {}",
            gout.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let buf = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(gout.data()) {
        buf[idx] += g;
    }
    Ok(dx)
}
