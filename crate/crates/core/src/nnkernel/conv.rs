//! Stride-1 "same" convolution over NCHW tensors, lowered to im2col.

use super::tensor::{axpy, dot, narrow, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

struct Geometry {
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

fn geometry<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Geometry> {
    let (n, c_in, h, wd) = x.dims4()?;
    let (c_out, wi, kh, kw) = w.dims4()?;
    if wi != c_in {
        return Err(Error::Shape(format!(
            "kernel expects {wi} input channels, input has {c_in}"
        )));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!(
            "kernel must be square and odd, got {kh}x{kw}"
        )));
    }
    Ok(Geometry {
        n,
        c_in,
        c_out,
        h,
        w: wd,
        k: kh,
    })
}

/// Valid output-column range `[lo, hi)` for kernel offset `d` (already shifted by padding).
#[inline]
fn span(d: isize, len: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = ((len as isize) - d).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

/// Patch matrix of one sample: row `(c, ky, kx)`, column `(y, x)`.
fn im2col<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T]) {
    let pad = (g.k / 2) as isize;
    let plane = g.plane();
    col.iter_mut().for_each(|v| *v = T::zero());
    for c in 0..g.c_in {
        let src = &x[c * plane..(c + 1) * plane];
        for ky in 0..g.k {
            let dy = ky as isize - pad;
            let (y0, y1) = span(dy, g.h);
            for kx in 0..g.k {
                let dx = kx as isize - pad;
                let (x0, x1) = span(dx, g.w);
                let row = ((c * g.k + ky) * g.k + kx) * plane;
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let dst = &mut col[row + y * g.w + x0..row + y * g.w + x1];
                    let s0 = (sy * g.w) as isize + x0 as isize + dx;
                    dst.copy_from_slice(&src[s0 as usize..s0 as usize + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im(col: &[f64], g: &Geometry, out: &mut [f64]) {
    let pad = (g.k / 2) as isize;
    let plane = g.plane();
    for c in 0..g.c_in {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for ky in 0..g.k {
            let dy = ky as isize - pad;
            let (y0, y1) = span(dy, g.h);
            for kx in 0..g.k {
                let dx = kx as isize - pad;
                let (x0, x1) = span(dx, g.w);
                let row = ((c * g.k + ky) * g.k + kx) * plane;
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let s0 = ((sy * g.w) as isize + x0 as isize + dx) as usize;
                    let src = &col[row + y * g.w + x0..row + y * g.w + x1];
                    for (d, &v) in dst[s0..s0 + (x1 - x0)].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// `y = w * x + b` with zero padding `k / 2`; output spatial size equals the input's.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry(x, w)?;
    if b.len() != g.c_out {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} output channels",
            b.len(),
            g.c_out
        )));
    }
    let plane = g.plane();
    let patch = g.patch();
    let mut col = vec![T::zero(); patch * plane];
    let mut acc = vec![0f64; plane];
    let mut out = Vec::with_capacity(g.n * g.c_out * plane);
    let in_stride = g.c_in * plane;
    for n in 0..g.n {
        im2col(&x.data()[n * in_stride..(n + 1) * in_stride], &g, &mut col);
        for o in 0..g.c_out {
            acc.iter_mut().for_each(|v| *v = b.data()[o].wide());
            let wrow = &w.data()[o * patch..(o + 1) * patch];
            for (kk, &wv) in wrow.iter().enumerate() {
                axpy(&mut acc, wv.wide(), &col[kk * plane..(kk + 1) * plane]);
            }
            out.extend(acc.iter().map(|&v| T::lit(v)));
        }
    }
    Tensor::new(&[g.n, g.c_out, g.h, g.w], out)
}

/// Gradients of [`conv2d_forward`] with respect to input, kernel and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let g = geometry(x, w)?;
    if gout.shape() != [g.n, g.c_out, g.h, g.w] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{}, {}, {}, {}]",
            gout.shape(),
            g.n,
            g.c_out,
            g.h,
            g.w
        )));
    }
    let plane = g.plane();
    let patch = g.patch();
    let in_stride = g.c_in * plane;
    let out_stride = g.c_out * plane;

    let mut col = vec![T::zero(); patch * plane];
    let mut dcol = vec![0f64; patch * plane];
    let mut dx_acc = vec![0f64; in_stride];
    let mut dx = Vec::with_capacity(g.n * in_stride);
    let mut dw = vec![0f64; g.c_out * patch];
    let mut db = vec![0f64; g.c_out];

    for n in 0..g.n {
        let go = &gout.data()[n * out_stride..(n + 1) * out_stride];
        im2col(&x.data()[n * in_stride..(n + 1) * in_stride], &g, &mut col);
        for o in 0..g.c_out {
            let grow = &go[o * plane..(o + 1) * plane];
            db[o] += grow.iter().map(|v| v.wide()).sum::<f64>();
            for kk in 0..patch {
                dw[o * patch + kk] += dot(grow, &col[kk * plane..(kk + 1) * plane]);
            }
        }
        dcol.iter_mut().for_each(|v| *v = 0.0);
        for kk in 0..patch {
            let drow = &mut dcol[kk * plane..(kk + 1) * plane];
            for o in 0..g.c_out {
                let wv = w.data()[o * patch + kk].wide();
                if wv != 0.0 {
                    axpy(drow, wv, &go[o * plane..(o + 1) * plane]);
                }
            }
        }
        dx_acc.iter_mut().for_each(|v| *v = 0.0);
        col2im(&dcol, &g, &mut dx_acc);
        dx.extend(dx_acc.iter().map(|&v| T::lit(v)));
    }

    Ok(Conv2dGrads {
        dx: Tensor::new(x.shape(), dx)?,
        dw: Tensor::new(w.shape(), narrow(&dw))?,
        db: Tensor::new(&[g.c_out], narrow(&db))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::<f32>::new(&[1, 1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let x = Tensor::<f32>::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::zeros(&[1, 1, 3, 3]);
        let b = Tensor::new(&[1], vec![5.0]).unwrap();
        let y = conv2d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x =
            Tensor::<f32>::new(&[1, 2, 4, 4], (0..32).map(|v| v as f32 * 0.1).collect()).unwrap();
        let w = Tensor::filled(&[3, 2, 3, 3], 0.3);
        let gout = Tensor::zeros(&[1, 3, 4, 4]);
        let grads = conv2d_backward(&x, &w, &gout).unwrap();
        assert!(grads.dx.data().iter().all(|&v| v == 0.0));
        assert!(grads.dw.data().iter().all(|&v| v == 0.0));
        assert!(grads.db.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_channel_mismatch_and_even_kernel() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let b = Tensor::zeros(&[1]);
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 3, 3, 3]), &b).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 2, 2]), &b).is_err());
        let gout = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(conv2d_backward(&x, &Tensor::zeros(&[1, 2, 3, 3]), &gout).is_err());
    }
}
