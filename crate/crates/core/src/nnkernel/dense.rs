use super::tensor::{axpy, dot, narrow, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `y[n] = w · x[n] + b` for `x: [N, in]`, `w: [out, in]`, `b: [out]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d_in) = x.dims2()?;
    let (d_out, wi) = w.dims2()?;
    if wi != d_in || b.len() != d_out {
        return Err(Error::Shape(format!(
            "dense: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * d_out);
    for s in 0..n {
        let row = x.outer(s);
        for o in 0..d_out {
            let v = dot(&w.data()[o * d_in..(o + 1) * d_in], row) + b.data()[o].wide();
            out.push(T::lit(v));
        }
    }
    Tensor::new(&[n, d_out], out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, d_in) = x.dims2()?;
    let (d_out, _) = w.dims2()?;
    if gout.shape() != [n, d_out] {
        return Err(Error::Shape(format!(
            "dense: upstream gradient {:?}, expected [{n}, {d_out}]",
            gout.shape()
        )));
    }
    let mut dx = vec![0f64; n * d_in];
    let mut dw = vec![0f64; d_out * d_in];
    let mut db = vec![0f64; d_out];
    for s in 0..n {
        let row = x.outer(s);
        let g = gout.outer(s);
        let dxs = &mut dx[s * d_in..(s + 1) * d_in];
        for o in 0..d_out {
            let go = g[o].wide();
            if go == 0.0 {
                continue;
            }
            db[o] += go;
            axpy(dxs, go, &w.data()[o * d_in..(o + 1) * d_in]);
            axpy(&mut dw[o * d_in..(o + 1) * d_in], go, row);
        }
    }
    Ok(DenseGrads {
        dx: Tensor::new(x.shape(), narrow(&dx))?,
        dw: Tensor::new(w.shape(), narrow(&dw))?,
        db: Tensor::new(&[d_out], narrow(&db))?,
    })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Gradient of [`relu`]; `x` is the pre-activation input.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, gout: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(x, gout)?;
    let data = x
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape(), data)
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Gradient of [`sigmoid`]; `y` is the forward output.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, gout: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(y, gout)?;
    let data = y
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&p, &g)| g * p * (T::one() - p))
        .collect();
    Tensor::new(y.shape(), data)
}

/// Elementwise `|a - b|`.
pub fn abs_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .collect();
    Tensor::new(a.shape(), data)
}

/// Gradients of [`abs_diff`] for both operands; the subgradient at `a == b` is 0.
pub fn abs_diff_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    gout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    same_shape(a, b)?;
    same_shape(a, gout)?;
    let mut da = Vec::with_capacity(a.len());
    let mut db = Vec::with_capacity(a.len());
    for ((&x, &y), &g) in a.data().iter().zip(b.data()).zip(gout.data()) {
        let s = sign(x - y);
        da.push(g * s);
        db.push(-(g * s));
    }
    Ok((Tensor::new(a.shape(), da)?, Tensor::new(a.shape(), db)?))
}

#[inline]
pub(crate) fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
        let y = sigmoid(&Tensor::<f32>::new(&[3], vec![-50.0, 0.0, 50.0]).unwrap());
        assert!(y.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn abs_diff_of_equal_vectors_is_zero() {
        let v = Tensor::<f32>::new(&[4], vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        assert!(abs_diff(&v, &v).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dense_shape_errors() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(dense_forward(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2])).is_err());
        assert!(dense_forward(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn relu_masks_negatives() {
        let x = Tensor::<f32>::new(&[4], vec![-1.0, 0.0, 2.0, -3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0, 0.0]);
        let g = Tensor::filled(&[4], 1.0);
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
