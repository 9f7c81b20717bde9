use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values saved by a train-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

/// Dispatches to [`batchnorm_train`] or [`batchnorm_infer`]; the cache is
/// only produced in train mode.
pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BnCache<T>>)> {
    match mode {
        Mode::Infer => Ok((batchnorm_infer(x, state)?, None)),
        Mode::Train => batchnorm_train(x, state).map(|(y, c)| (y, Some(c))),
    }
}

fn check_channels<T: Scalar>(
    x: &Tensor<T>,
    state: &BatchNormState<T>,
) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    if c != state.channels() {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input has {c}",
            state.channels()
        )));
    }
    Ok((n, c, h * w))
}

/// Normalizes with the running statistics.
pub fn batchnorm_infer<T: Scalar>(x: &Tensor<T>, state: &BatchNormState<T>) -> Result<Tensor<T>> {
    let (n, c, plane) = check_channels(x, state)?;
    let data = x.data();
    let mut out = vec![T::zero(); data.len()];
    for ch in 0..c {
        let mean = state.running_mean.data()[ch].wide();
        let inv = 1.0 / (state.running_var.data()[ch].wide() + state.eps).sqrt();
        let gamma = state.gamma.data()[ch].wide();
        let beta = state.beta.data()[ch].wide();
        for s in 0..n {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                out[i] = T::lit(gamma * (data[i].wide() - mean) * inv + beta);
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Normalizes with batch statistics and folds them into the running
/// statistics: `running ← (1 − m)·running + m·batch`.
pub fn batchnorm_train<T: Scalar>(
    x: &Tensor<T>,
    state: &mut BatchNormState<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, c, plane) = check_channels(x, state)?;
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let data = x.data();
    let mut out = vec![T::zero(); data.len()];
    let count = (n * plane) as f64;
    let mut xhat = vec![T::zero(); data.len()];
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let mut sum = 0f64;
        for s in 0..n {
            let off = (s * c + ch) * plane;
            sum += data[off..off + plane].iter().map(|v| v.wide()).sum::<f64>();
        }
        let mean = sum / count;
        let mut sq = 0f64;
        for s in 0..n {
            let off = (s * c + ch) * plane;
            sq += data[off..off + plane]
                .iter()
                .map(|v| {
                    let d = v.wide() - mean;
                    d * d
                })
                .sum::<f64>();
        }
        let var = sq / count;
        let inv = 1.0 / (var + state.eps).sqrt();
        let gamma = state.gamma.data()[ch].wide();
        let beta = state.beta.data()[ch].wide();
        for s in 0..n {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                let xh = (data[i].wide() - mean) * inv;
                xhat[i] = T::lit(xh);
                out[i] = T::lit(gamma * xh + beta);
            }
        }
        let m = state.momentum;
        let rm = &mut state.running_mean.data_mut()[ch];
        *rm = T::lit((1.0 - m) * rm.wide() + m * mean);
        let rv = &mut state.running_var.data_mut()[ch];
        *rv = T::lit((1.0 - m) * rv.wide() + m * var);
        inv_std.push(inv);
    }
    let cache = BnCache {
        xhat,
        inv_std,
        shape: x.shape().to_vec(),
    };
    Ok((Tensor::new(x.shape(), out)?, cache))
}

#[derive(Clone, Debug)]
pub struct BnGrads<T> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

/// Backward pass of train-mode batch normalization.
pub fn batchnorm_backward<T: Scalar>(
    gout: &Tensor<T>,
    cache: &BnCache<T>,
    state: &BatchNormState<T>,
) -> Result<BnGrads<T>> {
    if gout.shape() != cache.shape.as_slice() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match {:?}",
            gout.shape(),
            cache.shape
        )));
    }
    let (n, c, h, w) = gout.dims4()?;
    let plane = h * w;
    let count = (n * plane) as f64;
    let g = gout.data();
    let mut dx = vec![T::zero(); g.len()];
    let mut dgamma = Vec::with_capacity(c);
    let mut dbeta = Vec::with_capacity(c);
    for ch in 0..c {
        let mut sum_g = 0f64;
        let mut sum_gx = 0f64;
        for s in 0..n {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                sum_g += g[i].wide();
                sum_gx += g[i].wide() * cache.xhat[i].wide();
            }
        }
        dgamma.push(T::lit(sum_gx));
        dbeta.push(T::lit(sum_g));
        let scale = state.gamma.data()[ch].wide() * cache.inv_std[ch];
        let (mg, mgx) = (sum_g / count, sum_gx / count);
        for s in 0..n {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                dx[i] = T::lit(scale * (g[i].wide() - mg - cache.xhat[i].wide() * mgx));
            }
        }
    }
    Ok(BnGrads {
        dx: Tensor::new(gout.shape(), dx)?,
        dgamma: Tensor::new(&[c], dgamma)?,
        dbeta: Tensor::new(&[c], dbeta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_stats(y: &Tensor<f32>, ch: usize) -> (f64, f64) {
        let (n, c, h, w) = y.dims4().unwrap();
        let plane = h * w;
        let vals: Vec<f64> = (0..n)
            .flat_map(|s| {
                let off = (s * c + ch) * plane;
                y.data()[off..off + plane]
                    .iter()
                    .map(|&v| v as f64)
                    .collect::<Vec<_>>()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let x = Tensor::<f32>::filled(&[3, 2, 2, 2], 4.5);
        let mut st = BatchNormState::new(2);
        let (y, _) = batchnorm_forward(&x, &mut st, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_contract() {
        let x = Tensor::<f32>::new(&[4, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        let mut st = BatchNormState::new(1);
        st.gamma = Tensor::new(&[1], vec![2.0]).unwrap();
        st.beta = Tensor::new(&[1], vec![3.0]).unwrap();
        let (y, _) = batchnorm_forward(&x, &mut st, Mode::Train).unwrap();
        let (mean, var) = channel_stats(&y, 0);
        assert!((mean - 3.0).abs() < 1e-5);
        assert!((var.sqrt() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::<f32>::new(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut st = BatchNormState::new(1);
        batchnorm_forward(&x, &mut st, Mode::Train).unwrap();
        assert!((st.running_mean.data()[0] - 0.2).abs() < 1e-7);
        assert!((st.running_var.data()[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-7);
    }

    #[test]
    fn train_mode_rejects_single_sample() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        let mut st = BatchNormState::new(1);
        assert!(matches!(
            batchnorm_forward(&x, &mut st, Mode::Train),
            Err(Error::BatchTooSmall(1))
        ));
        assert!(batchnorm_forward(&x, &mut st, Mode::Infer).is_ok());
    }

    #[test]
    fn infer_uses_running_stats() {
        let x = Tensor::<f32>::new(&[1, 1, 1, 2], vec![2.0, 4.0]).unwrap();
        let mut st = BatchNormState::new(1);
        st.running_mean = Tensor::new(&[1], vec![1.0]).unwrap();
        st.running_var = Tensor::new(&[1], vec![4.0]).unwrap();
        let (y, cache) = batchnorm_forward(&x, &mut st, Mode::Infer).unwrap();
        assert!(cache.is_none());
        assert!((y.data()[0] - 0.5).abs() < 1e-5);
        assert!((y.data()[1] - 1.5).abs() < 1e-5);
    }
}
