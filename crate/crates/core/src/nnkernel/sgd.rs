use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// SGD with classical momentum and L2 weight decay:
/// `v ← μv − lr·(g + λθ)`, `θ ← θ + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(learning_rate: T, momentum: T, weight_decay: T) -> Self {
        SgdState {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }
}

/// Applies one update to every parameter using its accumulated gradient.
/// Parameters without a gradient buffer are treated as having zero gradient.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Tensor<T>], state: &mut SgdState<T>) -> Result<()> {
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
    }
    if state.velocity.len() != params.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} parameters, got {}",
            state.velocity.len(),
            params.len()
        )));
    }
    let (lr, mu, wd) = (state.learning_rate, state.momentum, state.weight_decay);
    for (param, vel) in params.iter_mut().zip(state.velocity.iter_mut()) {
        if vel.len() != param.len() {
            return Err(Error::Shape(format!(
                "velocity of length {} for parameter {:?}",
                vel.len(),
                param.shape()
            )));
        }
        let grad = param.grad().map(|g| g.to_vec());
        let data = param.data_mut();
        for i in 0..data.len() {
            let g = grad.as_ref().map_or(T::zero(), |g| g[i]);
            vel[i] = mu * vel[i] - lr * (g + wd * data[i]);
            data[i] += vel[i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Tensor<f64> {
        let mut t = Tensor::new(&[1], vec![v]).unwrap();
        t.grad_mut()[0] = g;
        t
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_param(1.5, 0.0);
        let mut st = SgdState::new(0.1, 0.9, 0.0);
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert_eq!(p.data(), &[1.5]);
    }

    #[test]
    fn single_step_hand_evaluated() {
        let mut p = scalar_param(1.0, 1.0);
        let mut st = SgdState::new(0.1, 0.9, 0.0);
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert!((st.velocity()[0][0] + 0.1).abs() < 1e-12);
        assert!((p.data()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn momentum_accumulates_over_two_steps() {
        let mut p = scalar_param(1.0, 1.0);
        let mut st = SgdState::new(0.1, 0.9, 0.0);
        sgd_step(&mut [&mut p], &mut st).unwrap();
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert!((p.data()[0] - 0.71).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_shrinks_towards_zero() {
        let mut p = scalar_param(2.0, 0.0);
        let mut st = SgdState::new(0.1, 0.0, 0.5);
        sgd_step(&mut [&mut p], &mut st).unwrap();
        assert!((p.data()[0] - 1.9).abs() < 1e-12);
    }
}
