use super::dense::sigmoid_scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PROB_CLAMP: f64 = 1e-7;

/// `p` limited to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
#[inline]
pub fn clamp_prob<T: Scalar>(p: T) -> T {
    p.max(T::lit(PROB_CLAMP)).min(T::lit(1.0 - PROB_CLAMP))
}

/// `−[y log p + (1 − y) log(1 − p)]` with `p` clamped away from 0 and 1.
pub fn bce_loss<T: Scalar>(p: T, y: T) -> T {
    let p = clamp_prob(p);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// `∂ bce / ∂p` at the clamped probability.
pub fn bce_backward<T: Scalar>(p: T, y: T) -> T {
    let p = clamp_prob(p);
    -(y / p) + (T::one() - y) / (T::one() - p)
}

/// Loss of `bce(σ(z), y)` together with its derivative `σ(z) − y` in the
/// logit. The loss is evaluated from the logit as `softplus(z) − y·z` at
/// accumulator precision, so saturated probabilities do not lose it to
/// rounding; clamping `z` to the logits of the probability bounds keeps it
/// equal to [`bce_loss`] of the clamped probability.
pub fn sigmoid_bce<T: Scalar>(z: T, y: T) -> (f64, T) {
    let bound = ((1.0 - PROB_CLAMP) / PROB_CLAMP).ln();
    let zc = z.wide().clamp(-bound, bound);
    let softplus = zc.max(0.0) + (-zc.abs()).exp().ln_1p();
    (softplus - y.wide() * zc, sigmoid_scalar(z) - y)
}

/// Mean softmax cross-entropy over rows of `logits: [N, C]` and the logit gradient.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (n, c) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut grad = Vec::with_capacity(n * c);
    let mut total = 0f64;
    for (row, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::Shape(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        let z = logits.outer(row);
        let max = z.iter().map(|v| v.wide()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v.wide() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total += sum.ln() + max - z[label].wide();
        for (k, e) in exps.iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push(T::lit((e / sum - target) / n as f64));
        }
    }
    Ok((T::lit(total / n as f64), Tensor::new(&[n, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(0.5f64, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5f64, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0f32, 1.0) < 1e-6);
        assert!(bce_loss(0.0f32, 1.0).is_finite());
    }

    #[test]
    fn bce_backward_matches_closed_form() {
        let (p, y) = (0.3f64, 1.0);
        assert!((bce_backward(p, y) + 1.0 / 0.3).abs() < 1e-12);
        let (p, y) = (0.3f64, 0.0);
        assert!((bce_backward(p, y) - 1.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let logits = Tensor::<f64>::zeros(&[2, 4]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad.data()[0] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!(softmax_cross_entropy(&logits, &[0, 4]).is_err());
    }

    #[test]
    fn logit_form_agrees_with_probability_form() {
        for z in [-12.0f64, -3.0, -0.5, 0.0, 0.7, 4.0, 15.0] {
            for y in [0.0, 1.0] {
                let (loss, dz) = sigmoid_bce(z, y);
                let p = sigmoid_scalar(z);
                assert!((loss - bce_loss(p, y)).abs() < 1e-9, "z={z} y={y}");
                assert_eq!(dz, p - y);
            }
        }
    }

    #[test]
    fn logit_form_saturates_at_the_clamp() {
        let cap = -PROB_CLAMP.ln();
        assert!((sigmoid_bce(40.0f32, 0.0).0 - cap).abs() < 1e-6);
        assert!((sigmoid_bce(-40.0f32, 1.0).0 - cap).abs() < 1e-6);
        assert!(sigmoid_bce(40.0f32, 1.0).0 < 1e-6);
    }
}
