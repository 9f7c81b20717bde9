use crate::scalar::Scalar;

/// Absolute floor on the denominator of the relative error, so entries whose
/// true gradient is near zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of the scalar function `f`
/// around `x`. The step actually realized in `T` is used as the denominator.
pub fn grad_check<T, F>(mut f: F, x: &[T], analytic: &[T], eps: T) -> GradCheckReport
where
    T: Scalar,
    F: FnMut(&[T]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length must match input");
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: x.len(),
    };
    for i in 0..x.len() {
        let orig = x[i];
        let hi = orig + eps;
        let lo = orig - eps;
        probe[i] = hi;
        let f_hi = f(&probe);
        probe[i] = lo;
        let f_lo = f(&probe);
        probe[i] = orig;
        let numeric = (f_hi - f_lo) / (hi - lo).wide();
        let err = relative_error(analytic[i].wide(), numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        let x = [0.5f32, -1.25, 2.0];
        let analytic: Vec<f32> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(
            |v: &[f32]| v.iter().map(|&a| (a as f64).powi(2)).sum(),
            &x,
            &analytic,
            1e-3,
        );
        assert!(r.passes(1e-2), "{r:?}");
    }

    #[test]
    fn wrong_gradient_fails() {
        let x = [0.5f64, 1.0];
        let r = grad_check(|v: &[f64]| v[0] * v[1], &x, &[1.0, 1.0], 1e-3);
        assert!(!r.passes(1e-2));
        assert_eq!(r.worst_index, 1);
    }
}
