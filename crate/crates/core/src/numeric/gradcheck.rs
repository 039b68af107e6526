//! Central finite differences, used as an independent gradient oracle.

use crate::error::{PunnError, Result};
use crate::scalar::Scalar;

/// Denominator floor for [`max_relative_error`]; components whose magnitude
/// is below it are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for every coordinate.
pub fn finite_diff_grad<T, F>(mut f: F, params: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(h > T::zero()) {
        return Err(PunnError::Input(format!("step must be positive, got {h}")));
    }
    let mut p = params.to_vec();
    let two_h = h + h;
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(PunnError::Numeric(format!(
                "objective not finite around coordinate {i}"
            )));
        }
        out.push((up - down) / two_h);
    }
    Ok(out)
}

/// Richardson extrapolation of [`finite_diff_grad`]: `(4 D(h/2) - D(h)) / 3`,
/// accurate to `O(h^4)`. Useful where the objective is sharply curved.
pub fn richardson_diff_grad<T, F>(mut f: F, params: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let coarse = finite_diff_grad(&mut f, params, h)?;
    let fine = finite_diff_grad(&mut f, params, h / T::lit(2.0))?;
    let three = T::lit(3.0);
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(&a, &b)| (T::lit(4.0) * a - b) / three)
        .collect())
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, RELATIVE_ERROR_FLOOR)`.
pub fn max_relative_error<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x.as_f64(), y.as_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_ERROR_FLOOR)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_diff_grad(|p: &[f64]| p[0] * p[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_and_sum() {
        let g = finite_diff_grad(|_: &[f64]| 4.2, &[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = finite_diff_grad(|p: &[f64]| p.iter().sum(), &[0.3, -7.0, 2.5], 1e-5).unwrap();
        for v in g {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        assert!(finite_diff_grad(|p: &[f64]| p[0], &[1.0], 0.0).is_err());
        assert!(matches!(
            finite_diff_grad(|p: &[f64]| p[0].ln(), &[0.0], 1e-5),
            Err(PunnError::Numeric(_))
        ));
    }

    #[test]
    fn richardson_is_exact_on_quartics() {
        let f = |p: &[f64]| p[0].powi(4) - 3.0 * p[0] * p[1];
        let g = richardson_diff_grad(f, &[1.5, 2.0], 0.1).unwrap();
        assert!((g[0] - (4.0 * 1.5f64.powi(3) - 6.0)).abs() < 1e-10);
        assert!((g[1] + 4.5).abs() < 1e-12);
        assert!(finite_diff_grad(f, &[1.5, 2.0], 0.1).unwrap()[0] - g[0] > 1e-3);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(max_relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((max_relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
        assert!(max_relative_error(&[1e-12], &[0.0]) < 1e-5);
    }
}
