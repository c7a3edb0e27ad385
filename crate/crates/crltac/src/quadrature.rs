//! One-dimensional quadrature used by the density normalizers and the
//! exact mutual-information references.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature exceeded its subdivision budget (interval [{a}, {b}])")]
    BudgetExceeded { a: f64, b: f64 },
    #[error("quadrature endpoints are invalid: [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
}

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` on `[a, b]` to absolute tolerance
/// `tol`, with the usual Richardson correction on accepted panels.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(QuadratureError::InvalidInterval { a, b });
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureError::BudgetExceeded { a, b });
    }
    let lv = simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)?;
    let rv = simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)?;
    Ok(lv + rv)
}

/// Cumulative trapezoid integral of the samples `(xs, fs)`; output starts
/// at zero and has the same length as the input.
pub fn cumulative_trapezoid(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), fs.len());
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (fs[i] + fs[i - 1]) * (xs[i] - xs[i - 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomial_exactly() {
        // Simpson is exact on cubics
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-12).unwrap();
        assert_relative_eq!(v, 16.0, epsilon = 1e-10);
    }

    #[test]
    fn integrates_oscillatory_function() {
        let v = adaptive_simpson(|x| (10.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-10).unwrap();
        let exact = (1.0 - (10.0 * std::f64::consts::PI).cos()) / 10.0;
        assert_relative_eq!(v, exact, epsilon = 1e-9);
    }

    #[test]
    fn integrates_sharp_peak() {
        // width-0.01 Gaussian bump inside [-1, 1]
        let s = 0.01;
        let v = adaptive_simpson(
            |x| (-x * x / (2.0 * s * s)).exp(),
            -1.0,
            1.0,
            1e-12,
        )
        .unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(v, exact, max_relative = 1e-8);
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(adaptive_simpson(|x| x, 1.0, 0.0, 1e-8).is_err());
        assert!(adaptive_simpson(|x| x, 0.0, f64::INFINITY, 1e-8).is_err());
    }

    #[test]
    fn cumulative_trapezoid_on_linear_function() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| 2.0 * x).collect();
        let cum = cumulative_trapezoid(&xs, &fs);
        for (i, &x) in xs.iter().enumerate() {
            assert_relative_eq!(cum[i], x * x, epsilon = 1e-12);
        }
    }
}
