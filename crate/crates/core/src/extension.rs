//! Symmetric extensions from `[0, T]` to `[−T, T]` and time differentiation.
//!
//! Series on `[0, T]` have `M + 1` entries (grid indices `M..=2M`); their
//! extensions have `2M + 1` entries covering the whole grid.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;

fn sup_norm(values: impl Iterator<Item = Complex64>) -> f64 {
    values.map(|v| v.norm()).fold(0.0, f64::max)
}

/// `z(t) = w(t)` for `t ≥ 0`, `z(t) = −conj(w(−t))` for `t < 0`.
///
/// Requires `|Re w(0)| ≤ tol · ‖w‖_∞`.
pub fn extend_odd_conjugate(w: &[Complex64], tol: f64) -> Result<Vec<Complex64>> {
    check_len(w.len())?;
    let allowed = tol * sup_norm(w.iter().copied());
    let measured = w[0].re.abs();
    if measured > allowed {
        return Err(Error::Extension { part: "Re w", measured, allowed });
    }
    Ok(reflect(w, |v| -v.conj()))
}

/// `R(t) = conj(R(−t))` for `t < 0`. Requires `|Im R(0)| ≤ tol · ‖R‖_∞`.
pub fn extend_conjugate_even(r: &[Complex64], tol: f64) -> Result<Vec<Complex64>> {
    check_len(r.len())?;
    let allowed = tol * sup_norm(r.iter().copied());
    let measured = r[0].im.abs();
    if measured > allowed {
        return Err(Error::Extension { part: "Im R", measured, allowed });
    }
    Ok(reflect(r, |v| v.conj()))
}

/// Field version of [`extend_odd_conjugate`]; rows are time nodes.
pub fn extend_odd_conjugate_field(w: &Array2<Complex64>, tol: f64) -> Result<Array2<Complex64>> {
    check_len(w.nrows())?;
    let allowed = tol * sup_norm(w.iter().copied());
    let measured = w.row(0).iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    if measured > allowed {
        return Err(Error::Extension { part: "Re w", measured, allowed });
    }
    Ok(reflect_field(w, |v| -v.conj()))
}

/// Field version of [`extend_conjugate_even`].
pub fn extend_conjugate_even_field(r: &Array2<Complex64>, tol: f64) -> Result<Array2<Complex64>> {
    check_len(r.nrows())?;
    let allowed = tol * sup_norm(r.iter().copied());
    let measured = r.row(0).iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if measured > allowed {
        return Err(Error::Extension { part: "Im R", measured, allowed });
    }
    Ok(reflect_field(r, |v| v.conj()))
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Shape { what: "half-window series".into(), expected: 2, found: n });
    }
    Ok(())
}

fn reflect(w: &[Complex64], map: impl Fn(Complex64) -> Complex64) -> Vec<Complex64> {
    let m = w.len() - 1;
    (0..=2 * m).map(|j| if j >= m { w[j - m] } else { map(w[m - j]) }).collect()
}

fn reflect_field(w: &Array2<Complex64>, map: impl Fn(Complex64) -> Complex64) -> Array2<Complex64> {
    let m = w.nrows() - 1;
    Array2::from_shape_fn((2 * m + 1, w.ncols()), |(j, i)| if j >= m { w[[j - m, i]] } else { map(w[[m - j, i]]) })
}

/// Restriction of a full-window series to `[0, T]`.
pub fn restrict_half(z: &[Complex64]) -> Vec<Complex64> {
    z[z.len() / 2..].to_vec()
}

/// `∂ₜf` on a uniform grid: centred differences inside, second-order
/// one-sided differences at both ends.
pub fn time_derivative(f: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
    let n = f.len();
    if n < 3 {
        return Err(Error::Shape { what: "time series".into(), expected: 3, found: n });
    }
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt));
    for j in 1..n - 1 {
        out.push((f[j + 1] - f[j - 1]) / (2.0 * dt));
    }
    out.push((3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt));
    Ok(out)
}
