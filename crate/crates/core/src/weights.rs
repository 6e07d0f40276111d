//! One-dimensional Carleman weights.
//!
//! With the anchor `x₁ = −a` and `ψ(x) = (x + a)²`,
//!
//! ```text
//! θ(x,t) = e^{λψ(x)} / ((T+t)(T−t)),   φ(x,t) = (α − e^{λψ(x)}) / ((T+t)(T−t)),
//! ```
//!
//! on the open window `|t| < T`. The factor `e^{−2sφ}` extends continuously
//! by zero to `t = ±T`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Relative margin used when `α` is not given explicitly.
pub const DEFAULT_ALPHA_MARGIN: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub s: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub a: f64,
}

impl CarlemanParams {
    /// Parameters with `α = 1.01 · max_x e^{λψ(x)}` over the space grid.
    pub fn with_default_alpha(s: f64, lambda: f64, a: f64, grid: &Grid1D) -> Self {
        let alpha = DEFAULT_ALPHA_MARGIN * max_exp_lambda_psi(lambda, a, grid);
        Self { s, lambda, alpha, a }
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, ..*self }
    }

    /// Violations of the parameter invariants, empty when valid.
    pub fn violations(&self, grid: &Grid1D) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.s > 0.0) {
            out.push(format!("s must be positive (got {})", self.s));
        }
        if !(self.lambda > 0.0) {
            out.push(format!("lambda must be positive (got {})", self.lambda));
        }
        if !(self.a > 0.0) {
            out.push(format!("a must be positive (got {})", self.a));
        }
        let bound = max_exp_lambda_psi(self.lambda, self.a, grid);
        if !(self.alpha > bound) {
            out.push(format!("alpha must exceed max e^(lambda psi) = {bound} (got {})", self.alpha));
        }
        out
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        let v = self.violations(grid);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// `γ = min(ψ′, ψ″)` over `[0, ℓ]`, i.e. `min(2a, 2)`.
    pub fn implied_gamma(&self) -> f64 {
        (2.0 * self.a).min(2.0)
    }
}

fn max_exp_lambda_psi(lambda: f64, a: f64, grid: &Grid1D) -> f64 {
    (0..=grid.nx()).map(|i| (lambda * psi_1d(grid.x(i), a)).exp()).fold(f64::MIN, f64::max)
}

pub fn psi_1d(x: f64, a: f64) -> f64 {
    (x + a) * (x + a)
}

fn window_denominator(t: f64, horizon: f64) -> Result<f64> {
    if t.abs() >= horizon {
        return Err(Error::OutsideWindow { t: t.abs(), horizon });
    }
    Ok((horizon + t) * (horizon - t))
}

pub fn theta(x: f64, t: f64, lambda: f64, a: f64, grid: &Grid1D) -> Result<f64> {
    let den = window_denominator(t, grid.horizon())?;
    Ok((lambda * psi_1d(x, a)).exp() / den)
}

pub fn varphi(x: f64, t: f64, lambda: f64, alpha: f64, a: f64, grid: &Grid1D) -> Result<f64> {
    let den = window_denominator(t, grid.horizon())?;
    Ok((alpha - (lambda * psi_1d(x, a)).exp()) / den)
}

/// `e^{−2sφ(x,t)}`, exactly zero at (and beyond) `t = ±T`.
pub fn weight_e2sphi(x: f64, t: f64, params: &CarlemanParams, grid: &Grid1D) -> f64 {
    match varphi(x, t, params.lambda, params.alpha, params.a, grid) {
        Ok(phi) => {
            let log_w = -2.0 * params.s * phi;
            log_w.exp().max(0.0)
        }
        Err(_) => 0.0,
    }
}

/// Analytic derivatives of `φ` needed by the conjugated operators.
#[derive(Debug, Clone, Copy)]
pub struct PhiDerivatives {
    pub phi: f64,
    pub theta: f64,
    pub phi_x: f64,
    pub phi_xx: f64,
    pub phi_t: f64,
}

pub fn phi_derivatives(x: f64, t: f64, params: &CarlemanParams, grid: &Grid1D) -> Result<PhiDerivatives> {
    let horizon = grid.horizon();
    let den = window_denominator(t, horizon)?;
    let lambda = params.lambda;
    let e = (lambda * psi_1d(x, params.a)).exp();
    let dpsi = 2.0 * (x + params.a);
    let ddpsi = 2.0;
    let theta = e / den;
    let phi = (params.alpha - e) / den;
    // ∂ₓφ = −λθψ′, ∂ₓ²φ = −λ²θψ′² − λθψ″, ∂ₜφ = φ · 2t / ((T+t)(T−t))
    Ok(PhiDerivatives {
        phi,
        theta,
        phi_x: -lambda * theta * dpsi,
        phi_xx: -lambda * lambda * theta * dpsi * dpsi - lambda * theta * ddpsi,
        phi_t: phi * 2.0 * t / den,
    })
}

/// `e^{−2sφ}` tabulated on every node of the full window (rows = time).
pub fn weight_table(params: &CarlemanParams, grid: &Grid1D) -> Array2<f64> {
    Array2::from_shape_fn((grid.n_time(), grid.n_space()), |(j, i)| {
        if j == 0 || j == grid.n_time() - 1 {
            0.0
        } else {
            weight_e2sphi(grid.x(i), grid.t(j), params, grid)
        }
    })
}
