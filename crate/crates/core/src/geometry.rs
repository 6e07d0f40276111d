//! Minkowski gauge of centred balls and ellipsoids, and the observation set
//! `Γ⋆ = {∂_ν ψ ≥ 0}` with `ψ = μ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ConvexBody {
    Ball { radius: f64, dim: usize },
    Ellipse { semi_axes: Vec<f64> },
}

impl ConvexBody {
    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        let body = ConvexBody::Ball { radius, dim };
        body.validate()?;
        Ok(body)
    }

    pub fn ellipse(semi_axes: Vec<f64>) -> Result<Self> {
        let body = ConvexBody::Ellipse { semi_axes };
        body.validate()?;
        Ok(body)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ConvexBody::Ball { radius, dim } => *radius > 0.0 && (2..=3).contains(dim),
            ConvexBody::Ellipse { semi_axes } => {
                (2..=3).contains(&semi_axes.len()) && semi_axes.iter().all(|r| *r > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(vec![format!("invalid convex body {self:?}")]))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Ball { dim, .. } => *dim,
            ConvexBody::Ellipse { semi_axes } => semi_axes.len(),
        }
    }

    fn axis(&self, k: usize) -> f64 {
        match self {
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Ellipse { semi_axes } => semi_axes[k],
        }
    }
}

/// `μ(x) = inf{λ > 0 : x ∈ λ·body}`.
pub fn minkowski_mu(point: &[f64], body: &ConvexBody) -> f64 {
    point.iter().enumerate().map(|(k, xk)| (xk / body.axis(k)).powi(2)).sum::<f64>().sqrt()
}

/// `ψ = μ²`.
pub fn psi(point: &[f64], body: &ConvexBody) -> f64 {
    point.iter().enumerate().map(|(k, xk)| (xk / body.axis(k)).powi(2)).sum()
}

/// `∇ψ(x)`, componentwise `2 x_k / r_k²`.
pub fn grad_psi(point: &[f64], body: &ConvexBody) -> Vec<f64> {
    point.iter().enumerate().map(|(k, xk)| 2.0 * xk / body.axis(k).powi(2)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    /// Outward unit normal of the domain `Ω` at `point`.
    pub normal: Vec<f64>,
}

pub fn normal_derivative_psi(sample: &BoundarySample, body: &ConvexBody) -> f64 {
    grad_psi(&sample.point, body).iter().zip(&sample.normal).map(|(g, n)| g * n).sum()
}

/// Membership flags for `Γ⋆` at each sample.
pub fn classify_gamma_star(samples: &[BoundarySample], body: &ConvexBody) -> Vec<bool> {
    samples.iter().map(|s| normal_derivative_psi(s, body) >= 0.0).collect()
}

/// `n` points on a centred circle of radius `r`; `outward` selects whether
/// the normal points away from or towards the centre.
pub fn circle_samples(radius: f64, n: usize, outward: bool) -> Vec<BoundarySample> {
    let sign = if outward { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (s, c) = a.sin_cos();
            BoundarySample { point: vec![radius * c, radius * s], normal: vec![sign * c, sign * s] }
        })
        .collect()
}

/// `n` points on the ellipse `(x/r₁)² + (y/r₂)² = 1` with normals pointing
/// into the ellipse when `into_body` is set (the obstacle side of `Ω`).
pub fn ellipse_samples(r1: f64, r2: f64, n: usize, into_body: bool) -> Vec<BoundarySample> {
    let sign = if into_body { -1.0 } else { 1.0 };
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (s, c) = a.sin_cos();
            let (nx, ny) = (c / r1, s / r2);
            let len = (nx * nx + ny * ny).sqrt();
            BoundarySample { point: vec![r1 * c, r2 * s], normal: vec![sign * nx / len, sign * ny / len] }
        })
        .collect()
}
