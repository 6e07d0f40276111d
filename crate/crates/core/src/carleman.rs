//! Numerical checks of the one-dimensional Carleman estimate.
//!
//! With `L̃v = i∂ₜv + d∂ₓ²v + q₁∂ₓv + q₀v` and
//! `L̃_Γv = i∂ₜv(0,·) − d∂ₓv(0,·) + q_Γ v(0,·)`, the conjugated operators are
//!
//! ```text
//! P₁w = ds²φₓ²w + d∂ₓ²w + i∂ₜw        P₂w = dsφₓₓw + 2dsφₓ∂ₓw + isφₜw
//! Q₁w = i∂ₜw                          Q₂w = −dsφₓw + isφₜw,   R_Γw = −d∂ₓw
//! ```
//!
//! so that `e^{−sφ}L̃(e^{sφ}w) = P₁w + P₂w` and
//! `e^{−sφ}L̃_Γ(e^{sφ}w) = Q₁w + Q₂w + R_Γw` when `q = 0`.
//!
//! Weighted integrals are accumulated relative to the largest log-weight so
//! that large `s` neither overflows nor underflows; ratios are unaffected.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid1D;
use crate::weights::{phi_derivatives, CarlemanParams, PhiDerivatives};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Lower-order coefficients of `L̃` and `L̃_Γ`, constant in space and time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LowerOrder {
    pub q0: f64,
    pub q1: f64,
    pub q_gamma0: f64,
}

/// `φ` and its derivatives on every node of the full window; `None` on the
/// rows `t = ±T`.
fn phi_table(params: &CarlemanParams, grid: &Grid1D) -> Vec<Vec<Option<PhiDerivatives>>> {
    (0..grid.n_time())
        .map(|j| (0..grid.n_space()).map(|i| phi_derivatives(grid.x(i), grid.t(j), params, grid).ok()).collect())
        .collect()
}

/// L² norms (trapezoid rule) of the discrete decomposition residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResidual {
    pub interior: f64,
    pub boundary: f64,
}

/// Compares `e^{−sφ}L̃(e^{sφ}w)` with `P₁w + P₂w` and the boundary analogue,
/// both discretised with the functional's stencils (`q = 0`).
///
/// `w` must vanish on the rows `t = ±T`.
pub fn conjugated_decomposition_check(
    w: &Array2<Complex64>,
    params: &CarlemanParams,
    d: f64,
    grid: &Grid1D,
) -> Result<DecompositionResidual> {
    check_field(w, grid)?;
    let phi = phi_table(params, grid);
    let s = params.s;
    let (dx, dt) = (grid.dx(), grid.dt());
    let nt = grid.n_time();
    let nx = grid.nx();
    // e^{s(φ(b) − φ(a))} w(b), the conjugated value seen from node a.
    let shifted = |a: (usize, usize), b: (usize, usize)| -> Complex64 {
        let wb = w[[b.0, b.1]];
        if wb == ZERO {
            return ZERO;
        }
        match (phi[a.0][a.1], phi[b.0][b.1]) {
            (Some(pa), Some(pb)) => wb * (s * (pb.phi - pa.phi)).exp(),
            _ => ZERO,
        }
    };

    let wt = Grid1D::trapezoid_weights(nt);
    let wx = Grid1D::trapezoid_weights(grid.n_space());
    let mut interior = 0.0;
    let mut boundary = 0.0;
    for j in 1..nt - 1 {
        for i in 1..nx {
            let Some(pd) = phi[j][i] else { continue };
            let c = w[[j, i]];
            let conj_t = (shifted((j, i), (j + 1, i)) - shifted((j, i), (j - 1, i))) / (2.0 * dt);
            let conj_xx = (shifted((j, i), (j, i + 1)) - 2.0 * c + shifted((j, i), (j, i - 1))) / (dx * dx);
            let lhs = I * conj_t + d * conj_xx;

            let w_t = (w[[j + 1, i]] - w[[j - 1, i]]) / (2.0 * dt);
            let w_x = (w[[j, i + 1]] - w[[j, i - 1]]) / (2.0 * dx);
            let w_xx = (w[[j, i + 1]] - 2.0 * c + w[[j, i - 1]]) / (dx * dx);
            let p1 = d * s * s * pd.phi_x * pd.phi_x * c + d * w_xx + I * w_t;
            let p2 = d * s * pd.phi_xx * c + 2.0 * d * s * pd.phi_x * w_x + I * s * pd.phi_t * c;
            interior += wt[j] * wx[i] * (lhs - p1 - p2).norm_sqr();
        }

        let Some(pd) = phi[j][0] else { continue };
        let c = w[[j, 0]];
        let conj_t = (shifted((j, 0), (j + 1, 0)) - shifted((j, 0), (j - 1, 0))) / (2.0 * dt);
        let conj_x = (-3.0 * c + 4.0 * shifted((j, 0), (j, 1)) - shifted((j, 0), (j, 2))) / (2.0 * dx);
        let lhs = I * conj_t - d * conj_x;
        let w_t = (w[[j + 1, 0]] - w[[j - 1, 0]]) / (2.0 * dt);
        let w_x = (-3.0 * c + 4.0 * w[[j, 1]] - w[[j, 2]]) / (2.0 * dx);
        let q1 = I * w_t;
        let q2 = -d * s * pd.phi_x * c + I * s * pd.phi_t * c;
        let r = -d * w_x;
        boundary += wt[j] * (lhs - q1 - q2 - r).norm_sqr();
    }
    Ok(DecompositionResidual { interior: (interior * dx * dt).sqrt(), boundary: (boundary * dt).sqrt() })
}

fn check_field(v: &Array2<Complex64>, grid: &Grid1D) -> Result<()> {
    let expected = (grid.n_time(), grid.n_space());
    if v.dim() != expected {
        return Err(crate::Error::Shape {
            what: "full-window test field".into(),
            expected: expected.0 * expected.1,
            found: v.len(),
        });
    }
    Ok(())
}

/// Both sides of a weighted inequality. The stored `lhs` and `rhs` are the
/// true values divided by `e^{log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityTerms {
    pub lhs: f64,
    pub rhs: f64,
    pub log_scale: f64,
    /// `lhs / rhs`; `None` when both sides vanish.
    pub ratio: Option<f64>,
}

impl InequalityTerms {
    fn new(lhs: f64, rhs: f64, log_scale: f64) -> Self {
        let ratio = if rhs > 0.0 {
            Some(lhs / rhs)
        } else if lhs > 0.0 {
            Some(f64::INFINITY)
        } else {
            None
        };
        Self { lhs, rhs, log_scale, ratio }
    }
}

/// Per-node ingredients shared by the two inequality checks.
struct Weighted {
    /// `e^{−2sφ − shift}` on the full window, zero on the rows `t = ±T`.
    w: Array2<f64>,
    theta: Array2<f64>,
    shift: f64,
    /// Trapezoid factors including `Δx`, `Δt`.
    qx: Vec<f64>,
    qt: Vec<f64>,
}

fn weighted(params: &CarlemanParams, grid: &Grid1D) -> Weighted {
    let phi = phi_table(params, grid);
    let shift = phi.iter().flatten().flatten().map(|pd| -2.0 * params.s * pd.phi).fold(f64::NEG_INFINITY, f64::max);
    let dims = (grid.n_time(), grid.n_space());
    let w = Array2::from_shape_fn(dims, |(j, i)| phi[j][i].map_or(0.0, |pd| (-2.0 * params.s * pd.phi - shift).exp()));
    let theta = Array2::from_shape_fn(dims, |(j, i)| phi[j][i].map_or(0.0, |pd| pd.theta));
    let qx = Grid1D::trapezoid_weights(grid.n_space()).iter().map(|v| v * grid.dx()).collect();
    let qt = Grid1D::trapezoid_weights(grid.n_time()).iter().map(|v| v * grid.dt()).collect();
    Weighted { w, theta, shift, qx, qt }
}

fn dx_at(v: &Array2<Complex64>, j: usize, i: usize, dx: f64) -> Complex64 {
    let nx = v.ncols() - 1;
    if i == 0 {
        (-3.0 * v[[j, 0]] + 4.0 * v[[j, 1]] - v[[j, 2]]) / (2.0 * dx)
    } else if i == nx {
        (3.0 * v[[j, nx]] - 4.0 * v[[j, nx - 1]] + v[[j, nx - 2]]) / (2.0 * dx)
    } else {
        (v[[j, i + 1]] - v[[j, i - 1]]) / (2.0 * dx)
    }
}

/// Weighted `|L̃v|²`, `|L̃_Γv|²` and observation integrals, i.e. the
/// right-hand side shared by both estimates.
fn rhs_terms(
    v: &Array2<Complex64>,
    params: &CarlemanParams,
    d: f64,
    q: &LowerOrder,
    grid: &Grid1D,
    wd: &Weighted,
) -> f64 {
    let (dx, dt) = (grid.dx(), grid.dt());
    let nt = grid.n_time();
    let nx = grid.nx();
    let mut interior = 0.0;
    let mut boundary = 0.0;
    let mut observation = 0.0;
    for j in 1..nt - 1 {
        for i in 1..nx {
            let vt = (v[[j + 1, i]] - v[[j - 1, i]]) / (2.0 * dt);
            let vxx = (v[[j, i + 1]] - 2.0 * v[[j, i]] + v[[j, i - 1]]) / (dx * dx);
            let lv = I * vt + d * vxx + q.q1 * dx_at(v, j, i, dx) + q.q0 * v[[j, i]];
            interior += wd.qt[j] * wd.qx[i] * wd.w[[j, i]] * lv.norm_sqr();
        }
        let vt = (v[[j + 1, 0]] - v[[j - 1, 0]]) / (2.0 * dt);
        let lg = I * vt - d * dx_at(v, j, 0, dx) + q.q_gamma0 * v[[j, 0]];
        boundary += wd.qt[j] * wd.w[[j, 0]] * lg.norm_sqr();
        observation += wd.qt[j] * wd.w[[j, nx]] * wd.theta[[j, nx]] * dx_at(v, j, nx, dx).norm_sqr();
    }
    interior + boundary + params.s * params.lambda * observation
}

/// Both sides of the interior-and-boundary Carleman inequality for `v`.
///
/// LHS: `∬ e^{−2sφ}(s³λ⁴θ³|v|² + sλ²θ|∂ₓv|²) + ∫ e^{−2sφ(0,·)}(s³λ³θ³|v|² + sλθ|∂ₓv|²)(0,·)`.
/// RHS: `∬ e^{−2sφ}|L̃v|² + ∫ e^{−2sφ(0,·)}|L̃_Γv|² + sλ∫ e^{−2sφ(ℓ,·)}θ(ℓ,·)|∂ₓv(ℓ,·)|²`.
pub fn carleman_ratio(
    v: &Array2<Complex64>,
    params: &CarlemanParams,
    d: f64,
    q: &LowerOrder,
    grid: &Grid1D,
) -> Result<InequalityTerms> {
    check_field(v, grid)?;
    let wd = weighted(params, grid);
    let (s, lambda) = (params.s, params.lambda);
    let dx = grid.dx();
    let nt = grid.n_time();
    let mut lhs = 0.0;
    for j in 1..nt - 1 {
        for i in 0..grid.n_space() {
            let th = wd.theta[[j, i]];
            let vx = dx_at(v, j, i, dx);
            let density = s.powi(3) * lambda.powi(4) * th.powi(3) * v[[j, i]].norm_sqr()
                + s * lambda * lambda * th * vx.norm_sqr();
            lhs += wd.qt[j] * wd.qx[i] * wd.w[[j, i]] * density;
        }
        let th = wd.theta[[j, 0]];
        let density = s.powi(3) * lambda.powi(3) * th.powi(3) * v[[j, 0]].norm_sqr()
            + s * lambda * th * dx_at(v, j, 0, dx).norm_sqr();
        lhs += wd.qt[j] * wd.w[[j, 0]] * density;
    }
    let rhs = rhs_terms(v, params, d, q, grid, &wd);
    Ok(InequalityTerms::new(lhs, rhs, wd.shift))
}

/// Both sides of the `t = 0` trace estimate with `q = 0`:
/// LHS `= (sλ)^{3/2}(∫ e^{−2sφ(·,0)}|v(·,0)|² + e^{−2sφ(0,0)}|v(0,0)|²)`, RHS as in
/// [`carleman_ratio`].
pub fn t0_trace_ratio(
    v: &Array2<Complex64>,
    params: &CarlemanParams,
    d: f64,
    grid: &Grid1D,
) -> Result<InequalityTerms> {
    check_field(v, grid)?;
    let wd = weighted(params, grid);
    let m = grid.zero_index();
    let trace: f64 = (0..grid.n_space()).map(|i| wd.qx[i] * wd.w[[m, i]] * v[[m, i]].norm_sqr()).sum::<f64>()
        + wd.w[[m, 0]] * v[[m, 0]].norm_sqr();
    let lhs = (params.s * params.lambda).powf(1.5) * trace;
    let rhs = rhs_terms(v, params, d, &LowerOrder::default(), grid, &wd);
    Ok(InequalityTerms::new(lhs, rhs, wd.shift))
}

/// Spatial factor of an ensemble member; every shape vanishes at `x = ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialShape {
    /// `(ℓ − x)(c₀ + c₁x + c₂x²)`.
    Polynomial { coeffs: [f64; 3] },
    /// `Σ c_k cos((k − ½)πx/ℓ)`.
    Cosines { coeffs: Vec<f64> },
    /// `Σ c_k sin(kπx/ℓ)`; vanishes at both ends.
    Sines { coeffs: Vec<f64> },
}

impl SpatialShape {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match self {
            SpatialShape::Polynomial { coeffs } => (length - x) * (coeffs[0] + coeffs[1] * x + coeffs[2] * x * x),
            SpatialShape::Cosines { coeffs } => {
                coeffs.iter().enumerate().map(|(k, c)| c * ((k as f64 + 0.5) * pi * x / length).cos()).sum()
            }
            SpatialShape::Sines { coeffs } => {
                coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * pi * x / length).sin()).sum()
            }
        }
    }
}

/// `exp(1 − 1/(1 − r²)) e^{iωt}` with `r = (t − center)/width`, zero for
/// `|r| ≥ 1`. Peak value 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBump {
    pub center: f64,
    pub width: f64,
    pub omega: f64,
}

impl TimeBump {
    pub fn eval(&self, t: f64) -> Complex64 {
        let r = (t - self.center) / self.width;
        if r.abs() >= 1.0 {
            return ZERO;
        }
        Complex64::from_polar((1.0 - 1.0 / (1.0 - r * r)).exp(), self.omega * t)
    }
}

/// One member of a test ensemble: `v(x, t) = X(x)·B(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestField {
    pub id: usize,
    pub spatial: SpatialShape,
    pub time: TimeBump,
}

impl TestField {
    /// Nodal values on the full window.
    pub fn sample(&self, grid: &Grid1D) -> Array2<Complex64> {
        let nx = grid.nx();
        Array2::from_shape_fn((grid.n_time(), grid.n_space()), |(j, i)| {
            if i == nx {
                ZERO
            } else {
                self.time.eval(grid.t(j)) * self.spatial.eval(grid.x(i), grid.length())
            }
        })
    }
}

/// Seeded ensemble alternating polynomial and cosine shapes with random
/// time bumps of width between `0.4T` and `0.8T`.
pub fn test_ensemble(n: usize, horizon: f64, seed: u64) -> Vec<TestField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let spatial = if id % 2 == 0 {
                SpatialShape::Polynomial {
                    coeffs: [rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                }
            } else {
                SpatialShape::Cosines { coeffs: (0..3).map(|k| rng.random_range(-1.0..1.0) / (k + 1) as f64).collect() }
            };
            let width = horizon * rng.random_range(0.4..0.8);
            let center = rng.random_range(-0.15..0.15) * horizon;
            let omega = rng.random_range(-2.0..2.0);
            TestField { id, spatial, time: TimeBump { center, width, omega } }
        })
        .collect()
}

/// Evaluates [`carleman_ratio`] for every member at every `s`; outer index
/// is `s`.
pub fn carleman_sweep(
    members: &[TestField],
    base: &CarlemanParams,
    s_values: &[f64],
    d: f64,
    q: &LowerOrder,
    grid: &Grid1D,
) -> Result<Vec<Vec<InequalityTerms>>> {
    let fields: Vec<Array2<Complex64>> = members.par_iter().map(|m| m.sample(grid)).collect();
    s_values
        .iter()
        .map(|&s| {
            let params = base.with_s(s);
            fields.par_iter().map(|v| carleman_ratio(v, &params, d, q, grid)).collect()
        })
        .collect()
}

/// Largest defined ratio, `None` when no ratio is defined.
pub fn max_ratio(terms: &[InequalityTerms]) -> Option<f64> {
    terms.iter().filter_map(|t| t.ratio).reduce(f64::max)
}

/// First index `k` from which `max_ratios` never exceeds
/// `(1 + growth_tol)·max_ratios[k]`; the estimate of `s₀` is `s_values[k]`.
pub fn estimate_s0_index(max_ratios: &[f64], growth_tol: f64) -> Option<usize> {
    (0..max_ratios.len())
        .find(|&k| max_ratios[k..].iter().all(|r| r.is_finite() && *r <= (1.0 + growth_tol) * max_ratios[k]))
}
