//! The Carleman-weighted quadratic functional
//!
//! ```text
//! J(u) = 1/(2s) ∬ e^{−2sφ}|N u − ζ|² + 1/(2s) ∫ e^{−2sφ(0,·)}|N_Γ u − ζ_Γ|²
//!      + 1/2 ∫ e^{−2sφ(ℓ,·)}|∂ₓu(ℓ,·) − h|² + ε/2 ∬ e^{−2sφ}|u|²
//! ```
//!
//! over `(0, ℓ) × (−T, T)`, with `N u = i∂ₜu + d∂ₓ²u − p₁∂ₓu + p u` and
//! `N_Γ u = i∂ₜu_Γ − d∂ₓu(0,·) + p_Γ u_Γ`. Unknowns are the nodal values of
//! `u` on columns `0..nx` of the full-window grid; column `nx` is the
//! Dirichlet node and `u_Γ` is identified with column 0.
//!
//! The minimizer solves the normal equations `A u = b` with
//! `A = Gᴴ W G + ε W_u`, where `G` stacks the discrete `N`, `N_Γ` and flux
//! rows. `A` is assembled once as a sparse matrix and applied in parallel.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Potentials};
use crate::linalg::{BandedHermitian, BandedLdl};
use crate::weights::{weight_table, CarlemanParams};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Unknowns whose diagonal entry falls below this fraction of the largest
/// one do not influence `J` at double precision and are held at zero.
const FROZEN_DIAG: f64 = 1e-200;

/// Targets, weights and coefficients defining one instance of `J`.
#[derive(Debug, Clone)]
pub struct JData {
    /// Interior target on the full window, shape `(2M+1) × (nx+1)`.
    pub zeta: Array2<Complex64>,
    pub zeta_gamma: Vec<Complex64>,
    /// Flux target at `x = ℓ` on the full window.
    pub h: Vec<Complex64>,
    pub params: CarlemanParams,
    /// Potentials inside `N` and `N_Γ`.
    pub potentials: Potentials,
    pub d: f64,
    pub epsilon: f64,
}

impl JData {
    /// `J[0, 0, h]`.
    pub fn observation_only(
        grid: &Grid1D,
        h: Vec<Complex64>,
        params: CarlemanParams,
        potentials: Potentials,
        d: f64,
    ) -> Self {
        Self {
            zeta: Array2::zeros((grid.n_time(), grid.n_space())),
            zeta_gamma: vec![ZERO; grid.n_time()],
            h,
            params,
            potentials,
            d,
            epsilon: 0.0,
        }
    }

    pub fn check(&self, grid: &Grid1D) -> Result<()> {
        let nt = grid.n_time();
        let shape_err = |what: &str, expected: usize, found: usize| Error::Shape { what: what.into(), expected, found };
        if self.zeta.dim() != (nt, grid.n_space()) {
            return Err(shape_err("zeta", nt * grid.n_space(), self.zeta.len()));
        }
        if self.zeta_gamma.len() != nt {
            return Err(shape_err("zeta_gamma", nt, self.zeta_gamma.len()));
        }
        if self.h.len() != nt {
            return Err(shape_err("h", nt, self.h.len()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(vec![format!("epsilon must be >= 0 (got {})", self.epsilon)]));
        }
        self.potentials.check_shape(grid)?;
        self.params.validate(grid)
    }
}

/// `N u` at interior nodes `1 ≤ i < nx`, `0 < j < 2M`; zero elsewhere.
pub fn apply_n(u: &Array2<Complex64>, pot: &Potentials, d: f64, grid: &Grid1D) -> Array2<Complex64> {
    let (nt, ns) = u.dim();
    let nx = ns - 1;
    let dx = grid.dx();
    let dt = grid.dt();
    let mut out = Array2::zeros((nt, ns));
    for j in 1..nt - 1 {
        for i in 1..nx {
            let ut = (u[[j + 1, i]] - u[[j - 1, i]]) / (2.0 * dt);
            let uxx = (u[[j, i + 1]] - 2.0 * u[[j, i]] + u[[j, i - 1]]) / (dx * dx);
            let ux = (u[[j, i + 1]] - u[[j, i - 1]]) / (2.0 * dx);
            out[[j, i]] = I * ut + d * uxx - pot.p1[i] * ux + pot.p[i] * u[[j, i]];
        }
    }
    out
}

/// `N_Γ u` for `0 < j < 2M`; zero at the window ends.
pub fn apply_n_gamma(u: &Array2<Complex64>, p_gamma: f64, d: f64, grid: &Grid1D) -> Vec<Complex64> {
    let nt = u.nrows();
    let dx = grid.dx();
    let dt = grid.dt();
    let mut out = vec![ZERO; nt];
    for j in 1..nt - 1 {
        let ut = (u[[j + 1, 0]] - u[[j - 1, 0]]) / (2.0 * dt);
        let ux = (-3.0 * u[[j, 0]] + 4.0 * u[[j, 1]] - u[[j, 2]]) / (2.0 * dx);
        out[j] = I * ut - d * ux + p_gamma * u[[j, 0]];
    }
    out
}

/// `∂ₓu(ℓ, ·)` with the one-sided second-order stencil.
pub fn flux_rows(u: &Array2<Complex64>, grid: &Grid1D) -> Vec<Complex64> {
    let nx = u.ncols() - 1;
    let dx = grid.dx();
    u.rows().into_iter().map(|r| (3.0 * r[nx] - 4.0 * r[nx - 1] + r[nx - 2]) / (2.0 * dx)).collect()
}

/// Quadrature weights of the three data terms and the Tikhonov term.
struct TermWeights {
    interior: Array2<f64>,
    boundary: Vec<f64>,
    observation: Vec<f64>,
    tikhonov: Array2<f64>,
}

fn term_weights(data: &JData, grid: &Grid1D) -> TermWeights {
    let w = weight_table(&data.params, grid);
    let wt = Grid1D::trapezoid_weights(grid.n_time());
    let wx = Grid1D::trapezoid_weights(grid.n_space());
    let (dt, dx, s) = (grid.dt(), grid.dx(), data.params.s);
    let nx = grid.nx();
    let quad = Array2::from_shape_fn(w.dim(), |(j, i)| wt[j] * wx[i] * dt * dx * w[[j, i]]);
    TermWeights {
        interior: quad.mapv(|v| v / s),
        boundary: (0..grid.n_time()).map(|j| wt[j] * dt * w[[j, 0]] / s).collect(),
        observation: (0..grid.n_time()).map(|j| wt[j] * dt * w[[j, nx]]).collect(),
        tikhonov: quad.mapv(|v| v * data.epsilon),
    }
}

/// Evaluates `J` directly from the stencils.
pub fn eval_j(data: &JData, u: &Array2<Complex64>, grid: &Grid1D) -> f64 {
    let tw = term_weights(data, grid);
    let nu = apply_n(u, &data.potentials, data.d, grid);
    let ng = apply_n_gamma(u, data.potentials.p_gamma, data.d, grid);
    let fl = flux_rows(u, grid);
    let nt = grid.n_time();
    let nx = grid.nx();
    let mut total = 0.0;
    for j in 1..nt - 1 {
        for i in 1..nx {
            total += tw.interior[[j, i]] * (nu[[j, i]] - data.zeta[[j, i]]).norm_sqr();
        }
        total += tw.boundary[j] * (ng[j] - data.zeta_gamma[j]).norm_sqr();
    }
    for j in 0..nt {
        total += tw.observation[j] * (fl[j] - data.h[j]).norm_sqr();
    }
    if data.epsilon > 0.0 {
        total += tw.tikhonov.iter().zip(u.iter()).map(|(w, v)| w * v.norm_sqr()).sum::<f64>();
    }
    0.5 * total
}

/// Compressed sparse rows of a complex matrix.
#[derive(Debug, Clone)]
struct Csr {
    ncols: usize,
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<Complex64>,
}

impl Csr {
    fn nrows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.ptr[r]..self.ptr[r + 1];
        self.col[range.clone()].iter().copied().zip(self.val[range].iter().copied())
    }

    fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        out.par_iter_mut().enumerate().with_min_len(256).for_each(|(r, o)| {
            *o = self.row(r).map(|(c, v)| v * x[c]).sum();
        });
    }

    /// Conjugate transpose.
    fn adjoint(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col {
            counts[c + 1] += 1;
        }
        for k in 0..self.ncols {
            counts[k + 1] += counts[k];
        }
        let ptr = counts.clone();
        let mut fill = counts;
        let mut col = vec![0; self.col.len()];
        let mut val = vec![ZERO; self.val.len()];
        for r in 0..self.nrows() {
            for (c, v) in self.row(r) {
                let pos = fill[c];
                col[pos] = r;
                val[pos] = v.conj();
                fill[c] += 1;
            }
        }
        Csr { ncols: self.nrows(), ptr, col, val }
    }
}

/// Normal-equation operator `A = Gᴴ W G + diag(ε-weights)` with right-hand side.
pub struct NormalOperator {
    g: Csr,
    gh: Csr,
    row_weight: Vec<f64>,
    row_target: Vec<Complex64>,
    tikhonov: Vec<f64>,
    rhs: Vec<Complex64>,
    diag: Vec<f64>,
    /// `½ Σ W |c|²`, the value of `J` at `u = 0`.
    j_at_zero: f64,
    nx: usize,
    nt: usize,
}

impl NormalOperator {
    pub fn assemble(data: &JData, grid: &Grid1D) -> Result<Self> {
        data.check(grid)?;
        let tw = term_weights(data, grid);
        let nx = grid.nx();
        let nt = grid.n_time();
        let (dx, dt, d) = (grid.dx(), grid.dt(), data.d);
        let pot = &data.potentials;
        let idx = |j: usize, i: usize| j * nx + i;

        let mut ptr = vec![0usize];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut row_weight = Vec::new();
        let mut row_target = Vec::new();
        let mut push_row = |entries: &[(usize, Complex64)], w: f64, c: Complex64| {
            for &(k, v) in entries {
                col.push(k);
                val.push(v);
            }
            ptr.push(col.len());
            row_weight.push(w);
            row_target.push(c);
        };

        let ct = I / (2.0 * dt);
        for j in 1..nt - 1 {
            for i in 1..nx {
                let w = tw.interior[[j, i]];
                if w <= 0.0 {
                    continue;
                }
                let diff = d / (dx * dx);
                let drift = pot.p1[i] / (2.0 * dx);
                let mut entries = vec![
                    (idx(j - 1, i), -ct),
                    (idx(j, i - 1), Complex64::from(diff + drift)),
                    (idx(j, i), Complex64::from(-2.0 * diff + pot.p[i])),
                ];
                if i + 1 < nx {
                    entries.push((idx(j, i + 1), Complex64::from(diff - drift)));
                }
                entries.push((idx(j + 1, i), ct));
                push_row(&entries, w, data.zeta[[j, i]]);
            }
            let w = tw.boundary[j];
            if w > 0.0 {
                let entries = [
                    (idx(j - 1, 0), -ct),
                    (idx(j, 0), Complex64::from(3.0 * d / (2.0 * dx) + pot.p_gamma)),
                    (idx(j, 1), Complex64::from(-2.0 * d / dx)),
                    (idx(j, 2), Complex64::from(d / (2.0 * dx))),
                    (idx(j + 1, 0), ct),
                ];
                push_row(&entries, w, data.zeta_gamma[j]);
            }
        }
        for j in 0..nt {
            let w = tw.observation[j];
            if w > 0.0 {
                let entries =
                    [(idx(j, nx - 2), Complex64::from(1.0 / (2.0 * dx))), (idx(j, nx - 1), Complex64::from(-2.0 / dx))];
                push_row(&entries, w, data.h[j]);
            }
        }

        let g = Csr { ncols: nt * nx, ptr, col, val };
        let gh = g.adjoint();
        let tikhonov: Vec<f64> = (0..nt * nx).map(|k| tw.tikhonov[[k / nx, k % nx]]).collect();
        let weighted_target: Vec<Complex64> = row_weight.iter().zip(&row_target).map(|(w, c)| w * c).collect();
        let mut rhs = vec![ZERO; nt * nx];
        gh.apply_into(&weighted_target, &mut rhs);
        let diag: Vec<f64> = (0..nt * nx)
            .map(|k| gh.row(k).map(|(r, v)| row_weight[r] * v.norm_sqr()).sum::<f64>() + tikhonov[k])
            .collect();
        let j_at_zero = 0.5 * row_weight.iter().zip(&row_target).map(|(w, c)| w * c.norm_sqr()).sum::<f64>();
        Ok(Self { g, gh, row_weight, row_target, tikhonov, rhs, diag, j_at_zero, nx, nt })
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn rhs(&self) -> &[Complex64] {
        &self.rhs
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn j_at_zero(&self) -> f64 {
        self.j_at_zero
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let mut gx = vec![ZERO; self.g.nrows()];
        self.g.apply_into(x, &mut gx);
        gx.par_iter_mut().zip(&self.row_weight).for_each(|(v, w)| *v *= *w);
        self.gh.apply_into(&gx, out);
        for ((o, t), xv) in out.iter_mut().zip(&self.tikhonov).zip(x) {
            *o += t * xv;
        }
    }

    /// `J` at the unknown vector `x`, evaluated through the assembled rows.
    pub fn j_value(&self, x: &[Complex64]) -> f64 {
        let mut gx = vec![ZERO; self.g.nrows()];
        self.g.apply_into(x, &mut gx);
        let data: f64 =
            gx.iter().zip(&self.row_target).zip(&self.row_weight).map(|((g, c), w)| w * (g - c).norm_sqr()).sum();
        let tik: f64 = self.tikhonov.iter().zip(x).map(|(t, v)| t * v.norm_sqr()).sum();
        0.5 * (data + tik)
    }

    /// `D^{−1/2} A D^{−1/2}` restricted to band `b`; with `within_rows`
    /// only couplings inside one time row are kept. Untouched unknowns get
    /// a unit diagonal.
    fn scaled_band(&self, inv_sqrt_diag: &[f64], within_rows: bool) -> BandedHermitian {
        let n = self.len();
        let b = if within_rows { 2 } else { 2 * self.nx };
        let mut band = BandedHermitian::zeros(n, b);
        for r in 0..self.g.nrows() {
            let w = self.row_weight[r];
            for (c1, v1) in self.g.row(r) {
                for (c2, v2) in self.g.row(r) {
                    if c1 < c2 || (within_rows && c1 / self.nx != c2 / self.nx) {
                        continue;
                    }
                    let scale = inv_sqrt_diag[c1] * inv_sqrt_diag[c2];
                    band.add_lower(c1, c2, w * v1.conj() * v2 * scale);
                }
            }
        }
        for k in 0..n {
            if inv_sqrt_diag[k] == 0.0 {
                band.add_lower(k, k, Complex64::from(1.0));
            } else {
                band.add_lower(k, k, Complex64::from(self.tikhonov[k] * inv_sqrt_diag[k].powi(2)));
            }
        }
        band
    }

    /// Unknown vector to full-window field (Dirichlet column appended).
    pub fn to_field(&self, x: &[Complex64]) -> Array2<Complex64> {
        Array2::from_shape_fn((self.nt, self.nx + 1), |(j, i)| if i < self.nx { x[j * self.nx + i] } else { ZERO })
    }

    pub fn from_field(&self, u: &Array2<Complex64>) -> Vec<Complex64> {
        (0..self.nt * self.nx).map(|k| u[[k / self.nx, k % self.nx]]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// `diag(A)`.
    #[default]
    Jacobi,
    /// The coupling of `A` within each time row, factored exactly.
    BlockJacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgOptions {
    /// Relative tolerance on the Jacobi-scaled residual.
    pub tol: f64,
    /// Defaults to `20 × unknowns` when `None`.
    pub max_iter: Option<usize>,
    /// Record `J` after every iteration.
    pub track_j: bool,
    pub preconditioner: Preconditioner,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: None, track_j: false, preconditioner: Preconditioner::Jacobi }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizerResult {
    /// Full-window field with `u(ℓ, ·) = 0`; column 0 is `u_Γ`.
    pub u: Array2<Complex64>,
    pub j_value: f64,
    /// `‖D^{−1/2}(b − A u)‖ / ‖D^{−1/2} b‖` with `D = diag(A)`.
    pub residual: f64,
    /// `‖b − A u‖ / ‖b‖`.
    pub raw_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub j_history: Vec<f64>,
}

impl MinimizerResult {
    pub fn u_gamma(&self) -> Vec<Complex64> {
        self.u.column(0).to_vec()
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn scaled_norm(r: &[Complex64], inv_diag: &[f64]) -> f64 {
    r.iter().zip(inv_diag).map(|(v, m)| m * v.norm_sqr()).sum::<f64>().sqrt()
}

/// Minimizes `J` by Jacobi-preconditioned conjugate gradients from `u = 0`.
pub fn minimize_j(data: &JData, grid: &Grid1D, opts: &CgOptions) -> Result<MinimizerResult> {
    let op = NormalOperator::assemble(data, grid)?;
    solve_normal(&op, opts)
}

pub fn solve_normal(op: &NormalOperator, opts: &CgOptions) -> Result<MinimizerResult> {
    let n = op.len();
    let max_iter = opts.max_iter.unwrap_or(20 * n);
    let dmax = op.diag.iter().cloned().fold(0.0, f64::max);
    let inv_diag: Vec<f64> = op.diag.iter().map(|&v| if v > dmax * FROZEN_DIAG { 1.0 / v } else { 0.0 }).collect();
    let inv_sqrt: Vec<f64> = inv_diag.iter().map(|v| v.sqrt()).collect();
    let b = &op.rhs;
    let block: Option<BandedLdl> = match opts.preconditioner {
        Preconditioner::Jacobi => None,
        Preconditioner::BlockJacobi => Some(op.scaled_band(&inv_sqrt, true).factor_floored(1e-12, 1.0)),
    };
    let precondition = |r: &[Complex64], z: &mut [Complex64]| {
        for k in 0..n {
            z[k] = r[k] * inv_sqrt[k];
        }
        if let Some(ldl) = &block {
            ldl.solve(z);
            for k in 0..n {
                z[k] *= inv_sqrt[k];
            }
        } else {
            for k in 0..n {
                z[k] *= inv_sqrt[k];
            }
        }
    };
    let b_norm = scaled_norm(b, &inv_diag);

    let mut x = vec![ZERO; n];
    let mut history = Vec::new();
    if b_norm == 0.0 {
        let u = op.to_field(&x);
        return Ok(MinimizerResult {
            u,
            j_value: op.j_at_zero,
            residual: 0.0,
            raw_residual: 0.0,
            iterations: 0,
            converged: true,
            j_history: history,
        });
    }

    let mut r = b.to_vec();
    let mut ap = vec![ZERO; n];
    let mut best = (f64::INFINITY, x.clone());
    let mut restarted = false;
    let mut iterations = 0;
    let mut converged = false;

    'outer: loop {
        let mut z = vec![ZERO; n];
        precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z).re;
        while iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap).re;
            let p_norm = p.iter().map(|v| v.norm_sqr()).sum::<f64>();
            if !(pap > 1e-300 * p_norm.max(1e-300)) || !pap.is_finite() {
                if restarted {
                    return Err(Error::CgBreakdown { iteration: iterations });
                }
                restarted = true;
                let mut ax = vec![ZERO; n];
                op.apply(&x, &mut ax);
                for k in 0..n {
                    r[k] = b[k] - ax[k];
                }
                continue 'outer;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            iterations += 1;
            let res = scaled_norm(&r, &inv_diag) / b_norm;
            if opts.track_j {
                history.push(op.j_value(&x));
            }
            if res < best.0 {
                best.0 = res;
                best.1.copy_from_slice(&x);
            }
            if res <= opts.tol {
                converged = true;
                break 'outer;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z).re;
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        break;
    }

    let x = if converged { x } else { best.1 };
    Ok(finish(op, x, &inv_diag, iterations, converged, history))
}

fn finish(
    op: &NormalOperator,
    x: Vec<Complex64>,
    inv_diag: &[f64],
    iterations: usize,
    converged: bool,
    j_history: Vec<f64>,
) -> MinimizerResult {
    let b = &op.rhs;
    let mut ax = vec![ZERO; x.len()];
    op.apply(&x, &mut ax);
    let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let b_norm = scaled_norm(b, inv_diag);
    let residual = if b_norm > 0.0 { scaled_norm(&r, inv_diag) / b_norm } else { 0.0 };
    let b_raw = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let raw_residual = if b_raw > 0.0 { r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / b_raw } else { 0.0 };
    MinimizerResult {
        j_value: op.j_value(&x),
        u: op.to_field(&x),
        residual,
        raw_residual,
        iterations,
        converged,
        j_history,
    }
}

/// `Re⟨δ, A u − b⟩`: the directional derivative of `J` at `u` along `δ`.
pub fn directional_derivative(op: &NormalOperator, u: &Array2<Complex64>, delta: &Array2<Complex64>) -> f64 {
    let x = op.from_field(u);
    let dx = op.from_field(delta);
    let mut ax = vec![ZERO; x.len()];
    op.apply(&x, &mut ax);
    let grad: Vec<Complex64> = ax.iter().zip(&op.rhs).map(|(a, b)| a - b).collect();
    dot(&dx, &grad).re
}

/// Both sides of the two-data trace estimate for the minimizers `uᵃ`, `uᵇ`
/// of `J[ζᵃ, ζᵃ_Γ, h]` and `J[ζᵇ, ζᵇ_Γ, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStability {
    /// `s^{3/2}(∫ e^{−2sφ(·,0)}|Δu(·,0)|² + e^{−2sφ(0,0)}|Δu_Γ(0)|²)`.
    pub lhs: f64,
    /// `∬ e^{−2sφ}|ζᵃ − ζᵇ|² + ∫ e^{−2sφ(0,·)}|ζᵃ_Γ − ζᵇ_Γ|²`.
    pub rhs: f64,
    /// Both sides are stored divided by `e^{log_scale}`.
    pub log_scale: f64,
    pub ratio: Option<f64>,
    pub converged: bool,
}

/// Minimizes both functionals and evaluates the two sides of the estimate.
/// `a` and `b` must share `h`, weights, potentials and `ε`.
pub fn two_data_trace_ratio(a: &JData, b: &JData, grid: &Grid1D, opts: &CgOptions) -> Result<TraceStability> {
    if a.h != b.h || a.params != b.params || a.potentials != b.potentials || a.d != b.d || a.epsilon != b.epsilon {
        return Err(Error::Invariant("two-data estimate needs identical h, weights and potentials"));
    }
    let ua = minimize_j(a, grid, opts)?;
    let ub = minimize_j(b, grid, opts)?;
    let s = a.params.s;
    let log_w = Array2::from_shape_fn((grid.n_time(), grid.n_space()), |(j, i)| {
        crate::weights::varphi(grid.x(i), grid.t(j), a.params.lambda, a.params.alpha, a.params.a, grid)
            .map_or(f64::NEG_INFINITY, |phi| -2.0 * s * phi)
    });
    let shift = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = log_w.mapv(|v| (v - shift).exp());
    let wt = Grid1D::trapezoid_weights(grid.n_time());
    let wx = Grid1D::trapezoid_weights(grid.n_space());
    let (dx, dt) = (grid.dx(), grid.dt());
    let m = grid.zero_index();

    let trace: f64 =
        (0..grid.n_space()).map(|i| wx[i] * dx * w[[m, i]] * (ua.u[[m, i]] - ub.u[[m, i]]).norm_sqr()).sum::<f64>()
            + w[[m, 0]] * (ua.u[[m, 0]] - ub.u[[m, 0]]).norm_sqr();
    let lhs = s.powf(1.5) * trace;
    let mut rhs = 0.0;
    for j in 1..grid.n_time() - 1 {
        for i in 1..grid.nx() {
            rhs += wt[j] * wx[i] * dt * dx * w[[j, i]] * (a.zeta[[j, i]] - b.zeta[[j, i]]).norm_sqr();
        }
        rhs += wt[j] * dt * w[[j, 0]] * (a.zeta_gamma[j] - b.zeta_gamma[j]).norm_sqr();
    }
    let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
    Ok(TraceStability { lhs, rhs, log_scale: shift, ratio, converged: ua.converged && ub.converged })
}
