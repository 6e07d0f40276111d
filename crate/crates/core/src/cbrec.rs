//! Iterative Carleman-based reconstruction of `(p, p_Γ)` from one flux
//! measurement.
//!
//! One step from `(p^k, p^k_Γ)`:
//!
//! 1. solve forward with `p^k`, form `h^k = ∂ₜ(∂ₓy[p^k](ℓ,·) − μ)` on `[0, T]`
//!    and extend it odd-conjugately to `[−T, T]`;
//! 2. minimize `J[0, 0, h^k]` with `p^k` inside `N`;
//! 3. update `p̃ = p^k + Re(i u*(·,0)/y₀)` and
//!    `p̃_Γ = p^k_Γ + Re(i u*_Γ(0)/y_Γ,0)`;
//! 4. clamp to `[−m, m]`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{extend_odd_conjugate, time_derivative, DEFAULT_TOL};
use crate::forward::{flux_at_right, solve_forward, Measurement, SourceData};
use crate::functional::{minimize_j, CgOptions, JData};
use crate::grid::{Grid1D, Potentials};
use crate::weights::{weight_e2sphi, CarlemanParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which trace of the minimizer drives the potential update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `p^k + Re(i u*(·,0)/y₀)`.
    #[default]
    Trace,
    /// `p^k + Re(∂ₜu*(·,0)/y₀)`.
    Literal,
}

/// Everything a reconstruction needs besides the measurement.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid1D,
    pub d: f64,
    pub p1: Vec<f64>,
    pub sources: SourceData,
    pub y0: Vec<f64>,
    pub y_gamma0: f64,
    pub params: CarlemanParams,
    pub m: f64,
    pub r0: f64,
    pub epsilon: f64,
    pub cg: CgOptions,
    pub max_iterations: usize,
    pub stop_tol: f64,
    pub update: UpdateRule,
}

impl Setup {
    /// Positivity `|y₀(xᵢ)| ≥ r₀` on the nodes `0..nx` and `|y_Γ,0| ≥ r₀`.
    pub fn check_positivity(&self) -> Result<()> {
        for (i, v) in self.y0[..self.grid.nx()].iter().enumerate() {
            if v.abs() < self.r0 {
                return Err(Error::Positivity { node: i, value: v.abs(), r0: self.r0 });
            }
        }
        if self.y_gamma0.abs() < self.r0 {
            return Err(Error::Positivity { node: 0, value: self.y_gamma0.abs(), r0: self.r0 });
        }
        Ok(())
    }

    fn complex_y0(&self) -> Vec<Complex64> {
        self.y0.iter().map(|v| Complex64::from(*v)).collect()
    }

    pub fn potentials(&self, p: Vec<f64>, p_gamma: f64) -> Potentials {
        Potentials { p, p_gamma, p1: self.p1.clone() }
    }
}

/// `𝒯(v)`: identity on `[−m, m]`, `m·v/|v|` outside.
pub fn truncate_potential(value: f64, m: f64) -> f64 {
    if value.abs() <= m {
        value
    } else {
        m * value.signum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub j_value: f64,
    pub residual: f64,
    pub cg_iterations: usize,
    pub cg_converged: bool,
    /// `|Re h^k(0)| / ‖h^k‖_∞` before it is projected away.
    pub h_real_at_zero: f64,
    pub clamped_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: Potentials,
    pub diagnostics: StepDiagnostics,
}

/// One reconstruction step from `current`.
pub fn cbrec_step(setup: &Setup, current: &Potentials, measurement: &Measurement) -> Result<StepOutcome> {
    let grid = &setup.grid;
    measurement.check_grid(grid)?;
    setup.check_positivity()?;
    let y0c = setup.complex_y0();
    let traj = solve_forward(grid, setup.d, current, &setup.sources, &y0c, Complex64::from(setup.y_gamma0))?;
    let diff: Vec<Complex64> = flux_at_right(&traj).iter().zip(&measurement.flux).map(|(a, b)| a - b).collect();
    let mut h = time_derivative(&diff, grid.dt())?;
    let sup = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let h_real_at_zero = if sup > 0.0 { h[0].re.abs() / sup } else { 0.0 };
    h[0].re = 0.0;
    let h_full = extend_odd_conjugate(&h, DEFAULT_TOL)?;

    let mut data = JData::observation_only(grid, h_full, setup.params, current.clone(), setup.d);
    data.epsilon = setup.epsilon;
    let res = minimize_j(&data, grid, &setup.cg)?;

    let delta = trace_increment(setup, &res.u);
    let nx = grid.nx();
    let mut clamped = 0;
    let mut p = Vec::with_capacity(nx + 1);
    for i in 0..=nx {
        let raw = current.p[i] + delta.interior[i];
        let v = truncate_potential(raw, setup.m);
        clamped += usize::from(v != raw);
        p.push(v);
    }
    let raw_gamma = current.p_gamma + delta.boundary;
    let p_gamma = truncate_potential(raw_gamma, setup.m);
    clamped += usize::from(p_gamma != raw_gamma);

    Ok(StepOutcome {
        next: setup.potentials(p, p_gamma),
        diagnostics: StepDiagnostics {
            j_value: res.j_value,
            residual: res.residual,
            cg_iterations: res.iterations,
            cg_converged: res.converged,
            h_real_at_zero,
            clamped_nodes: clamped,
        },
    })
}

struct Increment {
    interior: Vec<f64>,
    boundary: f64,
}

/// Potential increments read off the `t = 0` row of the minimizer.
///
/// The node `x = 0` of that row carries `u_Γ(0)`, and `y₀` vanishes at the
/// Dirichlet node, so the interior increment at both end nodes is
/// extrapolated linearly from its neighbours.
fn trace_increment(setup: &Setup, u: &Array2<Complex64>) -> Increment {
    let grid = &setup.grid;
    let nx = grid.nx();
    let m = grid.zero_index();
    let dt = grid.dt();
    let read = |i: usize| -> Complex64 {
        match setup.update {
            UpdateRule::Trace => I * u[[m, i]],
            UpdateRule::Literal => (u[[m + 1, i]] - u[[m - 1, i]]) / (2.0 * dt),
        }
    };
    let mut interior = vec![0.0; nx + 1];
    for i in 1..nx {
        interior[i] = (read(i) / setup.y0[i]).re;
    }
    interior[0] = 2.0 * interior[1] - interior[2];
    interior[nx] = 2.0 * interior[nx - 1] - interior[nx - 2];
    let boundary = (read(0) / setup.y_gamma0).re;
    Increment { interior, boundary }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepTolerance,
    MaxIterations,
    Diverging,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `‖(p^k − p, p^k_Γ − p_Γ)‖` when the truth is known.
    pub error: Option<f64>,
    pub relative_error: Option<f64>,
    pub p_gamma_error: Option<f64>,
    /// `Σ e^{−2sφ(x,0)}|p^k − p|² Δx + e^{−2sφ(0,0)}|p^k_Γ − p_Γ|²`.
    pub weighted_error: Option<f64>,
    pub step_size: f64,
    pub p_gamma: f64,
    pub diagnostics: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub iterations: Vec<IterationRecord>,
    pub rate: Option<f64>,
    pub stop_reason: StopReason,
    pub m_too_small: bool,
    pub update: UpdateRule,
    pub final_potentials: Potentials,
    pub snapshots: Vec<Vec<f64>>,
}

impl ReconstructionReport {
    pub fn errors(&self) -> Vec<f64> {
        self.iterations.iter().filter_map(|r| r.error).collect()
    }
}

/// Weighted `t = 0` distance between two potential pairs.
pub fn weighted_t0_error(a: &Potentials, b: &Potentials, params: &CarlemanParams, grid: &Grid1D) -> f64 {
    let w = Grid1D::trapezoid_weights(grid.n_space());
    let interior: f64 = (0..grid.n_space())
        .map(|i| w[i] * weight_e2sphi(grid.x(i), 0.0, params, grid) * (a.p[i] - b.p[i]).powi(2))
        .sum::<f64>()
        * grid.dx();
    interior + weight_e2sphi(0.0, 0.0, params, grid) * (a.p_gamma - b.p_gamma).powi(2)
}

/// Least-squares slope of `log e_k` against `k`, exponentiated.
pub fn fit_rate(errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        errors.iter().enumerate().filter(|(_, e)| **e > 0.0).map(|(k, e)| (k as f64, e.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Runs the iteration from `guess` (zero when `None`).
pub fn run_cbrec(
    setup: &Setup,
    measurement: &Measurement,
    truth: Option<&Potentials>,
    guess: Option<&Potentials>,
) -> Result<ReconstructionReport> {
    let grid = &setup.grid;
    let mut current = match guess {
        Some(g) => setup.potentials(g.p.clone(), g.p_gamma),
        None => setup.potentials(vec![0.0; grid.n_space()], 0.0),
    };
    current.check_shape(grid)?;
    let truth_norm = truth.map(|t| t.pair_norm(grid));
    let record = |k: usize, pot: &Potentials, step: f64, diag: Option<StepDiagnostics>| {
        let error = truth.map(|t| pot.pair_distance(t, grid));
        IterationRecord {
            k,
            error,
            relative_error: error.zip(truth_norm).map(|(e, n)| if n > 0.0 { e / n } else { e }),
            p_gamma_error: truth.map(|t| (pot.p_gamma - t.p_gamma).abs()),
            weighted_error: truth.map(|t| weighted_t0_error(pot, t, &setup.params, grid)),
            step_size: step,
            p_gamma: pot.p_gamma,
            diagnostics: diag,
        }
    };

    let mut iterations = vec![record(0, &current, 0.0, None)];
    let mut snapshots = vec![current.p.clone()];
    let mut increases = 0;
    let mut stop_reason = StopReason::MaxIterations;
    for k in 1..=setup.max_iterations {
        let outcome = cbrec_step(setup, &current, measurement)?;
        let step = outcome.next.pair_distance(&current, grid);
        let scale = outcome.next.pair_norm(grid).max(f64::MIN_POSITIVE);
        let rec = record(k, &outcome.next, step, Some(outcome.diagnostics));
        if let (Some(e_new), Some(e_old)) = (rec.error, iterations.last().and_then(|r| r.error)) {
            increases = if e_new > e_old { increases + 1 } else { 0 };
        }
        iterations.push(rec);
        snapshots.push(outcome.next.p.clone());
        current = outcome.next;
        if step <= setup.stop_tol * scale || step == 0.0 {
            stop_reason = StopReason::StepTolerance;
            break;
        }
        if increases >= 3 {
            stop_reason = StopReason::Diverging;
            break;
        }
    }

    let errors: Vec<f64> = iterations.iter().filter_map(|r| r.error).collect();
    let rate = if iterations.len() > 3 { fit_rate(&errors) } else { None };
    let m_too_small = truth.is_some_and(|t| t.p.iter().any(|v| v.abs() > setup.m) || t.p_gamma.abs() > setup.m);
    Ok(ReconstructionReport {
        iterations,
        rate,
        stop_reason,
        m_too_small,
        update: setup.update,
        final_potentials: current,
        snapshots,
    })
}
