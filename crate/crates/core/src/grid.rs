//! Uniform space-time grids, potentials and trajectories.
//!
//! The time axis always covers the full symmetric window `[-T, T]` with
//! `2M + 1` nodes; index `M` is the `t = 0` node. Forward solves live on
//! the upper half `[0, T]` (indices `M..=2M`).

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SPACE_NODES: usize = 8;
pub const MIN_HALF_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    nx: usize,
    length: f64,
    nt_half: usize,
    horizon: f64,
}

impl Grid1D {
    pub fn new(nx: usize, length: f64, nt_half: usize, horizon: f64) -> Result<Self> {
        if nx < MIN_SPACE_NODES {
            return Err(Error::InvalidGrid(format!("nx = {nx} is below the minimum {MIN_SPACE_NODES}")));
        }
        if nt_half < MIN_HALF_STEPS {
            return Err(Error::InvalidGrid(format!("nt_half = {nt_half} is below the minimum {MIN_HALF_STEPS}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("T must be positive, got {horizon}")));
        }
        Ok(Self { nx, length, nt_half, horizon })
    }

    /// Same physical domain with both step sizes halved.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * self.nx, nt_half: 2 * self.nt_half, ..*self }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn nt_half(&self) -> usize {
        self.nt_half
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.nt_half as f64
    }
    /// Number of space nodes, `nx + 1`.
    pub fn n_space(&self) -> usize {
        self.nx + 1
    }
    /// Number of time nodes on the full window, `2M + 1`.
    pub fn n_time(&self) -> usize {
        2 * self.nt_half + 1
    }
    /// Index of the `t = 0` node.
    pub fn zero_index(&self) -> usize {
        self.nt_half
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx {
            self.length
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        let m = self.nt_half;
        if j == 0 {
            -self.horizon
        } else if j == 2 * m {
            self.horizon
        } else {
            (j as f64 - m as f64) * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.n_time()).map(|j| self.t(j)).collect()
    }

    /// Time nodes of the forward window `[0, T]`.
    pub fn forward_ts(&self) -> Vec<f64> {
        (self.nt_half..self.n_time()).map(|j| self.t(j)).collect()
    }

    /// Trapezoid weights (without the step factor) for `n` nodes.
    pub fn trapezoid_weights(n: usize) -> Vec<f64> {
        let mut w = vec![1.0; n];
        if n > 0 {
            w[0] = 0.5;
            w[n - 1] = 0.5;
        }
        w
    }

    /// Trapezoid L² norm of a real nodal function on the space grid.
    pub fn l2_space(&self, f: &[f64]) -> f64 {
        let w = Self::trapezoid_weights(f.len());
        (f.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>() * self.dx()).sqrt()
    }
}

/// Zeroth-order potentials `p`, `p_Γ` and the drift coefficient `p₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub p: Vec<f64>,
    pub p_gamma: f64,
    pub p1: Vec<f64>,
}

impl Potentials {
    pub fn new(p: Vec<f64>, p_gamma: f64, p1: Vec<f64>) -> Result<Self> {
        if p.len() != p1.len() {
            return Err(Error::Shape { what: "p1".into(), expected: p.len(), found: p1.len() });
        }
        Ok(Self { p, p_gamma, p1 })
    }

    pub fn zero(grid: &Grid1D) -> Self {
        Self { p: vec![0.0; grid.n_space()], p_gamma: 0.0, p1: vec![0.0; grid.n_space()] }
    }

    pub fn check_shape(&self, grid: &Grid1D) -> Result<()> {
        for (what, len) in [("p", self.p.len()), ("p1", self.p1.len())] {
            if len != grid.n_space() {
                return Err(Error::Shape { what: what.into(), expected: grid.n_space(), found: len });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.p_gamma.is_finite() && self.p.iter().all(|v| v.is_finite()) && self.p1.iter().all(|v| v.is_finite())
    }

    /// Same drift, different zeroth-order pair.
    pub fn with_pair(&self, p: Vec<f64>, p_gamma: f64) -> Self {
        Self { p, p_gamma, p1: self.p1.clone() }
    }

    /// `sqrt(‖p − q‖²_{L²} + |p_Γ − q_Γ|²)`, the norm on `L²(0,ℓ) × ℝ`.
    pub fn pair_distance(&self, other: &Self, grid: &Grid1D) -> f64 {
        let diff: Vec<f64> = self.p.iter().zip(&other.p).map(|(a, b)| a - b).collect();
        let l2 = grid.l2_space(&diff);
        (l2 * l2 + (self.p_gamma - other.p_gamma).powi(2)).sqrt()
    }

    pub fn pair_norm(&self, grid: &Grid1D) -> f64 {
        let l2 = grid.l2_space(&self.p);
        (l2 * l2 + self.p_gamma * self.p_gamma).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeWindow {
    /// `[0, T]`, time indices `M..=2M` of the grid.
    Half,
    /// `[-T, T]`, all time indices.
    Full,
}

impl TimeWindow {
    pub fn len(&self, grid: &Grid1D) -> usize {
        match self {
            TimeWindow::Half => grid.nt_half() + 1,
            TimeWindow::Full => grid.n_time(),
        }
    }

    pub fn is_empty(&self, grid: &Grid1D) -> bool {
        self.len(grid) == 0
    }

    /// Physical time of row `k` inside this window.
    pub fn t(&self, grid: &Grid1D, k: usize) -> f64 {
        match self {
            TimeWindow::Half => grid.t(grid.nt_half() + k),
            TimeWindow::Full => grid.t(k),
        }
    }
}

/// Complex state `y(x, t)` on a grid window together with its boundary trace.
///
/// Rows are time nodes, columns are space nodes. The last column is pinned
/// to zero and the first column equals `y_Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid1D,
    window: TimeWindow,
    y: Array2<Complex64>,
}

impl Trajectory {
    pub fn new(grid: Grid1D, window: TimeWindow, y: Array2<Complex64>) -> Result<Self> {
        let (nt, ns) = y.dim();
        if nt != window.len(&grid) {
            return Err(Error::Shape { what: "trajectory time nodes".into(), expected: window.len(&grid), found: nt });
        }
        if ns != grid.n_space() {
            return Err(Error::Shape { what: "trajectory space nodes".into(), expected: grid.n_space(), found: ns });
        }
        if y.column(grid.nx()).iter().any(|v| *v != Complex64::new(0.0, 0.0)) {
            return Err(Error::Invariant("Dirichlet"));
        }
        Ok(Self { grid, window, y })
    }

    /// Builds a trajectory from an interior field and an explicit boundary
    /// trace, rejecting data that break the coupling `y(0, t) = y_Γ(t)`.
    pub fn with_boundary(
        grid: Grid1D,
        window: TimeWindow,
        y: Array2<Complex64>,
        y_gamma: &[Complex64],
    ) -> Result<Self> {
        let traj = Self::new(grid, window, y)?;
        if y_gamma.len() != traj.y.nrows() {
            return Err(Error::Shape { what: "boundary trace".into(), expected: traj.y.nrows(), found: y_gamma.len() });
        }
        if traj.y.column(0).iter().zip(y_gamma).any(|(a, b)| a != b) {
            return Err(Error::Invariant("coupling"));
        }
        Ok(traj)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
    pub fn window(&self) -> TimeWindow {
        self.window
    }
    pub fn field(&self) -> &Array2<Complex64> {
        &self.y
    }
    pub fn into_field(self) -> Array2<Complex64> {
        self.y
    }

    /// Boundary trace `y_Γ(t) = y(0, t)`.
    pub fn y_gamma(&self) -> Vec<Complex64> {
        self.y.column(0).to_vec()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.y.nrows()).map(|k| self.window.t(&self.grid, k)).collect()
    }

    /// `Σ wᵢ|y(xᵢ,t)|²Δx + |y_Γ(t)|²` per time node (trapezoid weights).
    pub fn mass(&self) -> Vec<f64> {
        self.energy_with_boundary_sign(1.0)
    }

    /// `Σ wᵢ|y(xᵢ,t)|²Δx − |y_Γ(t)|²`: the quadratic quantity the system
    /// with the boundary law `iẏ_Γ − d∂ₓy(0) + p_Γy_Γ = 0` conserves.
    pub fn indefinite_energy(&self) -> Vec<f64> {
        self.energy_with_boundary_sign(-1.0)
    }

    fn energy_with_boundary_sign(&self, sign: f64) -> Vec<f64> {
        let w = Grid1D::trapezoid_weights(self.grid.n_space());
        let dx = self.grid.dx();
        self.y
            .rows()
            .into_iter()
            .map(|row| {
                let interior: f64 = row.iter().zip(&w).map(|(v, w)| w * v.norm_sqr()).sum();
                interior * dx + sign * row[0].norm_sqr()
            })
            .collect()
    }
}
