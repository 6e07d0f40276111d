//! Manufactured solution `y†(x,t) = e^{−it} cos(πx/(2ℓ))` with analytic
//! sources, used for convergence studies of the forward solver.

use ndarray::Array2;
use num_complex::Complex64;

use crate::forward::SourceData;
use crate::grid::{Grid1D, Potentials, TimeWindow, Trajectory};

#[derive(Debug, Clone)]
pub struct Manufactured {
    pub d: f64,
    pub length: f64,
    pub p_gamma: f64,
    /// `p(x) = p_amp · sin(πx/ℓ) + p_offset`.
    pub p_amp: f64,
    pub p_offset: f64,
    /// `p₁(x) = p1_slope · x`.
    pub p1_slope: f64,
}

impl Manufactured {
    pub fn default_case(grid: &Grid1D) -> Self {
        Self { d: 1.0, length: grid.length(), p_gamma: 0.4, p_amp: 0.5, p_offset: 0.3, p1_slope: 0.2 }
    }

    fn k(&self) -> f64 {
        std::f64::consts::PI / (2.0 * self.length)
    }

    fn p_at(&self, x: f64) -> f64 {
        self.p_amp * (std::f64::consts::PI * x / self.length).sin() + self.p_offset
    }

    pub fn potentials(&self, grid: &Grid1D) -> Potentials {
        Potentials {
            p: grid.xs().iter().map(|&x| self.p_at(x)).collect(),
            p_gamma: self.p_gamma,
            p1: grid.xs().iter().map(|&x| self.p1_slope * x).collect(),
        }
    }

    pub fn exact(&self, x: f64, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, -t) * (self.k() * x).cos()
    }

    pub fn exact_dx(&self, x: f64, t: f64) -> Complex64 {
        -self.k() * Complex64::from_polar(1.0, -t) * (self.k() * x).sin()
    }

    /// Exact flux `∂ₓy†(ℓ, t)`.
    pub fn exact_flux(&self, t: f64) -> Complex64 {
        self.exact_dx(self.length, t)
    }

    pub fn initial(&self, grid: &Grid1D) -> Vec<Complex64> {
        let mut y0: Vec<Complex64> = grid.xs().iter().map(|&x| self.exact(x, 0.0)).collect();
        y0[grid.nx()] = Complex64::new(0.0, 0.0);
        y0
    }

    pub fn y_gamma0(&self) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// `g = i∂ₜy† + d∂ₓ²y† − p₁∂ₓy† + p y†`, `g_Γ = iẏ_Γ† − d∂ₓy†(0) + p_Γ y_Γ†`.
    pub fn sources(&self, grid: &Grid1D) -> SourceData {
        let nt = TimeWindow::Half.len(grid);
        let k = self.k();
        let g = Array2::from_shape_fn((nt, grid.n_space()), |(j, i)| {
            let t = TimeWindow::Half.t(grid, j);
            let x = grid.x(i);
            let y = self.exact(x, t);
            y * (1.0 - self.d * k * k + self.p_at(x)) - self.p1_slope * x * self.exact_dx(x, t)
        });
        let g_gamma = (0..nt)
            .map(|j| {
                let t = TimeWindow::Half.t(grid, j);
                let yg = self.exact(0.0, t);
                yg - self.d * self.exact_dx(0.0, t) + self.p_gamma * yg
            })
            .collect();
        SourceData { g, g_gamma }
    }

    pub fn max_error(&self, traj: &Trajectory) -> f64 {
        let grid = traj.grid();
        let mut err: f64 = 0.0;
        for (j, row) in traj.field().rows().into_iter().enumerate() {
            let t = traj.window().t(grid, j);
            for (i, v) in row.iter().enumerate() {
                err = err.max((v - self.exact(grid.x(i), t)).norm());
            }
        }
        err
    }
}
