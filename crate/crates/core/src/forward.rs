//! Crank–Nicolson solver for
//!
//! ```text
//! i∂ₜy + d∂ₓ²y − p₁∂ₓy + p y = g      in (0, ℓ) × (0, T)
//! iẏ_Γ − d∂ₓy(0,t) + p_Γ y_Γ = g_Γ     at x = 0
//! y(0,t) = y_Γ(t),  y(ℓ,t) = 0
//! ```
//!
//! Interior rows use centred second-order differences; the dynamic boundary
//! row uses the one-sided stencil `(−3y₀ + 4y₁ − y₂)/(2Δx)`. The boundary
//! row couples three unknowns, so it is reduced against row 1 before the
//! tridiagonal factorization. The step matrix is time-independent and is
//! factored once per solve.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Potentials, TimeWindow, Trajectory};
use crate::linalg::TridiagLu;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const PIVOT_TOL: f64 = 1e-13;

/// Sources on the forward window `[0, T]` (rows = time nodes `M..=2M`).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    pub g: Array2<Complex64>,
    pub g_gamma: Vec<Complex64>,
}

impl SourceData {
    pub fn zero(grid: &Grid1D) -> Self {
        let nt = TimeWindow::Half.len(grid);
        Self { g: Array2::zeros((nt, grid.n_space())), g_gamma: vec![ZERO; nt] }
    }

    pub fn new(grid: &Grid1D, g: Array2<Complex64>, g_gamma: Vec<Complex64>) -> Result<Self> {
        let src = Self { g, g_gamma };
        src.check(grid)?;
        Ok(src)
    }

    fn check(&self, grid: &Grid1D) -> Result<()> {
        let nt = TimeWindow::Half.len(grid);
        if self.g.dim() != (nt, grid.n_space()) {
            return Err(Error::Shape { what: "source g".into(), expected: nt * grid.n_space(), found: self.g.len() });
        }
        if self.g_gamma.len() != nt {
            return Err(Error::Shape { what: "source g_gamma".into(), expected: nt, found: self.g_gamma.len() });
        }
        if !self.g.iter().chain(&self.g_gamma).all(|v| v.is_finite()) {
            return Err(Error::Parse("non-finite source entry".into()));
        }
        Ok(())
    }

    /// Pointwise `αa + βb`.
    pub fn combine(alpha: Complex64, a: &Self, beta: Complex64, b: &Self) -> Self {
        Self {
            g: a.g.mapv(|v| alpha * v) + b.g.mapv(|v| beta * v),
            g_gamma: a.g_gamma.iter().zip(&b.g_gamma).map(|(x, y)| alpha * x + beta * y).collect(),
        }
    }
}

/// Flux `∂ₓy(ℓ, tⱼ)` over the forward window with its noise metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub times: Vec<f64>,
    pub flux: Vec<Complex64>,
    pub sigma: f64,
    pub seed: u64,
}

impl Measurement {
    pub fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        let expected = TimeWindow::Half.len(grid);
        if self.flux.len() != expected || self.times.len() != expected {
            return Err(Error::Shape {
                what: "measurement".into(),
                expected,
                found: self.flux.len().min(self.times.len()),
            });
        }
        Ok(())
    }
}

/// Crank–Nicolson step matrices for fixed coefficients.
struct StepOperator {
    nx: usize,
    dt: f64,
    /// Explicit spatial operator rows: (lower, diag, upper) per unknown, plus
    /// the extra `y₂` coefficient of the boundary row.
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    upper: Vec<Complex64>,
    boundary_y2: Complex64,
    /// Multiplier used to remove `y₂` from the implicit boundary row.
    reduce: Complex64,
    lu: TridiagLu,
}

impl StepOperator {
    fn new(grid: &Grid1D, d: f64, pot: &Potentials) -> Result<Self> {
        let nx = grid.nx();
        let dx = grid.dx();
        let dt = grid.dt();
        let n = nx;
        let mut lower = vec![ZERO; n];
        let mut diag = vec![ZERO; n];
        let mut upper = vec![ZERO; n];
        // Boundary row: −d(−3y₀ + 4y₁ − y₂)/(2Δx) + p_Γ y₀.
        diag[0] = Complex64::from(3.0 * d / (2.0 * dx) + pot.p_gamma);
        upper[0] = Complex64::from(-2.0 * d / dx);
        let boundary_y2 = Complex64::from(d / (2.0 * dx));
        for i in 1..n {
            let diff = d / (dx * dx);
            let drift = pot.p1[i] / (2.0 * dx);
            lower[i] = Complex64::from(diff + drift);
            diag[i] = Complex64::from(-2.0 * diff + pot.p[i]);
            upper[i] = Complex64::from(diff - drift);
        }

        // Implicit matrix (i/Δt)I + ½A.
        let l_lo: Vec<Complex64> = lower[1..].iter().map(|v| 0.5 * v).collect();
        let mut l_di: Vec<Complex64> = diag.iter().map(|v| I / dt + 0.5 * v).collect();
        let mut l_up: Vec<Complex64> = upper[..n - 1].iter().map(|v| 0.5 * v).collect();
        let row1_y2 = 0.5 * upper[1];
        if row1_y2.norm() <= PIVOT_TOL * (d / (dx * dx)) {
            return Err(Error::SingularStep { step: 0, pivot: row1_y2.norm() });
        }
        let reduce = 0.5 * boundary_y2 / row1_y2;
        l_di[0] -= reduce * l_lo[0];
        l_up[0] -= reduce * l_di[1];
        let lu = TridiagLu::factor(&l_lo, &l_di, &l_up, PIVOT_TOL)
            .map_err(|e| Error::SingularStep { step: 0, pivot: e.magnitude })?;
        Ok(Self { nx, dt, lower, diag, upper, boundary_y2, reduce, lu })
    }

    /// `(A y)` on the unknowns (Dirichlet node excluded, taken as zero).
    fn apply_spatial(&self, y: &[Complex64], out: &mut [Complex64]) {
        let n = self.nx;
        out[0] = self.diag[0] * y[0] + self.upper[0] * y[1] + self.boundary_y2 * y[2];
        for i in 1..n {
            let right = if i + 1 < n { y[i + 1] } else { ZERO };
            out[i] = self.lower[i] * y[i - 1] + self.diag[i] * y[i] + self.upper[i] * right;
        }
    }

    /// Advances `y` (length `nx`) by one step with half-step averaged sources.
    fn step(&self, y: &mut [Complex64], src_avg: &[Complex64], work: &mut [Complex64]) {
        self.apply_spatial(y, work);
        for i in 0..self.nx {
            work[i] = I / self.dt * y[i] - 0.5 * work[i] + src_avg[i];
        }
        let r1 = work[1];
        work[0] -= self.reduce * r1;
        self.lu.solve(work);
        y.copy_from_slice(work);
    }
}

/// Solves the forward problem on `[0, T]`.
///
/// The coupled unknown at `x = 0` starts from `y_Γ,0`; `y0[nx]` is replaced
/// by the Dirichlet value.
pub fn solve_forward(
    grid: &Grid1D,
    d: f64,
    pot: &Potentials,
    sources: &SourceData,
    y0: &[Complex64],
    y_gamma0: Complex64,
) -> Result<Trajectory> {
    if !(d > 0.0) {
        return Err(Error::Config(vec![format!("d must be positive (got {d})")]));
    }
    pot.check_shape(grid)?;
    sources.check(grid)?;
    if y0.len() != grid.n_space() {
        return Err(Error::Shape { what: "y0".into(), expected: grid.n_space(), found: y0.len() });
    }
    let op = StepOperator::new(grid, d, pot)?;
    let nx = grid.nx();
    let nt = TimeWindow::Half.len(grid);
    let mut out = Array2::<Complex64>::zeros((nt, grid.n_space()));

    let mut y: Vec<Complex64> = y0[..nx].to_vec();
    y[0] = y_gamma0;
    let mut work = vec![ZERO; nx];
    let mut src = vec![ZERO; nx];
    for (i, v) in y.iter().enumerate() {
        out[[0, i]] = *v;
    }
    for n in 0..nt - 1 {
        src[0] = 0.5 * (sources.g_gamma[n] + sources.g_gamma[n + 1]);
        for i in 1..nx {
            src[i] = 0.5 * (sources.g[[n, i]] + sources.g[[n + 1, i]]);
        }
        op.step(&mut y, &src, &mut work);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        for (i, v) in y.iter().enumerate() {
            out[[n + 1, i]] = *v;
        }
    }
    Trajectory::new(*grid, TimeWindow::Half, out)
}

/// `∂ₓy(ℓ, ·)` by `(3y_nx − 4y_{nx−1} + y_{nx−2})/(2Δx)` at every stored time.
pub fn flux_at_right(traj: &Trajectory) -> Vec<Complex64> {
    let grid = traj.grid();
    let nx = grid.nx();
    let dx = grid.dx();
    traj.field().rows().into_iter().map(|row| (3.0 * row[nx] - 4.0 * row[nx - 1] + row[nx - 2]) / (2.0 * dx)).collect()
}

/// Root-mean-square magnitude of a complex series.
pub fn rms(series: &[Complex64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().map(|v| v.norm_sqr()).sum::<f64>() / series.len() as f64).sqrt()
}

/// Adds complex Gaussian noise with `E|n|² = (σ·rms)²` to a clean series.
pub fn add_noise(clean: &[Complex64], sigma: f64, seed: u64) -> Vec<Complex64> {
    if sigma <= 0.0 {
        return clean.to_vec();
    }
    let std = sigma * rms(clean) / std::f64::consts::SQRT_2;
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean
        .iter()
        .map(|v| {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            v + Complex64::new(re, im)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn synthesize_measurement(
    grid: &Grid1D,
    d: f64,
    truth: &Potentials,
    sources: &SourceData,
    y0: &[Complex64],
    y_gamma0: Complex64,
    sigma: f64,
    seed: u64,
) -> Result<Measurement> {
    let traj = solve_forward(grid, d, truth, sources, y0, y_gamma0)?;
    let clean = flux_at_right(&traj);
    Ok(Measurement { times: traj.times(), flux: add_noise(&clean, sigma, seed), sigma, seed })
}

/// Largest relative deviation of a series from its first entry.
pub fn relative_drift(series: &[f64]) -> f64 {
    let base = series[0].abs().max(f64::MIN_POSITIVE);
    series.iter().map(|v| (v - series[0]).abs()).fold(0.0, f64::max) / base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::Manufactured;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = Grid1D::new(16, 1.0, 16, 1.0).unwrap();
        let pot = Potentials { p: vec![0.4; 17], p_gamma: -0.2, p1: vec![0.1; 17] };
        let traj = solve_forward(&g, 1.0, &pot, &SourceData::zero(&g), &vec![ZERO; 17], ZERO).unwrap();
        assert!(traj.field().iter().all(|v| *v == ZERO));
        assert!(flux_at_right(&traj).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn rejects_nonpositive_d() {
        let g = Grid1D::new(8, 1.0, 8, 1.0).unwrap();
        let pot = Potentials::zero(&g);
        let y0 = vec![c(1.0); 9];
        assert!(solve_forward(&g, 0.0, &pot, &SourceData::zero(&g), &y0, c(1.0)).is_err());
    }

    #[test]
    fn flux_exact_on_linear_profile() {
        let g = Grid1D::new(10, 2.0, 8, 1.0).unwrap();
        let cval = Complex64::new(0.7, -1.3);
        let mut y = Array2::zeros((9, 11));
        for j in 0..9 {
            for i in 0..=10 {
                y[[j, i]] = (2.0 - g.x(i)) * cval;
            }
        }
        y.column_mut(10).fill(ZERO);
        let traj = Trajectory::new(g, TimeWindow::Half, y).unwrap();
        for f in flux_at_right(&traj) {
            assert!((f + cval).norm() < 1e-12);
        }
    }

    #[test]
    fn boundary_invariants_hold() {
        let g = Grid1D::new(20, 1.0, 20, 1.0).unwrap();
        let m = Manufactured::default_case(&g);
        let traj = solve_forward(&g, m.d, &m.potentials(&g), &m.sources(&g), &m.initial(&g), m.y_gamma0()).unwrap();
        assert!(traj.field().column(20).iter().all(|v| *v == ZERO));
        let trace = traj.y_gamma();
        assert!(Trajectory::with_boundary(g, TimeWindow::Half, traj.field().clone(), &trace).is_ok());
    }

    #[test]
    fn manufactured_solution_converges_second_order() {
        let mut errors = Vec::new();
        for &n in &[20usize, 40, 80] {
            let g = Grid1D::new(n, 1.0, n, 1.0).unwrap();
            let m = Manufactured::default_case(&g);
            let traj = solve_forward(&g, m.d, &m.potentials(&g), &m.sources(&g), &m.initial(&g), m.y_gamma0()).unwrap();
            errors.push(m.max_error(&traj));
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}, errors {errors:?}");
        }
    }

    #[test]
    fn noise_is_deterministic_and_sized() {
        let clean: Vec<Complex64> = (0..400).map(|k| Complex64::from_polar(1.0, 0.05 * k as f64)).collect();
        assert_eq!(add_noise(&clean, 0.0, 3), clean);
        let a = add_noise(&clean, 0.01, 42);
        let b = add_noise(&clean, 0.01, 42);
        assert_eq!(a, b);
        let num: f64 = a.iter().zip(&clean).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = clean.iter().map(|v| v.norm_sqr()).sum();
        let rel = (num / den).sqrt();
        assert!((0.005..=0.02).contains(&rel), "{rel}");
    }
}
