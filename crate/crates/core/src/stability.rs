//! Lipschitz stability probe: flux distance in `H¹(0,T)` against potential
//! distance in `L²(0,ℓ) × ℝ`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::time_derivative;
use crate::forward::{flux_at_right, solve_forward, SourceData};
use crate::grid::{Grid1D, Potentials};

/// `sqrt(∫|f|² + ∫|f′|²)` with the trapezoid rule and second-order `f′`.
pub fn h1_norm(f: &[Complex64], dt: f64) -> Result<f64> {
    let df = time_derivative(f, dt)?;
    let w = Grid1D::trapezoid_weights(f.len());
    let sum: f64 = f.iter().zip(&df).zip(&w).map(|((v, d), w)| w * (v.norm_sqr() + d.norm_sqr())).sum();
    Ok((sum * dt).sqrt())
}

/// Data of a forward problem with variable potentials.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub grid: Grid1D,
    pub d: f64,
    pub sources: SourceData,
    pub y0: Vec<Complex64>,
    pub y_gamma0: Complex64,
}

impl ForwardProblem {
    pub fn flux(&self, pot: &Potentials) -> Result<Vec<Complex64>> {
        let traj = solve_forward(&self.grid, self.d, pot, &self.sources, &self.y0, self.y_gamma0)?;
        Ok(flux_at_right(&traj))
    }
}

/// Unit-amplitude perturbation `δp(x) = Σ c_k sin(kπx/ℓ)/k`, `δp_Γ = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub id: usize,
    pub coeffs: Vec<f64>,
    pub boundary: f64,
}

impl Perturbation {
    pub fn profile(&self, grid: &Grid1D) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        grid.xs()
            .iter()
            .map(|x| {
                self.coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * pi * x / grid.length()).sin() / (k + 1) as f64)
                    .sum()
            })
            .collect()
    }

    /// `(p + amplitude·δp, p_Γ + amplitude·δp_Γ)`.
    pub fn apply(&self, baseline: &Potentials, amplitude: f64, grid: &Grid1D) -> Potentials {
        let p = baseline.p.iter().zip(self.profile(grid)).map(|(p, d)| p + amplitude * d).collect();
        baseline.with_pair(p, baseline.p_gamma + amplitude * self.boundary)
    }
}

/// `members` seeded perturbations with `modes` sine modes each. Member `k`
/// does not depend on `members`, so a larger ensemble extends a smaller one.
pub fn perturbation_ensemble(members: usize, modes: usize, seed: u64) -> Vec<Perturbation> {
    (0..members)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(id as u64));
            let coeffs = (0..modes).map(|_| rng.random_range(-1.0..1.0)).collect();
            Perturbation { id, coeffs, boundary: rng.random_range(-1.0..1.0) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub id: usize,
    pub amplitude: f64,
    /// `‖flux[q] − flux[p]‖_{H¹(0,T)}`.
    pub numerator: f64,
    /// `sqrt(‖q − p‖²_{L²} + |q_Γ − p_Γ|²)`.
    pub denominator: f64,
    pub ratio: Option<f64>,
    /// Reason the member was excluded, if it was.
    pub flag: Option<String>,
}

/// Flux-to-potential distance ratios for every member at one amplitude.
pub fn lipschitz_experiment(
    problem: &ForwardProblem,
    baseline: &Potentials,
    members: &[Perturbation],
    amplitude: f64,
    m: f64,
) -> Result<Vec<RatioRow>> {
    let grid = &problem.grid;
    let outside = |pot: &Potentials| pot.p.iter().any(|v| v.abs() > m) || pot.p_gamma.abs() > m;
    if outside(baseline) {
        return Err(Error::Config(vec![format!("baseline potentials exceed m = {m}")]));
    }
    let base_flux = problem.flux(baseline)?;
    let rows = members
        .par_iter()
        .map(|member| {
            let q = member.apply(baseline, amplitude, grid);
            let denominator = q.pair_distance(baseline, grid);
            let mut row = RatioRow { id: member.id, amplitude, numerator: 0.0, denominator, ratio: None, flag: None };
            if denominator == 0.0 {
                row.flag = Some("zero perturbation".into());
            } else if outside(&q) {
                row.flag = Some(format!("outside the m = {m} ball"));
            } else {
                match problem.flux(&q).and_then(|f| {
                    let diff: Vec<Complex64> = f.iter().zip(&base_flux).map(|(a, b)| a - b).collect();
                    h1_norm(&diff, grid.dt())
                }) {
                    Ok(num) => {
                        row.numerator = num;
                        row.ratio = Some(num / denominator);
                    }
                    Err(e) => row.flag = Some(e.to_string()),
                }
            }
            row
        })
        .collect();
    Ok(rows)
}

/// `(min, max)` over the defined ratios.
pub fn ratio_range(rows: &[RatioRow]) -> Option<(f64, f64)> {
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return None;
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn h1_of_simple_series() {
        assert_eq!(h1_norm(&[c(0.0, 0.0); 5], 0.1).unwrap(), 0.0);
        let ones = vec![c(1.0, 0.0); 11];
        assert!((h1_norm(&ones, 0.1).unwrap() - 1.0).abs() < 1e-14);
        assert!(h1_norm(&ones[..2], 0.1).is_err());
    }

    #[test]
    fn h1_of_exponential() {
        let err = |n: usize| {
            let dt = 2.0 * PI / n as f64;
            let f: Vec<_> = (0..=n).map(|k| Complex64::from_polar(1.0, k as f64 * dt)).collect();
            (h1_norm(&f, dt).unwrap() - (4.0 * PI).sqrt()).abs()
        };
        assert!(err(400) < 1e-3);
        assert!(err(200) / err(400) > 3.0);
    }

    fn problem(n: usize) -> (ForwardProblem, Potentials) {
        let grid = Grid1D::new(n, 1.0, n, 1.0).unwrap();
        let y0 = grid.xs().iter().map(|x| c((PI * x / 2.0).cos(), 0.0)).collect();
        let pot = Potentials {
            p: grid.xs().iter().map(|x| 0.5 * (PI * x).sin() + 0.3).collect(),
            p_gamma: 0.4,
            p1: vec![0.0; n + 1],
        };
        let fp = ForwardProblem { grid, d: 1.0, sources: SourceData::zero(&grid), y0, y_gamma0: c(1.0, 0.0) };
        (fp, pot)
    }

    #[test]
    fn ensemble_prefix_is_stable() {
        let a = perturbation_ensemble(5, 4, 9);
        let b = perturbation_ensemble(10, 4, 9);
        assert_eq!(a[..], b[..5]);
    }

    #[test]
    fn identical_member_is_flagged() {
        let (fp, pot) = problem(16);
        let zero = Perturbation { id: 0, coeffs: vec![0.0; 3], boundary: 0.0 };
        let rows = lipschitz_experiment(&fp, &pot, &[zero], 0.1, 2.0).unwrap();
        assert!(rows[0].ratio.is_none());
        assert_eq!(rows[0].flag.as_deref(), Some("zero perturbation"));
    }

    #[test]
    fn ratios_positive_and_symmetric() {
        let (fp, pot) = problem(24);
        let members = perturbation_ensemble(4, 3, 1);
        let rows = lipschitz_experiment(&fp, &pot, &members, 0.05, 2.0).unwrap();
        for (row, member) in rows.iter().zip(&members) {
            let r = row.ratio.unwrap();
            assert!(r.is_finite() && r > 0.0);
            let q = member.apply(&pot, 0.05, &fp.grid);
            let back = lipschitz_experiment(&fp, &q, std::slice::from_ref(member), -0.05, 2.0).unwrap();
            let rb = back[0].ratio.unwrap();
            assert!((rb - r).abs() < 1e-9 * r, "{r} {rb}");
        }
    }

    #[test]
    fn member_outside_ball_is_flagged() {
        let (fp, pot) = problem(16);
        let big = Perturbation { id: 3, coeffs: vec![0.0], boundary: 1.0 };
        let rows = lipschitz_experiment(&fp, &pot, &[big], 5.0, 2.0).unwrap();
        assert!(rows[0].flag.as_deref().unwrap().contains("outside"));
    }
}
