use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use cbrec_core::carleman::{carleman_sweep, estimate_s0_index, max_ratio, test_ensemble, InequalityTerms};
use cbrec_core::cbrec::{run_cbrec, StopReason, UpdateRule};
use cbrec_core::config::RunConfig;
use cbrec_core::forward::{add_noise, flux_at_right, relative_drift, rms, solve_forward, synthesize_measurement};
use cbrec_core::geometry::{classify_gamma_star, minkowski_mu, normal_derivative_psi, psi, ConvexBody};
use cbrec_core::io::{read_measurement, RunWriter};
use cbrec_core::stability::{lipschitz_experiment, perturbation_ensemble, ratio_range, RatioRow};
use cbrec_core::{Error, Grid1D, Potentials, Result};

const SNAPSHOTS: usize = 10;

fn truth(cfg: &RunConfig, grid: &Grid1D) -> Result<Potentials> {
    cfg.potentials(grid)?.ok_or_else(|| Error::Config(vec!["p and p_gamma are required".into()]))
}

#[derive(Serialize)]
struct GridSummary {
    nx: usize,
    length: f64,
    nt_half: usize,
    horizon: f64,
    dx: f64,
    dt: f64,
}

impl GridSummary {
    fn of(g: &Grid1D) -> Self {
        Self { nx: g.nx(), length: g.length(), nt_half: g.nt_half(), horizon: g.horizon(), dx: g.dx(), dt: g.dt() }
    }
}

#[derive(Serialize)]
struct FieldRow {
    t: f64,
    x: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct ForwardSummary {
    grid: GridSummary,
    /// Largest relative change of `‖y‖² + |y_Γ|²`.
    mass_drift: f64,
    /// Largest relative change of `‖y‖² − |y_Γ|²`.
    indefinite_energy_drift: f64,
    flux_rms: f64,
    sigma: f64,
    runtime_seconds: f64,
}

/// `flux.csv`, `y_gamma.csv`, `trajectory.csv` (every `nt/10`-th time),
/// `summary.json`.
pub fn forward(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let start = Instant::now();
    let fp = cfg.forward_problem()?;
    let grid = fp.grid;
    let pot = truth(cfg, &grid)?;
    let traj = solve_forward(&grid, fp.d, &pot, &fp.sources, &fp.y0, fp.y_gamma0)?;
    let times = traj.times();
    let clean = flux_at_right(&traj);
    let flux = add_noise(&clean, cfg.measurement.sigma, cfg.seed);
    w.series("flux.csv", &times, &flux)?;
    w.series("y_gamma.csv", &times, &traj.y_gamma())?;

    let stride = (times.len() / SNAPSHOTS).max(1);
    let xs = grid.xs();
    let field = traj.field();
    let (ts, xs) = (&times, &xs);
    let rows = (0..ts.len()).filter(|j| j % stride == 0 || *j == ts.len() - 1).flat_map(|j| {
        xs.iter().enumerate().map(move |(i, x)| FieldRow {
            t: ts[j],
            x: *x,
            re: field[[j, i]].re,
            im: field[[j, i]].im,
        })
    });
    w.csv("trajectory.csv", rows)?;

    let summary = ForwardSummary {
        grid: GridSummary::of(&grid),
        mass_drift: relative_drift(&traj.mass()),
        indefinite_energy_drift: relative_drift(&traj.indefinite_energy()),
        flux_rms: rms(&clean),
        sigma: cfg.measurement.sigma,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    w.json_timed("summary.json", "cbrec.forward_summary", &summary)
}

#[derive(Serialize, Clone)]
struct IterationRow {
    k: usize,
    error: Option<f64>,
    relative_error: Option<f64>,
    weighted_error: Option<f64>,
    p_gamma: f64,
    p_gamma_error: Option<f64>,
    j_value: Option<f64>,
    residual: Option<f64>,
    cg_iterations: Option<usize>,
    cg_converged: Option<bool>,
    step_size: f64,
}

#[derive(Serialize)]
struct PotentialRow {
    k: usize,
    node: usize,
    x: f64,
    p: f64,
}

#[derive(Serialize)]
struct ReconstructionOut<'a> {
    truth_supplied: bool,
    iterations: Vec<IterationRow>,
    rate: Option<f64>,
    stop_reason: StopReason,
    m_too_small: bool,
    update: UpdateRule,
    final_potentials: &'a Potentials,
    config: &'a RunConfig,
}

/// `measurement.csv`, `iterations.csv`, `potentials.csv` (one row per
/// iteration and node), `report.json`.
pub fn reconstruct(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let setup = cfg.setup()?;
    let grid = setup.grid;
    let truth = cfg.potentials(&grid)?;
    let sigma = cfg.measurement.sigma;
    let meas = match (&cfg.measurement.path, &truth) {
        (Some(path), _) => read_measurement(path, &grid, sigma, cfg.seed)?,
        (None, Some(t)) => {
            let y0: Vec<Complex64> = setup.y0.iter().map(|v| Complex64::from(*v)).collect();
            let yg = Complex64::from(setup.y_gamma0);
            synthesize_measurement(&grid, setup.d, t, &setup.sources, &y0, yg, sigma, cfg.seed)?
        }
        (None, None) => return Err(Error::Config(vec!["no measurement file and no truth potentials".into()])),
    };
    w.series("measurement.csv", &meas.times, &meas.flux)?;

    let report = run_cbrec(&setup, &meas, truth.as_ref(), None)?;
    let rows: Vec<IterationRow> = report
        .iterations
        .iter()
        .map(|r| IterationRow {
            k: r.k,
            error: r.error,
            relative_error: r.relative_error,
            weighted_error: r.weighted_error,
            p_gamma: r.p_gamma,
            p_gamma_error: r.p_gamma_error,
            j_value: r.diagnostics.as_ref().map(|d| d.j_value),
            residual: r.diagnostics.as_ref().map(|d| d.residual),
            cg_iterations: r.diagnostics.as_ref().map(|d| d.cg_iterations),
            cg_converged: r.diagnostics.as_ref().map(|d| d.cg_converged),
            step_size: r.step_size,
        })
        .collect();
    w.csv("iterations.csv", rows.iter().cloned())?;
    let xs = grid.xs();
    w.csv(
        "potentials.csv",
        report.snapshots.iter().enumerate().flat_map(|(k, p)| {
            p.iter().enumerate().map(|(i, v)| PotentialRow { k, node: i, x: xs[i], p: *v }).collect::<Vec<_>>()
        }),
    )?;
    let out = ReconstructionOut {
        truth_supplied: truth.is_some(),
        iterations: rows,
        rate: report.rate,
        stop_reason: report.stop_reason,
        m_too_small: report.m_too_small,
        update: report.update,
        final_potentials: &report.final_potentials,
        config: cfg,
    };
    w.json("report.json", "cbrec.reconstruction", &out)
}

#[derive(Serialize)]
struct AmplitudeSummary {
    amplitude: f64,
    defined: usize,
    flagged: usize,
    min: Option<f64>,
    max: Option<f64>,
    spread: Option<f64>,
}

#[derive(Serialize)]
struct StabilitySummary {
    members: usize,
    modes: usize,
    amplitudes: Vec<AmplitudeSummary>,
    min: Option<f64>,
    max: Option<f64>,
    /// Smallest constant bounding every observed ratio.
    fitted_upper: Option<f64>,
    fitted_lower: Option<f64>,
    /// Largest relative change of one member's ratio between amplitudes.
    max_amplitude_change: Option<f64>,
}

/// `ratios.csv` (id, amplitude, numerator, denominator, ratio, flag) and
/// `summary.json`.
pub fn stability(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let fp = cfg.forward_problem()?;
    let base = truth(cfg, &fp.grid)?;
    let st = &cfg.stability;
    let members = perturbation_ensemble(st.members, st.modes, cfg.seed);
    let mut per_amp = Vec::new();
    for &amp in &st.amplitudes {
        per_amp.push(lipschitz_experiment(&fp, &base, &members, amp, cfg.algorithm.m)?);
    }
    let all: Vec<RatioRow> = per_amp.iter().flatten().cloned().collect();
    w.csv("ratios.csv", all.iter())?;

    let amplitudes = st
        .amplitudes
        .iter()
        .zip(&per_amp)
        .map(|(&amplitude, rows)| {
            let range = ratio_range(rows);
            let defined = rows.iter().filter(|r| r.ratio.is_some()).count();
            AmplitudeSummary {
                amplitude,
                defined,
                flagged: rows.len() - defined,
                min: range.map(|r| r.0),
                max: range.map(|r| r.1),
                spread: range.map(|r| r.1 / r.0),
            }
        })
        .collect();
    let range = ratio_range(&all);
    let max_amplitude_change = (0..members.len())
        .filter_map(|k| {
            let rs: Vec<f64> = per_amp.iter().filter_map(|rows| rows[k].ratio).collect();
            (rs.len() >= 2).then(|| {
                let lo = rs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = rs.iter().cloned().fold(0.0, f64::max);
                hi / lo - 1.0
            })
        })
        .reduce(f64::max);
    let summary = StabilitySummary {
        members: st.members,
        modes: st.modes,
        amplitudes,
        min: range.map(|r| r.0),
        max: range.map(|r| r.1),
        fitted_upper: range.map(|r| r.1),
        fitted_lower: range.map(|r| r.0),
        max_amplitude_change,
    };
    w.json("summary.json", "cbrec.stability_summary", &summary)
}

#[derive(Serialize)]
struct CarlemanRow {
    set: &'static str,
    id: usize,
    s: f64,
    lambda: f64,
    /// Sides are stored as `value · e^{−log_scale}`.
    lhs: f64,
    rhs: f64,
    log_scale: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct CarlemanSummary {
    lambda: f64,
    alpha: f64,
    a: f64,
    d: f64,
    s_values: Vec<f64>,
    max_ratio_fit: Vec<Option<f64>>,
    max_ratio_validation: Vec<Option<f64>>,
    s0: Option<f64>,
    /// Largest fitted ratio for `s ≥ s₀`.
    fitted_c: Option<f64>,
    validation_max: Option<f64>,
    validation_within_bound: Option<bool>,
}

fn maxima(sweep: &[Vec<InequalityTerms>]) -> Vec<Option<f64>> {
    sweep.iter().map(|terms| max_ratio(terms)).collect()
}

/// `ratios.csv` (set, id, s, λ, LHS, RHS, log scale, ratio) and `summary.json`.
pub fn carleman(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let grid = cfg.grid()?;
    let base = cfg.carleman_params(&grid);
    let cc = &cfg.carleman_check;
    let s_values = cc.s_values();
    let q = cc.lower_order();
    let d = cfg.physics.d;
    let fit = test_ensemble(cc.members, grid.horizon(), cfg.seed);
    let val = test_ensemble(cc.members, grid.horizon(), cfg.seed.wrapping_add(1));
    let fit_sweep = carleman_sweep(&fit, &base, &s_values, d, &q, &grid)?;
    let val_sweep = carleman_sweep(&val, &base, &s_values, d, &q, &grid)?;

    let rows = [("fit", &fit_sweep), ("validation", &val_sweep)].into_iter().flat_map(|(set, sweep)| {
        sweep.iter().zip(&s_values).flat_map(move |(terms, &s)| {
            terms.iter().enumerate().map(move |(id, t)| CarlemanRow {
                set,
                id,
                s,
                lambda: base.lambda,
                lhs: t.lhs,
                rhs: t.rhs,
                log_scale: t.log_scale,
                ratio: t.ratio,
            })
        })
    });
    w.csv("ratios.csv", rows)?;

    let max_fit = maxima(&fit_sweep);
    let max_val = maxima(&val_sweep);
    let dense: Vec<f64> = max_fit.iter().map(|m| m.unwrap_or(f64::NAN)).collect();
    let s0_index = estimate_s0_index(&dense, cc.growth_tol);
    let tail_max = |m: &[Option<f64>], k: usize| m[k..].iter().flatten().cloned().reduce(f64::max);
    let fitted_c = s0_index.and_then(|k| tail_max(&max_fit, k));
    let validation_max = s0_index.and_then(|k| tail_max(&max_val, k));
    let summary = CarlemanSummary {
        lambda: base.lambda,
        alpha: base.alpha,
        a: base.a,
        d,
        s_values: s_values.clone(),
        max_ratio_fit: max_fit,
        max_ratio_validation: max_val,
        s0: s0_index.map(|k| s_values[k]),
        fitted_c,
        validation_max,
        validation_within_bound: fitted_c.zip(validation_max).map(|(c, v)| v <= 1.5 * c),
    };
    w.json("summary.json", "cbrec.carleman_summary", &summary)
}

#[derive(Serialize)]
struct GeometryRow {
    index: usize,
    x: f64,
    y: f64,
    normal_x: f64,
    normal_y: f64,
    mu: f64,
    psi: f64,
    dpsi_dnu: f64,
    gamma_star: bool,
}

#[derive(Serialize)]
struct GeometrySummary<'a> {
    body: &'a ConvexBody,
    samples: usize,
    in_gamma_star: usize,
}

/// `boundary.csv` and `summary.json`.
pub fn geometry(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let body = &cfg.geometry.body;
    let samples = cfg.geometry.samples();
    let flags = classify_gamma_star(&samples, body);
    let rows = samples.iter().zip(&flags).enumerate().map(|(index, (s, &gamma_star))| GeometryRow {
        index,
        x: s.point[0],
        y: s.point[1],
        normal_x: s.normal[0],
        normal_y: s.normal[1],
        mu: minkowski_mu(&s.point, body),
        psi: psi(&s.point, body),
        dpsi_dnu: normal_derivative_psi(s, body),
        gamma_star,
    });
    w.csv("boundary.csv", rows)?;
    let summary = GeometrySummary { body, samples: samples.len(), in_gamma_star: flags.iter().filter(|f| **f).count() };
    w.json("summary.json", "cbrec.geometry_summary", &summary)
}
