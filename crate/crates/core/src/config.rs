//! Run configuration: a TOML file whose field names follow the symbols of
//! the model (`d`, `p`, `p_gamma`, `p1`, `s`, `lambda`, `alpha`, `a`, `m`, `r0`).

use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::carleman::LowerOrder;
use crate::cbrec::{Setup, UpdateRule};
use crate::error::{Error, Result};
use crate::forward::SourceData;
use crate::functional::{CgOptions, Preconditioner};
use crate::geometry::{circle_samples, ellipse_samples, BoundarySample, ConvexBody};
use crate::grid::{Grid1D, Potentials};
use crate::stability::ForwardProblem;
use crate::weights::{CarlemanParams, DEFAULT_ALPHA_MARGIN};

/// A real profile on `[0, ℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `amplitude · sin(frequency·πx/ℓ) + offset`.
    Sine {
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
    /// `amplitude · cos(frequency·πx/ℓ) + offset`.
    Cosine {
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
    Linear {
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `tanh(κ(ℓ − x)) / tanh(κℓ)`.
    Tanh {
        kappa: f64,
    },
    /// Nodal values `x_0 … x_nx`.
    Values {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: 0.0 }
    }

    pub fn sample(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        let l = grid.length();
        let pi = std::f64::consts::PI;
        let xs = grid.xs();
        let out = match self {
            Profile::Constant { value } => vec![*value; xs.len()],
            Profile::Sine { amplitude, offset, frequency } => {
                xs.iter().map(|x| amplitude * (frequency * pi * x / l).sin() + offset).collect()
            }
            Profile::Cosine { amplitude, offset, frequency } => {
                xs.iter().map(|x| amplitude * (frequency * pi * x / l).cos() + offset).collect()
            }
            Profile::Linear { slope, offset } => xs.iter().map(|x| slope * x + offset).collect(),
            Profile::Tanh { kappa } => xs.iter().map(|x| (kappa * (l - x)).tanh() / (kappa * l).tanh()).collect(),
            Profile::Values { values } => {
                if values.len() != xs.len() {
                    return Err(Error::Shape {
                        what: "profile values".into(),
                        expected: xs.len(),
                        found: values.len(),
                    });
                }
                values.clone()
            }
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    #[serde(default = "one")]
    pub length: f64,
    pub nt_half: usize,
    /// `T`.
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub d: f64,
    /// Known (or true) interior potential. Required by `forward` and
    /// `stability`; optional for reconstruction from a measurement file.
    pub p: Option<Profile>,
    pub p_gamma: Option<f64>,
    #[serde(default = "Profile::zero")]
    pub p1: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub y0: Profile,
    pub y_gamma0: f64,
}

/// `g(x,t) = G(x)e^{iωt}`, `g_Γ(t) = b·e^{iωt}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sources {
    #[default]
    Zero,
    Harmonic {
        spatial: Profile,
        #[serde(default)]
        boundary: f64,
        #[serde(default)]
        omega: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Carleman {
    pub s: f64,
    pub lambda: f64,
    pub a: f64,
    /// Explicit `α`; otherwise `alpha_margin · max e^{λψ}`.
    pub alpha: Option<f64>,
    pub alpha_margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Algorithm {
    pub m: f64,
    pub r0: f64,
    pub max_iterations: usize,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
    pub epsilon: f64,
    pub stop_tol: f64,
    pub update: UpdateRule,
    pub preconditioner: Preconditioner,
}

impl Default for Algorithm {
    fn default() -> Self {
        Self {
            m: 2.0,
            r0: 0.01,
            max_iterations: 30,
            cg_tol: 1e-8,
            cg_max_iter: None,
            epsilon: 0.0,
            stop_tol: 1e-6,
            update: UpdateRule::Trace,
            preconditioner: Preconditioner::BlockJacobi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    /// CSV with columns `t,re,im`; relative paths resolve against the
    /// directory of the configuration file.
    pub path: Option<PathBuf>,
    /// Relative noise level of synthesized data.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub members: usize,
    pub modes: usize,
    pub amplitudes: Vec<f64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { members: 20, modes: 4, amplitudes: vec![1e-2, 1e-1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanCheck {
    pub members: usize,
    /// `s_k = s_start · 2^k`, `k < s_count`.
    pub s_start: f64,
    pub s_count: usize,
    /// Relative growth allowed past `s₀`.
    pub growth_tol: f64,
    pub q0: f64,
    pub q1: f64,
    pub q_gamma0: f64,
}

impl Default for CarlemanCheck {
    fn default() -> Self {
        Self { members: 20, s_start: 0.25, s_count: 10, growth_tol: 0.1, q0: 0.0, q1: 0.0, q_gamma0: 0.0 }
    }
}

impl CarlemanCheck {
    pub fn s_values(&self) -> Vec<f64> {
        (0..self.s_count).map(|k| self.s_start * 2f64.powi(k as i32)).collect()
    }

    pub fn lower_order(&self) -> LowerOrder {
        LowerOrder { q0: self.q0, q1: self.q1, q_gamma0: self.q_gamma0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryPiece {
    /// Centred circle; `outward` picks the normal direction away from the centre.
    Circle { radius: f64, samples: usize, outward: bool },
    /// Ellipse with normals into the ellipse when `into_body` is set.
    Ellipse { r1: f64, r2: f64, samples: usize, into_body: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub body: ConvexBody,
    pub boundary: Vec<BoundaryPiece>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            body: ConvexBody::Ball { radius: 1.0, dim: 2 },
            boundary: vec![
                BoundaryPiece::Circle { radius: 2.0, samples: 16, outward: true },
                BoundaryPiece::Circle { radius: 0.5, samples: 16, outward: false },
            ],
        }
    }
}

impl GeometryConfig {
    pub fn samples(&self) -> Vec<BoundarySample> {
        self.boundary
            .iter()
            .flat_map(|piece| match *piece {
                BoundaryPiece::Circle { radius, samples, outward } => circle_samples(radius, samples, outward),
                BoundaryPiece::Ellipse { r1, r2, samples, into_body } => ellipse_samples(r1, r2, samples, into_body),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub physics: Physics,
    pub initial: Initial,
    #[serde(default)]
    pub sources: Sources,
    pub carleman: Carleman,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub carleman_check: CarlemanCheck,
    #[serde(default)]
    pub geometry: GeometryConfig,
}

/// What the configuration will be used for; each purpose adds checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Forward,
    Reconstruct,
    Stability,
    Carleman,
    Geometry,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(rel), Some(dir)) = (cfg.measurement.path.clone(), path.parent()) {
            if rel.is_relative() {
                cfg.measurement.path = Some(dir.join(rel));
            }
        }
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn grid(&self) -> Result<Grid1D> {
        let g = &self.grid;
        Grid1D::new(g.nx, g.length, g.nt_half, g.horizon)
    }

    pub fn carleman_params(&self, grid: &Grid1D) -> CarlemanParams {
        let c = &self.carleman;
        let mut params = CarlemanParams::with_default_alpha(c.s, c.lambda, c.a, grid);
        match (c.alpha, c.alpha_margin) {
            (Some(alpha), _) => params.alpha = alpha,
            (None, Some(margin)) => params.alpha *= margin / DEFAULT_ALPHA_MARGIN,
            (None, None) => {}
        }
        params
    }

    pub fn y0(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        self.initial.y0.sample(grid)
    }

    pub fn p1(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        self.physics.p1.sample(grid)
    }

    /// The configured potentials, when both `p` and `p_gamma` are present.
    pub fn potentials(&self, grid: &Grid1D) -> Result<Option<Potentials>> {
        match (&self.physics.p, self.physics.p_gamma) {
            (Some(p), Some(pg)) => Ok(Some(Potentials::new(p.sample(grid)?, pg, self.p1(grid)?)?)),
            _ => Ok(None),
        }
    }

    pub fn sources(&self, grid: &Grid1D) -> Result<SourceData> {
        match &self.sources {
            Sources::Zero => Ok(SourceData::zero(grid)),
            Sources::Harmonic { spatial, boundary, omega } => {
                let shape = spatial.sample(grid)?;
                let ts = grid.forward_ts();
                let phase: Vec<Complex64> = ts.iter().map(|t| Complex64::from_polar(1.0, omega * t)).collect();
                let g = Array2::from_shape_fn((ts.len(), grid.n_space()), |(j, i)| phase[j] * shape[i]);
                let g_gamma = phase.iter().map(|e| e * boundary).collect();
                SourceData::new(grid, g, g_gamma)
            }
        }
    }

    pub fn forward_problem(&self) -> Result<ForwardProblem> {
        let grid = self.grid()?;
        Ok(ForwardProblem {
            grid,
            d: self.physics.d,
            sources: self.sources(&grid)?,
            y0: self.y0(&grid)?.into_iter().map(Complex64::from).collect(),
            y_gamma0: Complex64::from(self.initial.y_gamma0),
        })
    }

    pub fn cg_options(&self) -> CgOptions {
        CgOptions {
            tol: self.algorithm.cg_tol,
            max_iter: self.algorithm.cg_max_iter,
            track_j: false,
            preconditioner: self.algorithm.preconditioner,
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        let grid = self.grid()?;
        let alg = &self.algorithm;
        Ok(Setup {
            grid,
            d: self.physics.d,
            p1: self.p1(&grid)?,
            sources: self.sources(&grid)?,
            y0: self.y0(&grid)?,
            y_gamma0: self.initial.y_gamma0,
            params: self.carleman_params(&grid),
            m: alg.m,
            r0: alg.r0,
            epsilon: alg.epsilon,
            cg: self.cg_options(),
            max_iterations: alg.max_iterations,
            stop_tol: alg.stop_tol,
            update: alg.update,
        })
    }
}

/// Every violated invariant, each naming its field. Empty when the
/// configuration is usable for `purpose`.
pub fn validate_config(cfg: &RunConfig, purpose: Purpose) -> Vec<String> {
    let mut out = Vec::new();
    let grid = match cfg.grid() {
        Ok(g) => Some(g),
        Err(e) => {
            out.push(format!("grid: {e}"));
            None
        }
    };
    if !(cfg.physics.d > 0.0) {
        out.push("d must be positive".into());
    }
    let Some(grid) = grid else { return out };

    let mut sample = |name: &str, profile: &Profile| match profile.sample(&grid) {
        Ok(v) if v.iter().all(|x| x.is_finite()) => Some(v),
        Ok(_) => {
            out.push(format!("{name}: non-finite value"));
            None
        }
        Err(e) => {
            out.push(format!("{name}: {e}"));
            None
        }
    };
    let y0 = sample("y0", &cfg.initial.y0);
    sample("p1", &cfg.physics.p1);
    let p = cfg.physics.p.as_ref().and_then(|p| sample("p", p));
    if let Sources::Harmonic { spatial, .. } = &cfg.sources {
        sample("sources.spatial", spatial);
    }
    if !cfg.initial.y_gamma0.is_finite() {
        out.push("y_gamma0 must be finite".into());
    }

    let needs_truth = match purpose {
        Purpose::Forward | Purpose::Stability => true,
        Purpose::Reconstruct => cfg.measurement.path.is_none(),
        Purpose::Carleman | Purpose::Geometry => false,
    };
    if needs_truth && (cfg.physics.p.is_none() || cfg.physics.p_gamma.is_none()) {
        out.push("p and p_gamma are required unless a measurement file is given".into());
    }
    if cfg.physics.p.is_some() != cfg.physics.p_gamma.is_some() {
        out.push("p and p_gamma must be given together".into());
    }
    if let Some(pg) = cfg.physics.p_gamma {
        if !pg.is_finite() {
            out.push("p_gamma must be finite".into());
        }
    }

    let c = &cfg.carleman;
    if c.alpha.is_some() && c.alpha_margin.is_some() {
        out.push("carleman: give alpha or alpha_margin, not both".into());
    }
    if matches!(purpose, Purpose::Reconstruct | Purpose::Carleman) {
        out.extend(cfg.carleman_params(&grid).violations(&grid).into_iter().map(|v| format!("carleman: {v}")));
    }

    let alg = &cfg.algorithm;
    if purpose == Purpose::Reconstruct {
        if !(alg.r0 > 0.0) {
            out.push("r0 must be positive".into());
        }
        if !(alg.m > 0.0) {
            out.push("m must be positive".into());
        }
        if alg.max_iterations == 0 {
            out.push("max_iterations must be at least 1".into());
        }
        if !(alg.cg_tol > 0.0) {
            out.push("cg_tol must be positive".into());
        }
        if !(alg.epsilon >= 0.0) {
            out.push("epsilon must be non-negative".into());
        }
        if let Some(y0) = &y0 {
            let low: Vec<usize> = (0..grid.nx()).filter(|&i| !(y0[i].abs() >= alg.r0)).collect();
            if let Some(&first) = low.first() {
                out.push(format!(
                    "y0: |y0| < r0 = {} at {} node(s), first at x = {}",
                    alg.r0,
                    low.len(),
                    grid.x(first)
                ));
            }
        }
        if !(cfg.initial.y_gamma0.abs() >= alg.r0) {
            out.push(format!("y_gamma0: |y_gamma0| < r0 = {}", alg.r0));
        }
    }
    if !(cfg.measurement.sigma >= 0.0) {
        out.push("measurement.sigma must be non-negative".into());
    }

    if purpose == Purpose::Stability {
        let st = &cfg.stability;
        if st.members == 0 || st.modes == 0 {
            out.push("stability: members and modes must be positive".into());
        }
        if st.amplitudes.is_empty() || st.amplitudes.iter().any(|a| !(*a > 0.0)) {
            out.push("stability: amplitudes must be positive and non-empty".into());
        }
        if let (Some(p), Some(pg)) = (&p, cfg.physics.p_gamma) {
            if p.iter().any(|v| v.abs() > alg.m) || pg.abs() > alg.m {
                out.push(format!("stability: baseline potentials exceed m = {}", alg.m));
            }
        }
    }
    if purpose == Purpose::Carleman {
        let cc = &cfg.carleman_check;
        if cc.members == 0 || cc.s_count < 2 || !(cc.s_start > 0.0) {
            out.push("carleman_check: needs members > 0, s_count >= 2 and s_start > 0".into());
        }
    }
    if purpose == Purpose::Geometry {
        let geo = &cfg.geometry;
        if let Err(e) = geo.body.validate() {
            out.push(format!("geometry: {e}"));
        } else if geo.body.dim() != 2 {
            out.push("geometry: boundary sampling is two-dimensional".into());
        }
        if geo.boundary.is_empty() {
            out.push("geometry: no boundary pieces".into());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[grid]
nx = 20
length = 1.0
nt_half = 20
horizon = 2.0

[physics]
d = 1.0
p = { kind = "sine", amplitude = 0.5, offset = 0.3 }
p_gamma = 0.4

[initial]
y0 = { kind = "constant", value = 1.0 }
y_gamma0 = 1.0

[carleman]
s = 2.0
lambda = 1.0
a = 0.5

[algorithm]
r0 = 0.5
"#;

    fn sample() -> RunConfig {
        RunConfig::from_toml(SAMPLE).unwrap()
    }

    #[test]
    fn parses_and_round_trips() {
        let cfg = sample();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.algorithm.max_iterations, 30);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn valid_sample_has_no_violations() {
        let cfg = sample();
        for purpose in
            [Purpose::Forward, Purpose::Reconstruct, Purpose::Stability, Purpose::Carleman, Purpose::Geometry]
        {
            assert!(validate_config(&cfg, purpose).is_empty(), "{purpose:?}");
        }
    }

    #[test]
    fn zero_d_is_reported() {
        let mut cfg = sample();
        cfg.physics.d = 0.0;
        assert!(validate_config(&cfg, Purpose::Forward).contains(&"d must be positive".to_string()));
    }

    #[test]
    fn linear_y0_violates_positivity_near_zero() {
        let mut cfg = sample();
        cfg.initial.y0 = Profile::Linear { slope: 1.0, offset: 0.0 };
        cfg.algorithm.r0 = 0.1;
        let v = validate_config(&cfg, Purpose::Reconstruct);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("first at x = 0") && v[0].contains("2 node"), "{}", v[0]);
        assert!(validate_config(&cfg, Purpose::Forward).is_empty());
    }

    #[test]
    fn unknown_field_rejected() {
        let text = SAMPLE.replace("seed = 7", "seed = 7\nsigma = 1");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn profiles_sample() {
        let grid = Grid1D::new(10, 2.0, 10, 1.0).unwrap();
        let t = Profile::Tanh { kappa: 3.0 }.sample(&grid).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-15 && t[10].abs() < 1e-15);
        let c = Profile::Cosine { amplitude: 1.0, offset: 0.0, frequency: 0.5 }.sample(&grid).unwrap();
        assert!((c[5] - (std::f64::consts::PI / 4.0).cos()).abs() < 1e-15);
        assert!(Profile::Values { values: vec![0.0; 3] }.sample(&grid).is_err());
    }

    #[test]
    fn alpha_choices() {
        let mut cfg = sample();
        let grid = cfg.grid().unwrap();
        let base = cfg.carleman_params(&grid).alpha;
        cfg.carleman.alpha_margin = Some(2.02);
        assert!((cfg.carleman_params(&grid).alpha - 2.0 * base).abs() < 1e-12);
        cfg.carleman.alpha = Some(50.0);
        assert_eq!(cfg.carleman_params(&grid).alpha, 50.0);
        assert_eq!(validate_config(&cfg, Purpose::Reconstruct).len(), 1);
    }

    #[test]
    fn harmonic_sources() {
        let mut cfg = sample();
        cfg.sources = Sources::Harmonic { spatial: Profile::Constant { value: 2.0 }, boundary: 1.0, omega: 1.0 };
        let grid = cfg.grid().unwrap();
        let src = cfg.sources(&grid).unwrap();
        let t = grid.forward_ts()[3];
        assert!((src.g[[3, 4]] - 2.0 * Complex64::from_polar(1.0, t)).norm() < 1e-14);
        assert!((src.g_gamma[3] - Complex64::from_polar(1.0, t)).norm() < 1e-14);
    }
}
