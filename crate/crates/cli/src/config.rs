//! Flat TOML run configuration.

use std::path::Path;

use cavfield_core::fem::{CoefficientField, SourceField};
use cavfield_core::geometry::{build_structured_mesh, mark_regions, Rect, RegionSpec, Side};
use cavfield_core::objective::default_gamma;
use cavfield_core::optimizer::{alpha_from_noise, ContinuationSchedule, OptimizerOptions};
use cavfield_core::synth::catalog_case;
use cavfield_core::{CavityShape, Discretization, Error, NewtonOptions, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Conductivity tensor choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientKind {
    Identity,
    Constant,
    /// `A(x, y) = [[1 + ½ sin(πx) sin(πy), ¼ sin(πx)], [¼ sin(πx), 1]]`, eigenvalues in [0.6, 1.8].
    Anisotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "unit_rect")]
    pub domain: [f64; 4],
    #[serde(default = "default_omega1")]
    pub omega1: [f64; 4],
    #[serde(default = "default_omega2")]
    pub omega2: [f64; 4],
    #[serde(default = "default_side")]
    pub sigma_side: Side,
    #[serde(default = "default_interval")]
    pub sigma_interval: [f64; 2],

    #[serde(default = "default_coefficient")]
    pub coefficient: CoefficientKind,
    /// `[a11, a12, a22]` for the constant coefficient.
    #[serde(default = "identity_matrix")]
    pub a_matrix: [f64; 3],
    /// Ellipticity bounds; default to 1 and 1, or 0.6 and 1.8 for the anisotropic field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_big_lambda: Option<f64>,

    pub f_value: f64,
    /// Defaults to the Ω₂ rectangle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_support: Option<[f64; 4]>,

    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Defaults to `[4/nx, 2/nx]` scaled by the domain width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// Overrides `c·η²` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_alpha_c")]
    pub alpha_c: f64,
    #[serde(default = "default_alpha_floor")]
    pub alpha_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,

    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iters")]
    pub newton_max_iters: usize,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iter")]
    pub cg_max_iter: usize,

    #[serde(default = "default_opt_max_iters")]
    pub opt_max_iters: usize,
    #[serde(default = "default_s0")]
    pub opt_s0: f64,
    #[serde(default = "default_armijo")]
    pub opt_armijo_c: f64,
    #[serde(default = "default_backtrack")]
    pub opt_backtrack: f64,
    #[serde(default = "default_tol_j")]
    pub opt_tol_j: f64,
    #[serde(default = "default_tol_g")]
    pub opt_tol_g: f64,
    #[serde(default = "default_patience")]
    pub opt_patience: usize,

    /// Catalog case used by `forward`, `synth`, `sweep` and as truth for `invert` metrics.
    #[serde(default = "default_case")]
    pub case: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Synthesis mesh is `synth_factor` times finer.
    #[serde(default = "default_synth_factor")]
    pub synth_factor: usize,
    #[serde(default = "default_bound_slack")]
    pub bound_slack: f64,
    #[serde(default = "default_trials")]
    pub certificate_trials: usize,
    #[serde(default = "default_audit_dirs")]
    pub audit_directions: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn unit_rect() -> [f64; 4] {
    [0.0, 0.0, 1.0, 1.0]
}
fn default_omega1() -> [f64; 4] {
    [0.0, 0.0, 1.0, 0.2]
}
fn default_omega2() -> [f64; 4] {
    [0.0, 0.0, 1.0, 0.1]
}
fn default_side() -> Side {
    Side::Bottom
}
fn default_interval() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_coefficient() -> CoefficientKind {
    CoefficientKind::Identity
}
fn identity_matrix() -> [f64; 3] {
    [1.0, 0.0, 1.0]
}
fn default_delta() -> f64 {
    1e-3
}
fn default_eta() -> f64 {
    0.01
}
fn default_alpha_c() -> f64 {
    10.0
}
fn default_alpha_floor() -> f64 {
    1e-6
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max_iters() -> usize {
    50
}
fn default_cg_tol() -> f64 {
    1e-12
}
fn default_cg_max_iter() -> usize {
    20_000
}
fn default_opt_max_iters() -> usize {
    400
}
fn default_s0() -> f64 {
    1.0
}
fn default_armijo() -> f64 {
    1e-4
}
fn default_backtrack() -> f64 {
    0.5
}
fn default_tol_j() -> f64 {
    1e-8
}
fn default_tol_g() -> f64 {
    1e-12
}
fn default_patience() -> usize {
    5
}
fn default_case() -> String {
    "disk".into()
}
fn default_seed() -> u64 {
    1
}
fn default_synth_factor() -> usize {
    2
}
fn default_bound_slack() -> f64 {
    1e-8
}
fn default_trials() -> usize {
    100
}
fn default_audit_dirs() -> usize {
    10
}
fn default_out_dir() -> String {
    "out".into()
}

fn rect(r: [f64; 4]) -> Result<Rect<f64>> {
    Rect::new(r[0], r[1], r[2], r[3])
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {x}")))
    }
}

/// Mesh, regions, coefficients and source built from a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub disc: Discretization<f64>,
    pub f: SourceField<f64>,
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML emission.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidArgument("nx and ny must be at least 2".into()));
        }
        for (name, v) in [
            ("newton_tol", self.newton_tol),
            ("cg_tol", self.cg_tol),
            ("opt_tol_j", self.opt_tol_j),
            ("opt_tol_g", self.opt_tol_g),
            ("opt_s0", self.opt_s0),
            ("opt_armijo_c", self.opt_armijo_c),
            ("bound_slack", self.bound_slack),
            ("alpha_c", self.alpha_c),
            ("alpha_floor", self.alpha_floor),
        ] {
            positive(name, v)?;
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument("eta must be nonnegative".into()));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument("alpha must be nonnegative".into()));
            }
        }
        if let Some(g) = self.gamma {
            positive("gamma", g)?;
        }
        if !(self.f_value >= 0.0 && self.f_value.is_finite()) {
            return Err(Error::InvalidArgument("f_value must be nonnegative".into()));
        }
        if self.synth_factor < 2 {
            return Err(Error::InvalidArgument("synth_factor must be at least 2".into()));
        }
        if self.newton_max_iters == 0 || self.cg_max_iter == 0 || self.certificate_trials == 0 || self.audit_directions == 0 {
            return Err(Error::InvalidArgument("iteration counts must be positive".into()));
        }
        self.optimizer().validate()?;
        self.newton().validate()?;
        let domain = rect(self.domain)?;
        for (name, r) in [("omega1", self.omega1), ("omega2", self.omega2)] {
            if !domain.contains_rect(&rect(r)?, 1e-12) {
                return Err(Error::InconsistentRegion(format!("{name} is not inside the domain")));
            }
        }
        let omega2 = rect(self.omega2)?;
        if let Some(s) = self.f_support {
            if !omega2.contains_rect(&rect(s)?, 1e-12) {
                return Err(Error::InvalidArgument("f_support is not inside omega2".into()));
            }
        }
        match self.coefficient {
            CoefficientKind::Identity => {}
            CoefficientKind::Constant | CoefficientKind::Anisotropic => {
                let (lo, hi) = self.ellipticity();
                if !(lo > 0.0 && lo <= hi) {
                    return Err(Error::InvalidArgument(format!(
                        "ellipticity constants must satisfy 0 < a_lambda <= a_big_lambda, got {lo} and {hi}"
                    )));
                }
            }
        }
        catalog_case::<f64>(&self.case)?;
        if let Some(eps) = &self.epsilons {
            self.schedule_with(eps.clone())?.validate(0.0)?;
        }
        Ok(())
    }

    pub fn newton(&self) -> NewtonOptions<f64> {
        NewtonOptions {
            tol_residual: self.newton_tol,
            max_iters: self.newton_max_iters,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            ..NewtonOptions::default()
        }
    }

    pub fn optimizer(&self) -> OptimizerOptions<f64> {
        OptimizerOptions {
            max_iters: self.opt_max_iters,
            armijo_c: self.opt_armijo_c,
            backtrack_factor: self.opt_backtrack,
            s0: self.opt_s0,
            tol_j: self.opt_tol_j,
            tol_g: self.opt_tol_g,
            patience: self.opt_patience,
            ..OptimizerOptions::default()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(default_gamma)
    }

    pub fn alpha(&self) -> Result<f64> {
        match self.alpha {
            Some(a) => Ok(a),
            None => alpha_from_noise(self.eta, self.alpha_c, self.alpha_floor),
        }
    }

    /// Cell side along x.
    /// `(λ, Λ)` with the per-kind defaults filled in.
    pub fn ellipticity(&self) -> (f64, f64) {
        let (lo, hi) = match self.coefficient {
            CoefficientKind::Anisotropic => (0.6, 1.8),
            _ => (1.0, 1.0),
        };
        (self.a_lambda.unwrap_or(lo), self.a_big_lambda.unwrap_or(hi))
    }

    pub fn cell_size(&self) -> f64 {
        (self.domain[2] - self.domain[0]) / self.nx as f64
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilons.clone().unwrap_or_else(|| {
            let h = self.cell_size();
            vec![4.0 * h, 2.0 * h]
        })
    }

    pub fn schedule(&self) -> Result<ContinuationSchedule<f64>> {
        self.schedule_with(self.epsilons())
    }

    pub fn schedule_with(&self, epsilons: Vec<f64>) -> Result<ContinuationSchedule<f64>> {
        Ok(ContinuationSchedule {
            epsilons,
            delta: self.delta,
            alpha: self.alpha()?,
            gamma: self.gamma(),
        })
    }

    pub fn shape(&self) -> Result<CavityShape<f64>> {
        catalog_case(&self.case)
    }

    fn region_spec(&self) -> Result<RegionSpec<f64>> {
        Ok(RegionSpec {
            omega1: rect(self.omega1)?,
            omega2: rect(self.omega2)?,
            sigma_side: self.sigma_side,
            sigma_interval: self.sigma_interval,
        })
    }

    /// Reconstruction mesh (`refine = 1`) or a uniformly refined copy.
    pub fn setup(&self, refine: usize) -> Result<Setup> {
        let mesh = build_structured_mesh(self.nx * refine, self.ny * refine, rect(self.domain)?)?;
        let labels = mark_regions(&mesh, &self.region_spec()?)?;
        let (lambda, big_lambda) = self.ellipticity();
        let a = match self.coefficient {
            CoefficientKind::Identity => CoefficientField::identity(&mesh),
            CoefficientKind::Constant => CoefficientField::constant(&mesh, self.a_matrix, lambda, big_lambda)?,
            CoefficientKind::Anisotropic => {
                let pi = std::f64::consts::PI;
                CoefficientField::from_fn(
                    &mesh,
                    |p| {
                        let (sx, sy) = ((pi * p[0]).sin(), (pi * p[1]).sin());
                        [1.0 + 0.5 * sx * sy, 0.25 * sx, 1.0]
                    },
                    lambda,
                    big_lambda,
                )?
            }
        };
        let support = match self.f_support {
            Some(s) => rect(s)?,
            None => labels.omega2_rect,
        };
        let f = SourceField::plateau(&mesh, &labels, self.f_value, support)?;
        let disc = Discretization::new(mesh, labels, a)?;
        Ok(Setup { disc, f })
    }
}
