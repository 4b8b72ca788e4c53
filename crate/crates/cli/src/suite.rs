//! Invariant and certificate checks run by `cavfield check`.

use cavfield_core::adjoint::gradient_fd_audit;
use cavfield_core::fem::SourceField;
use cavfield_core::forward::{check_state_bounds, cut_cell_weights, solve_hole_limit, solve_weighted};
use cavfield_core::geometry::{rasterize_cavity, Rect};
use cavfield_core::metrics::{
    distinguishability_study, disk_family, hausdorff, operator_certificates, symmetric_difference_area,
    trace_stability_study, tv_perimeter, SetOnMesh,
};
use cavfield_core::objective::ObjectiveParams;
use cavfield_core::optimizer::delta_sweep;
use cavfield_core::synth::catalog_cases;
use cavfield_core::{solve_cavity_reference, solve_state, CavityShape, ReducedFunctional, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Setup, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub details: Value,
}

impl CheckResult {
    fn new(name: &str, pass: bool, details: Value) -> Self {
        Self {
            name: name.into(),
            pass,
            details,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config_hash: String,
    pub mesh_id: String,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// Runs every check on the reconstruction mesh of `cfg`.
pub fn run_suite(cfg: &SolverConfig) -> Result<SuiteReport> {
    let setup = cfg.setup(1)?;
    let checks = vec![
        constant_solution(cfg, &setup)?,
        maximum_principle(cfg, &setup)?,
        apriori_bound(cfg, &setup, 20)?,
        operator_certificate(cfg, &setup)?,
        gradient_audit(cfg, &setup)?,
        delta_sweep_check(cfg, &setup)?,
        trace_stability(cfg, &setup)?,
        distinguishability(cfg, &setup)?,
        metric_invariants(&setup)?,
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        config_hash: cfg.hash(),
        mesh_id: setup.disc.mesh().id().to_string(),
        checks,
        pass,
    })
}

/// f ≡ 8, no cavity: u ≡ 2.
pub fn constant_solution(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let f = SourceField::constant(disc.mesh(), 8.0);
    let v = vec![1.0; disc.n()];
    let s = solve_state(disc, &v, cfg.delta, &f, &cfg.newton())?;
    let err = s.u.iter().map(|u| (u - 2.0).abs()).fold(0.0, f64::max);
    Ok(CheckResult::new(
        "constant_solution",
        err <= 1e-10,
        json!({ "max_error": err, "tolerance": 1e-10, "newton_iters": s.newton_iters }),
    ))
}

/// Pointwise cube-root bounds of reference solves over the catalog.
pub fn maximum_principle(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let mut rows = Vec::new();
    let mut pass = true;
    for case in catalog_cases::<f64>()? {
        let w = cut_cell_weights(disc.mesh(), &case.shape);
        let s = solve_cavity_reference(disc, &case.shape, &setup.f, &cfg.newton())?;
        let r = check_state_bounds(disc, &w, &s, &setup.f, cfg.bound_slack);
        let pointwise = r.checks.iter().filter(|c| c.name.starts_with("pointwise")).all(|c| c.pass);
        pass &= pointwise;
        rows.push(json!({ "case": case.name, "nonobtuse": r.nonobtuse, "pass": pointwise, "checks": r.checks }));
    }
    Ok(CheckResult::new("maximum_principle", pass, Value::Array(rows)))
}

/// A-priori H¹ bound for random plateau sources, cycling through the catalog cavities.
pub fn apriori_bound(cfg: &SolverConfig, setup: &Setup, samples: usize) -> Result<CheckResult> {
    let disc = &setup.disc;
    let cases = catalog_cases::<f64>()?;
    let o2 = disc.labels().omega2_rect;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa5a5);
    let mut rows = Vec::new();
    let mut pass = true;
    for k in 0..samples {
        let value = 10f64.powf(rng.random_range(-1.0..1.0));
        let (xa, xb) = (rng.random_range(o2.x0..o2.x1), rng.random_range(o2.x0..o2.x1));
        let (ya, yb) = (rng.random_range(o2.y0..o2.y1), rng.random_range(o2.y0..o2.y1));
        let min_w = 0.05 * o2.width();
        let min_h = 0.05 * o2.height();
        let (x0, x1) = (xa.min(xb), xa.max(xb).max(xa.min(xb) + min_w).min(o2.x1));
        let (y0, y1) = (ya.min(yb), ya.max(yb).max(ya.min(yb) + min_h).min(o2.y1));
        let f = SourceField::plateau(disc.mesh(), disc.labels(), value, Rect::new(x0, y0, x1, y1)?)?;
        let case = &cases[k % cases.len()];
        let w = cut_cell_weights(disc.mesh(), &case.shape);
        let s = solve_weighted(disc, &w, &f, &cfg.newton(), None)?;
        let r = check_state_bounds(disc, &w, &s, &f, cfg.bound_slack);
        let c = r.checks.iter().find(|c| c.name == "apriori_h1").expect("a-priori check present");
        pass &= c.pass;
        rows.push(json!({ "case": case.name, "value": value, "support": [x0, y0, x1, y1], "h1": c.value, "bound": c.bound, "pass": c.pass }));
    }
    Ok(CheckResult::new("apriori_bound", pass, Value::Array(rows)))
}

/// Randomized certificates of the relaxed operator: without a cavity (monotonicity and coercivity)
/// and with the disk cavity (monotonicity; the reaction vanishes inside, so coercivity does not apply).
pub fn operator_certificate(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let disk = CavityShape::disk([0.5, 0.5], 0.2)?;
    let cavity = rasterize_cavity(disc.mesh(), disc.labels(), &disk)?;
    let full = operator_certificates(disc, &vec![1.0; disc.n()], cfg.delta, cfg.certificate_trials, cfg.seed)?;
    let with_cavity = operator_certificates(disc, cavity.values(), cfg.delta, cfg.certificate_trials, cfg.seed)?;
    let pass = full.pass && full.coercivity_min_slack.is_some() && with_cavity.monotonicity_pass;
    Ok(CheckResult::new("operator_certificates", pass, json!({ "no_cavity": full, "disk_cavity": with_cavity })))
}

/// Interior phase field used by the gradient audit.
pub fn audit_field(setup: &Setup) -> Vec<f64> {
    let disc = &setup.disc;
    disc.mesh()
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if disc.labels().is_frozen(k) {
                1.0
            } else {
                0.5 + 0.3 * (5.0 * p[0]).cos() * (4.0 * p[1]).sin()
            }
        })
        .collect()
}

/// Adjoint gradient against central differences of the reduced functional.
pub fn gradient_audit(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let shape = cfg.shape()?;
    let meas = solve_cavity_reference(disc, &shape, &setup.f, &cfg.newton())?.trace(disc);
    let params = ObjectiveParams {
        delta: cfg.delta,
        epsilon: cfg.epsilons()[0],
        alpha: cfg.alpha()?,
        gamma: cfg.gamma(),
    };
    let func = ReducedFunctional::new(disc, &setup.f, &meas, params, cfg.newton())?;
    let r = gradient_fd_audit(&func, &audit_field(setup), cfg.audit_directions, cfg.seed, 1e-4)?;
    Ok(CheckResult::new("gradient_audit", r.pass, serde_json::to_value(&r).expect("report serializes")))
}

/// Trace error of the relaxed solve against the hole limit for δ = 1e-2, 1e-3, 1e-4.
pub fn delta_sweep_check(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let disk = CavityShape::disk([0.5, 0.5], 0.2)?;
    let v = rasterize_cavity(disc.mesh(), disc.labels(), &disk)?;
    let reference = solve_hole_limit(disc, v.values(), &setup.f, &cfg.newton())?.trace(disc);
    let r = delta_sweep(disc, &setup.f, &v, &[1e-2, 1e-3, 1e-4], &reference, &cfg.newton())?;
    let pass = r.strictly_decreasing && r.end_ratio <= 0.5;
    Ok(CheckResult::new("delta_sweep", pass, serde_json::to_value(&r).expect("report serializes")))
}

/// Disks of radius 0.15 + 0.05/2ⁿ, n = 0..4, against radius 0.15.
pub fn trace_stability(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let limit = CavityShape::disk([0.5, 0.5], 0.15)?;
    let family = disk_family([0.5, 0.5], 0.15, 0.05, 5)?;
    let r = trace_stability_study(disc, &setup.f, &cfg.newton(), &limit, &family, 0.9)?;
    Ok(CheckResult::new("trace_stability", r.pass, serde_json::to_value(&r).expect("report serializes")))
}

/// Disks r = 0.15 and r = 0.25 at η = 0.
pub fn distinguishability(cfg: &SolverConfig, setup: &Setup) -> Result<CheckResult> {
    let disc = &setup.disc;
    let a = CavityShape::disk([0.5, 0.55], 0.15)?;
    let b = CavityShape::disk([0.5, 0.55], 0.25)?;
    let r = distinguishability_study(disc, &setup.f, &cfg.newton(), &a, &b, 0.0)?;
    let pass = r.separated && r.trace_gap > 1e-6;
    Ok(CheckResult::new("distinguishability", pass, serde_json::to_value(&r).expect("report serializes")))
}

/// Symmetry and triangle inequality of the set metrics, and complement invariance of the perimeter.
pub fn metric_invariants(setup: &Setup) -> Result<CheckResult> {
    let mesh = setup.disc.mesh();
    let sets: Vec<SetOnMesh> = catalog_cases::<f64>()?
        .iter()
        .map(|c| SetOnMesh::from_shape(mesh, &c.shape))
        .filter(|s| !s.is_empty())
        .collect();
    let mut worst_sym: f64 = 0.0;
    let mut worst_triangle: f64 = f64::NEG_INFINITY;
    let mut worst_complement: f64 = 0.0;
    for a in &sets {
        worst_complement = worst_complement.max((tv_perimeter(mesh, a) - tv_perimeter(mesh, &a.complement(mesh))).abs());
        for b in &sets {
            worst_sym = worst_sym
                .max((hausdorff(mesh, a, b) - hausdorff(mesh, b, a)).abs())
                .max((symmetric_difference_area(mesh, a, b) - symmetric_difference_area(mesh, b, a)).abs());
            for c in &sets {
                let excess = hausdorff(mesh, a, c) - hausdorff(mesh, a, b) - hausdorff(mesh, b, c);
                worst_triangle = worst_triangle.max(excess);
            }
        }
    }
    let pass = worst_sym == 0.0 && worst_triangle <= 1e-12 && worst_complement <= 1e-12;
    Ok(CheckResult::new(
        "metric_invariants",
        pass,
        json!({ "sets": sets.len(), "symmetry_defect": worst_sym, "triangle_excess": worst_triangle, "complement_defect": worst_complement }),
    ))
}
