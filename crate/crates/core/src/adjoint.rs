//! Adjoint state, reduced gradient and its finite-difference audit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{solve_spd_from, CellWeights, Discretization};
use crate::forward::{NewtonOptions, StateSolution};
use crate::objective::{gl_gradient, sigma_difference, ObjectiveParams, ReducedFunctional};
use crate::scalar::{dot, norm2, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution<T> {
    pub p: Vec<T>,
    /// Relative residual of the adjoint system.
    pub residual_norm: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    /// dJ/dv per node; zero on Ω₁ nodes.
    pub g: Vec<T>,
}

/// Solves `(K + J_r + τI) p = −M_Σ (u − u_meas)` at the converged state.
pub fn solve_adjoint<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    delta: T,
    state: &StateSolution<T>,
    meas: &[T],
    opts: &NewtonOptions<T>,
) -> Result<AdjointSolution<T>> {
    solve_adjoint_from(disc, v, delta, state, meas, opts, None)
}

/// As [`solve_adjoint`], starting CG from `p0` when given.
pub fn solve_adjoint_from<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    delta: T,
    state: &StateSolution<T>,
    meas: &[T],
    opts: &NewtonOptions<T>,
    p0: Option<&[T]>,
) -> Result<AdjointSolution<T>> {
    let n = disc.n();
    if state.u.len() != n || meas.len() != disc.labels().sigma_nodes.len() {
        return Err(Error::ShapeMismatch("adjoint inputs do not match the mesh".into()));
    }
    let w = CellWeights::relaxed(disc.mesh(), v, delta)?;
    let d = sigma_difference(disc, &state.u, meas);
    let rhs: Vec<T> = disc.sigma_mass().matvec(&d).into_iter().map(|x| -x).collect();
    if norm2(&rhs) == T::zero() {
        return Ok(AdjointSolution {
            p: vec![T::zero(); n],
            residual_norm: T::zero(),
        });
    }
    let k = disc.stiffness(&w.conductivity);
    let tau = opts.jacobian_shift * k.trace() / T::of(n);
    let mut jac = disc.reaction_jacobian(&w.reaction, &state.u);
    jac.add_scaled(T::one(), &k);
    jac.add_diagonal(tau);
    let sol = solve_spd_from(&jac, &rhs, p0.filter(|p| p.len() == n), opts.cg_tol, opts.cg_max_iter)?;
    Ok(AdjointSolution {
        p: sol.x,
        residual_norm: sol.relative_residual,
    })
}

/// Nodal gradient of the reduced functional.
///
/// Each cell contributes `(1/3)[(1 − δ)∫A∇u·∇p + Q(u³p)]` to its three nodes; the GL term adds
/// `αγ(2εK₁v + (1/ε)m(1 − 2v))`.
pub fn reduced_gradient<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    params: &ObjectiveParams<T>,
    state: &StateSolution<T>,
    adjoint: &AdjointSolution<T>,
) -> Result<GradientField<T>> {
    let n = disc.n();
    if v.len() != n || state.u.len() != n || adjoint.p.len() != n {
        return Err(Error::ShapeMismatch("gradient inputs do not match the mesh".into()));
    }
    let mut g = vec![T::zero(); n];
    if adjoint.p.iter().any(|&x| x != T::zero()) {
        let gp = disc.gradient_pairing(&state.u, &adjoint.p);
        let cp = disc.cubic_pairing(&state.u, &adjoint.p);
        let third = T::one() / T::lit(3.0);
        for (c, t) in disc.mesh().triangles().iter().enumerate() {
            let s = third * ((T::one() - params.delta) * gp[c] + cp[c]);
            for &k in t {
                g[k] += s;
            }
        }
    }
    if params.alpha > T::zero() {
        let r = gl_gradient(disc, v, params.epsilon, params.gamma);
        for (gi, ri) in g.iter_mut().zip(r) {
            *gi += params.alpha * ri;
        }
    }
    for (k, gi) in g.iter_mut().enumerate() {
        if disc.labels().is_frozen(k) {
            *gi = T::zero();
        }
    }
    Ok(GradientField { g })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionAudit {
    pub analytic: f64,
    pub finite_difference: Vec<f64>,
    pub relative_error: Vec<f64>,
    pub min_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub steps: Vec<f64>,
    pub directions: Vec<DirectionAudit>,
    /// Largest per-direction minimum over the step sweep.
    pub worst_min_relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const AUDIT_STEPS: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Compares `g·w` with central differences `(J(v+hw) − J(v−hw))/2h` for random directions `w`
/// supported on free nodes, over the step sweep [`AUDIT_STEPS`].
///
/// `v` must stay in `[0, 1]` under perturbations of size `max h`; components of `w` lie in `[−1, 1]`.
pub fn gradient_fd_audit<T: Real>(
    functional: &ReducedFunctional<'_, T>,
    v: &[T],
    n_directions: usize,
    seed: u64,
    tolerance: f64,
) -> Result<AuditReport> {
    let disc = functional.disc;
    let base = functional.evaluate(v, None)?;
    let (g, _) = functional.gradient(v, &base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<bool> = (0..disc.n()).map(|k| !disc.labels().is_frozen(k)).collect();
    let mut directions = Vec::with_capacity(n_directions);
    for _ in 0..n_directions {
        let w: Vec<T> = free
            .iter()
            .map(|&f| if f { T::lit(rng.random_range(-1.0..1.0)) } else { T::zero() })
            .collect();
        let analytic = dot(&g.g, &w).as_f64();
        let mut fds = Vec::with_capacity(AUDIT_STEPS.len());
        let mut errs = Vec::with_capacity(AUDIT_STEPS.len());
        for &h in &AUDIT_STEPS {
            let ht = T::lit(h);
            let vp: Vec<T> = v.iter().zip(&w).map(|(&a, &b)| a + ht * b).collect();
            let vm: Vec<T> = v.iter().zip(&w).map(|(&a, &b)| a - ht * b).collect();
            let jp = functional.evaluate(&vp, Some(&base.state.u))?.j;
            let jm = functional.evaluate(&vm, Some(&base.state.u))?.j;
            let fd = ((jp - jm) / (T::lit(2.0) * ht)).as_f64();
            fds.push(fd);
            errs.push((fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE));
        }
        let min_relative_error = errs.iter().copied().fold(f64::INFINITY, f64::min);
        directions.push(DirectionAudit {
            analytic,
            finite_difference: fds,
            relative_error: errs,
            min_relative_error,
        });
    }
    let worst = directions.iter().map(|d| d.min_relative_error).fold(0.0, f64::max);
    Ok(AuditReport {
        steps: AUDIT_STEPS.to_vec(),
        directions,
        worst_min_relative_error: worst,
        tolerance,
        pass: worst <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{CoefficientField, SourceField};
    use crate::forward::solve_state;
    use crate::geometry::{build_structured_mesh, mark_regions, Rect, RegionSpec, Side};
    use crate::objective::default_gamma;

    fn disc(n: usize) -> Discretization<f64> {
        let mesh = build_structured_mesh(n, n, Rect::unit()).unwrap();
        let spec = RegionSpec {
            omega1: Rect::new(0.0, 0.0, 1.0, 0.2).unwrap(),
            omega2: Rect::new(0.0, 0.0, 1.0, 0.1).unwrap(),
            sigma_side: Side::Bottom,
            sigma_interval: [0.0, 1.0],
        };
        let labels = mark_regions(&mesh, &spec).unwrap();
        let a = CoefficientField::identity(&mesh);
        Discretization::new(mesh, labels, a).unwrap()
    }

    fn params(delta: f64, alpha: f64) -> ObjectiveParams<f64> {
        ObjectiveParams {
            delta,
            epsilon: 0.1,
            alpha,
            gamma: default_gamma(),
        }
    }

    #[test]
    fn consistent_data_gives_zero_adjoint() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let opts = NewtonOptions::default();
        let v = vec![1.0; d.n()];
        let s = solve_state(&d, &v, 1e-3, &f, &opts).unwrap();
        let meas = s.trace(&d);
        let adj = solve_adjoint(&d, &v, 1e-3, &s, &meas, &opts).unwrap();
        assert!(adj.p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_field_gradient_is_potential_only() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let opts = NewtonOptions::default();
        let v = vec![1.0; d.n()];
        let s = solve_state(&d, &v, 1.0, &f, &opts).unwrap();
        let meas = s.trace(&d);
        let adj = solve_adjoint(&d, &v, 1.0, &s, &meas, &opts).unwrap();
        let p = params(1.0, 0.5);
        let g = reduced_gradient(&d, &v, &p, &s, &adj).unwrap();
        for (k, &gk) in g.g.iter().enumerate() {
            let expected = if d.labels().is_frozen(k) {
                0.0
            } else {
                -p.alpha * p.gamma / p.epsilon * d.lumped_mass()[k]
            };
            assert!((gk - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_residual_is_small() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let opts = NewtonOptions::default();
        let v: Vec<f64> = d
            .mesh()
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, p)| if d.labels().is_frozen(k) { 1.0 } else { 0.5 + 0.4 * (6.0 * p[0]).sin() * p[1] })
            .collect();
        let s = solve_state(&d, &v, 1e-2, &f, &opts).unwrap();
        let meas = vec![0.0; d.labels().sigma_nodes.len()];
        let adj = solve_adjoint(&d, &v, 1e-2, &s, &meas, &opts).unwrap();
        assert!(adj.residual_norm <= 1e-10);
    }

    #[test]
    fn gradient_passes_fd_audit() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let opts = NewtonOptions {
            tol_residual: 1e-12,
            ..NewtonOptions::default()
        };
        let v: Vec<f64> = d
            .mesh()
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, p)| if d.labels().is_frozen(k) { 1.0 } else { 0.5 + 0.3 * (5.0 * p[0] + 3.0 * p[1]).cos() })
            .collect();
        let truth = solve_state(&d, &vec![1.0; d.n()], 1e-2, &f, &opts).unwrap();
        let meas: Vec<f64> = truth.trace(&d).iter().map(|x| x * 1.05).collect();
        let rf = ReducedFunctional::new(&d, &f, &meas, params(1e-2, 1e-3), opts).unwrap();
        let rep = gradient_fd_audit(&rf, &v, 4, 7, 1e-4).unwrap();
        assert!(rep.pass, "{rep:#?}");
        // Truncation dominates at the largest step.
        for dir in &rep.directions {
            assert!(dir.relative_error[0] > dir.min_relative_error);
        }
    }
}
