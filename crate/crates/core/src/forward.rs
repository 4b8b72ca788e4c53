//! Damped Newton solver for `−div(c A∇u) + r u³ = f` with natural boundary conditions.
//!
//! The line search uses the convex energy `½uᵀKu + ¼Q(r u⁴) − uᵀF` as merit function.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{solve_spd, CellWeights, Discretization, SourceField};
use crate::geometry::{CavityShape, Mesh};
use crate::scalar::{dot, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions<T> {
    /// Stop when ‖R(u)‖ ≤ tol_residual · ‖F‖.
    pub tol_residual: T,
    pub max_iters: usize,
    pub armijo_c: T,
    pub backtrack_factor: T,
    /// Jacobian shift τ = jacobian_shift · trace(K) / n.
    pub jacobian_shift: T,
    pub cg_tol: T,
    pub cg_max_iter: usize,
    /// Smallest damping factor tried before the line search gives up.
    pub min_step: T,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tol_residual: T::lit(1e-10),
            max_iters: 50,
            armijo_c: T::lit(1e-4),
            backtrack_factor: T::lit(0.5),
            jacobian_shift: T::lit(1e-10),
            cg_tol: T::lit(1e-12),
            cg_max_iter: 20_000,
            min_step: T::lit(1e-10),
        }
    }
}

impl<T: Real> NewtonOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("newton options: {what}")));
        if !(self.tol_residual > T::zero()) || !(self.cg_tol > T::zero()) {
            return bad("tolerances must be positive");
        }
        if !(self.armijo_c > T::zero() && self.armijo_c < T::lit(0.5)) {
            return bad("armijo_c must lie in (0, 1/2)");
        }
        if !(self.backtrack_factor > T::zero() && self.backtrack_factor < T::one()) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.jacobian_shift >= T::zero()) {
            return bad("jacobian_shift must be nonnegative");
        }
        if !(self.min_step > T::zero() && self.min_step < T::one()) {
            return bad("min_step must lie in (0, 1)");
        }
        if self.max_iters == 0 || self.cg_max_iter == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSolution<T> {
    pub u: Vec<T>,
    /// ‖R(u)‖ in the Euclidean norm of nodal residuals.
    pub residual_norm: T,
    /// ‖F‖, the scale the residual tolerance is relative to.
    pub load_norm: T,
    pub newton_iters: usize,
    pub energy: T,
    /// Energy of every accepted iterate, starting from the initial guess.
    pub energy_history: Vec<T>,
    /// Nodes carrying a degree of freedom (false only where every adjacent cell was removed).
    pub active_nodes: Vec<bool>,
}

impl<T: Real> StateSolution<T> {
    /// Values on the Σ nodes, ordered by arc length.
    pub fn trace(&self, disc: &Discretization<T>) -> Vec<T> {
        disc.labels().sigma_nodes.iter().map(|&k| self.u[k]).collect()
    }

    pub fn max(&self) -> T {
        self.u.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.u.iter().copied().fold(T::infinity(), T::min)
    }
}

/// `½uᵀKu + ¼Q(r u⁴) − uᵀF` for arbitrary cell weights.
pub fn weighted_energy<T: Real>(disc: &Discretization<T>, w: &CellWeights<T>, load: &[T], u: &[T]) -> T {
    let k = disc.stiffness(&w.conductivity);
    energy_parts(disc, &k, w, load, u)
}

fn energy_parts<T: Real>(
    disc: &Discretization<T>,
    k: &crate::fem::CsrMatrix<T>,
    w: &CellWeights<T>,
    load: &[T],
    u: &[T],
) -> T {
    T::lit(0.5) * k.bilinear(u, u) + disc.quartic_energy(&w.reaction, u) - dot(u, load)
}

/// Discrete energy of the relaxed problem with phase field `v` and fictitious conductivity `δ`.
pub fn discrete_energy<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    delta: T,
    f: &SourceField<T>,
    u: &[T],
) -> Result<T> {
    if u.len() != disc.n() || f.values().len() != disc.mesh().n_cells() {
        return Err(Error::ShapeMismatch("field length differs from node count".into()));
    }
    let w = CellWeights::relaxed(disc.mesh(), v, delta)?;
    Ok(weighted_energy(disc, &w, &disc.load(f, None), u))
}

/// State of the relaxed problem for phase field `v`.
pub fn solve_state<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    delta: T,
    f: &SourceField<T>,
    opts: &NewtonOptions<T>,
) -> Result<StateSolution<T>> {
    solve_state_from(disc, v, delta, f, opts, None)
}

/// As [`solve_state`], starting Newton from `u0` when given.
pub fn solve_state_from<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    delta: T,
    f: &SourceField<T>,
    opts: &NewtonOptions<T>,
    u0: Option<&[T]>,
) -> Result<StateSolution<T>> {
    let w = CellWeights::relaxed(disc.mesh(), v, delta)?;
    solve_weighted(disc, &w, f, opts, u0)
}

/// Reference solve with the cavity cut out of the mesh.
///
/// Each cell is weighted by the fraction of its area outside the cavity (estimated on a
/// `CUT_CELL_SAMPLES`² sub-triangulation); cells entirely inside drop out, and nodes touching only
/// such cells carry no unknown and report `u = 0`.
pub fn solve_cavity_reference<T: Real>(
    disc: &Discretization<T>,
    shape: &CavityShape<T>,
    f: &SourceField<T>,
    opts: &NewtonOptions<T>,
) -> Result<StateSolution<T>> {
    shape.validate(&disc.mesh().bounding_rect(), disc.labels())?;
    let w = cut_cell_weights(disc.mesh(), shape);
    solve_weighted(disc, &w, f, opts, None)
}

/// Sub-triangulation level used to estimate cut-cell area fractions.
pub const CUT_CELL_SAMPLES: usize = 12;

/// Area fraction of every cell lying outside `shape`, used as both conductivity and reaction weight.
pub fn cut_cell_weights<T: Real>(mesh: &Mesh<T>, shape: &CavityShape<T>) -> CellWeights<T> {
    if shape.is_empty() {
        return CellWeights::uniform(mesh);
    }
    let k = CUT_CELL_SAMPLES;
    let kt = T::of(k);
    let third = T::one() / T::lit(3.0);
    // Centroids of the k² congruent sub-triangles, in barycentric lattice coordinates.
    let mut samples = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k - i {
            samples.push(((T::of(i) + third) / kt, (T::of(j) + third) / kt));
            if i + j + 2 <= k {
                samples.push(((T::of(i) + T::lit(2.0) * third) / kt, (T::of(j) + T::lit(2.0) * third) / kt));
            }
        }
    }
    let total = T::of(samples.len());
    let fraction: Vec<T> = mesh
        .triangles()
        .iter()
        .map(|t| {
            let [p0, p1, p2] = [mesh.nodes()[t[0]], mesh.nodes()[t[1]], mesh.nodes()[t[2]]];
            let outside = samples
                .iter()
                .filter(|&&(a, b)| {
                    let x = p0[0] + a * (p1[0] - p0[0]) + b * (p2[0] - p0[0]);
                    let y = p0[1] + a * (p1[1] - p0[1]) + b * (p2[1] - p0[1]);
                    !shape.contains([x, y])
                })
                .count();
            T::of(outside) / total
        })
        .collect();
    CellWeights {
        conductivity: fraction.clone(),
        reaction: fraction,
    }
}

/// The δ → 0 limit of the relaxed problem for a fixed phase field `v` (see [`CellWeights::hole_limit`]).
pub fn solve_hole_limit<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    f: &SourceField<T>,
    opts: &NewtonOptions<T>,
) -> Result<StateSolution<T>> {
    let w = CellWeights::hole_limit(disc.mesh(), v)?;
    solve_weighted(disc, &w, f, opts, None)
}

/// Active nodes of `w` and the number of connected components they form.
pub fn active_components<T: Real>(disc: &Discretization<T>, w: &CellWeights<T>) -> (Vec<bool>, usize) {
    let n = disc.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut active = vec![false; n];
    for (c, t) in disc.mesh().triangles().iter().enumerate() {
        if !w.is_active(c) {
            continue;
        }
        for &k in t {
            active[k] = true;
        }
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let components = (0..n).filter(|&k| active[k] && find(&mut parent, k) == k).count();
    (active, components)
}

/// Damped Newton for arbitrary nonnegative cell weights.
pub fn solve_weighted<T: Real>(
    disc: &Discretization<T>,
    w: &CellWeights<T>,
    f: &SourceField<T>,
    opts: &NewtonOptions<T>,
    u0: Option<&[T]>,
) -> Result<StateSolution<T>> {
    opts.validate()?;
    let n = disc.n();
    if f.values().len() != disc.mesh().n_cells() || u0.is_some_and(|u| u.len() != n) {
        return Err(Error::ShapeMismatch("field length differs from node count".into()));
    }
    let (active, components) = active_components(disc, w);
    if components == 0 {
        return Err(Error::InvalidArgument("no active cells".into()));
    }
    if components > 1 {
        return Err(Error::DisconnectedDomain { components });
    }
    let cell_mask: Vec<bool> = (0..disc.mesh().n_cells()).map(|c| w.is_active(c)).collect();
    let all_active = cell_mask.iter().all(|&a| a);
    let load = disc.load(f, if all_active { None } else { Some(&cell_mask) });
    let load_norm = norm2(&load);
    if load_norm == T::zero() {
        return Ok(StateSolution {
            u: vec![T::zero(); n],
            residual_norm: T::zero(),
            load_norm,
            newton_iters: 0,
            energy: T::zero(),
            energy_history: vec![T::zero()],
            active_nodes: active,
        });
    }

    let k = disc.stiffness(&w.conductivity);
    let tau = opts.jacobian_shift * k.trace() / T::of(n);
    let mut u = match u0 {
        Some(u0) => u0.iter().zip(&active).map(|(&x, &a)| if a { x } else { T::zero() }).collect(),
        None => {
            let area: T = disc
                .mesh()
                .cells()
                .iter()
                .zip(&cell_mask)
                .filter(|(_, &m)| m)
                .map(|(c, _)| c.area)
                .sum();
            let mean_f = load.iter().copied().sum::<T>() / area;
            let start = mean_f.max(T::zero()).cbrt() + T::lit(1e-3);
            active.iter().map(|&a| if a { start } else { T::zero() }).collect::<Vec<T>>()
        }
    };

    let residual = |u: &[T]| -> Vec<T> {
        let mut r = k.matvec(u);
        for ((ri, ni), fi) in r.iter_mut().zip(disc.reaction_residual(&w.reaction, u)).zip(&load) {
            *ri += ni - *fi;
        }
        r
    };

    let mut energy = energy_parts(disc, &k, w, &load, &u);
    let mut history = vec![energy];
    let mut r = residual(&u);
    let mut rn = norm2(&r);
    let mut iters = 0;
    while rn > opts.tol_residual * load_norm {
        if iters == opts.max_iters {
            return Err(Error::NoConvergence {
                context: "newton".into(),
                iterations: iters,
                residual: (rn / load_norm).as_f64(),
            });
        }
        let mut jac = disc.reaction_jacobian(&w.reaction, &u);
        jac.add_scaled(T::one(), &k);
        jac.add_diagonal(tau);
        let mut rhs: Vec<T> = r.iter().map(|&x| -x).collect();
        for (i, &a) in active.iter().enumerate() {
            if !a {
                jac.pin(i);
                rhs[i] = T::zero();
            }
        }
        // Forcing term: loose while far from the solution, tight near it.
        let rel = rn / load_norm;
        let cg_tol = opts.cg_tol.max(T::lit(1e-2) * rel.min(T::one()));
        let step = solve_spd(&jac, &rhs, cg_tol, opts.cg_max_iter)?;
        let d = step.x;
        let slope = dot(&r, &d);

        // Energy change along d evaluated in differenced form; the energies themselves carry
        // roundoff far above the decrements near convergence.
        let mut grad_lin = k.matvec(&u);
        for (g, &fi) in grad_lin.iter_mut().zip(&load) {
            *g -= fi;
        }
        let lin = dot(&d, &grad_lin);
        let quad = T::lit(0.5) * k.bilinear(&d, &d);
        let mut s = T::one();
        let trial: Vec<T>;
        loop {
            let (q, qmag) = disc.quartic_increment(&w.reaction, &u, &d, s);
            let change = s * lin + s * s * quad + q;
            let slack = T::lit(64.0) * T::epsilon() * ((s * lin).abs() + s * s * quad.abs() + qmag);
            if change <= opts.armijo_c * s * slope + slack {
                trial = u.iter().zip(&d).map(|(&a, &b)| a + s * b).collect();
                energy += change;
                break;
            }
            s *= opts.backtrack_factor;
            if s < opts.min_step {
                return Err(Error::NoConvergence {
                    context: "newton line search".into(),
                    iterations: iters,
                    residual: (rn / load_norm).as_f64(),
                });
            }
        }
        u = trial;
        history.push(energy);
        r = residual(&u);
        rn = norm2(&r);
        iters += 1;
    }
    let energy = energy_parts(disc, &k, w, &load, &u);
    Ok(StateSolution {
        u,
        residual_norm: rn,
        load_norm,
        newton_iters: iters,
        energy,
        energy_history: history,
        active_nodes: active,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `bound − value`; negative means violated.
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    /// Pointwise bounds are only asserted on meshes without obtuse angles.
    pub nonobtuse: bool,
    pub checks: Vec<BoundCheck>,
    pub pass: bool,
}

/// Pointwise cube-root bounds and the a-priori H¹ bound for a computed state.
///
/// `‖u‖_{H¹} ≤ ‖f‖/λ' + (|Ω'|/r')^{1/3} ‖f‖^{1/3}` with λ' = λ · min conductivity and r' the
/// smallest reaction weight over active cells; ‖f‖ is the L² norm on active cells.
pub fn check_state_bounds<T: Real>(
    disc: &Discretization<T>,
    w: &CellWeights<T>,
    sol: &StateSolution<T>,
    f: &SourceField<T>,
    bound_slack: T,
) -> BoundsReport {
    let mesh = disc.mesh();
    let nonobtuse = mesh.is_nonobtuse(T::lit(1e-12));
    let act: Vec<usize> = (0..mesh.n_cells()).filter(|&c| w.is_active(c)).collect();

    let mut fmin = T::infinity();
    let mut fmax = T::zero();
    let mut umin = T::infinity();
    let mut umax = T::neg_infinity();
    for &c in &act {
        fmin = fmin.min(f.values()[c]);
        fmax = fmax.max(f.values()[c]);
    }
    for (k, &a) in sol.active_nodes.iter().enumerate() {
        if a {
            umin = umin.min(sol.u[k]);
            umax = umax.max(sol.u[k]);
        }
    }
    let lower = fmin.max(T::zero()).cbrt() - bound_slack;
    let upper = fmax.cbrt() + bound_slack;

    let grad = disc.cell_gradient_sq(&sol.u);
    let mass = disc.cell_mass_sq(&sol.u);
    let h1: T = act.iter().map(|&c| grad[c] + mass[c]).sum::<T>().sqrt();
    let fl2: T = act.iter().map(|&c| f.values()[c].powi(2) * mesh.cells()[c].area).sum::<T>().sqrt();
    let area: T = act.iter().map(|&c| mesh.cells()[c].area).sum();
    let cmin = act.iter().map(|&c| w.conductivity[c]).fold(T::infinity(), T::min);
    let rmin = act.iter().map(|&c| w.reaction[c]).fold(T::infinity(), T::min);
    let lam = disc.coefficients().lambda() * cmin;
    let apriori = if rmin > T::zero() {
        fl2 / lam + (area / rmin).cbrt() * fl2.cbrt()
    } else {
        T::infinity()
    };

    let check = |name: &str, value: T, bound: T, enforce: bool| {
        let slack = (bound - value).as_f64();
        BoundCheck {
            name: name.into(),
            value: value.as_f64(),
            bound: bound.as_f64(),
            slack,
            pass: !enforce || slack >= 0.0,
        }
    };
    // The lower bound is stated as −min u ≤ −(min f)^{1/3} so that slack keeps its sign convention.
    let checks = vec![
        check("pointwise_lower", -umin, -lower, nonobtuse),
        check("pointwise_upper", umax, upper, nonobtuse),
        check("apriori_h1", h1, apriori * (T::one() + T::lit(1e-12)), true),
    ];
    let pass = checks.iter().all(|c| c.pass);
    BoundsReport { nonobtuse, checks, pass }
}
