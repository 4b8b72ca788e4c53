use std::sync::Arc;

use super::sparse::{CsrMatrix, Pattern};
use crate::error::{Error, Result};
use crate::geometry::{Mesh, Rect, RegionLabels};
use crate::phase_field::cell_means;
use crate::scalar::Real;

/// Symmetric 2×2 matrix stored as `[a11, a12, a22]`.
pub type Sym2<T> = [T; 3];

fn sym_eigenvalues<T: Real>(a: Sym2<T>) -> (T, T) {
    let two = T::lit(2.0);
    let mean = (a[0] + a[2]) / two;
    let rad = ((a[0] - a[2]) / two).hypot(a[1]);
    (mean - rad, mean + rad)
}

/// Cellwise conductivity tensor A(x) with ellipticity constants λ ≤ Λ.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField<T> {
    per_cell: Vec<Sym2<T>>,
    lambda: T,
    big_lambda: T,
}

impl<T: Real> CoefficientField<T> {
    pub fn identity(mesh: &Mesh<T>) -> Self {
        Self {
            per_cell: vec![[T::one(), T::zero(), T::one()]; mesh.n_cells()],
            lambda: T::one(),
            big_lambda: T::one(),
        }
    }

    pub fn constant(mesh: &Mesh<T>, a: Sym2<T>, lambda: T, big_lambda: T) -> Result<Self> {
        Self::from_fn(mesh, |_| a, lambda, big_lambda)
    }

    /// Samples `a` at cell centroids and checks every eigenvalue lies in `[λ, Λ]`.
    pub fn from_fn(
        mesh: &Mesh<T>,
        a: impl Fn([T; 2]) -> Sym2<T>,
        lambda: T,
        big_lambda: T,
    ) -> Result<Self> {
        if !(lambda > T::zero() && lambda <= big_lambda) {
            return Err(Error::InvalidArgument(format!(
                "ellipticity constants must satisfy 0 < lambda <= Lambda, got {lambda}, {big_lambda}"
            )));
        }
        let slack = T::lit(1e-12) * big_lambda;
        let per_cell: Vec<Sym2<T>> = mesh.cells().iter().map(|c| a(c.centroid)).collect();
        for (c, m) in per_cell.iter().enumerate() {
            let (lo, hi) = sym_eigenvalues(*m);
            if lo < lambda - slack || hi > big_lambda + slack {
                return Err(Error::InvalidArgument(format!(
                    "cell {c}: eigenvalues [{lo}, {hi}] outside [{lambda}, {big_lambda}]"
                )));
            }
        }
        Ok(Self {
            per_cell,
            lambda,
            big_lambda,
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn big_lambda(&self) -> T {
        self.big_lambda
    }

    pub fn cell(&self, c: usize) -> Sym2<T> {
        self.per_cell[c]
    }
}

/// Cellwise constant source f ≥ 0 supported in Ω₂.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField<T> {
    cell: Vec<T>,
}

impl<T: Real> SourceField<T> {
    /// Rejects negative values and values on cells that do not meet the Ω₂ rectangle.
    pub fn from_cells(values: Vec<T>, mesh: &Mesh<T>, labels: &RegionLabels<T>) -> Result<Self> {
        if values.len() != mesh.n_cells() {
            return Err(Error::ShapeMismatch("source length differs from cell count".into()));
        }
        for (c, &f) in values.iter().enumerate() {
            if !(f >= T::zero()) || !f.is_finite() {
                return Err(Error::InvalidArgument(format!("source is negative or non-finite on cell {c}")));
            }
            if f > T::zero() && clipped_area(mesh, c, &labels.omega2_rect) <= T::zero() {
                return Err(Error::InvalidArgument(format!("source is nonzero outside omega2 on cell {c}")));
            }
        }
        Ok(Self { cell: values })
    }

    /// `value` on the rectangle `support ⊂ Ω₂`: each cell carries `value·|cell ∩ support|/|cell|`,
    /// so the discrete integral is `value·|support|` on every mesh.
    pub fn plateau(mesh: &Mesh<T>, labels: &RegionLabels<T>, value: T, support: Rect<T>) -> Result<Self> {
        if !(value >= T::zero()) {
            return Err(Error::InvalidArgument("plateau value must be nonnegative".into()));
        }
        let tol = mesh.h() * T::lit(1e-9);
        if !labels.omega2_rect.contains_rect(&support, tol) {
            return Err(Error::InvalidArgument("source support is not inside omega2".into()));
        }
        let cell = (0..mesh.n_cells())
            .map(|c| value * clipped_area(mesh, c, &support) / mesh.cells()[c].area)
            .collect();
        Self::from_cells(cell, mesh, labels)
    }

    pub fn constant(mesh: &Mesh<T>, value: T) -> Self {
        Self {
            cell: vec![value; mesh.n_cells()],
        }
    }

    pub fn values(&self) -> &[T] {
        &self.cell
    }

    pub fn max(&self) -> T {
        self.cell.iter().copied().fold(T::zero(), T::max)
    }

    pub fn integral(&self, mesh: &Mesh<T>) -> T {
        self.cell.iter().zip(mesh.cells()).map(|(&f, c)| f * c.area).sum()
    }
}

/// Area of triangle `c` inside `r` (Sutherland–Hodgman against the four sides).
fn clipped_area<T: Real>(mesh: &Mesh<T>, c: usize, r: &Rect<T>) -> T {
    let t = mesh.triangles()[c];
    let mut poly: Vec<[T; 2]> = t.iter().map(|&k| mesh.nodes()[k]).collect();
    // (axis, bound, keep-greater)
    let planes = [(0, r.x0, true), (0, r.x1, false), (1, r.y0, true), (1, r.y1, false)];
    for (axis, bound, greater) in planes {
        let inside = |p: &[T; 2]| if greater { p[axis] >= bound } else { p[axis] <= bound };
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                out.push(a);
            }
            if ia != ib {
                let s = (bound - a[axis]) / (b[axis] - a[axis]);
                out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
            }
        }
        poly = out;
        if poly.len() < 3 {
            return T::zero();
        }
    }
    let mut twice = T::zero();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        twice += a[0] * b[1] - b[0] * a[1];
    }
    (twice / T::lit(2.0)).abs()
}

/// Per-cell weights of the two terms of the operator: `−div(c A ∇u) + r u³`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights<T> {
    pub conductivity: Vec<T>,
    pub reaction: Vec<T>,
}

impl<T: Real> CellWeights<T> {
    pub fn uniform(mesh: &Mesh<T>) -> Self {
        Self {
            conductivity: vec![T::one(); mesh.n_cells()],
            reaction: vec![T::one(); mesh.n_cells()],
        }
    }

    /// `a_δ(v̄) = δ + (1 − δ) v̄` on the gradient term, `v̄` on the reaction.
    pub fn relaxed(mesh: &Mesh<T>, v: &[T], delta: T) -> Result<Self> {
        check_delta(delta)?;
        check_field(mesh, v)?;
        let reaction = cell_means(mesh, v);
        let conductivity = reaction.iter().map(|&vb| a_delta(vb, delta)).collect();
        Ok(Self { conductivity, reaction })
    }

    /// The δ → 0 limit of [`CellWeights::relaxed`]: cells with `v̄ = 0` drop out.
    pub fn hole_limit(mesh: &Mesh<T>, v: &[T]) -> Result<Self> {
        check_field(mesh, v)?;
        let reaction = cell_means(mesh, v);
        Ok(Self {
            conductivity: reaction.clone(),
            reaction,
        })
    }

    pub fn is_active(&self, c: usize) -> bool {
        self.conductivity[c] > T::zero()
    }
}

#[inline]
pub fn a_delta<T: Real>(v: T, delta: T) -> T {
    delta + (T::one() - delta) * v
}

fn check_delta<T: Real>(delta: T) -> Result<()> {
    if !(delta > T::zero() && delta <= T::one()) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1]")));
    }
    Ok(())
}

fn check_field<T: Real>(mesh: &Mesh<T>, v: &[T]) -> Result<()> {
    if v.len() != mesh.n_nodes() {
        return Err(Error::ShapeMismatch(format!("field of length {} on {} nodes", v.len(), mesh.n_nodes())));
    }
    if v.iter().any(|&x| !(x >= T::zero() && x <= T::one())) {
        return Err(Error::InvalidArgument("phase values must lie in [0, 1]".into()));
    }
    Ok(())
}

type Local<T> = [[T; 3]; 3];

/// Mesh, labels and coefficient field together with the matrices that do not depend
/// on the state or the design.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    mesh: Mesh<T>,
    labels: RegionLabels<T>,
    coeff: CoefficientField<T>,
    pattern: Arc<Pattern>,
    slots: Vec<[usize; 9]>,
    local_a: Vec<Local<T>>,
    local_1: Vec<Local<T>>,
    lumped: Vec<T>,
    mass: CsrMatrix<T>,
    stiffness_1: CsrMatrix<T>,
    sigma_mass: CsrMatrix<T>,
}

impl<T: Real> Discretization<T> {
    pub fn new(mesh: Mesh<T>, labels: RegionLabels<T>, coeff: CoefficientField<T>) -> Result<Self> {
        if coeff.per_cell.len() != mesh.n_cells() {
            return Err(Error::ShapeMismatch("coefficient field does not match mesh".into()));
        }
        let pattern = Arc::new(Pattern::from_mesh(&mesh));
        let slots = mesh
            .triangles()
            .iter()
            .map(|t| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = pattern.slot(t[a], t[b]).expect("pattern covers triangles");
                    }
                }
                s
            })
            .collect();
        let mut local_a = Vec::with_capacity(mesh.n_cells());
        let mut local_1 = Vec::with_capacity(mesh.n_cells());
        for (c, cell) in mesh.cells().iter().enumerate() {
            let a = coeff.cell(c);
            let mut ka = [[T::zero(); 3]; 3];
            let mut k1 = [[T::zero(); 3]; 3];
            for i in 0..3 {
                let gi = cell.grads[i];
                let agi = [a[0] * gi[0] + a[1] * gi[1], a[1] * gi[0] + a[2] * gi[1]];
                for j in 0..3 {
                    let gj = cell.grads[j];
                    ka[i][j] = cell.area * (agi[0] * gj[0] + agi[1] * gj[1]);
                    k1[i][j] = cell.area * (gi[0] * gj[0] + gi[1] * gj[1]);
                }
            }
            local_a.push(ka);
            local_1.push(k1);
        }
        let mut disc = Self {
            lumped: lumped_mass(&mesh),
            mass: CsrMatrix::zeros(pattern.clone()),
            stiffness_1: CsrMatrix::zeros(pattern.clone()),
            sigma_mass: CsrMatrix::zeros(pattern.clone()),
            mesh,
            labels,
            coeff,
            pattern,
            slots,
            local_a,
            local_1,
        };
        disc.mass = disc.assemble_mass(None);
        disc.stiffness_1 = disc.assemble_local(&disc.local_1, None);
        disc.sigma_mass = assemble_sigma_mass_on(&disc.mesh, &disc.labels, disc.pattern.clone());
        Ok(disc)
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn labels(&self) -> &RegionLabels<T> {
        &self.labels
    }

    pub fn coefficients(&self) -> &CoefficientField<T> {
        &self.coeff
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Lumped (row-sum) mass.
    pub fn lumped_mass(&self) -> &[T] {
        &self.lumped
    }

    /// Consistent P1 mass matrix.
    pub fn mass(&self) -> &CsrMatrix<T> {
        &self.mass
    }

    /// Stiffness of ∫∇φ_i·∇φ_j (no A, no weights).
    pub fn unweighted_stiffness(&self) -> &CsrMatrix<T> {
        &self.stiffness_1
    }

    /// Consistent 1-D mass on Σ.
    pub fn sigma_mass(&self) -> &CsrMatrix<T> {
        &self.sigma_mass
    }

    /// Local A-weighted stiffness of cell `c`.
    pub fn local_stiffness(&self, c: usize) -> &[[T; 3]; 3] {
        &self.local_a[c]
    }

    fn assemble_local(&self, local: &[Local<T>], weights: Option<&[T]>) -> CsrMatrix<T> {
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let vals = m.values_mut();
        for (c, k) in local.iter().enumerate() {
            let w = weights.map_or_else(T::one, |w| w[c]);
            if w == T::zero() {
                continue;
            }
            let s = &self.slots[c];
            for a in 0..3 {
                for b in 0..3 {
                    vals[s[3 * a + b]] += w * k[a][b];
                }
            }
        }
        m
    }

    /// ∫ c A ∇φ_i·∇φ_j with cellwise conductivity `c`.
    pub fn stiffness(&self, conductivity: &[T]) -> CsrMatrix<T> {
        self.assemble_local(&self.local_a, Some(conductivity))
    }

    /// Consistent mass restricted to the cells with `mask[c]`.
    pub fn assemble_mass(&self, mask: Option<&[bool]>) -> CsrMatrix<T> {
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let vals = m.values_mut();
        let twelfth = T::one() / T::lit(12.0);
        for (c, cell) in self.mesh.cells().iter().enumerate() {
            if mask.is_some_and(|m| !m[c]) {
                continue;
            }
            let s = &self.slots[c];
            for a in 0..3 {
                for b in 0..3 {
                    let f = if a == b { T::lit(2.0) } else { T::one() };
                    vals[s[3 * a + b]] += f * cell.area * twelfth;
                }
            }
        }
        m
    }

    /// Load vector ∫ f φ_i over the cells with `mask[c]` (all cells when `None`).
    pub fn load(&self, f: &SourceField<T>, mask: Option<&[bool]>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n()];
        let third = T::one() / T::lit(3.0);
        for (c, t) in self.mesh.triangles().iter().enumerate() {
            if mask.is_some_and(|m| !m[c]) {
                continue;
            }
            let share = f.values()[c] * self.mesh.cells()[c].area * third;
            for &k in t {
                out[k] += share;
            }
        }
        out
    }

    /// ∫ r u³ φ_i, edge-midpoint quadrature, cellwise reaction weight `r`.
    pub fn reaction_residual(&self, reaction: &[T], u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n()];
        let half = T::lit(0.5);
        for (c, t) in self.mesh.triangles().iter().enumerate() {
            let r = reaction[c];
            if r == T::zero() {
                continue;
            }
            let w = r * self.mesh.cells()[c].area / T::lit(3.0);
            let m = midpoints(t, u);
            let cubes = [m[0].powi(3), m[1].powi(3), m[2].powi(3)];
            // Midpoint k sits on the edge (k, k+1); each node touches two midpoints.
            for a in 0..3 {
                out[t[a]] += w * half * (cubes[a] + cubes[(a + 2) % 3]);
            }
        }
        out
    }

    /// Derivative of [`Discretization::reaction_residual`] with respect to `u`.
    pub fn reaction_jacobian(&self, reaction: &[T], u: &[T]) -> CsrMatrix<T> {
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let vals = m.values_mut();
        let quarter3 = T::lit(0.75);
        for (c, t) in self.mesh.triangles().iter().enumerate() {
            let r = reaction[c];
            if r == T::zero() {
                continue;
            }
            let w = r * self.mesh.cells()[c].area / T::lit(3.0);
            let mid = midpoints(t, u);
            let sq = [mid[0] * mid[0], mid[1] * mid[1], mid[2] * mid[2]];
            let s = &self.slots[c];
            for a in 0..3 {
                let b = (a + 1) % 3;
                // Diagonal: the two midpoints adjacent to node a.
                vals[s[3 * a + a]] += w * quarter3 * (sq[a] + sq[(a + 2) % 3]);
                // Off-diagonal (a, b): only the midpoint of edge (a, b).
                vals[s[3 * a + b]] += w * quarter3 * sq[a];
                vals[s[3 * b + a]] += w * quarter3 * sq[a];
            }
        }
        m
    }

    /// ¼ ∫ r u⁴, same quadrature.
    pub fn quartic_energy(&self, reaction: &[T], u: &[T]) -> T {
        let mut e = T::zero();
        for (c, t) in self.mesh.triangles().iter().enumerate() {
            let r = reaction[c];
            if r == T::zero() {
                continue;
            }
            let m = midpoints(t, u);
            let q: T = m.iter().map(|x| x.powi(4)).sum();
            e += r * self.mesh.cells()[c].area / T::lit(3.0) * q;
        }
        e / T::lit(4.0)
    }

    /// `quartic_energy(u + s d) − quartic_energy(u)` without cancellation, together with the sum of
    /// the absolute values of its terms.
    pub fn quartic_increment(&self, reaction: &[T], u: &[T], d: &[T], s: T) -> (T, T) {
        let (mut e, mut mag) = (T::zero(), T::zero());
        let (four, six) = (T::lit(4.0), T::lit(6.0));
        for (c, t) in self.mesh.triangles().iter().enumerate() {
            let r = reaction[c];
            if r == T::zero() {
                continue;
            }
            let (mu, md) = (midpoints(t, u), midpoints(t, d));
            let wgt = r * self.mesh.cells()[c].area / T::lit(12.0);
            for k in 0..3 {
                let (m, x) = (mu[k], s * md[k]);
                let inc = x * (four * m.powi(3) + x * (six * m * m + x * (four * m + x)));
                e += wgt * inc;
                mag += wgt * inc.abs();
            }
        }
        (e, mag)
    }

    /// Per-cell ∫_c u³ p with the reaction quadrature (unit weight).
    pub fn cubic_pairing(&self, u: &[T], p: &[T]) -> Vec<T> {
        self.mesh
            .triangles()
            .iter()
            .zip(self.mesh.cells())
            .map(|(t, cell)| {
                let mu = midpoints(t, u);
                let mp = midpoints(t, p);
                let q: T = (0..3).map(|k| mu[k].powi(3) * mp[k]).sum();
                cell.area / T::lit(3.0) * q
            })
            .collect()
    }

    /// Per-cell ∫_c |∇u|².
    pub fn cell_gradient_sq(&self, u: &[T]) -> Vec<T> {
        self.mesh
            .triangles()
            .iter()
            .zip(self.mesh.cells())
            .map(|(t, c)| {
                let mut g = [T::zero(); 2];
                for a in 0..3 {
                    g[0] += u[t[a]] * c.grads[a][0];
                    g[1] += u[t[a]] * c.grads[a][1];
                }
                c.area * (g[0] * g[0] + g[1] * g[1])
            })
            .collect()
    }

    /// Per-cell ∫_c u² (exact for P1).
    pub fn cell_mass_sq(&self, u: &[T]) -> Vec<T> {
        self.mesh
            .triangles()
            .iter()
            .zip(self.mesh.cells())
            .map(|(t, c)| {
                let (a, b, d) = (u[t[0]], u[t[1]], u[t[2]]);
                c.area / T::lit(6.0) * (a * a + b * b + d * d + a * b + b * d + d * a)
            })
            .collect()
    }

    /// Per-cell ∫_c A∇u·∇p.
    pub fn gradient_pairing(&self, u: &[T], p: &[T]) -> Vec<T> {
        self.mesh
            .triangles()
            .iter()
            .zip(&self.local_a)
            .map(|(t, k)| {
                let mut s = T::zero();
                for a in 0..3 {
                    for b in 0..3 {
                        s += p[t[a]] * k[a][b] * u[t[b]];
                    }
                }
                s
            })
            .collect()
    }
}

#[inline]
fn midpoints<T: Real>(t: &[usize; 3], u: &[T]) -> [T; 3] {
    let half = T::lit(0.5);
    [
        (u[t[0]] + u[t[1]]) * half,
        (u[t[1]] + u[t[2]]) * half,
        (u[t[2]] + u[t[0]]) * half,
    ]
}

/// Lumped mass `m_i = Σ_{c ∋ i} |c| / 3`.
pub fn lumped_mass<T: Real>(mesh: &Mesh<T>) -> Vec<T> {
    let mut m = vec![T::zero(); mesh.n_nodes()];
    for (t, c) in mesh.triangles().iter().zip(mesh.cells()) {
        for &k in t {
            m[k] += c.area / T::lit(3.0);
        }
    }
    m
}

/// Matrix of ∫ a_δ(v̄) A ∇φ_i·∇φ_j.
pub fn assemble_weighted_stiffness<T: Real>(disc: &Discretization<T>, v: &[T], delta: T) -> Result<CsrMatrix<T>> {
    let w = CellWeights::relaxed(disc.mesh(), v, delta)?;
    Ok(disc.stiffness(&w.conductivity))
}

/// Vector of ∫ v̄ u³ φ_i.
pub fn assemble_reaction_residual<T: Real>(disc: &Discretization<T>, v: &[T], u: &[T]) -> Result<Vec<T>> {
    check_field(disc.mesh(), v)?;
    if u.len() != disc.n() {
        return Err(Error::ShapeMismatch("state length differs from node count".into()));
    }
    Ok(disc.reaction_residual(&cell_means(disc.mesh(), v), u))
}

/// Matrix of ∫ 3 v̄ u² φ_i φ_j.
pub fn assemble_reaction_jacobian<T: Real>(disc: &Discretization<T>, v: &[T], u: &[T]) -> Result<CsrMatrix<T>> {
    check_field(disc.mesh(), v)?;
    if u.len() != disc.n() {
        return Err(Error::ShapeMismatch("state length differs from node count".into()));
    }
    Ok(disc.reaction_jacobian(&cell_means(disc.mesh(), v), u))
}

/// Consistent 1-D mass on the Σ edges.
pub fn assemble_sigma_mass<T: Real>(mesh: &Mesh<T>, labels: &RegionLabels<T>) -> CsrMatrix<T> {
    assemble_sigma_mass_on(mesh, labels, Arc::new(Pattern::from_mesh(mesh)))
}

fn assemble_sigma_mass_on<T: Real>(mesh: &Mesh<T>, labels: &RegionLabels<T>, pattern: Arc<Pattern>) -> CsrMatrix<T> {
    let mut m = CsrMatrix::zeros(pattern.clone());
    let vals = m.values_mut();
    for &e in &labels.sigma_edges {
        let [a, b] = mesh.boundary_edges()[e].nodes;
        let len = crate::geometry::dist(mesh.nodes()[a], mesh.nodes()[b]);
        let (d, o) = (len / T::lit(3.0), len / T::lit(6.0));
        vals[pattern.slot(a, a).unwrap()] += d;
        vals[pattern.slot(b, b).unwrap()] += d;
        vals[pattern.slot(a, b).unwrap()] += o;
        vals[pattern.slot(b, a).unwrap()] += o;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_structured_mesh, mark_regions, RegionSpec, Side};
    use crate::scalar::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(n: usize, coeff: Option<Sym2<f64>>) -> Discretization<f64> {
        let mesh = build_structured_mesh(n, n, Rect::unit()).unwrap();
        let spec = RegionSpec {
            omega1: Rect::unit(),
            omega2: Rect::new(0.0, 0.0, 1.0, 0.25).unwrap(),
            sigma_side: Side::Bottom,
            sigma_interval: [0.0, 1.0],
        };
        let labels = mark_regions(&mesh, &spec).unwrap();
        let a = match coeff {
            None => CoefficientField::identity(&mesh),
            Some(m) => CoefficientField::constant(&mesh, m, 0.5, 2.5).unwrap(),
        };
        Discretization::new(mesh, labels, a).unwrap()
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let d = disc(8, None);
        let k = assemble_weighted_stiffness(&d, &vec![1.0; d.n()], 0.3).unwrap();
        let rs = k.matvec(&vec![1.0; d.n()]);
        assert!(rs.iter().all(|x| x.abs() < 1e-13));
        assert!(k.asymmetry() < 1e-12);
    }

    #[test]
    fn unit_delta_ignores_design() {
        let d = disc(6, None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..d.n()).map(|_| rng.random()).collect();
        let a = assemble_weighted_stiffness(&d, &v, 1.0).unwrap();
        let b = assemble_weighted_stiffness(&d, &vec![1.0; d.n()], 1.0).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn void_scales_laplacian_by_delta() {
        let d = disc(6, None);
        let k0 = assemble_weighted_stiffness(&d, &vec![0.0; d.n()], 0.01).unwrap();
        for (a, b) in k0.values().iter().zip(d.unweighted_stiffness().values()) {
            assert!((a - 0.01 * b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn nonpositive_delta_rejected() {
        let d = disc(4, None);
        assert!(matches!(
            assemble_weighted_stiffness(&d, &vec![1.0; d.n()], 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn coefficient_ellipticity_enforced() {
        let mesh = build_structured_mesh::<f64>(4, 4, Rect::unit()).unwrap();
        assert!(CoefficientField::constant(&mesh, [1.0, 0.0, 1.0], 2.0, 1.0).is_err());
        assert!(CoefficientField::constant(&mesh, [3.0, 0.0, 1.0], 0.5, 2.0).is_err());
        assert!(CoefficientField::constant(&mesh, [2.0, 0.5, 1.0], 0.5, 2.5).is_ok());
    }

    #[test]
    fn reaction_residual_partition_of_unity() {
        let d = disc(8, None);
        let c = 1.7;
        let r = assemble_reaction_residual(&d, &vec![1.0; d.n()], &vec![c; d.n()]).unwrap();
        for (ri, mi) in r.iter().zip(d.lumped_mass()) {
            assert!((ri - c * c * c * mi).abs() < 1e-14);
        }
        let total: f64 = r.iter().sum();
        assert!((total - c * c * c).abs() < 1e-12);
        let zero = assemble_reaction_residual(&d, &vec![0.0; d.n()], &vec![c; d.n()]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let zu = assemble_reaction_residual(&d, &vec![1.0; d.n()], &vec![0.0; d.n()]).unwrap();
        assert!(zu.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reaction_jacobian_at_one_is_three_mass() {
        let d = disc(6, None);
        let j = assemble_reaction_jacobian(&d, &vec![1.0; d.n()], &vec![1.0; d.n()]).unwrap();
        for (a, b) in j.values().iter().zip(d.mass().values()) {
            assert!((a - 3.0 * b).abs() < 1e-15);
        }
        let z = assemble_reaction_jacobian(&d, &vec![1.0; d.n()], &vec![0.0; d.n()]).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reaction_jacobian_matches_central_differences() {
        let d = disc(6, None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..d.n()).map(|_| rng.random()).collect();
        let u: Vec<f64> = (0..d.n()).map(|_| rng.random_range(-1.0..2.0)).collect();
        let phi: Vec<f64> = (0..d.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = assemble_reaction_jacobian(&d, &v, &u).unwrap().matvec(&phi);
        let mut prev = f64::INFINITY;
        for h in [1e-2, 5e-3, 2.5e-3] {
            let up: Vec<f64> = u.iter().zip(&phi).map(|(a, b)| a + h * b).collect();
            let um: Vec<f64> = u.iter().zip(&phi).map(|(a, b)| a - h * b).collect();
            let rp = assemble_reaction_residual(&d, &v, &up).unwrap();
            let rm = assemble_reaction_residual(&d, &v, &um).unwrap();
            let err: f64 = rp
                .iter()
                .zip(&rm)
                .zip(&j)
                .map(|((a, b), c)| ((a - b) / (2.0 * h) - c).powi(2))
                .sum::<f64>()
                .sqrt();
            // Cubic residual: central differences are exact up to h² u-independent terms.
            assert!(err < prev / 3.5 || err < 1e-13, "{err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn energy_gradient_is_residual() {
        let d = disc(5, None);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: Vec<f64> = (0..d.mesh().n_cells()).map(|_| rng.random()).collect();
        let u: Vec<f64> = (0..d.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = d.reaction_residual(&r, &u);
        let h = 1e-6;
        for i in [0, 7, 20] {
            let mut up = u.clone();
            up[i] += h;
            let mut um = u.clone();
            um[i] -= h;
            let fd = (d.quartic_energy(&r, &up) - d.quartic_energy(&r, &um)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_mass_integrates_length() {
        let d = disc(8, None);
        let ones = vec![1.0; d.n()];
        assert!((d.sigma_mass().bilinear(&ones, &ones) - 1.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let u: Vec<f64> = (0..d.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(d.sigma_mass().bilinear(&u, &u) >= 0.0);
        }
    }

    #[test]
    fn sigma_mass_single_edge() {
        let d = disc(4, None);
        let mut labels = d.labels().clone();
        labels.sigma_edges.truncate(1);
        let m = assemble_sigma_mass(d.mesh(), &labels);
        let [a, b] = d.mesh().boundary_edges()[labels.sigma_edges[0]].nodes;
        let mut u = vec![0.0; d.n()];
        u[a] = 1.0;
        u[b] = 1.0;
        assert!((m.bilinear(&u, &u) - 0.25).abs() < 1e-15);
        labels.sigma_edges.clear();
        assert!(assemble_sigma_mass(d.mesh(), &labels).values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ellipticity_transfers_to_stiffness() {
        let d = disc(8, Some([2.0, 0.5, 1.0]));
        let (lam, big) = (d.coefficients().lambda(), d.coefficients().big_lambda());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let delta = 0.05;
        for _ in 0..30 {
            let v: Vec<f64> = (0..d.n()).map(|_| rng.random()).collect();
            let w: Vec<f64> = (0..d.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = assemble_weighted_stiffness(&d, &v, delta).unwrap();
            let e = k.bilinear(&w, &w);
            let g = d.unweighted_stiffness().bilinear(&w, &w);
            assert!(lam * delta * g <= e * (1.0 + 1e-12));
            assert!(e <= big * g * (1.0 + 1e-12));
        }
    }

    #[test]
    fn stiffness_is_linear_in_conductivity() {
        let d = disc(5, None);
        let c: Vec<f64> = (0..d.mesh().n_cells()).map(|k| 0.1 + (k % 7) as f64 * 0.1).collect();
        let c3: Vec<f64> = c.iter().map(|x| 3.0 * x).collect();
        let k = d.stiffness(&c);
        let k3 = d.stiffness(&c3);
        for (a, b) in k.values().iter().zip(k3.values()) {
            assert!((3.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn quartic_increment_matches_difference() {
        let d = disc(8, None);
        let r: Vec<f64> = (0..d.mesh().n_cells()).map(|c| 0.2 + (c % 5) as f64 * 0.1).collect();
        let u: Vec<f64> = (0..d.n()).map(|k| 0.3 + 0.01 * k as f64).collect();
        let dir: Vec<f64> = (0..d.n()).map(|k| ((k * 7) % 11) as f64 / 11.0 - 0.5).collect();
        for s in [1.0, 0.25, 1e-3] {
            let moved: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            let direct = d.quartic_energy(&r, &moved) - d.quartic_energy(&r, &u);
            let (inc, mag) = d.quartic_increment(&r, &u, &dir, s);
            assert!((inc - direct).abs() <= 1e-12 * mag.max(1e-300), "{inc} vs {direct}");
        }
    }

    #[test]
    fn load_of_constant_integrates() {
        let d = disc(8, None);
        let f = SourceField::constant(d.mesh(), 8.0);
        let load = d.load(&f, None);
        assert!((load.iter().sum::<f64>() - 8.0).abs() < 1e-12);
        let ones = vec![1.0; d.n()];
        assert!((dot(&ones, &load) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn plateau_respects_omega2() {
        let d = disc(8, None);
        let support = Rect::new(0.25, 0.0, 0.75, 0.25).unwrap();
        let f = SourceField::plateau(d.mesh(), d.labels(), 2.0, support).unwrap();
        assert!(f.values().contains(&2.0));
        assert!((f.integral(d.mesh()) - 2.0 * support.area()).abs() < 1e-14);
        for (c, &x) in f.values().iter().enumerate() {
            if x > 0.0 {
                assert!(support.contains(d.mesh().cells()[c].centroid, 0.2));
            }
        }
        let load = d.load(&f, None);
        assert!((load.iter().sum::<f64>() - 2.0 * support.area()).abs() < 1e-14);
        assert!(SourceField::plateau(d.mesh(), d.labels(), 1.0, Rect::new(0.0, 0.0, 1.0, 0.5).unwrap()).is_err());
        assert!(SourceField::plateau(d.mesh(), d.labels(), -1.0, Rect::new(0.0, 0.0, 1.0, 0.1).unwrap()).is_err());
    }
}
