//! Set metrics on cell sets, interface diagnostics, studies and randomized operator certificates.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{a_delta, CellWeights, Discretization, SourceField};
use crate::forward::{solve_cavity_reference, NewtonOptions};
use crate::geometry::{dist, CavityShape, Mesh};
use crate::phase_field::cell_means;
use crate::scalar::{dot, Real};

pub use crate::objective::{gl_energy, misfit, trace_distance};

/// A set of cells, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetOnMesh {
    cells: Vec<usize>,
}

/// Directed boundary segment of a cell set; the set lies to its left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundarySegment {
    pub nodes: [usize; 2],
    /// Segment lies on ∂Ω.
    pub on_domain_boundary: bool,
}

impl SetOnMesh {
    pub fn new<T: Real>(mesh: &Mesh<T>, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut cells: Vec<usize> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        if cells.last().is_some_and(|&c| c >= mesh.n_cells()) {
            return Err(Error::ShapeMismatch("cell index out of range".into()));
        }
        Ok(Self { cells })
    }

    pub fn empty() -> Self {
        Self { cells: Vec::new() }
    }

    /// Cells whose centroid lies inside `shape`.
    pub fn from_shape<T: Real>(mesh: &Mesh<T>, shape: &CavityShape<T>) -> Self {
        let cells = mesh
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, c)| shape.contains(c.centroid))
            .map(|(k, _)| k)
            .collect();
        Self { cells }
    }

    /// Cells with mean phase value below ½.
    pub fn from_phase<T: Real>(mesh: &Mesh<T>, v: &[T]) -> Self {
        let cells = cell_means(mesh, v)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m < T::lit(0.5))
            .map(|(k, _)| k)
            .collect();
        Self { cells }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn area<T: Real>(&self, mesh: &Mesh<T>) -> T {
        self.cells.iter().fold(T::zero(), |a, &c| a + mesh.cells()[c].area)
    }

    /// Complement relative to all cells of `mesh`.
    pub fn complement<T: Real>(&self, mesh: &Mesh<T>) -> Self {
        Self {
            cells: (0..mesh.n_cells()).filter(|&c| !self.contains(c)).collect(),
        }
    }

    pub fn boundary_segments<T: Real>(&self, mesh: &Mesh<T>) -> Vec<BoundarySegment> {
        let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (c, t) in mesh.triangles().iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edge_cells.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }
        let mut out = Vec::new();
        for &c in &self.cells {
            let t = mesh.triangles()[c];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let owners = &edge_cells[&(a.min(b), a.max(b))];
                let other = owners.iter().find(|&&o| o != c);
                match other {
                    None => out.push(BoundarySegment {
                        nodes: [a, b],
                        on_domain_boundary: true,
                    }),
                    Some(&o) if !self.contains(o) => out.push(BoundarySegment {
                        nodes: [a, b],
                        on_domain_boundary: false,
                    }),
                    Some(_) => {}
                }
            }
        }
        out
    }

    /// Closed boundary loops (first point repeated at the end), including ∂Ω parts.
    pub fn polylines<T: Real>(&self, mesh: &Mesh<T>) -> Vec<Vec<[T; 2]>> {
        let mut segs: Vec<[usize; 2]> = self.boundary_segments(mesh).into_iter().map(|s| s.nodes).collect();
        segs.sort_unstable();
        let mut by_start: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, s) in segs.iter().enumerate() {
            by_start.entry(s[0]).or_default().push(i);
        }
        let mut used = vec![false; segs.len()];
        let mut loops = Vec::new();
        for first in 0..segs.len() {
            if used[first] {
                continue;
            }
            used[first] = true;
            let start = segs[first][0];
            let mut pts = vec![mesh.nodes()[start]];
            let mut at = segs[first][1];
            while at != start {
                pts.push(mesh.nodes()[at]);
                let next = by_start[&at].iter().copied().find(|&i| !used[i]).expect("boundary loops are closed");
                used[next] = true;
                at = segs[next][1];
            }
            pts.push(mesh.nodes()[start]);
            loops.push(pts);
        }
        loops
    }

    fn boundary_vertices<T: Real>(&self, mesh: &Mesh<T>) -> Vec<[T; 2]> {
        let mut nodes: Vec<usize> = self.boundary_segments(mesh).iter().flat_map(|s| s.nodes).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes.into_iter().map(|k| mesh.nodes()[k]).collect()
    }
}

/// Length of the set boundary inside Ω (segments on ∂Ω excluded).
pub fn tv_perimeter<T: Real>(mesh: &Mesh<T>, set: &SetOnMesh) -> T {
    set.boundary_segments(mesh)
        .iter()
        .filter(|s| !s.on_domain_boundary)
        .map(|s| dist(mesh.nodes()[s.nodes[0]], mesh.nodes()[s.nodes[1]]))
        .sum()
}

/// Hausdorff distance between the boundary vertex sets; 0 for two empty sets, ∞ if one is empty.
pub fn hausdorff<T: Real>(mesh: &Mesh<T>, a: &SetOnMesh, b: &SetOnMesh) -> T {
    let pa = a.boundary_vertices(mesh);
    let pb = b.boundary_vertices(mesh);
    match (pa.is_empty(), pb.is_empty()) {
        (true, true) => return T::zero(),
        (true, false) | (false, true) => return T::infinity(),
        _ => {}
    }
    let directed = |x: &[[T; 2]], y: &[[T; 2]]| {
        x.iter()
            .map(|&p| y.iter().map(|&q| dist(p, q)).fold(T::infinity(), T::min))
            .fold(T::zero(), T::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

/// |A △ B|, summed in cell order so the result is exactly symmetric.
pub fn symmetric_difference_area<T: Real>(mesh: &Mesh<T>, a: &SetOnMesh, b: &SetOnMesh) -> T {
    (0..mesh.n_cells())
        .filter(|&c| a.contains(c) != b.contains(c))
        .fold(T::zero(), |acc, c| acc + mesh.cells()[c].area)
}

/// Median length of the 0.1 → 0.9 transitions of `v` along the grid lines of a structured mesh.
pub fn interface_width<T: Real>(mesh: &Mesh<T>, v: &[T]) -> Option<T> {
    let grid = mesh.grid()?;
    let (lo, hi) = (T::lit(0.1), T::lit(0.9));
    let mut widths = Vec::new();
    let mut scan = |line: Vec<usize>, coord: usize| {
        let mut crossings: Vec<(T, bool)> = Vec::new();
        for w in line.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (va, vb) = (v[a], v[b]);
            let (xa, xb) = (mesh.nodes()[a][coord], mesh.nodes()[b][coord]);
            let mut here: Vec<(T, bool)> = Vec::new();
            for (level, is_hi) in [(lo, false), (hi, true)] {
                if (va < level) != (vb < level) {
                    let t = (level - va) / (vb - va);
                    here.push((xa + t * (xb - xa), is_hi));
                }
            }
            here.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
            crossings.extend(here);
        }
        for w in crossings.windows(2) {
            if w[0].1 != w[1].1 {
                widths.push((w[1].0 - w[0].0).abs());
            }
        }
    };
    for j in 0..=grid.ny {
        scan((0..=grid.nx).map(|i| grid.node(i, j)).collect(), 0);
    }
    for i in 0..=grid.nx {
        scan((0..=grid.ny).map(|j| grid.node(i, j)).collect(), 1);
    }
    if widths.is_empty() {
        return None;
    }
    widths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = widths.len();
    Some(if m % 2 == 1 {
        widths[m / 2]
    } else {
        (widths[m / 2 - 1] + widths[m / 2]) / T::lit(2.0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaccioppoliReport {
    pub center: [f64; 2],
    pub radius: f64,
    /// ∫_{B_R} w|∇u|².
    pub lhs: f64,
    /// ∫_{B_2R} w u².
    pub rhs: f64,
    /// lhs·R²/rhs, or 0 when both vanish.
    pub ratio: f64,
    /// 8ΛC²/λ² with C = 2.
    pub bound: f64,
    /// Both integrals vanished.
    pub degenerate: bool,
    pub pass: bool,
}

/// Cutoff-gradient constant in the Caccioppoli bound.
pub const CACCIOPPOLI_CUTOFF: f64 = 2.0;

/// Weighted Caccioppoli ratio with cells assigned to a ball by their centroid.
///
/// Requires every cell whose centroid lies in `B_2R(center)` to have mean phase below ½.
pub fn caccioppoli_check<T: Real>(
    disc: &Discretization<T>,
    u: &[T],
    v: &[T],
    delta: T,
    center: [T; 2],
    radius: T,
) -> Result<CaccioppoliReport> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidArgument("ball radius must be positive".into()));
    }
    let mesh = disc.mesh();
    let vbar = cell_means(mesh, v);
    let grad = disc.cell_gradient_sq(u);
    let mass = disc.cell_mass_sq(u);
    let two_r = T::lit(2.0) * radius;
    let (mut lhs, mut rhs) = (T::zero(), T::zero());
    for (c, cell) in mesh.cells().iter().enumerate() {
        let d = dist(cell.centroid, center);
        if d > two_r {
            continue;
        }
        if vbar[c] >= T::lit(0.5) {
            return Err(Error::InvalidArgument(format!(
                "cell {c} in the doubled ball is outside the cavity region"
            )));
        }
        let w = a_delta(vbar[c], delta);
        rhs += w * mass[c];
        if d <= radius {
            lhs += w * grad[c];
        }
    }
    let coeff = disc.coefficients();
    let bound = 8.0 * coeff.big_lambda().as_f64() * CACCIOPPOLI_CUTOFF.powi(2) / coeff.lambda().as_f64().powi(2);
    let degenerate = rhs == T::zero() && lhs == T::zero();
    let ratio = if degenerate {
        0.0
    } else {
        (lhs * radius * radius / rhs).as_f64()
    };
    Ok(CaccioppoliReport {
        center: [center[0].as_f64(), center[1].as_f64()],
        radius: radius.as_f64(),
        lhs: lhs.as_f64(),
        rhs: rhs.as_f64(),
        ratio,
        bound,
        degenerate,
        pass: ratio <= bound,
    })
}

/// Up to `count` balls `(center, R)` with `B_2R` inside the cell set, largest first.
///
/// Centers are cell centroids; `2R` is the distance to the nearest centroid outside the set
/// minus one cell diameter. Chosen centers are at least `R` apart.
pub fn cavity_balls<T: Real>(mesh: &Mesh<T>, set: &SetOnMesh, count: usize) -> Vec<([T; 2], T)> {
    let outside: Vec<[T; 2]> = set.complement(mesh).cells().iter().map(|&c| mesh.cells()[c].centroid).collect();
    let mut cand: Vec<([T; 2], T)> = set
        .cells()
        .iter()
        .map(|&c| {
            let p = mesh.cells()[c].centroid;
            let d = outside.iter().map(|&q| dist(p, q)).fold(T::infinity(), T::min);
            (p, (d - mesh.h()) / T::lit(2.0))
        })
        .filter(|(_, r)| *r > T::zero())
        .collect();
    cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0[0].partial_cmp(&b.0[0]).unwrap()));
    let mut out: Vec<([T; 2], T)> = Vec::new();
    for (p, r) in cand {
        if out.len() == count {
            break;
        }
        if out.iter().all(|(q, rq)| dist(p, *q) >= r.max(*rq)) {
            out.push((p, r));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub parameter: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStabilityReport {
    pub rows: Vec<StudyRow>,
    pub ratios: Vec<f64>,
    /// Errors at or below this are treated as solver floor.
    pub floor: f64,
    pub max_ratio: f64,
    pub strictly_decreasing: bool,
    pub pass: bool,
}

/// Trace errors of reference solves for `family` against `limit`.
///
/// `parameters` label the rows (e.g. the radius offset). Decrease is required with each ratio at
/// most `max_ratio` until the error reaches the floor.
pub fn trace_stability_study<T: Real>(
    disc: &Discretization<T>,
    f: &SourceField<T>,
    newton: &NewtonOptions<T>,
    limit: &CavityShape<T>,
    family: &[(f64, CavityShape<T>)],
    max_ratio: f64,
) -> Result<TraceStabilityReport> {
    let reference = solve_cavity_reference(disc, limit, f, newton)?.trace(disc);
    let errors: Vec<Result<f64>> = family
        .par_iter()
        .map(|(_, shape)| {
            let s = solve_cavity_reference(disc, shape, f, newton)?;
            Ok(trace_distance(disc, &s.trace(disc), &reference).as_f64())
        })
        .collect();
    let errors = errors.into_iter().collect::<Result<Vec<f64>>>()?;
    let scale = trace_distance(disc, &reference, &vec![T::zero(); reference.len()]).as_f64();
    let floor = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let rows: Vec<StudyRow> = family
        .iter()
        .zip(&errors)
        .map(|((p, _), &e)| StudyRow { parameter: *p, value: e })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let mut pass = true;
    let mut strictly = true;
    for w in errors.windows(2) {
        if w[0] <= floor {
            break;
        }
        if !(w[1] < w[0]) {
            strictly = false;
        }
        if !(w[1] <= floor || w[1] / w[0] <= max_ratio) {
            pass = false;
        }
    }
    Ok(TraceStabilityReport {
        rows,
        ratios,
        floor,
        max_ratio,
        strictly_decreasing: strictly,
        pass: pass && strictly,
    })
}

/// Disks of radius `r + h0/2ⁿ`, n = 0..levels, labelled by the radius offset.
pub fn disk_family<T: Real>(center: [T; 2], r: T, h0: T, levels: usize) -> Result<Vec<(f64, CavityShape<T>)>> {
    (0..levels)
        .map(|n| {
            let dr = h0 / T::lit(2f64.powi(n as i32));
            Ok((dr.as_f64(), CavityShape::disk(center, r + dr)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistinguishabilityReport {
    pub trace_gap: f64,
    /// η·max|trace_A|·√|Σ|, the L²(Σ) size of the noise model.
    pub noise_floor: f64,
    pub solver_floor: f64,
    /// Hausdorff distance between boundary samples of the two shapes.
    pub shape_distance: f64,
    pub separated: bool,
    pub distinguishable_at_noise: bool,
    pub pass: bool,
}

/// Trace gap between two cavities compared with the noise level η.
pub fn distinguishability_study<T: Real>(
    disc: &Discretization<T>,
    f: &SourceField<T>,
    newton: &NewtonOptions<T>,
    a: &CavityShape<T>,
    b: &CavityShape<T>,
    eta: f64,
) -> Result<DistinguishabilityReport> {
    let sa = solve_cavity_reference(disc, a, f, newton)?.trace(disc);
    let sb = solve_cavity_reference(disc, b, f, newton)?.trace(disc);
    let gap = trace_distance(disc, &sa, &sb).as_f64();
    let max_trace = sa.iter().map(|x| x.abs().as_f64()).fold(0.0, f64::max);
    let noise_floor = eta * max_trace * disc.labels().sigma_length().as_f64().sqrt();
    let solver_floor = 1e-6;
    let shape_distance = shape_hausdorff(a, b);
    let separated = gap > solver_floor;
    let h = disc.mesh().h().as_f64() / std::f64::consts::SQRT_2;
    Ok(DistinguishabilityReport {
        trace_gap: gap,
        noise_floor,
        solver_floor,
        shape_distance,
        separated,
        distinguishable_at_noise: gap > noise_floor.max(solver_floor),
        pass: separated || shape_distance < 2.0 * h,
    })
}

fn shape_hausdorff<T: Real>(a: &CavityShape<T>, b: &CavityShape<T>) -> f64 {
    let pa = a.boundary_samples(720);
    let pb = b.boundary_samples(720);
    if pa.is_empty() || pb.is_empty() {
        return if pa.is_empty() && pb.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let directed = |x: &[[T; 2]], y: &[[T; 2]]| {
        x.iter()
            .map(|&p| y.iter().map(|&q| dist(p, q).as_f64()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub trials: usize,
    /// min over pairs of (T(u) − T(w))·(u − w).
    pub monotonicity_min: f64,
    pub monotonicity_pass: bool,
    /// min over samples of T(u)·u − (λ'‖u‖²_{H¹} − λ'²|Ω|/(4r')); `None` when some cell has zero
    /// reaction weight, where no such bound holds.
    pub coercivity_min_slack: Option<f64>,
    /// True when the bound is not applicable.
    pub coercivity_pass: bool,
    pub pass: bool,
}

/// Randomized monotonicity and coercivity checks of `T(u) = K u + N(v, u)`.
pub fn operator_certificates<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    delta: T,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    let w = CellWeights::relaxed(disc.mesh(), v, delta)?;
    let k = disc.stiffness(&w.conductivity);
    let op = |u: &[T]| -> Vec<T> {
        let mut r = k.matvec(u);
        for (ri, ni) in r.iter_mut().zip(disc.reaction_residual(&w.reaction, u)) {
            *ri += ni;
        }
        r
    };
    let cmin = w.conductivity.iter().copied().fold(T::infinity(), T::min);
    let rmin = w.reaction.iter().copied().fold(T::infinity(), T::min);
    let lam = disc.coefficients().lambda() * cmin;
    let area = disc.mesh().total_area();
    let coercive = rmin > T::zero();
    let offset = if coercive {
        lam * lam * area / (T::lit(4.0) * rmin)
    } else {
        T::zero()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = disc.n();
    let random_field = |rng: &mut ChaCha8Rng| -> Vec<T> {
        let amp = 10f64.powf(rng.random_range(-2.0..1.0));
        (0..n).map(|_| T::lit(amp * rng.random_range(-1.0..1.0))).collect()
    };
    let mut mono = f64::INFINITY;
    let mut coer = f64::INFINITY;
    for _ in 0..trials {
        let u = random_field(&mut rng);
        let z = random_field(&mut rng);
        let tu = op(&u);
        let tz = op(&z);
        let du: Vec<T> = u.iter().zip(&z).map(|(&a, &b)| a - b).collect();
        let dt: Vec<T> = tu.iter().zip(&tz).map(|(&a, &b)| a - b).collect();
        mono = mono.min(dot(&dt, &du).as_f64());

        let h1 = disc.unweighted_stiffness().bilinear(&u, &u) + disc.mass().bilinear(&u, &u);
        let slack = dot(&tu, &u) - (lam * h1 - offset);
        coer = coer.min(slack.as_f64());
    }
    let monotonicity_pass = mono >= -1e-12;
    let coercivity_min_slack = coercive.then_some(coer);
    let coercivity_pass = coercivity_min_slack.is_none_or(|c| c >= -1e-10);
    Ok(CertificateReport {
        trials,
        monotonicity_min: mono,
        monotonicity_pass,
        coercivity_min_slack,
        coercivity_pass,
        pass: monotonicity_pass && coercivity_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::CoefficientField;
    use crate::geometry::{build_structured_mesh, mark_regions, Rect, RegionSpec, Side};

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

    fn square(mesh: &Mesh<f64>, x0: f64, y0: f64, s: f64) -> SetOnMesh {
        let sq = CavityShape::polygon(vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]).unwrap();
        SetOnMesh::from_shape(mesh, &sq)
    }

    #[test]
    fn square_perimeter_and_area() {
        let mesh = build_structured_mesh::<f64>(16, 16, Rect::unit()).unwrap();
        let s = square(&mesh, 0.25, 0.25, 0.5);
        assert!((tv_perimeter(&mesh, &s) - 2.0).abs() < 1e-12);
        assert!((s.area(&mesh) - 0.25).abs() < 1e-12);
        assert_eq!(tv_perimeter(&mesh, &SetOnMesh::empty()), 0.0);
        let loops = s.polylines(&mesh);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].first(), loops[0].last());
    }

    #[test]
    fn perimeter_of_complement_matches() {
        let mesh = build_structured_mesh::<f64>(16, 16, Rect::unit()).unwrap();
        let s = SetOnMesh::from_shape(&mesh, &CavityShape::disk([0.4, 0.55], 0.2).unwrap());
        let c = s.complement(&mesh);
        assert!((tv_perimeter(&mesh, &s) - tv_perimeter(&mesh, &c)).abs() < 1e-12);
    }

    #[test]
    fn disk_perimeter_staircase() {
        // Triangle staircases also zigzag along the off-diagonal direction, so the overestimate
        // stays near 1.4-1.5 rather than the 4/π of square pixels.
        let r = 0.2;
        let exact = 2.0 * std::f64::consts::PI * r;
        let ratio = |n| {
            let mesh = build_structured_mesh::<f64>(n, n, Rect::unit()).unwrap();
            let s = SetOnMesh::from_shape(&mesh, &CavityShape::disk([0.5, 0.5], r).unwrap());
            tv_perimeter(&mesh, &s) / exact
        };
        let (a, b) = (ratio(64), ratio(128));
        assert!(a > 1.0 && a < 1.5, "{a}");
        assert!(b > 1.0 && b < 1.5, "{b}");
        assert!((a - b).abs() < 0.1);
    }

    #[test]
    fn hausdorff_and_symmetric_difference() {
        let mesh = build_structured_mesh::<f64>(64, 64, Rect::unit()).unwrap();
        let h = 1.0 / 64.0;
        let a = SetOnMesh::from_shape(&mesh, &CavityShape::disk([0.5, 0.5], 0.15).unwrap());
        let b = SetOnMesh::from_shape(&mesh, &CavityShape::disk([0.5, 0.5], 0.25).unwrap());
        let d = hausdorff(&mesh, &a, &b);
        assert!((d - 0.1).abs() <= 2.0 * h, "{d}");
        assert_eq!(hausdorff(&mesh, &a, &a), 0.0);
        assert!((hausdorff(&mesh, &a, &b) - hausdorff(&mesh, &b, &a)).abs() < 1e-15);
        let annulus = std::f64::consts::PI * (0.25f64.powi(2) - 0.15f64.powi(2));
        let sd = symmetric_difference_area(&mesh, &a, &b);
        assert!((sd - annulus).abs() < 0.1 * annulus);
        assert_eq!(symmetric_difference_area(&mesh, &a, &a), 0.0);
    }

    #[test]
    fn singleton_cells_hausdorff() {
        let mesh = build_structured_mesh::<f64>(8, 8, Rect::unit()).unwrap();
        // Lower triangles of two cells three columns apart in one row.
        let a = SetOnMesh::new(&mesh, [2 * (8 * 2 + 1)]).unwrap();
        let b = SetOnMesh::new(&mesh, [2 * (8 * 2 + 4)]).unwrap();
        let d = dist(mesh.cells()[a.cells()[0]].centroid, mesh.cells()[b.cells()[0]].centroid);
        assert!((hausdorff(&mesh, &a, &b) - d).abs() < 1e-12);
        let sd = symmetric_difference_area(&mesh, &a, &b);
        assert!((sd - a.area(&mesh) - b.area(&mesh)).abs() < 1e-15);
    }

    #[test]
    fn width_of_linear_ramp() {
        let mesh = build_structured_mesh::<f64>(32, 32, Rect::unit()).unwrap();
        let v: Vec<f64> = mesh.nodes().iter().map(|p| ((p[0] - 0.3) / 0.4).clamp(0.0, 1.0)).collect();
        let w = interface_width(&mesh, &v).unwrap();
        assert!((w - 0.32).abs() < 1e-12);
        assert!(interface_width(&mesh, &vec![1.0; mesh.n_nodes()]).is_none());
    }

    #[test]
    fn caccioppoli_degenerate_and_constant() {
        let d = disc(32);
        let v: Vec<f64> = d
            .mesh()
            .nodes()
            .iter()
            .map(|p| if ((p[0] - 0.5).powi(2) + (p[1] - 0.6).powi(2)).sqrt() < 0.25 { 0.0 } else { 1.0 })
            .collect();
        let zero = caccioppoli_check(&d, &vec![0.0; d.n()], &v, 1e-3, [0.5, 0.6], 0.05).unwrap();
        assert!(zero.degenerate && zero.pass);
        let c = caccioppoli_check(&d, &vec![0.7; d.n()], &v, 1e-3, [0.5, 0.6], 0.05).unwrap();
        assert!(c.lhs.abs() < 1e-20 && c.pass);
        assert!((c.bound - 32.0).abs() < 1e-12);
        assert!(caccioppoli_check(&d, &vec![0.7; d.n()], &v, 1e-3, [0.5, 0.6], 0.2).is_err());
    }

    #[test]
    fn balls_fit_inside_set() {
        let mesh = build_structured_mesh::<f64>(32, 32, Rect::unit()).unwrap();
        let s = SetOnMesh::from_shape(&mesh, &CavityShape::disk([0.5, 0.5], 0.2).unwrap());
        let balls = cavity_balls(&mesh, &s, 3);
        assert!(!balls.is_empty());
        for (c, r) in balls {
            for (k, cell) in mesh.cells().iter().enumerate() {
                if dist(cell.centroid, c) <= 2.0 * r {
                    assert!(s.contains(k));
                }
            }
        }
    }

    #[test]
    fn certificates_pass_on_unit_phase() {
        let d = disc(16);
        let rep = operator_certificates(&d, &vec![1.0; d.n()], 1e-3, 30, 11).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.coercivity_min_slack.is_some());
    }

    #[test]
    fn coercivity_is_inapplicable_with_empty_cells() {
        let d = disc(16);
        let disk = CavityShape::disk([0.5, 0.5], 0.2).unwrap();
        let v = crate::geometry::rasterize_cavity(d.mesh(), d.labels(), &disk).unwrap();
        let rep = operator_certificates(&d, v.values(), 1e-3, 30, 11).unwrap();
        assert!(rep.monotonicity_pass);
        assert_eq!(rep.coercivity_min_slack, None);
    }
}
