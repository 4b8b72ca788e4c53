use super::mesh::{Mesh, Rect};
use super::regions::{RegionLabels, Side};
use crate::error::{Error, Result};
use crate::phase_field::PhaseField;
use crate::scalar::Real;

/// Boundary samples used for containment and distance checks.
const BOUNDARY_SAMPLES: usize = 2048;

/// Ground-truth cavity used for synthesis and scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum CavityShape<T> {
    Empty,
    Disk {
        center: [T; 2],
        radius: T,
    },
    Ellipse {
        center: [T; 2],
        radii: [T; 2],
        /// Rotation of the first semi-axis, radians.
        angle: T,
    },
    /// Simple polygon, vertices in either orientation.
    Polygon { vertices: Vec<[T; 2]> },
    /// Half of a disk centred on a side of the domain, lying on the inner side.
    HalfDisk {
        center: [T; 2],
        radius: T,
        side: Side,
    },
}

impl<T: Real> CavityShape<T> {
    pub fn disk(center: [T; 2], radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument("disk radius must be positive".into()));
        }
        Ok(Self::Disk { center, radius })
    }

    pub fn ellipse(center: [T; 2], radii: [T; 2], angle: T) -> Result<Self> {
        if !(radii[0] > T::zero() && radii[1] > T::zero()) {
            return Err(Error::InvalidArgument("ellipse radii must be positive".into()));
        }
        Ok(Self::Ellipse { center, radii, angle })
    }

    pub fn polygon(vertices: Vec<[T; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("polygon needs at least 3 vertices".into()));
        }
        if !polygon_is_simple(&vertices) {
            return Err(Error::InvalidArgument("polygon is self-intersecting".into()));
        }
        if polygon_signed_area(&vertices).abs() <= T::epsilon() {
            return Err(Error::InvalidArgument("polygon has zero area".into()));
        }
        Ok(Self::Polygon { vertices })
    }

    pub fn half_disk(center: [T; 2], radius: T, side: Side) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument("half-disk radius must be positive".into()));
        }
        Ok(Self::HalfDisk { center, radius, side })
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Empty)
    }

    /// Strict interior test.
    pub fn contains(&self, p: [T; 2]) -> bool {
        match self {
            Self::Empty => false,
            Self::Disk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) < *radius
            }
            Self::Ellipse { center, radii, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let a = (c * dx + s * dy) / radii[0];
                let b = (-s * dx + c * dy) / radii[1];
                a * a + b * b < T::one()
            }
            Self::Polygon { vertices } => point_in_polygon(vertices, p),
            Self::HalfDisk { center, radius, side } => {
                let n = side.inward::<T>();
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx.hypot(dy) < *radius && dx * n[0] + dy * n[1] >= T::zero()
            }
        }
    }

    /// Exact area of the shape.
    pub fn area(&self) -> T {
        match self {
            Self::Empty => T::zero(),
            Self::Disk { radius, .. } => T::PI() * *radius * *radius,
            Self::Ellipse { radii, .. } => T::PI() * radii[0] * radii[1],
            Self::Polygon { vertices } => polygon_signed_area(vertices).abs(),
            Self::HalfDisk { radius, .. } => T::FRAC_PI_2() * *radius * *radius,
        }
    }

    /// Points on the shape boundary.
    pub fn boundary_samples(&self, n: usize) -> Vec<[T; 2]> {
        let angle = |k: usize, n: usize| T::TAU() * T::of(k) / T::of(n);
        match self {
            Self::Empty => Vec::new(),
            Self::Disk { center, radius } => (0..n)
                .map(|k| {
                    let (s, c) = angle(k, n).sin_cos();
                    [center[0] + *radius * c, center[1] + *radius * s]
                })
                .collect(),
            Self::Ellipse { center, radii, angle: rot } => {
                let (rs, rc) = rot.sin_cos();
                (0..n)
                    .map(|k| {
                        let (s, c) = angle(k, n).sin_cos();
                        let (a, b) = (radii[0] * c, radii[1] * s);
                        [center[0] + rc * a - rs * b, center[1] + rs * a + rc * b]
                    })
                    .collect()
            }
            Self::Polygon { vertices } => {
                let per_edge = (n / vertices.len()).max(2);
                let mut out = Vec::with_capacity(per_edge * vertices.len());
                for (k, &a) in vertices.iter().enumerate() {
                    let b = vertices[(k + 1) % vertices.len()];
                    for j in 0..per_edge {
                        let t = T::of(j) / T::of(per_edge);
                        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
                out
            }
            Self::HalfDisk { center, radius, side } => {
                let nrm = side.inward::<T>();
                let tangent = [-nrm[1], nrm[0]];
                let half = n / 2;
                let mut out = Vec::with_capacity(n + 1);
                for k in 0..=half {
                    let (s, c) = (T::PI() * T::of(k) / T::of(half)).sin_cos();
                    out.push([
                        center[0] + *radius * (c * tangent[0] + s * nrm[0]),
                        center[1] + *radius * (c * tangent[1] + s * nrm[1]),
                    ]);
                }
                for k in 1..half {
                    let t = T::lit(2.0) * T::of(k) / T::of(half) - T::one();
                    out.push([
                        center[0] + *radius * t * tangent[0],
                        center[1] + *radius * t * tangent[1],
                    ]);
                }
                out
            }
        }
    }

    /// Distance from the shape to the closed rectangle `r` (zero on overlap).
    pub fn distance_to_rect(&self, r: &Rect<T>) -> T {
        if self.is_empty() {
            return T::infinity();
        }
        if r.corners().iter().any(|&p| self.contains(p)) {
            return T::zero();
        }
        self.boundary_samples(BOUNDARY_SAMPLES)
            .into_iter()
            .map(|p| r.distance_to(p))
            .fold(T::infinity(), T::min)
    }

    /// Checks closure ⊂ domain and dist(shape, Ω̄₁) ≥ d0.
    pub fn validate(&self, domain: &Rect<T>, labels: &RegionLabels<T>) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let tol = T::lit(1e-9) * (domain.width() + domain.height());
        if self
            .boundary_samples(BOUNDARY_SAMPLES)
            .iter()
            .any(|&p| !domain.contains(p, tol))
        {
            return Err(Error::ConstraintViolation("cavity leaves the domain".into()));
        }
        let d = self.distance_to_rect(&labels.omega1_rect);
        if d < labels.d0 {
            return Err(Error::ConstraintViolation(format!(
                "cavity is {d} from omega1, below d0 = {}",
                labels.d0
            )));
        }
        Ok(())
    }
}

/// Nodal indicator of Ω∖D: 0 at nodes strictly inside the shape, 1 elsewhere.
pub fn rasterize_cavity<T: Real>(
    mesh: &Mesh<T>,
    labels: &RegionLabels<T>,
    shape: &CavityShape<T>,
) -> Result<PhaseField<T>> {
    shape.validate(&mesh.bounding_rect(), labels)?;
    let v = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if !labels.is_frozen(k) && shape.contains(p) {
                T::zero()
            } else {
                T::one()
            }
        })
        .collect();
    PhaseField::new(v, labels)
}

fn polygon_signed_area<T: Real>(v: &[[T; 2]]) -> T {
    let mut a = T::zero();
    for k in 0..v.len() {
        let (p, q) = (v[k], v[(k + 1) % v.len()]);
        a += p[0] * q[1] - q[0] * p[1];
    }
    a / T::lit(2.0)
}

fn point_in_polygon<T: Real>(v: &[[T; 2]], p: [T; 2]) -> bool {
    // Even-odd crossing count; points on an edge count as outside.
    let mut inside = false;
    let n = v.len();
    for k in 0..n {
        let (a, b) = (v[k], v[(k + 1) % n]);
        if on_segment(a, b, p) {
            return false;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn cross<T: Real>(o: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment<T: Real>(a: [T; 2], b: [T; 2], p: [T; 2]) -> bool {
    let scale = (b[0] - a[0]).abs() + (b[1] - a[1]).abs();
    cross(a, b, p).abs() <= T::lit(1e-12) * scale * scale
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2], d: [T; 2]) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > T::zero()) != (d2 > T::zero()))
        && ((d3 > T::zero()) != (d4 > T::zero()))
        && d1 != T::zero()
        && d2 != T::zero()
        && d3 != T::zero()
        && d4 != T::zero()
    {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

fn polygon_is_simple<T: Real>(v: &[[T; 2]]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_structured_mesh, mark_regions, RegionSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (Mesh<f64>, RegionLabels<f64>) {
        let mesh = build_structured_mesh(n, n, Rect::unit()).unwrap();
        let spec = RegionSpec {
            omega1: Rect::new(0.0, 0.0, 1.0, 0.25).unwrap(),
            omega2: Rect::new(0.0, 0.0, 1.0, 0.125).unwrap(),
            sigma_side: Side::Bottom,
            sigma_interval: [0.0, 1.0],
        };
        let labels = mark_regions(&mesh, &spec).unwrap();
        (mesh, labels)
    }

    #[test]
    fn empty_shape_gives_unit_field() {
        let (mesh, labels) = setup(8);
        let v = rasterize_cavity(&mesh, &labels, &CavityShape::Empty).unwrap();
        assert!(v.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn disk_raster_area_matches_monte_carlo() {
        let (mesh, labels) = setup(64);
        let shape = CavityShape::disk([0.5, 0.65], 0.2).unwrap();
        let v = rasterize_cavity(&mesh, &labels, &shape).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0 || x == 1.0));
        assert!(labels.omega1_nodes.iter().all(|&k| v.values()[k] == 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| shape.contains([rng.random::<f64>(), rng.random::<f64>()]))
            .count();
        let oracle = hits as f64 / n as f64;
        let raster: f64 = mesh
            .triangles()
            .iter()
            .zip(mesh.cells())
            .filter(|(t, _)| t.iter().map(|&k| v.values()[k]).sum::<f64>() / 3.0 < 0.5)
            .map(|(_, c)| c.area)
            .sum();
        assert!((raster - oracle).abs() / oracle < 0.05, "{raster} vs {oracle}");
    }

    #[test]
    fn disk_touching_omega1_is_rejected() {
        let (mesh, labels) = setup(16);
        let shape = CavityShape::disk([0.5, 0.35], 0.15).unwrap();
        assert!(matches!(
            rasterize_cavity(&mesh, &labels, &shape),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn shape_leaving_domain_is_rejected() {
        let (mesh, labels) = setup(16);
        let shape = CavityShape::disk([0.95, 0.7], 0.1).unwrap();
        assert!(rasterize_cavity(&mesh, &labels, &shape).is_err());
    }

    #[test]
    fn self_intersecting_polygon_rejected() {
        let bowtie = vec![[0.4, 0.5], [0.6, 0.7], [0.6, 0.5], [0.4, 0.7]];
        assert!(CavityShape::polygon(bowtie).is_err());
        let square = vec![[0.4, 0.5], [0.6, 0.5], [0.6, 0.7], [0.4, 0.7]];
        let s: CavityShape<f64> = CavityShape::polygon(square).unwrap();
        assert!((s.area() - 0.04).abs() < 1e-14);
        assert!(s.contains([0.5, 0.6]));
        assert!(!s.contains([0.4, 0.6]));
    }

    #[test]
    fn half_disk_contains_only_inner_half() {
        let s = CavityShape::half_disk([0.5, 1.0], 0.2, Side::Top).unwrap();
        assert!(s.contains([0.5, 0.9]));
        assert!(!s.contains([0.5, 1.05]));
        let (mesh, labels) = setup(16);
        assert!(s.validate(&mesh.bounding_rect(), &labels).is_ok());
    }

    #[test]
    fn rotated_ellipse_membership() {
        let s = CavityShape::ellipse([0.5, 0.5], [0.2, 0.05], std::f64::consts::FRAC_PI_2).unwrap();
        assert!(s.contains([0.5, 0.65]));
        assert!(!s.contains([0.65, 0.5]));
    }
}
