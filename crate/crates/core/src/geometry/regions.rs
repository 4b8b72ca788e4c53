use serde::{Deserialize, Serialize};

use super::mesh::{dist, Mesh, Rect};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Side of the rectangular domain, walked counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    /// Start point of the side and unit direction of increasing arc length.
    fn frame<T: Real>(self, r: &Rect<T>) -> ([T; 2], [T; 2]) {
        let (o, z) = (T::one(), T::zero());
        match self {
            Side::Bottom => ([r.x0, r.y0], [o, z]),
            Side::Right => ([r.x1, r.y0], [z, o]),
            Side::Top => ([r.x1, r.y1], [-o, z]),
            Side::Left => ([r.x0, r.y1], [z, -o]),
        }
    }

    pub fn length<T: Real>(self, r: &Rect<T>) -> T {
        match self {
            Side::Bottom | Side::Top => r.width(),
            Side::Left | Side::Right => r.height(),
        }
    }

    /// True when `p` lies on this side's supporting line.
    pub fn holds<T: Real>(self, r: &Rect<T>, p: [T; 2], tol: T) -> bool {
        match self {
            Side::Bottom => (p[1] - r.y0).abs() <= tol,
            Side::Top => (p[1] - r.y1).abs() <= tol,
            Side::Left => (p[0] - r.x0).abs() <= tol,
            Side::Right => (p[0] - r.x1).abs() <= tol,
        }
    }

    /// Arc-length coordinate of `p` measured from the side's start.
    pub fn arc<T: Real>(self, r: &Rect<T>, p: [T; 2]) -> T {
        let (o, d) = self.frame(r);
        (p[0] - o[0]) * d[0] + (p[1] - o[1]) * d[1]
    }

    /// Inward unit normal.
    pub fn inward<T: Real>(self) -> [T; 2] {
        let (o, z) = (T::one(), T::zero());
        match self {
            Side::Bottom => [z, o],
            Side::Right => [-o, z],
            Side::Top => [z, -o],
            Side::Left => [o, z],
        }
    }
}

/// Geometric description of Ω₁ ⊇ Ω₂ and the measurement arc Σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSpec<T> {
    pub omega1: Rect<T>,
    pub omega2: Rect<T>,
    pub sigma_side: Side,
    /// Arc-length interval on `sigma_side`.
    pub sigma_interval: [T; 2],
}

/// Cell, node and edge labels derived from a [`RegionSpec`] on a concrete mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabels<T> {
    pub omega1_cells: Vec<usize>,
    pub omega2_cells: Vec<usize>,
    pub omega1_nodes: Vec<usize>,
    /// Boundary-edge indices on Σ, ordered by arc length.
    pub sigma_edges: Vec<usize>,
    /// Σ nodes ordered by arc length.
    pub sigma_nodes: Vec<usize>,
    /// Arc-length coordinate of each entry of `sigma_nodes`, starting at zero.
    pub sigma_arc: Vec<T>,
    /// Conservative lower bound of dist(Ω₂, Ω∖Ω₁); infinite when Ω₁ covers Ω.
    pub d0: T,
    pub omega1_rect: Rect<T>,
    pub omega2_rect: Rect<T>,
    pub omega1_node_mask: Vec<bool>,
    pub omega2_node_mask: Vec<bool>,
}

impl<T: Real> RegionLabels<T> {
    pub fn sigma_length(&self) -> T {
        self.sigma_arc.last().copied().unwrap_or_else(T::zero)
    }

    pub fn is_frozen(&self, node: usize) -> bool {
        self.omega1_node_mask[node]
    }
}

/// Labels Ω₁, Ω₂ and Σ on `mesh`. A cell belongs to a rectangle when its centroid does.
pub fn mark_regions<T: Real>(mesh: &Mesh<T>, spec: &RegionSpec<T>) -> Result<RegionLabels<T>> {
    let domain = mesh.bounding_rect();
    let tol = mesh.h() * T::lit(1e-9);
    for (name, r) in [("omega1", &spec.omega1), ("omega2", &spec.omega2)] {
        if !domain.contains_rect(r, tol) {
            return Err(Error::InconsistentRegion(format!("{name} is not inside the domain")));
        }
    }

    let in_rect = |r: &Rect<T>| -> Vec<bool> {
        mesh.cells().iter().map(|c| r.contains(c.centroid, tol)).collect()
    };
    let in1 = in_rect(&spec.omega1);
    let in2 = in_rect(&spec.omega2);
    if in2.iter().zip(&in1).any(|(&a, &b)| a && !b) {
        return Err(Error::InconsistentRegion("omega2 is not contained in omega1".into()));
    }
    let omega1_cells: Vec<usize> = (0..mesh.n_cells()).filter(|&c| in1[c]).collect();
    let omega2_cells: Vec<usize> = (0..mesh.n_cells()).filter(|&c| in2[c]).collect();
    if omega2_cells.is_empty() {
        return Err(Error::InconsistentRegion("omega2 contains no cells".into()));
    }

    let mut omega1_node_mask = vec![false; mesh.n_nodes()];
    let mut omega2_node_mask = vec![false; mesh.n_nodes()];
    for (c, tri) in mesh.triangles().iter().enumerate() {
        for &k in tri {
            omega1_node_mask[k] |= in1[c];
            omega2_node_mask[k] |= in2[c];
        }
    }
    let omega1_nodes = (0..mesh.n_nodes()).filter(|&k| omega1_node_mask[k]).collect();

    // Σ: boundary edges on the requested side whose endpoints fall in the interval.
    let side = spec.sigma_side;
    let [s0, s1] = spec.sigma_interval;
    if !(s1 > s0) || s0 < -tol || s1 > side.length(&domain) + tol {
        return Err(Error::InconsistentRegion(format!(
            "sigma interval [{s0}, {s1}] is not a sub-interval of the {side:?} side"
        )));
    }
    let nodes = mesh.nodes();
    let mut sigma: Vec<(T, usize)> = Vec::new();
    for (e, be) in mesh.boundary_edges().iter().enumerate() {
        let (a, b) = (nodes[be.nodes[0]], nodes[be.nodes[1]]);
        if !(side.holds(&domain, a, tol) && side.holds(&domain, b, tol)) {
            continue;
        }
        let (sa, sb) = (side.arc(&domain, a), side.arc(&domain, b));
        if sa.min(sb) >= s0 - tol && sa.max(sb) <= s1 + tol {
            sigma.push((sa.min(sb), e));
        }
    }
    if sigma.is_empty() {
        return Err(Error::InconsistentRegion("sigma contains no mesh edges".into()));
    }
    sigma.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let sigma_edges: Vec<usize> = sigma.iter().map(|&(_, e)| e).collect();

    // Order the Σ nodes along the arc and check the chain is connected.
    let mut sigma_nodes = Vec::with_capacity(sigma_edges.len() + 1);
    let mut sigma_arc = Vec::with_capacity(sigma_edges.len() + 1);
    for (k, &e) in sigma_edges.iter().enumerate() {
        let [a, b] = mesh.boundary_edges()[e].nodes;
        let (first, second) = if side.arc(&domain, nodes[a]) <= side.arc(&domain, nodes[b]) {
            (a, b)
        } else {
            (b, a)
        };
        if k == 0 {
            sigma_nodes.push(first);
            sigma_arc.push(T::zero());
        } else if *sigma_nodes.last().unwrap() != first {
            return Err(Error::InconsistentRegion("sigma is not a connected arc".into()));
        }
        let s = *sigma_arc.last().unwrap() + dist(nodes[first], nodes[second]);
        sigma_nodes.push(second);
        sigma_arc.push(s);
    }
    for &e in &sigma_edges {
        if !in2[mesh.boundary_cell(e)] {
            return Err(Error::InconsistentRegion(format!(
                "sigma edge {e} does not lie on the boundary of omega2"
            )));
        }
    }

    let d0 = separation(mesh, &in1, &in2);
    if !(d0 > T::zero()) {
        return Err(Error::InconsistentRegion(format!(
            "dist(omega2, domain minus omega1) bound is {d0}, must be positive"
        )));
    }

    Ok(RegionLabels {
        omega1_cells,
        omega2_cells,
        omega1_nodes,
        sigma_edges,
        sigma_nodes,
        sigma_arc,
        d0,
        omega1_rect: spec.omega1,
        omega2_rect: spec.omega2,
        omega1_node_mask,
        omega2_node_mask,
    })
}

/// min over Ω₂ cells c and non-Ω₁ cells c' of |centroid(c) − centroid(c')| − R(c) − R(c').
fn separation<T: Real>(mesh: &Mesh<T>, in1: &[bool], in2: &[bool]) -> T {
    let cells = mesh.cells();
    let outside: Vec<_> = cells.iter().zip(in1).filter(|(_, &i)| !i).map(|(c, _)| c).collect();
    let inner: Vec<_> = cells.iter().zip(in2).filter(|(_, &i)| i).map(|(c, _)| c).collect();
    let mut best = T::infinity();
    for a in &inner {
        for b in &outside {
            let d = dist(a.centroid, b.centroid) - a.circumradius - b.circumradius;
            if d < best {
                best = d;
            }
        }
    }
    best
}
