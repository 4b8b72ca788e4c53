use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidArgument(format!(
                "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn unit() -> Self {
        Self {
            x0: T::zero(),
            y0: T::zero(),
            x1: T::one(),
            y1: T::one(),
        }
    }

    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Closed containment with absolute slack `tol`.
    pub fn contains(&self, p: [T; 2], tol: T) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }

    pub fn contains_rect(&self, other: &Rect<T>, tol: T) -> bool {
        self.contains([other.x0, other.y0], tol) && self.contains([other.x1, other.y1], tol)
    }

    /// Euclidean distance from `p` to the closed rectangle (zero inside).
    pub fn distance_to(&self, p: [T; 2]) -> T {
        let dx = (self.x0 - p[0]).max(p[0] - self.x1).max(T::zero());
        let dy = (self.y0 - p[1]).max(p[1] - self.y1).max(T::zero());
        dx.hypot(dy)
    }

    pub fn corners(&self) -> [[T; 2]; 4] {
        [
            [self.x0, self.y0],
            [self.x1, self.y0],
            [self.x1, self.y1],
            [self.x0, self.y1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMarker {
    Sigma,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: EdgeMarker,
}

/// Structured-grid provenance of a mesh built by [`build_structured_mesh`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect<T>,
}

impl<T: Real> Grid<T> {
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn dx(&self) -> T {
        self.rect.width() / T::of(self.nx)
    }

    pub fn dy(&self) -> T {
        self.rect.height() / T::of(self.ny)
    }
}

/// Per-triangle geometric data, computed once at mesh construction.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry<T> {
    pub area: T,
    /// Constant gradients of the three P1 hat functions.
    pub grads: [[T; 2]; 3],
    pub centroid: [T; 2],
    pub circumradius: T,
}

/// Conforming triangulation of a polygonal domain.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    nodes: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    /// Triangle owning each boundary edge.
    boundary_cells: Vec<usize>,
    n_edges: usize,
    h: T,
    id: String,
    grid: Option<Grid<T>>,
    cells: Vec<CellGeometry<T>>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Real> Mesh<T> {
    /// Validates and assembles a mesh from raw parts.
    ///
    /// Triangles must be counter-clockwise with positive area, every edge must be
    /// shared by at most two triangles, and `boundary_edges` must list exactly the
    /// edges that belong to a single triangle.
    pub fn from_parts(
        nodes: Vec<[T; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        id: impl Into<String>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let mut cells = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&k| k >= nodes.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            let cell = cell_geometry(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(cell.area > T::zero()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {}",
                    cell.area
                )));
            }
            cells.push(cell);
        }

        let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edge_cells.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        if let Some((e, _)) = edge_cells.iter().find(|(_, c)| c.len() > 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by more than two triangles")));
        }
        let n_boundary = edge_cells.values().filter(|c| c.len() == 1).count();
        if n_boundary != boundary_edges.len() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary edges listed, {} found",
                boundary_edges.len(),
                n_boundary
            )));
        }
        let mut boundary_cells = Vec::with_capacity(boundary_edges.len());
        for be in &boundary_edges {
            match edge_cells.get(&edge_key(be.nodes[0], be.nodes[1])) {
                Some(c) if c.len() == 1 => boundary_cells.push(c[0]),
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "listed boundary edge {:?} is not a boundary edge",
                        be.nodes
                    )))
                }
            }
        }

        let mut h = T::zero();
        for &(a, b) in edge_cells.keys() {
            h = h.max(dist(nodes[a], nodes[b]));
        }
        Ok(Self {
            n_edges: edge_cells.len(),
            nodes,
            triangles,
            boundary_edges,
            boundary_cells,
            h,
            id: id.into(),
            grid: None,
            cells,
        })
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Index of the triangle adjacent to boundary edge `e`.
    pub fn boundary_cell(&self, e: usize) -> usize {
        self.boundary_cells[e]
    }

    pub fn cells(&self) -> &[CellGeometry<T>] {
        &self.cells
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Maximum edge length.
    pub fn h(&self) -> T {
        self.h
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn grid(&self) -> Option<&Grid<T>> {
        self.grid.as_ref()
    }

    /// `V − E + (F + 1)`; equals 2 for a triangulated simply connected polygon.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_nodes() as i64 - self.n_edges as i64 + self.n_cells() as i64 + 1
    }

    pub fn total_area(&self) -> T {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn bounding_rect(&self) -> Rect<T> {
        let mut r = Rect {
            x0: T::infinity(),
            y0: T::infinity(),
            x1: T::neg_infinity(),
            y1: T::neg_infinity(),
        };
        for p in &self.nodes {
            r.x0 = r.x0.min(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.x1 = r.x1.max(p[0]);
            r.y1 = r.y1.max(p[1]);
        }
        r
    }

    /// True when no triangle has an angle above 90° (up to `tol` in the cosine).
    pub fn is_nonobtuse(&self, tol: T) -> bool {
        self.triangles.iter().all(|tri| {
            (0..3).all(|k| {
                let a = self.nodes[tri[k]];
                let b = self.nodes[tri[(k + 1) % 3]];
                let c = self.nodes[tri[(k + 2) % 3]];
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (dist(a, b) * dist(a, c));
                cos >= -tol
            })
        })
    }

    /// Copy of the mesh with boundary markers replaced: edges in `sigma_edges` become Σ.
    pub fn with_sigma_markers(&self, sigma_edges: &[usize]) -> Self {
        let mut out = self.clone();
        for e in &mut out.boundary_edges {
            e.marker = EdgeMarker::Wall;
        }
        for &e in sigma_edges {
            out.boundary_edges[e].marker = EdgeMarker::Sigma;
        }
        out
    }

    /// Node-to-node adjacency (sorted, without the node itself).
    pub fn node_neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for tri in &self.triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        adj[tri[a]].push(tri[b]);
                    }
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }
}

pub(crate) fn dist<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cell_geometry<T: Real>(p0: [T; 2], p1: [T; 2], p2: [T; 2]) -> CellGeometry<T> {
    let two = T::lit(2.0);
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let area = det / two;
    let grads = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    let three = T::lit(3.0);
    let centroid = [(p0[0] + p1[0] + p2[0]) / three, (p0[1] + p1[1] + p2[1]) / three];
    let circumradius = dist(p0, p1) * dist(p1, p2) * dist(p2, p0) / (T::lit(4.0) * area.abs());
    CellGeometry {
        area,
        grads,
        centroid,
        circumradius,
    }
}

/// Structured right-triangle mesh of `rect` with `nx × ny` cells, each split along
/// its lower-left to upper-right diagonal.
pub fn build_structured_mesh<T: Real>(nx: usize, ny: usize, rect: Rect<T>) -> Result<Mesh<T>> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!("grid {nx}x{ny}: need at least 2 cells per side")));
    }
    let grid = Grid { nx, ny, rect };
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // Snap the last row/column to the rectangle to avoid drift.
            let x = if i == nx { rect.x1 } else { rect.x0 + T::of(i) * dx };
            let y = if j == ny { rect.y1 } else { rect.y0 + T::of(j) * dy };
            nodes.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let n00 = grid.node(i, j);
            let n10 = grid.node(i + 1, j);
            let n11 = grid.node(i + 1, j + 1);
            let n01 = grid.node(i, j + 1);
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }
    // Counter-clockwise walk: bottom, right, top, left.
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    let wall = |a, b| BoundaryEdge {
        nodes: [a, b],
        marker: EdgeMarker::Wall,
    };
    for i in 0..nx {
        boundary_edges.push(wall(grid.node(i, 0), grid.node(i + 1, 0)));
    }
    for j in 0..ny {
        boundary_edges.push(wall(grid.node(nx, j), grid.node(nx, j + 1)));
    }
    for i in (0..nx).rev() {
        boundary_edges.push(wall(grid.node(i + 1, ny), grid.node(i, ny)));
    }
    for j in (0..ny).rev() {
        boundary_edges.push(wall(grid.node(0, j + 1), grid.node(0, j)));
    }
    let id = format!(
        "structured-{nx}x{ny}-[{},{}]x[{},{}]",
        rect.x0, rect.x1, rect.y0, rect.y1
    );
    let mut mesh = Mesh::from_parts(nodes, triangles, boundary_edges, id)?;
    mesh.grid = Some(grid);
    Ok(mesh)
}

/// On-disk mesh layout.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeshFile {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<(usize, usize, EdgeMarker)>,
}

impl<T: Real> Mesh<T> {
    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            nodes: self.nodes.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect(),
            triangles: self.triangles.clone(),
            boundary_edges: self
                .boundary_edges
                .iter()
                .map(|e| (e.nodes[0], e.nodes[1], e.marker))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_file(file: MeshFile, id: impl Into<String>) -> Result<Self> {
        let nodes = file.nodes.iter().map(|p| [T::lit(p[0]), T::lit(p[1])]).collect();
        let edges = file
            .boundary_edges
            .iter()
            .map(|&(a, b, marker)| BoundaryEdge { nodes: [a, b], marker })
            .collect();
        Mesh::from_parts(nodes, file.triangles, edges, id)
    }

    pub fn from_json(text: &str, id: impl Into<String>) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?, id)
    }
}
