//! Rectangular domains, structured triangulations, region labels and cavity shapes.

mod mesh;
mod regions;
mod shapes;

pub use mesh::{
    build_structured_mesh, BoundaryEdge, CellGeometry, EdgeMarker, Grid, Mesh, MeshFile, Rect,
};
pub use regions::{mark_regions, RegionLabels, RegionSpec, Side};
pub use shapes::{rasterize_cavity, CavityShape};

pub(crate) use mesh::dist;
