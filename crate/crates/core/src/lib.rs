//! Linear finite elements for `-div(A grad u) + u^3 = f` with natural boundary conditions, and
//! phase-field reconstruction of cavities from boundary traces.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the [`f64`-based aliases](F64Mesh)
//! below cover the common case.

// `!(x > 0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod error;
pub mod fem;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod phase_field;
pub mod scalar;
pub mod synth;

pub use adjoint::{gradient_fd_audit, reduced_gradient, solve_adjoint, AdjointSolution, AuditReport, GradientField};
pub use error::{Error, Result};
pub use fem::{CellWeights, CoefficientField, Discretization, SourceField};
pub use forward::{check_state_bounds, solve_cavity_reference, solve_state, NewtonOptions, StateSolution};
pub use geometry::{build_structured_mesh, mark_regions, CavityShape, Mesh, Rect, RegionLabels, RegionSpec, Side};
pub use objective::{ObjectiveParams, ReducedFunctional};
pub use optimizer::{minimize_fixed_epsilon, run_continuation, ContinuationSchedule, OptimizerOptions};
pub use phase_field::{project_admissible, PhaseField};
pub use scalar::Real;
pub use synth::{generate_measurement, MeasurementTrace};

pub type F64Mesh = Mesh<f64>;
pub type F64Discretization = Discretization<f64>;
pub type F64PhaseField = PhaseField<f64>;
pub type F64Shape = CavityShape<f64>;
pub type F64Trace = MeasurementTrace<f64>;

pub type F32Mesh = Mesh<f32>;
pub type F32Discretization = Discretization<f32>;
pub type F32PhaseField = PhaseField<f32>;
pub type F32Shape = CavityShape<f32>;
pub type F32Trace = MeasurementTrace<f32>;
