//! P1 finite elements: sparse storage, conjugate gradients and assembly.

mod assembly;
mod cg;
mod sparse;

pub use assembly::{
    a_delta, assemble_reaction_jacobian, assemble_reaction_residual, assemble_sigma_mass,
    assemble_weighted_stiffness, lumped_mass, CellWeights, CoefficientField, Discretization, SourceField, Sym2,
};
pub use cg::{solve_spd, solve_spd_from, CgSolution};
pub use sparse::{CsrMatrix, Pattern};
