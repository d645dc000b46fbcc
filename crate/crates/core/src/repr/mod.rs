//! Cylinder-function calculus on W(g), the Brownian, Gaussian-regular and
//! energy representations, and the checks that relate them.

pub mod checks;
pub mod cylinder;
pub mod operators;

pub use checks::{
    commutation_ladder, composition_ladder, cyclicity_residual, cyclicity_sequence, pullback_defect_ladder, verify_intertwining,
    CyclicityResult, ProbeFamily,
};
pub use cylinder::{CellRotation, CylinderExponential, CylinderFunctional, CylinderPolynomial, GroupCylinderFunction, HermiteTerm, HermiteVariable};
pub use operators::{brownian_rep_pullback, energy_rep, fw_inverse, fw_transform, gauss_regular_rep, involution_j, PhaseDerivative};
