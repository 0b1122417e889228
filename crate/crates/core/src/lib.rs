//! Numerical laboratory for the weighted semilinear heat equation
//! `∂ₜu − w⁻¹ div(w ∇u) = uᵖ` with power weights `w`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod evolve;
pub mod kernel;
pub mod lorentz;
pub mod profile;
pub mod quadrature;
pub mod regression;
pub mod semigroup;
pub mod weights;
