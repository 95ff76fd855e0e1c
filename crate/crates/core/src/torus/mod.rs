//! Periodic grids on `T^n` and spectral calculus on them.

mod field;
mod geometry;
pub mod spectral;
mod trig;

pub use field::{ScalarField, REAL_TOL};
pub use geometry::TorusGeometry;
pub use spectral::{
    dd, ddbar, integrate, mean_zero_project, solve_dzdzbar, solve_dzdzbar_with_tol,
    apply_operator, solve_operator, wirtinger_d, wirtinger_dbar, DiffOperator, Multiplier, Spectrum, Wirtinger, DEFAULT_TOL,
};
pub use trig::TrigPoly;
