//! Pseudospectral toolkit for balanced metrics with prescribed volume form on complex tori.
//!
//! For a constant balanced metric `ω₀` on `T^n = C^n / (2πZ)^{2n}` the crate
//! looks for real `(n−2,n−2)`-forms `φ` with
//!
//! ```text
//! det(ω₀^{n−1} + (√-1/2) ∂∂̄φ) = e^{(n−1)f} · (∫ω^n / ∫ω₀^n)^{n−1} · det ω₀^{n−1}
//! ```
//!
//! Layers, bottom to top:
//!
//! - [`torus`]: grids with dimension reduction, Wirtinger derivatives, integrals,
//!   inverse Laplacians.
//! - [`forms`]: hermitian metric fields, the `(n−1,n−1)` coefficient dictionary,
//!   `∂∂̄` on `(n−2,n−2)`-forms, `‖Ω‖_ω` and the hermitian Ricci form.
//! - [`construction`]: explicit Ricci-flat balanced metrics with any `‖Ω‖_ω > 1`.
//! - [`solver`]: the map `M`, its linearization on `u η^{n−2}`, and a Newton–Krylov
//!   continuation solver.
//! - [`verify`]: the identity suite, exterior-algebra oracle and reports.
//! - [`fdf`]: the binary field dump format.

pub mod construction;
pub mod error;
pub mod fdf;
pub mod forms;
pub mod solver;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
