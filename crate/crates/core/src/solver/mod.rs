//! The map `M(ψ) = log(ω_ψ^n/ω₀^n) − log(∫ω_ψ^n / V)` on the ansatz
//! `ψ = u η^{n−2}`, its linearization `L`, and a Newton–Krylov solver.

mod krylov;
mod newton;
mod operator;
mod state;

pub use krylov::{gmres, GmresConfig, GmresOutcome};
pub use newton::{
    convergence_order, kernel_margin, newton_solve, newton_solve_from, openness_sweep, solve_l,
    solve_l_adjoint, solve_l_from, LinearConfig, LinearSolve, MarginReport, NewtonConfig,
    NewtonOutcome, OpennessReport, StageReport, SweepEntry,
};
pub use operator::{
    apply_l, apply_l_adjoint, bilinear_a, g_density, linearize_g, m_map, m_map_at, volume_pairing,
};
pub use state::{ansatz_form, ansatz_hermitian, AnsatzState, Background, SourceTerm};
