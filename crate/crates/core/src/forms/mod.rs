//! Hermitian metric fields and the `(n−1,n−1)` coefficient dictionary.

mod hermitian;
pub mod linalg;
mod n2;
mod ops;

pub use hermitian::{HermitianField, MetricField, Positivity, PsiField, HERMITIAN_TOL};
pub use linalg::CMatrix;
pub use n2::{
    basis_monomial, ddbar_to_hermitian, permutation_sign, reality_factor, sign_s, FormN2,
};
pub(crate) use n2::{ddbar_to_hermitian_with, KernelConventions};
pub use ops::{
    amgm_evaluate, amgm_report, first_nonpositive, normalize_to_identity, omega_norm_sq, perturb,
    power_map, ricci_hermitian, root_extract, volume_form_integral, AmgmReport, AmgmVerdict,
    HolomorphicVolume,
};
