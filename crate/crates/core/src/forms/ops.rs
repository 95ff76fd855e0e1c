use num_complex::Complex64;

use super::hermitian::{HermitianField, MetricField, Positivity, PsiField};
use super::linalg::{self, CMatrix};
use crate::error::{Error, Result};
use crate::torus::{self, ScalarField};

/// `Ω = h dz_1∧…∧dz_n` with constant `h ≠ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolomorphicVolume {
    scale: Complex64,
}

impl HolomorphicVolume {
    pub fn new(scale: Complex64) -> Result<Self> {
        if scale.norm() == 0.0 || !scale.norm().is_finite() {
            return Err(Error::Parameter("holomorphic volume scale must be nonzero".into()));
        }
        Ok(Self { scale })
    }

    /// `dz_1∧…∧dz_n`.
    pub fn standard() -> Self {
        Self {
            scale: Complex64::new(1.0, 0.0),
        }
    }

    pub fn scale(&self) -> Complex64 {
        self.scale
    }

    /// Rescales `Ω` so that `‖Ω‖_ω = (∫ω^n)^{−1/2}` for a metric with constant
    /// `‖Ω‖_ω`. Returns `None` if the norm is not constant to `tol`.
    pub fn normalized_to_volume(&self, omega: &MetricField, tol: f64) -> Option<Self> {
        let norm_sq = omega_norm_sq(omega, self);
        let mean = norm_sq.mean().re;
        if (norm_sq.max_re() - norm_sq.min_re()) > tol * mean {
            return None;
        }
        let target = volume_form_integral(omega).powf(-0.5);
        let factor = target / mean.sqrt();
        Some(Self {
            scale: self.scale * factor,
        })
    }
}

/// `Ψ_{ij̄} = det(g) g^{ij̄}` with `(g^{ij̄})` the transposed inverse, i.e. the
/// signed-basis coefficients of `ω^{n−1}`.
pub fn power_map(omega: &MetricField) -> PsiField {
    let entries = omega
        .field()
        .entries()
        .iter()
        .map(|g| {
            let chol = linalg::cholesky(g).expect("metric is certified positive");
            linalg::spd_inverse(&chol).transpose() * Complex64::new(chol.det(), 0.0)
        })
        .collect();
    let field = HermitianField::new(omega.geometry().clone(), entries)
        .expect("power map preserves hermiticity");
    PsiField::new(field)
}

/// Inverse of [`power_map`]: `det g = (det Ψ)^{1/(n−1)}`, `g = det g · (Ψ^T)^{−1}`.
pub fn root_extract(psi: &PsiField) -> Result<MetricField> {
    let n = psi.geometry().n();
    let mut entries = Vec::with_capacity(psi.geometry().len());
    for (index, m) in psi.field().entries().iter().enumerate() {
        let chol = linalg::cholesky(m).map_err(|pivot| Error::NotPositive {
            index,
            coords: psi.geometry().coords(index),
            pivot,
        })?;
        let det_g = chol.det().powf(1.0 / (n as f64 - 1.0));
        entries.push(linalg::spd_inverse(&chol).transpose() * Complex64::new(det_g, 0.0));
    }
    MetricField::new(HermitianField::new(psi.geometry().clone(), entries)?)
}

/// `Ψ₀ + F`, tagged positive only where pointwise Cholesky succeeds.
pub fn perturb(psi0: &PsiField, f: &HermitianField) -> Result<PsiField> {
    Ok(PsiField::new(psi0.field().add(f)?))
}

/// `‖Ω‖²_ω = |h|² / det g`, normalized so that `g = I`, `h = 1` gives 1.
pub fn omega_norm_sq(omega: &MetricField, volume: &HolomorphicVolume) -> ScalarField {
    let h2 = volume.scale().norm_sqr();
    let values = omega.det_values().into_iter().map(|d| h2 / d).collect();
    ScalarField::from_real(omega.geometry().clone(), values).expect("grid size matches")
}

/// `∫ ω^n = n! ∫ det g dx_1…dx_{2n}`.
pub fn volume_form_integral(omega: &MetricField) -> f64 {
    let n = omega.n();
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    factorial * torus::integrate(&omega.det_field()).re
}

/// Coefficients `R_{kl̄}` of `Ric^h = √-1 Σ R_{kl̄} dz_k∧dz̄_l = √-1 ∂̄∂ log det g`,
/// so `R_{kl̄} = −∂² log det g / ∂z_k∂z̄_l`.
pub fn ricci_hermitian(omega: &MetricField) -> Result<HermitianField> {
    let geometry = omega.geometry();
    let n = geometry.n();
    let log_det = omega.det_field().map_real(f64::ln);
    let spectrum = torus::Spectrum::new(&log_det);
    let zero = ScalarField::zeros(geometry);
    let mut planes = vec![vec![zero; n]; n];
    for k in geometry.active_directions() {
        for l in geometry.active_directions() {
            let op = torus::DiffOperator::wirtinger(
                n,
                &[torus::Wirtinger::Z(k), torus::Wirtinger::ZBar(l)],
            )?;
            planes[k - 1][l - 1] = spectrum.apply(&op)?.scale(-1.0);
        }
    }
    HermitianField::from_entry_fields(geometry, &planes)
}

/// Constant `A` with `A Ψ A* = I` (`A = L^{−1}` for `Ψ = L L*`).
pub fn normalize_to_identity(psi: &CMatrix) -> Result<CMatrix> {
    if linalg::hermitian_deviation(psi) > 1e-12 * linalg::max_abs(psi).max(1.0) {
        return Err(Error::NotHermitian {
            deviation: linalg::hermitian_deviation(psi),
        });
    }
    let chol = linalg::cholesky(psi).map_err(|pivot| Error::NotPositive {
        index: 0,
        coords: Vec::new(),
        pivot,
    })?;
    Ok(linalg::lower_inverse(&chol.lower))
}

/// Verdict of the arithmetic–geometric mean rigidity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmgmVerdict {
    /// Hypotheses hold and both gaps vanish: `c = 1`, `B = 0`.
    Rigid,
    /// Hypotheses hold but a gap is positive; contradicts rigidity.
    NotRigid,
    /// `c < 1`, `det(I+B) ≢ c`, or the entries of `B` are not mean-zero.
    HypothesisViolated,
}

impl AmgmVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            AmgmVerdict::Rigid => "rigid",
            AmgmVerdict::NotRigid => "not-rigid",
            AmgmVerdict::HypothesisViolated => "hypothesis-violated",
        }
    }
}

/// Pointwise `tr(I+B)/n ≥ det(I+B)^{1/n}` and its integrated consequence.
#[derive(Clone, Debug)]
pub struct AmgmReport {
    pub c: f64,
    /// `max_x [tr(I+B)/n − det(I+B)^{1/n}]`.
    pub max_pointwise_gap: f64,
    /// Volume average of the pointwise gap.
    pub integral_gap: f64,
    /// Volume average of `tr(I+B)/n` minus `c^{1/n}`; for mean-zero `B` this
    /// is `1 − c^{1/n}`, which must be `≥ 0`, forcing `c ≤ 1`.
    pub margin: f64,
    /// Largest `|mean(b_{ij̄})|`.
    pub mean_residual: f64,
    /// `max |det(I+B) − c| / c`.
    pub det_residual: f64,
    pub verdict: AmgmVerdict,
}

/// Evaluates the AM–GM chain without enforcing the hypotheses; violations
/// are recorded in the verdict. Fails only if `I+B` is not positive.
pub fn amgm_evaluate(b: &HermitianField, c: f64, tol: f64) -> Result<AmgmReport> {
    let n = b.n();
    let geometry = b.geometry();
    let id = CMatrix::identity(n, n);
    let mut gaps = Vec::with_capacity(geometry.len());
    let mut traces = Vec::with_capacity(geometry.len());
    let mut det_residual: f64 = 0.0;
    for (index, m) in b.entries().iter().enumerate() {
        let shifted = &id + m;
        let chol = linalg::cholesky(&shifted).map_err(|pivot| Error::NotPositive {
            index,
            coords: geometry.coords(index),
            pivot,
        })?;
        let det = chol.det();
        let tr = linalg::trace(&shifted).re / n as f64;
        gaps.push(tr - det.powf(1.0 / n as f64));
        traces.push(tr);
        det_residual = det_residual.max((det - c).abs() / c.abs().max(f64::MIN_POSITIVE));
    }
    let mut mean_residual: f64 = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            mean_residual = mean_residual.max(b.entry_field(i, j).mean().norm());
        }
    }
    let len = gaps.len() as f64;
    let max_pointwise_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let integral_gap = gaps.iter().sum::<f64>() / len;
    let margin = traces.iter().sum::<f64>() / len - c.powf(1.0 / n as f64);

    let hypotheses = c >= 1.0 && det_residual <= tol && mean_residual <= tol;
    let verdict = if !hypotheses {
        AmgmVerdict::HypothesisViolated
    } else if max_pointwise_gap.abs() < tol && integral_gap.abs() < tol {
        AmgmVerdict::Rigid
    } else {
        AmgmVerdict::NotRigid
    };
    Ok(AmgmReport {
        c,
        max_pointwise_gap,
        integral_gap,
        margin,
        mean_residual,
        det_residual,
        verdict,
    })
}

/// Checked variant: entries of `B` must be mean-zero and `I+B` positive.
pub fn amgm_report(b: &HermitianField, c: f64, tol: f64) -> Result<AmgmReport> {
    let report = amgm_evaluate(b, c, tol)?;
    if report.mean_residual > tol {
        return Err(Error::NotMeanZero {
            mean: report.mean_residual,
            tol,
        });
    }
    Ok(report)
}

/// Reports where `Ψ` first fails to be positive, if anywhere.
pub fn first_nonpositive(psi: &PsiField) -> Option<(usize, Vec<usize>)> {
    match psi.positivity() {
        Positivity::Certified { .. } => None,
        Positivity::Failed { index, coords, .. } => Some((*index, coords.clone())),
    }
}
