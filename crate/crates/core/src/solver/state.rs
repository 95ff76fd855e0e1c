use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forms::{self, linalg, CMatrix, FormN2, HermitianField, MetricField, PsiField};
use crate::torus::{self, ScalarField, Spectrum, TorusGeometry};

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Background data: `ω₀`, its `(n−1)`-power coefficients and `V = ∫ω₀^n`.
/// The flat reference `η` is the standard metric and `Ω = dz₁∧…∧dz_n`.
#[derive(Clone, Debug)]
pub struct Background {
    omega0: MetricField,
    psi0: PsiField,
    det0: Vec<f64>,
    volume: f64,
}

impl Background {
    pub fn new(omega0: MetricField) -> Self {
        let psi0 = forms::power_map(&omega0);
        let det0 = omega0.det_values();
        let volume = forms::volume_form_integral(&omega0);
        Self {
            omega0,
            psi0,
            det0,
            volume,
        }
    }

    pub fn standard(geometry: &TorusGeometry) -> Self {
        Self::new(MetricField::standard(geometry))
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.omega0.geometry()
    }

    pub fn n(&self) -> usize {
        self.omega0.n()
    }

    pub fn omega0(&self) -> &MetricField {
        &self.omega0
    }

    pub fn psi0(&self) -> &PsiField {
        &self.psi0
    }

    /// `V = ∫ ω₀^n`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub(crate) fn det0(&self) -> &[f64] {
        &self.det0
    }
}

/// Right-hand side `f`, shifted onto `∫ e^f ω₀^n = V`.
#[derive(Clone, Debug)]
pub struct SourceTerm {
    f: ScalarField,
    shift: f64,
}

impl SourceTerm {
    pub fn new(f: &ScalarField, bg: &Background) -> Result<Self> {
        if f.geometry() != bg.geometry() {
            return Err(Error::Shape("source term on a different grid".into()));
        }
        let f = f.clone().into_real(torus::REAL_TOL)?;
        let shift = log_weighted_exp_mean(&f, bg.det0());
        Ok(Self {
            f: f.add_constant(-shift),
            shift,
        })
    }

    pub fn zero(bg: &Background) -> Self {
        Self {
            f: ScalarField::zeros(bg.geometry()),
            shift: 0.0,
        }
    }

    pub fn field(&self) -> &ScalarField {
        &self.f
    }

    /// Constant removed on ingest.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `|∫ e^f ω₀^n / V − 1|`.
    pub fn compatibility_residual(&self, bg: &Background) -> f64 {
        log_weighted_exp_mean(&self.f, bg.det0()).exp_m1().abs()
    }

    /// `t·f` moved back onto the compatibility hypersurface.
    pub fn scaled(&self, t: f64, bg: &Background) -> Result<Self> {
        Self::new(&self.f.scale(t), bg)
    }
}

fn log_weighted_exp_mean(f: &ScalarField, weight: &[f64]) -> f64 {
    let num: f64 = f.samples().iter().zip(weight).map(|(v, w)| v.re.exp() * w).sum();
    let den: f64 = weight.iter().sum();
    (num / den).ln()
}

/// `u η^{n−2}` as a sparse form: component `u/(n−1)` on every diagonal pair.
pub fn ansatz_form(u: &ScalarField) -> Result<FormN2> {
    let geometry = u.geometry();
    let n = geometry.n();
    let value = u.clone().into_real(torus::REAL_TOL)?.scale(1.0 / (n as f64 - 1.0));
    let mut form = FormN2::zero(geometry);
    for skipped in subsets_of_size_two(n) {
        let p: Vec<usize> = (1..=n).filter(|i| !skipped.contains(i)).collect();
        form.insert(p.clone(), p, value.clone())?;
    }
    Ok(form)
}

fn subsets_of_size_two(n: usize) -> Vec<[usize; 2]> {
    (1..=n).flat_map(|a| (a + 1..=n).map(move |b| [a, b])).collect()
}

/// `H_{ab̄} = ∂²u/∂z_a∂z̄_b` at every point.
pub(crate) fn complex_hessian(u: &ScalarField) -> Result<Vec<CMatrix>> {
    let geometry = u.geometry();
    let n = geometry.n();
    let spectrum = Spectrum::new(u);
    let mut out = vec![CMatrix::zeros(n, n); geometry.len()];
    for a in geometry.active_directions() {
        for b in geometry.active_directions() {
            let op = torus::DiffOperator::wirtinger(
                n,
                &[torus::Wirtinger::Z(a), torus::Wirtinger::ZBar(b)],
            )?;
            let d = spectrum.apply(&op)?;
            for (m, v) in out.iter_mut().zip(d.samples()) {
                m[(a - 1, b - 1)] = *v;
            }
        }
    }
    Ok(out)
}

/// `F` of `u η^{n−2}`: `(tr H · I − Hᵀ)/(n−1)`.
pub fn ansatz_hermitian(u: &ScalarField) -> Result<HermitianField> {
    let geometry = u.geometry();
    let n = geometry.n();
    let scale = Complex64::new(1.0 / (n as f64 - 1.0), 0.0);
    let entries = complex_hessian(u)?
        .into_iter()
        .map(|h| (CMatrix::identity(n, n) * linalg::trace(&h) - h.transpose()) * scale)
        .collect();
    HermitianField::new(geometry.clone(), entries)
}

/// Point `u` on the ansatz `ψ = u η^{n−2}` with its metric data cached.
///
/// `u` is normalized to mean zero against `ω_u^n`.
#[derive(Clone, Debug)]
pub struct AnsatzState {
    u: ScalarField,
    psi: PsiField,
    omega: MetricField,
    det: Vec<f64>,
    /// `(tr W · I − W)/(n−1)²` with `W = Ψ_u^{−1}`.
    coefficients: Vec<CMatrix>,
}

impl AnsatzState {
    /// Fails with [`Error::NotPositive`] outside the cone.
    pub fn new(u: &ScalarField, bg: &Background) -> Result<Self> {
        let geometry = bg.geometry();
        if u.geometry() != geometry {
            return Err(Error::Shape("ansatz potential on a different grid".into()));
        }
        let n = geometry.n();
        let u = u.clone().into_real(torus::REAL_TOL)?;
        let f = ansatz_hermitian(&u)?;
        let psi_field = bg.psi0().field().add(&f)?;

        let mut metric = Vec::with_capacity(geometry.len());
        let mut det = Vec::with_capacity(geometry.len());
        let mut coefficients = Vec::with_capacity(geometry.len());
        let c_scale = 1.0 / ((n as f64 - 1.0) * (n as f64 - 1.0));
        for (index, m) in psi_field.entries().iter().enumerate() {
            let chol = linalg::cholesky(m).map_err(|pivot| Error::NotPositive {
                index,
                coords: geometry.coords(index),
                pivot,
            })?;
            let w = linalg::spd_inverse(&chol);
            let det_g = chol.det().powf(1.0 / (n as f64 - 1.0));
            metric.push(w.transpose() * Complex64::new(det_g, 0.0));
            det.push(det_g);
            coefficients.push(
                (CMatrix::identity(n, n) * linalg::trace(&w) - &w) * Complex64::new(c_scale, 0.0),
            );
        }
        let omega = MetricField::new(HermitianField::new(geometry.clone(), metric)?)?;
        let mean = weighted_mean(u.samples().iter().map(|z| z.re), &det);
        Ok(Self {
            u: u.add_constant(-mean),
            psi: PsiField::new(psi_field),
            omega,
            det,
            coefficients,
        })
    }

    pub fn zero(bg: &Background) -> Self {
        Self::new(&ScalarField::zeros(bg.geometry()), bg).expect("background is positive")
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn psi(&self) -> &PsiField {
        &self.psi
    }

    pub fn omega(&self) -> &MetricField {
        &self.omega
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.u.geometry()
    }

    pub fn n(&self) -> usize {
        self.geometry().n()
    }

    /// `det g_u` at every point (density of `ω_u^n / n!`).
    pub fn det(&self) -> &[f64] {
        &self.det
    }

    pub(crate) fn coefficients(&self) -> &[CMatrix] {
        &self.coefficients
    }

    /// `∫ ω_u^n`.
    pub fn volume(&self) -> f64 {
        let mean: f64 = self.det.iter().sum::<f64>() / self.det.len() as f64;
        factorial(self.n()) * mean * self.geometry().volume()
    }

    /// Mean of `x` against `ω_u^n`.
    pub fn weighted_mean(&self, x: &[f64]) -> f64 {
        weighted_mean(x.iter().copied(), &self.det)
    }

    /// `x − ⟨x⟩_{ω_u^n}`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let m = self.weighted_mean(x);
        x.iter().map(|v| v - m).collect()
    }

    /// `(Σ w x² / Σ w)^{1/2}`.
    pub fn weighted_norm(&self, x: &[f64]) -> f64 {
        let num: f64 = x.iter().zip(&self.det).map(|(v, w)| v * v * w).sum();
        (num / self.det.iter().sum::<f64>()).sqrt()
    }
}

pub(crate) fn weighted_mean(x: impl Iterator<Item = f64>, weight: &[f64]) -> f64 {
    let num: f64 = x.zip(weight).map(|(v, w)| v * w).sum();
    num / weight.iter().sum::<f64>()
}

pub(crate) fn n_factorial(n: usize) -> f64 {
    factorial(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> TorusGeometry {
        TorusGeometry::new(3, vec![1, 3], vec![16, 16]).unwrap()
    }

    #[test]
    fn ansatz_fast_path_matches_generic_ddbar() {
        for g in [plane(), TorusGeometry::new(4, vec![1, 2, 6], vec![8, 8, 8]).unwrap()] {
            let u = ScalarField::from_real_fn(&g, |x| {
                (x[0] + 2.0 * x[2]).sin() + 0.3 * (x[1] - x[5]).cos() + 0.2 * x[0].cos() * x[2].sin()
            });
            let generic = forms::ddbar_to_hermitian(&ansatz_form(&u).unwrap()).unwrap();
            let fast = ansatz_hermitian(&u).unwrap();
            assert!(generic.max_diff(&fast).unwrap() < 1e-13);
        }
    }

    #[test]
    fn zero_state_is_background() {
        let bg = Background::standard(&plane());
        let s = AnsatzState::zero(&bg);
        assert!(s.det().iter().all(|d| (d - 1.0).abs() < 1e-15));
        assert!((s.volume() - 6.0 * plane().volume()).abs() < 1e-9 * s.volume());
        assert!((bg.volume() - s.volume()).abs() < 1e-9 * s.volume());
    }

    #[test]
    fn state_is_mean_zero_and_rejects_cone_exit() {
        let g = plane();
        let bg = Background::standard(&g);
        let u = ScalarField::from_real_fn(&g, |x| 0.3 + 0.1 * x[0].sin() * x[2].cos());
        let s = AnsatzState::new(&u, &bg).unwrap();
        assert!(s.weighted_mean(&s.u().real_parts()).abs() < 1e-15);
        let big = ScalarField::from_real_fn(&g, |x| 20.0 * x[0].sin());
        assert!(matches!(AnsatzState::new(&big, &bg), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn source_term_is_compatible() {
        let g = plane();
        let bg = Background::standard(&g);
        let f = ScalarField::from_real_fn(&g, |x| 0.4 * x[0].cos() + 0.2 * (x[2] + x[0]).sin());
        let s = SourceTerm::new(&f, &bg).unwrap();
        assert!(s.compatibility_residual(&bg) < 1e-14);
        assert!(s.shift() > 0.0);
        assert_eq!(SourceTerm::zero(&bg).compatibility_residual(&bg), 0.0);
    }
}
