use num_complex::Complex64;
use rand::Rng;

use super::field::ScalarField;
use super::geometry::TorusGeometry;
use super::spectral::Wirtinger;

/// Finite Fourier sum `Σ c_m e^{√-1 m·x}` with exact analytic derivatives.
///
/// Used as band-limited test data: sampled on a grid whose size exceeds twice
/// the largest wavenumber, every spectral operation on it is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    n: usize,
    terms: Vec<(Vec<i64>, Complex64)>,
}

impl TrigPoly {
    pub fn new(n: usize, terms: Vec<(Vec<i64>, Complex64)>) -> Self {
        debug_assert!(terms.iter().all(|(m, _)| m.len() == 2 * n));
        Self { n, terms }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(n, Vec::new())
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(n, vec![(vec![0; 2 * n], Complex64::new(c, 0.0))])
    }

    /// Random complex polynomial over the active axes of `geometry`.
    pub fn random_complex<R: Rng>(
        rng: &mut R,
        geometry: &TorusGeometry,
        max_wavenumber: i64,
        n_terms: usize,
        amplitude: f64,
    ) -> Self {
        let n = geometry.n();
        let terms = (0..n_terms)
            .map(|_| {
                let mut m = vec![0; 2 * n];
                for &a in geometry.active_axes() {
                    m[a - 1] = rng.gen_range(-max_wavenumber..=max_wavenumber);
                }
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (m, c * amplitude)
            })
            .collect();
        Self { n, terms }
    }

    /// Random real polynomial (conjugate-symmetric coefficients).
    pub fn random_real<R: Rng>(
        rng: &mut R,
        geometry: &TorusGeometry,
        max_wavenumber: i64,
        n_terms: usize,
        amplitude: f64,
    ) -> Self {
        let half = Self::random_complex(rng, geometry, max_wavenumber, n_terms, amplitude * 0.5);
        half.plus(&half.conj())
    }

    /// Same polynomial with zero-mode removed.
    pub fn without_mean(&self) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.iter().any(|&k| k != 0))
                .cloned()
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { n: self.n, terms }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            n: self.n,
            terms: self.terms.iter().map(|(m, a)| (m.clone(), a * c)).collect(),
        }
    }

    /// Complex conjugate as a function: `conj(c) e^{-√-1 m·x}`.
    pub fn conj(&self) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.iter().map(|k| -k).collect(), c.conj()))
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let phase: f64 = m.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                c * Complex64::new(0.0, phase).exp()
            })
            .sum()
    }

    /// Exact derivative for a product of Wirtinger factors.
    pub fn wirtinger(&self, factors: &[Wirtinger]) -> Self {
        let i = Complex64::new(0.0, 1.0);
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut c = *c;
                for f in factors {
                    let (dir, sign) = match *f {
                        Wirtinger::Z(d) => (d, -1.0),
                        Wirtinger::ZBar(d) => (d, 1.0),
                    };
                    let kre = m[2 * dir - 2] as f64;
                    let kim = m[2 * dir - 1] as f64;
                    // ½(∂_{x_re} ± √-1 ∂_{x_im}) e^{i m·x} = ½(i k_re ∓ k_im)
                    c *= (i * kre + i * i * kim * sign) * 0.5;
                }
                (m.clone(), c)
            })
            .collect();
        Self { n: self.n, terms }
    }

    /// Grid samples; when every wavenumber is resolved below Nyquist the
    /// exact Fourier coefficients travel with the field.
    pub fn sample(&self, geometry: &TorusGeometry) -> ScalarField {
        let field = ScalarField::from_fn(geometry, |x| self.eval(x));
        match self.grid_coefficients(geometry) {
            Some(c) => field.with_coefficients(c),
            None => field,
        }
    }

    /// Samples of the real part.
    pub fn sample_real(&self, geometry: &TorusGeometry) -> ScalarField {
        let real = self.plus(&self.conj()).scaled(Complex64::new(0.5, 0.0));
        let field = ScalarField::from_real_fn(geometry, |x| real.eval(x).re);
        match real.grid_coefficients(geometry) {
            Some(c) => field.with_coefficients(c),
            None => field,
        }
    }

    /// Unnormalized DFT coefficients on `geometry`, if representable.
    fn grid_coefficients(&self, geometry: &TorusGeometry) -> Option<Vec<Complex64>> {
        if geometry.n() != self.n {
            return None;
        }
        let shape = geometry.grid_shape();
        let total = geometry.len();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); total];
        for (m, c) in &self.terms {
            let mut flat = 0usize;
            for (axis0, &k) in m.iter().enumerate() {
                match geometry.axis_slot(axis0 + 1) {
                    None if k != 0 => return None,
                    None => {}
                    Some(slot) => {
                        let size = shape[slot] as i64;
                        if 2 * k.abs() >= size {
                            return None;
                        }
                    }
                }
            }
            for (slot, &axis) in geometry.active_axes().iter().enumerate() {
                flat = flat * shape[slot] + m[axis - 1].rem_euclid(shape[slot] as i64) as usize;
            }
            coeffs[flat] += c * total as f64;
        }
        Some(coeffs)
    }
}
