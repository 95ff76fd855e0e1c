use std::sync::Arc;

use num_complex::Complex64;

use super::geometry::TorusGeometry;
use crate::error::{Error, Result};

/// Relative tolerance on imaginary parts for fields tagged real.
pub const REAL_TOL: f64 = 1e-12;

/// Complex samples of a periodic function on a [`TorusGeometry`].
///
/// Realness is a tag, not a type: Wirtinger calculus moves freely through
/// complex intermediates, and [`ScalarField::check_real`] certifies the tag
/// when it matters.
///
/// Fields produced by a spectral solve keep their Fourier coefficients, so a
/// later derivative does not round the solution through grid samples first.
#[derive(Clone, Debug)]
pub struct ScalarField {
    geometry: TorusGeometry,
    samples: Vec<Complex64>,
    real: bool,
    coefficients: Option<Arc<Vec<Complex64>>>,
}

impl ScalarField {
    pub fn new(geometry: TorusGeometry, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != geometry.len() {
            return Err(Error::Shape(format!(
                "{} samples for a grid of {} points",
                samples.len(),
                geometry.len()
            )));
        }
        Ok(Self {
            geometry,
            samples,
            real: false,
            coefficients: None,
        })
    }

    pub fn from_real(geometry: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        let samples = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        let mut field = Self::new(geometry, samples)?;
        field.real = true;
        Ok(field)
    }

    pub fn from_fn(geometry: &TorusGeometry, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let samples = (0..geometry.len()).map(|i| f(&geometry.point(i))).collect();
        Self {
            geometry: geometry.clone(),
            samples,
            real: false,
            coefficients: None,
        }
    }

    pub fn from_real_fn(geometry: &TorusGeometry, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut field = Self::from_fn(geometry, |x| Complex64::new(f(x), 0.0));
        field.real = true;
        field
    }

    pub fn constant(geometry: &TorusGeometry, value: f64) -> Self {
        Self::from_real_fn(geometry, |_| value)
    }

    pub fn zeros(geometry: &TorusGeometry) -> Self {
        Self::constant(geometry, 0.0)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_real_tagged(&self) -> bool {
        self.real
    }

    /// Drops imaginary parts after checking they are negligible.
    pub fn into_real(mut self, tol: f64) -> Result<Self> {
        self.check_real(tol)?;
        for s in &mut self.samples {
            s.im = 0.0;
        }
        self.real = true;
        Ok(self)
    }

    /// Checks `max |imag| <= tol * max(1, max |z|)`.
    pub fn check_real(&self, tol: f64) -> Result<()> {
        let scale = self.max_abs().max(1.0);
        let max_imag = self.samples.iter().map(|s| s.im.abs()).fold(0.0, f64::max);
        if max_imag > tol * scale {
            return Err(Error::NotReal {
                max_imag,
                tol: tol * scale,
            });
        }
        Ok(())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.samples.iter().map(|s| s.re).fold(f64::INFINITY, f64::min)
    }

    pub fn max_re(&self) -> f64 {
        self.samples.iter().map(|s| s.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Arithmetic mean of the samples, summed in index order.
    pub fn mean(&self) -> Complex64 {
        let sum: Complex64 = self.samples.iter().sum();
        sum / self.samples.len() as f64
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            real: false,
            coefficients: None,
        }
    }

    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| Complex64::new(f(s.re), 0.0))
                .collect(),
            real: true,
            coefficients: None,
        }
    }

    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            geometry: self.geometry.clone(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            real: false,
            coefficients: None,
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        let mut out = self.zip_with(other, |a, b| a + b)?;
        out.real = self.real && other.real;
        Ok(out)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        let mut out = self.zip_with(other, |a, b| a - b)?;
        out.real = self.real && other.real;
        Ok(out)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<Self> {
        let mut out = self.zip_with(other, |a, b| a * b)?;
        out.real = self.real && other.real;
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.map(|s| s * factor);
        out.real = self.real;
        if let Some(c) = self.coefficients() {
            out = out.with_coefficients(c.iter().map(|z| z * factor).collect());
        }
        out
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut out = self.map(|s| s + c);
        out.real = self.real;
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = self.map(|s| s.conj());
        out.real = self.real;
        if let Some(c) = self.coefficients() {
            // coefficient of conj f at mode k is conj of f's at mode −k
            let shape = self.geometry.grid_shape();
            let mut mirrored = vec![Complex64::new(0.0, 0.0); c.len()];
            for (index, value) in c.iter().enumerate() {
                let mut rest = index;
                let mut target = 0;
                let mut stride = 1;
                for &size in shape.iter().rev() {
                    let k = rest % size;
                    rest /= size;
                    target += ((size - k) % size) * stride;
                    stride *= size;
                }
                mirrored[target] = value.conj();
            }
            out = out.with_coefficients(mirrored);
        }
        out
    }

    /// Max-norm distance between two fields on the same grid.
    pub fn max_diff(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(Error::Shape(format!(
                "grids differ: {:?} vs {:?}",
                self.geometry, other.geometry
            )));
        }
        Ok(())
    }

    pub(crate) fn with_real_tag(mut self, real: bool) -> Self {
        self.real = real;
        self
    }

    /// Same samples on another geometry with the identical grid shape (e.g.
    /// the active axis moved).
    pub fn relocated(&self, geometry: &TorusGeometry) -> Result<Self> {
        if geometry.grid_shape() != self.geometry.grid_shape() || geometry.n() < self.geometry.n() {
            return Err(Error::Shape("relocation needs an identical grid shape".into()));
        }
        let mut out = self.clone();
        out.geometry = geometry.clone();
        Ok(out)
    }

    pub(crate) fn with_coefficients(mut self, coefficients: Vec<Complex64>) -> Self {
        self.coefficients = Some(Arc::new(coefficients));
        self
    }

    pub(crate) fn coefficients(&self) -> Option<&[Complex64]> {
        self.coefficients.as_deref().map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> TorusGeometry {
        TorusGeometry::line(3, 1, 16).unwrap()
    }

    #[test]
    fn conjugate_keeps_matching_coefficients() {
        use rand::SeedableRng;
        let g = TorusGeometry::new(3, vec![1, 4], vec![8, 10]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let f = super::super::TrigPoly::random_complex(&mut rng, &g, 3, 6, 1.0).sample(&g);
        let cached = f.conj();
        let fresh = ScalarField::new(g.clone(), cached.samples().to_vec()).unwrap();
        let a = super::super::Spectrum::new(&cached);
        let b = super::super::Spectrum::new(&fresh);
        let op = super::super::DiffOperator::axis(3, 4, 1).unwrap();
        assert!(a.apply(&op).unwrap().max_diff(&b.apply(&op).unwrap()).unwrap() < 1e-13);
    }

    #[test]
    fn sample_count_is_checked() {
        assert!(ScalarField::new(line(), vec![Complex64::new(0.0, 0.0); 15]).is_err());
    }

    #[test]
    fn real_tag_checks_imaginary_parts() {
        let g = line();
        let f = ScalarField::from_fn(&g, |x| Complex64::new(x[0].sin(), 1e-9));
        assert!(!f.is_real_tagged());
        assert!(f.check_real(REAL_TOL).is_err());
        assert!(f.clone().into_real(1e-8).unwrap().is_real_tagged());
        let r = ScalarField::from_real_fn(&g, |x| x[0].cos());
        assert!(r.check_real(REAL_TOL).is_ok());
        assert!(r.scale(2.0).is_real_tagged());
    }

    #[test]
    fn arithmetic_requires_matching_grids() {
        let a = ScalarField::constant(&line(), 1.0);
        let b = ScalarField::constant(&TorusGeometry::line(3, 2, 16).unwrap(), 1.0);
        assert!(a.add(&b).is_err());
        assert_eq!(a.add(&a).unwrap().mean(), Complex64::new(2.0, 0.0));
    }
}
