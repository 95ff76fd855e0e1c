use num_complex::Complex64;

use super::linalg::{self, CMatrix};
use crate::error::{Error, Result};
use crate::torus::{ScalarField, TorusGeometry};

/// Relative hermiticity tolerance.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// `n × n` hermitian matrix at every grid point.
#[derive(Clone, Debug)]
pub struct HermitianField {
    geometry: TorusGeometry,
    entries: Vec<CMatrix>,
}

impl HermitianField {
    /// Checks shape and hermiticity, then symmetrizes away rounding.
    pub fn new(geometry: TorusGeometry, mut entries: Vec<CMatrix>) -> Result<Self> {
        let n = geometry.n();
        if entries.len() != geometry.len() {
            return Err(Error::Shape(format!(
                "{} matrices for {} grid points",
                entries.len(),
                geometry.len()
            )));
        }
        if let Some(m) = entries.iter().find(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Shape(format!(
                "{}x{} matrix on T^{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = entries.iter().map(linalg::max_abs).fold(0.0, f64::max).max(1.0);
        let deviation = entries
            .iter()
            .map(linalg::hermitian_deviation)
            .fold(0.0, f64::max);
        if deviation > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { deviation });
        }
        entries.iter_mut().for_each(linalg::symmetrize);
        Ok(Self { geometry, entries })
    }

    /// Skips every check; used to build deliberately broken inputs.
    pub fn from_raw(geometry: TorusGeometry, entries: Vec<CMatrix>) -> Self {
        Self { geometry, entries }
    }

    pub fn from_fn(geometry: &TorusGeometry, f: impl Fn(&[f64]) -> CMatrix) -> Result<Self> {
        let entries = (0..geometry.len()).map(|i| f(&geometry.point(i))).collect();
        Self::new(geometry.clone(), entries)
    }

    pub fn constant(geometry: &TorusGeometry, m: &CMatrix) -> Result<Self> {
        Self::new(geometry.clone(), vec![m.clone(); geometry.len()])
    }

    pub fn identity(geometry: &TorusGeometry) -> Self {
        let n = geometry.n();
        Self {
            geometry: geometry.clone(),
            entries: vec![CMatrix::identity(n, n); geometry.len()],
        }
    }

    pub fn zeros(geometry: &TorusGeometry) -> Self {
        let n = geometry.n();
        Self {
            geometry: geometry.clone(),
            entries: vec![CMatrix::zeros(n, n); geometry.len()],
        }
    }

    /// Assembles a field from entry planes `planes[i][j]` (0-based).
    pub fn from_entry_fields(geometry: &TorusGeometry, planes: &[Vec<ScalarField>]) -> Result<Self> {
        let n = geometry.n();
        if planes.len() != n || planes.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("entry planes must be n x n".into()));
        }
        let entries = (0..geometry.len())
            .map(|k| CMatrix::from_fn(n, n, |i, j| planes[i][j].samples()[k]))
            .collect();
        Self::new(geometry.clone(), entries)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    pub fn entries(&self) -> &[CMatrix] {
        &self.entries
    }

    pub fn at(&self, index: usize) -> &CMatrix {
        &self.entries[index]
    }

    /// Entry `(i, j)` as a scalar field; indices are 1-based.
    pub fn entry_field(&self, i: usize, j: usize) -> ScalarField {
        let samples = self.entries.iter().map(|m| m[(i - 1, j - 1)]).collect();
        ScalarField::new(self.geometry.clone(), samples).expect("grid size matches")
    }

    pub fn add(&self, other: &HermitianField) -> Result<Self> {
        self.same_grid(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            geometry: self.geometry.clone(),
            entries,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            entries: self
                .entries
                .iter()
                .map(|m| m * Complex64::new(c, 0.0))
                .collect(),
        }
    }

    /// Pointwise congruence `A M A*` with a constant matrix.
    pub fn congruence(&self, a: &CMatrix) -> Result<Self> {
        let entries = self.entries.iter().map(|m| a * m * a.adjoint()).collect();
        Self::new(self.geometry.clone(), entries)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    pub fn max_diff(&self, other: &HermitianField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| linalg::max_abs(&(a - b)))
            .fold(0.0, f64::max))
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.entries
            .iter()
            .map(linalg::hermitian_deviation)
            .fold(0.0, f64::max)
    }

    /// Pointwise determinant (LU based; valid for any matrix).
    pub fn det_field(&self) -> ScalarField {
        let samples = self.entries.iter().map(|m| m.clone().determinant()).collect();
        ScalarField::new(self.geometry.clone(), samples).expect("grid size matches")
    }

    pub fn trace_field(&self) -> ScalarField {
        let samples = self.entries.iter().map(linalg::trace).collect();
        ScalarField::new(self.geometry.clone(), samples).expect("grid size matches")
    }

    /// First grid point where pointwise Cholesky fails, else the smallest
    /// relative pivot seen.
    pub fn positivity(&self) -> Positivity {
        let mut min_pivot = f64::INFINITY;
        for (index, m) in self.entries.iter().enumerate() {
            match linalg::cholesky(m) {
                Ok(c) => min_pivot = min_pivot.min(c.min_relative_pivot),
                Err(pivot) => {
                    return Positivity::Failed {
                        index,
                        coords: self.geometry.coords(index),
                        pivot,
                    }
                }
            }
        }
        Positivity::Certified { min_pivot }
    }

    fn same_grid(&self, other: &HermitianField) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(Error::Shape("hermitian fields on different grids".into()));
        }
        Ok(())
    }
}

/// Outcome of the pointwise Cholesky positivity test.
#[derive(Clone, Debug, PartialEq)]
pub enum Positivity {
    Certified { min_pivot: f64 },
    Failed {
        index: usize,
        coords: Vec<usize>,
        pivot: f64,
    },
}

impl Positivity {
    pub fn is_positive(&self) -> bool {
        matches!(self, Positivity::Certified { .. })
    }

    pub fn into_result(self) -> Result<f64> {
        match self {
            Positivity::Certified { min_pivot } => Ok(min_pivot),
            Positivity::Failed {
                index,
                coords,
                pivot,
            } => Err(Error::NotPositive {
                index,
                coords,
                pivot,
            }),
        }
    }
}

/// Coefficients `g_{ij̄}` of `ω = (√-1/2) Σ g_{ij̄} dz_i ∧ dz̄_j`, certified
/// positive definite at every grid point.
#[derive(Clone, Debug)]
pub struct MetricField {
    field: HermitianField,
    min_pivot: f64,
}

impl MetricField {
    pub fn new(field: HermitianField) -> Result<Self> {
        let min_pivot = field.positivity().into_result()?;
        Ok(Self { field, min_pivot })
    }

    /// The standard metric `g = I`.
    pub fn standard(geometry: &TorusGeometry) -> Self {
        Self {
            field: HermitianField::identity(geometry),
            min_pivot: 1.0,
        }
    }

    pub fn constant(geometry: &TorusGeometry, g: &CMatrix) -> Result<Self> {
        Self::new(HermitianField::constant(geometry, g)?)
    }

    pub fn field(&self) -> &HermitianField {
        &self.field
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.field.geometry()
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// `det g` at every point (real, positive).
    pub fn det_values(&self) -> Vec<f64> {
        self.field
            .entries()
            .iter()
            .map(|m| linalg::cholesky(m).map(|c| c.det()).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn det_field(&self) -> ScalarField {
        ScalarField::from_real(self.geometry().clone(), self.det_values())
            .expect("grid size matches")
    }

    /// True if every entry agrees with the first point to `tol` (relative).
    pub fn is_constant(&self, tol: f64) -> bool {
        let first = self.field.at(0);
        let scale = linalg::max_abs(first).max(1.0);
        self.field
            .entries()
            .iter()
            .all(|m| linalg::max_abs(&(m - first)) <= tol * scale)
    }
}

/// Coefficient matrix `Ψ_{pq̄}` of a real `(n−1,n−1)`-form in the signed basis
/// `(√-1/2)^{n−1}(n−1)! Σ Ψ_{pq̄} s(p,q) dz_1∧dz̄_1∧…∧(no dz_p)∧…∧(no dz̄_q)∧…`.
#[derive(Clone, Debug)]
pub struct PsiField {
    field: HermitianField,
    positivity: Positivity,
}

impl PsiField {
    /// Runs the positivity test and tags the result.
    pub fn new(field: HermitianField) -> Self {
        let positivity = field.positivity();
        Self { field, positivity }
    }

    pub fn field(&self) -> &HermitianField {
        &self.field
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.field.geometry()
    }

    pub fn positivity(&self) -> &Positivity {
        &self.positivity
    }

    pub fn is_positive(&self) -> bool {
        self.positivity.is_positive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> TorusGeometry {
        TorusGeometry::line(3, 1, 8).unwrap()
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::identity(3, 3);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            HermitianField::constant(&line(), &m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn positivity_reports_first_failure() {
        let g = line();
        let f = HermitianField::from_fn(&g, |x| {
            linalg::from_real_diagonal(&[1.0, 1.0 + 2.0 * x[0].sin(), 1.0])
        })
        .unwrap();
        match f.positivity() {
            Positivity::Failed { index, coords, .. } => {
                // sin x < -1/2 first at x = 5π/4, grid index 5
                assert_eq!(index, 5);
                assert_eq!(coords, vec![5]);
            }
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(MetricField::new(f).is_err());
        assert!(MetricField::new(HermitianField::identity(&g)).is_ok());
    }

    #[test]
    fn entry_planes_round_trip() {
        let g = line();
        let f = HermitianField::from_fn(&g, |x| {
            let mut m = linalg::from_real_diagonal(&[2.0, 1.0, 3.0]);
            m[(0, 2)] = Complex64::new(x[0].cos(), x[0].sin());
            m[(2, 0)] = m[(0, 2)].conj();
            m
        })
        .unwrap();
        let planes: Vec<Vec<ScalarField>> = (1..=3)
            .map(|i| (1..=3).map(|j| f.entry_field(i, j)).collect())
            .collect();
        let back = HermitianField::from_entry_fields(&g, &planes).unwrap();
        assert_eq!(back.max_diff(&f).unwrap(), 0.0);
    }
}
