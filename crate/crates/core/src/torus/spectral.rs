//! FFT-based calculus on periodic grids.
//!
//! Differential operators are polynomials in the real axis derivatives
//! `∂/∂x_a`. Their Fourier symbols follow the usual pseudospectral rule:
//! along an axis differentiated an odd number of times the Nyquist mode is
//! zeroed, along an axis differentiated an even number of times it is kept.
//! Derivatives along inactive axes vanish.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::field::ScalarField;
use super::geometry::TorusGeometry;
use crate::error::{Error, Result};

/// Default relative tolerance for "vanishes" and compatibility checks.
pub const DEFAULT_TOL: f64 = 1e-10;

const I: Complex64 = Complex64::new(0.0, 1.0);

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// In-place multidimensional DFT over the active axes. The inverse is
/// normalized so that forward followed by inverse is the identity.
fn fft_nd(geometry: &TorusGeometry, data: &mut [Complex64], direction: FftDirection) {
    let shape = geometry.grid_shape();
    let strides = geometry.strides();
    let total = data.len();
    for (slot, &size) in shape.iter().enumerate() {
        let stride = strides[slot];
        let fft = plan(size, direction);
        let mut line = vec![Complex64::new(0.0, 0.0); size];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for start in 0..total {
            if !(start / stride).is_multiple_of(size) {
                continue;
            }
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[start + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                data[start + j * stride] = *v;
            }
        }
    }
    if direction == FftDirection::Inverse {
        let norm = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}

/// One first-order Wirtinger factor; the direction index is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wirtinger {
    /// `∂/∂z_i = ½(∂/∂x_{2i-1} − √-1 ∂/∂x_{2i})`
    Z(usize),
    /// `∂/∂z̄_i = ½(∂/∂x_{2i-1} + √-1 ∂/∂x_{2i})`
    ZBar(usize),
}

impl Wirtinger {
    fn direction(self) -> usize {
        match self {
            Wirtinger::Z(i) | Wirtinger::ZBar(i) => i,
        }
    }
}

/// Constant-coefficient differential operator on `T^n`, stored as a
/// polynomial in the `2n` real axis derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffOperator {
    n: usize,
    terms: BTreeMap<Vec<u8>, Complex64>,
}

impl DiffOperator {
    pub fn identity(n: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; 2 * n], Complex64::new(1.0, 0.0));
        Self { n, terms }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    /// `∂^order / ∂x_axis^order`.
    pub fn axis(n: usize, axis: usize, order: u8) -> Result<Self> {
        if axis == 0 || axis > 2 * n {
            return Err(Error::Geometry(format!("axis {axis} outside 1..={}", 2 * n)));
        }
        let mut e = vec![0; 2 * n];
        e[axis - 1] = order;
        let mut terms = BTreeMap::new();
        terms.insert(e, Complex64::new(1.0, 0.0));
        Ok(Self { n, terms })
    }

    /// Composition of Wirtinger factors, e.g. `[Z(i), ZBar(j)]` for `∂²/∂z_i∂z̄_j`.
    pub fn wirtinger(n: usize, factors: &[Wirtinger]) -> Result<Self> {
        let mut op = Self::identity(n);
        for &f in factors {
            let i = f.direction();
            if i == 0 || i > n {
                return Err(Error::DirectionOutOfRange { index: i, n });
            }
            let sign = match f {
                Wirtinger::Z(_) => -1.0,
                Wirtinger::ZBar(_) => 1.0,
            };
            let re = Self::axis(n, 2 * i - 1, 1)?.scaled(Complex64::new(0.5, 0.0));
            let im = Self::axis(n, 2 * i, 1)?.scaled(I * (0.5 * sign));
            op = op.compose(&re.plus(&im));
        }
        Ok(op)
    }

    /// Flat Laplacian `Σ_i ∂²/∂z_i∂z̄_i = ¼ Σ_a ∂²/∂x_a²`.
    pub fn flat_laplacian(n: usize) -> Self {
        (1..=n).fold(Self::zero(n), |acc, i| {
            acc.plus(&Self::wirtinger(n, &[Wirtinger::Z(i), Wirtinger::ZBar(i)]).unwrap())
        })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.prune();
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            *out.terms.entry(e.clone()).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        out.prune();
        out
    }

    pub fn compose(&self, other: &Self) -> Self {
        let mut terms: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u8> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *terms.entry(e).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        let mut out = Self { n: self.n, terms };
        out.prune();
        out
    }

    /// True if the operator maps real fields to real fields, i.e. every term
    /// `c ∂^e` has `c · √-1^{|e|}` real.
    pub fn preserves_reality(&self) -> bool {
        self.terms.iter().all(|(e, c)| {
            let order: u32 = e.iter().map(|&p| p as u32).sum();
            let w = c * I.powu(order);
            w.im.abs() <= 1e-15 * w.norm()
        })
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() != 0.0);
    }

    /// Fourier symbol at one mode; `modes[slot] = (k, is_nyquist)` per active axis.
    fn symbol(&self, axis_slots: &[Option<usize>], modes: &[(f64, bool)]) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        'term: for (e, &c) in &self.terms {
            let mut prod = c;
            for (axis, &power) in e.iter().enumerate() {
                if power == 0 {
                    continue;
                }
                let Some(slot) = axis_slots[axis] else {
                    continue 'term;
                };
                let (k, nyquist) = modes[slot];
                if nyquist && power % 2 == 1 {
                    continue 'term;
                }
                prod *= (I * k).powu(power as u32);
            }
            total += prod;
        }
        total
    }
}

/// Forward transform of a field, reusable for several derivatives.
#[derive(Clone, Debug)]
pub struct Spectrum {
    geometry: TorusGeometry,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl Spectrum {
    pub fn new(field: &ScalarField) -> Self {
        let geometry = field.geometry().clone();
        let coeffs = match field.coefficients() {
            Some(c) => c.to_vec(),
            None => {
                let mut c = field.samples().to_vec();
                fft_nd(&geometry, &mut c, FftDirection::Forward);
                c
            }
        };
        Self {
            geometry,
            coeffs,
            real: field.is_real_tagged(),
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    /// Applies a constant-coefficient operator and transforms back.
    pub fn apply(&self, op: &DiffOperator) -> Result<ScalarField> {
        self.check_dimension(op)?;
        let slots = axis_slots(&self.geometry);
        let mut out: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| c * op.symbol(&slots, &mode_of(&self.geometry, j)))
            .collect();
        fft_nd(&self.geometry, &mut out, FftDirection::Inverse);
        if self.real && op.preserves_reality() {
            return ScalarField::from_real(self.geometry.clone(), out.iter().map(|z| z.re).collect());
        }
        ScalarField::new(self.geometry.clone(), out)
    }

    /// Amplitude of the largest coefficient with some |k| at or above
    /// `fraction * N/2`, relative to the largest coefficient overall.
    pub fn tail_ratio(&self, fraction: f64) -> f64 {
        let shape = self.geometry.grid_shape();
        let max = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let tail = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                mode_of(&self.geometry, *j)
                    .iter()
                    .zip(shape)
                    .any(|(&(k, _), &size)| k.abs() >= fraction * size as f64 / 2.0)
            })
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        tail / max
    }

    fn check_dimension(&self, op: &DiffOperator) -> Result<()> {
        if op.n != self.geometry.n() {
            return Err(Error::Shape(format!(
                "operator on T^{} applied to a field on T^{}",
                op.n,
                self.geometry.n()
            )));
        }
        Ok(())
    }
}

fn axis_slots(geometry: &TorusGeometry) -> Vec<Option<usize>> {
    (1..=2 * geometry.n()).map(|a| geometry.axis_slot(a)).collect()
}

/// Signed wavenumber and Nyquist flag per active axis for a flat mode index.
fn mode_of(geometry: &TorusGeometry, index: usize) -> Vec<(f64, bool)> {
    geometry
        .coords(index)
        .into_iter()
        .zip(geometry.grid_shape())
        .map(|(j, &size)| {
            let half = size / 2;
            if j < half {
                (j as f64, false)
            } else if j == half {
                (half as f64, true)
            } else {
                (j as f64 - size as f64, false)
            }
        })
        .collect()
}

/// Fourier multiplier with a precomputed symbol: `f ↦ F⁻¹(m · F f)`.
#[derive(Clone, Debug)]
pub struct Multiplier {
    geometry: TorusGeometry,
    symbol: Vec<Complex64>,
    preserves_reality: bool,
}

impl Multiplier {
    pub fn of(geometry: &TorusGeometry, op: &DiffOperator) -> Result<Self> {
        if op.n != geometry.n() {
            return Err(Error::Shape(format!(
                "operator on T^{} applied to a field on T^{}",
                op.n,
                geometry.n()
            )));
        }
        let slots = axis_slots(geometry);
        let symbol = (0..geometry.len())
            .map(|j| op.symbol(&slots, &mode_of(geometry, j)))
            .collect();
        Ok(Self {
            geometry: geometry.clone(),
            symbol,
            preserves_reality: op.preserves_reality(),
        })
    }

    /// Pseudo-inverse: `1/m` where `|m|` exceeds `1e-13 · max|m|`, else 0.
    pub fn inverse_of(geometry: &TorusGeometry, op: &DiffOperator) -> Result<Self> {
        let mut out = Self::of(geometry, op)?;
        let max = out.symbol.iter().map(|s| s.norm()).fold(0.0, f64::max);
        for s in &mut out.symbol {
            *s = if s.norm() > 1e-13 * max {
                s.inv()
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        Ok(out)
    }

    pub fn apply(&self, field: &ScalarField) -> Result<ScalarField> {
        if field.geometry() != &self.geometry {
            return Err(Error::Shape("multiplier built for another grid".into()));
        }
        let mut coeffs = Spectrum::new(field).coeffs;
        for (c, s) in coeffs.iter_mut().zip(&self.symbol) {
            *c *= s;
        }
        fft_nd(&self.geometry, &mut coeffs, FftDirection::Inverse);
        if field.is_real_tagged() && self.preserves_reality {
            return ScalarField::from_real(self.geometry.clone(), coeffs.iter().map(|z| z.re).collect());
        }
        ScalarField::new(self.geometry.clone(), coeffs)
    }
}

pub fn apply_operator(field: &ScalarField, op: &DiffOperator) -> Result<ScalarField> {
    Spectrum::new(field).apply(op)
}

/// `∂f/∂z_i`.
pub fn wirtinger_d(field: &ScalarField, i: usize) -> Result<ScalarField> {
    let n = field.geometry().n();
    field.geometry().check_direction(i)?;
    apply_operator(field, &DiffOperator::wirtinger(n, &[Wirtinger::Z(i)])?)
}

/// `∂f/∂z̄_i`.
pub fn wirtinger_dbar(field: &ScalarField, i: usize) -> Result<ScalarField> {
    let n = field.geometry().n();
    field.geometry().check_direction(i)?;
    apply_operator(field, &DiffOperator::wirtinger(n, &[Wirtinger::ZBar(i)])?)
}

/// `∂²f/∂z_i∂z̄_j` as a single second-order operator.
pub fn ddbar(field: &ScalarField, i: usize, j: usize) -> Result<ScalarField> {
    let n = field.geometry().n();
    let op = DiffOperator::wirtinger(n, &[Wirtinger::Z(i), Wirtinger::ZBar(j)])?;
    apply_operator(field, &op)
}

/// `∂²f/∂z_i∂z_j`.
pub fn dd(field: &ScalarField, i: usize, j: usize) -> Result<ScalarField> {
    let n = field.geometry().n();
    let op = DiffOperator::wirtinger(n, &[Wirtinger::Z(i), Wirtinger::Z(j)])?;
    apply_operator(field, &op)
}

/// `∫_{T^n} f dx_1 ... dx_{2n}`: grid mean times `(2π)^{2n}`.
pub fn integrate(field: &ScalarField) -> Complex64 {
    field.mean() * field.geometry().volume()
}

/// `f − mean(f)`.
pub fn mean_zero_project(field: &ScalarField) -> ScalarField {
    let mean = field.mean();
    let real = field.is_real_tagged();
    let mut out = field.map(|s| s - mean);
    if real {
        out = out.map(|s| Complex64::new(s.re, 0.0)).with_real_tag(true);
    }
    out
}

/// Inverts `op` on mean-zero data. Modes where the symbol vanishes must carry
/// no more than `tol * max|rhs|` of the right-hand side; the result is
/// mean-zero.
pub fn solve_operator(rhs: &ScalarField, op: &DiffOperator, tol: f64) -> Result<ScalarField> {
    let spectrum = Spectrum::new(rhs);
    spectrum.check_dimension(op)?;
    let geometry = rhs.geometry();
    let slots = axis_slots(geometry);
    let total = rhs.len() as f64;
    let bound = tol * rhs.max_abs();

    let symbols: Vec<Complex64> = (0..rhs.len())
        .map(|j| op.symbol(&slots, &mode_of(geometry, j)))
        .collect();
    let max_symbol = symbols.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let cutoff = 1e-13 * max_symbol;

    let mean = spectrum.coeffs[0].norm() / total;
    if mean > bound {
        return Err(Error::NotMeanZero { mean, tol: bound });
    }
    let mut coeffs = spectrum.coeffs;
    for (j, (c, s)) in coeffs.iter_mut().zip(&symbols).enumerate() {
        if s.norm() <= cutoff {
            let amplitude = c.norm() / total;
            if j != 0 && amplitude > bound {
                return Err(Error::InvisibleVariation { amplitude });
            }
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= s;
        }
    }
    let kept = coeffs.clone();
    fft_nd(geometry, &mut coeffs, FftDirection::Inverse);
    let out = ScalarField::new(geometry.clone(), coeffs)?;
    let out = if rhs.is_real_tagged() {
        out.into_real(1e-8)?
    } else {
        out
    };
    Ok(out.with_coefficients(kept))
}

/// Solves `∂²u/∂z_i∂z̄_i = rhs` for mean-zero `u`.
pub fn solve_dzdzbar(rhs: &ScalarField, i: usize) -> Result<ScalarField> {
    solve_dzdzbar_with_tol(rhs, i, DEFAULT_TOL)
}

pub fn solve_dzdzbar_with_tol(rhs: &ScalarField, i: usize, tol: f64) -> Result<ScalarField> {
    let n = rhs.geometry().n();
    rhs.geometry().check_direction(i)?;
    let op = DiffOperator::wirtinger(n, &[Wirtinger::Z(i), Wirtinger::ZBar(i)])?;
    solve_operator(rhs, &op, tol)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn line(size: usize) -> TorusGeometry {
        TorusGeometry::line(3, 1, size).unwrap()
    }

    /// Centered fourth-order finite difference along x_1 of an analytic function.
    fn fd_x1(f: impl Fn(f64) -> Complex64, x: f64) -> Complex64 {
        let h = 1e-3;
        (f(x - 2.0 * h) - f(x + 2.0 * h) + (f(x + h) - f(x - h)) * 8.0) / (12.0 * h)
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = ScalarField::constant(&line(16), 3.5);
        assert!(wirtinger_d(&f, 1).unwrap().max_abs() < 1e-14);
        assert!(wirtinger_dbar(&f, 2).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn sin_x1_matches_finite_differences() {
        let g = line(32);
        let f = ScalarField::from_real_fn(&g, |x| x[0].sin());
        let d = wirtinger_d(&f, 1).unwrap();
        let db = wirtinger_dbar(&f, 1).unwrap();
        for j in 0..g.len() {
            let x = g.point(j)[0];
            let oracle = fd_x1(|t| Complex64::new(t.sin(), 0.0), x) * 0.5;
            assert!((d.samples()[j] - oracle).norm() < 1e-10);
            assert!((db.samples()[j] - oracle).norm() < 1e-10);
            assert!((d.samples()[j] - 0.5 * x.cos()).norm() < 1e-13);
        }
    }

    #[test]
    fn exp_i_x2_under_dz1() {
        let g = TorusGeometry::line(3, 2, 16).unwrap();
        let f = ScalarField::from_fn(&g, |x| Complex64::new(0.0, x[1]).exp());
        let d = wirtinger_d(&f, 1).unwrap();
        for j in 0..g.len() {
            let x2 = g.point(j)[1];
            // ½(∂_{x1} − i∂_{x2}) e^{i x2} = ½ e^{i x2}
            let want = Complex64::new(0.0, x2).exp() * 0.5;
            assert!((d.samples()[j] - want).norm() < 1e-13);
        }
    }

    #[test]
    fn composition_on_minus_4k_sin() {
        let k = 0.8;
        let g = line(64);
        let v = ScalarField::from_real_fn(&g, |x| -4.0 * k * x[0].sin());
        let composed = wirtinger_dbar(&wirtinger_d(&v, 1).unwrap(), 1).unwrap();
        let direct = ddbar(&v, 1, 1).unwrap();
        for j in 0..g.len() {
            let want = k * g.point(j)[0].sin();
            assert!((composed.samples()[j] - want).norm() < 1e-12);
            assert!((direct.samples()[j] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn direction_index_is_checked() {
        let f = ScalarField::constant(&line(8), 1.0);
        assert!(matches!(
            wirtinger_d(&f, 0),
            Err(Error::DirectionOutOfRange { .. })
        ));
        assert!(wirtinger_dbar(&f, 4).is_err());
    }

    #[test]
    fn inactive_direction_gives_zero() {
        let f = ScalarField::from_real_fn(&line(16), |x| x[0].cos());
        assert!(wirtinger_d(&f, 2).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn integrals() {
        let g = line(8);
        let one = ScalarField::constant(&g, 1.0);
        assert!((integrate(&one).re - (2.0 * PI).powi(6)).abs() < 1e-6);
        let s = ScalarField::from_real_fn(&g, |x| x[0].sin());
        assert!(integrate(&s).norm() < 1e-9);

        let f = ScalarField::from_real_fn(&line(64), |x| 1.0 / (1.0 + 0.8 * x[0].sin()));
        let want = (2.0 * PI).powi(6) / 0.6;
        assert!((integrate(&f).re - want).abs() / want < 1e-12);
    }

    #[test]
    fn quadrature_oracle_for_1_over_1_plus_k_sin() {
        // Midpoint sum at N = 1024 independent of the FFT path.
        let n = 1024;
        let sum: f64 = (0..n)
            .map(|j| 1.0 / (1.0 + 0.8 * (2.0 * PI * (j as f64 + 0.5) / n as f64).sin()))
            .sum();
        let mean = sum / n as f64;
        assert!((mean - 1.0 / 0.6).abs() < 1e-13);
    }

    #[test]
    fn mean_zero_projection() {
        let g = line(16);
        assert!(mean_zero_project(&ScalarField::constant(&g, 2.0)).max_abs() < 1e-15);
        let s = ScalarField::from_real_fn(&g, |x| x[0].sin());
        let p = mean_zero_project(&s.add_constant(1.0));
        assert!(p.max_diff(&s).unwrap() < 1e-15);
        assert!(p.is_real_tagged());
    }

    #[test]
    fn solve_dzdzbar_examples() {
        let g = line(32);
        let zero = solve_dzdzbar(&ScalarField::zeros(&g), 1).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let rhs = ScalarField::from_real_fn(&g, |x| x[0].cos());
        let u = solve_dzdzbar(&rhs, 1).unwrap();
        for j in 0..g.len() {
            let want = -4.0 * g.point(j)[0].cos();
            assert!((u.samples()[j].re - want).abs() < 1e-13);
        }
        // forward check by finite differences on the analytic answer: ¼ u'' = cos
        let h = 1e-4;
        let x = 0.7_f64;
        let uu = |t: f64| -4.0 * t.cos();
        let fd = 0.25 * (uu(x + h) - 2.0 * uu(x) + uu(x - h)) / (h * h);
        assert!((fd - x.cos()).abs() < 1e-6);
    }

    #[test]
    fn solve_rejects_incompatible_rhs() {
        let g = line(16);
        let rhs = ScalarField::from_real_fn(&g, |x| 1.0 + x[0].sin());
        assert!(matches!(
            solve_dzdzbar(&rhs, 1),
            Err(Error::NotMeanZero { .. })
        ));
        let g2 = TorusGeometry::new(3, vec![1, 3], vec![8, 8]).unwrap();
        let rhs = ScalarField::from_real_fn(&g2, |x| x[2].sin());
        assert!(matches!(
            solve_dzdzbar(&rhs, 1),
            Err(Error::InvisibleVariation { .. })
        ));
    }

    #[test]
    fn solve_delta_over_one_plus_k_sin() {
        let (delta, k) = (0.6, 0.8);
        let g = line(256);
        let rhs = ScalarField::from_real_fn(&g, |x| delta / (1.0 + k * x[0].sin()) - 1.0);
        let u = solve_dzdzbar(&rhs, 1).unwrap();
        assert!(u.mean().norm() < 1e-14);
        let back = ddbar(&u, 1, 1).unwrap();
        let residual = back.add_constant(1.0).max_diff(&rhs.add_constant(1.0)).unwrap();
        assert!(residual < 1e-10, "residual {residual:e}");
    }
}
