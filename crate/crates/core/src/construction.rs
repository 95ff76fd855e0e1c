//! Explicit solutions of `det(Ψ₀ + F_φ) = δ det Ψ₀` on `T^n` depending on `x₁` only.
//!
//! With `v = −4k sin x₁` and `1 + Δu = δ/(1 + k sin x₁)`, the form
//! `φ = u·[{3..n},{3..n}] + v·[{2,4..n},{2,4..n}]` has
//! `F_φ = diag(0, Δu, Δv, 0, …)` and `det(I + F_φ) = δ`. Solvability of the
//! `u`-equation forces `Z(k) = 1/δ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forms::{
    self, linalg, CMatrix, FormN2, HermitianField, HolomorphicVolume, MetricField, PsiField,
};
use crate::torus::{self, ScalarField, Spectrum, TorusGeometry, TrigPoly};

const BISECTION_CAP: usize = 200;
const K_UPPER: f64 = 1.0 - 1e-12;
const Z_MAX_POINTS: usize = 1 << 22;

fn check_k(k: f64) -> Result<()> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::Parameter(format!("k = {k} outside [0, 1)")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(())
}

/// Periodic trapezoid rule for `Z(k)` with `points` nodes `2πj/points`.
pub fn z_integral_on(k: f64, points: usize) -> Result<f64> {
    check_k(k)?;
    if points == 0 {
        return Err(Error::Parameter("quadrature needs at least one node".into()));
    }
    let h = std::f64::consts::TAU / points as f64;
    let sum: f64 = (0..points).map(|j| 1.0 / (1.0 + k * (h * j as f64).sin())).sum();
    Ok(sum / points as f64)
}

/// `Z(k) = (1/2π) ∫₀^{2π} dx / (1 + k sin x)`, node count doubled until the
/// trapezoid sum stops changing.
pub fn z_integral(k: f64) -> Result<f64> {
    check_k(k)?;
    let mut points = 64;
    let mut z = z_integral_on(k, points)?;
    while points < Z_MAX_POINTS {
        points *= 2;
        let next = z_integral_on(k, points)?;
        if (next - z).abs() <= 1e-14 * next {
            return Ok(next);
        }
        z = next;
    }
    Ok(z)
}

fn bisect(target: f64, z: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (mut lo, mut hi) = (0.0_f64, K_UPPER);
    if z(hi)? < target {
        return Err(Error::Parameter(format!(
            "Z(k) stays below {target} on [0, {K_UPPER}]"
        )));
    }
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if z(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unique `k ∈ (0,1)` with `Z(k) = 1/δ`, by bisection.
pub fn solve_k(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    bisect(1.0 / delta, z_integral)
}

/// As [`solve_k`] but against the `points`-node trapezoid sum, so the discrete
/// compatibility condition on that grid holds to rounding.
pub fn solve_k_on_grid(delta: f64, points: usize) -> Result<f64> {
    check_delta(delta)?;
    bisect(1.0 / delta, |k| z_integral_on(k, points))
}

fn x1_axis(geometry: &TorusGeometry) -> Result<usize> {
    let axis = geometry
        .active_axes()
        .first()
        .copied()
        .ok_or_else(|| Error::Geometry("no active axis".into()))?;
    if geometry.active_axes().len() != 1 || axis % 2 == 0 {
        return Err(Error::Geometry(
            "construction grid must have a single active real part axis".into(),
        ));
    }
    Ok(axis)
}

/// `v = −4k sin x`, with `x` the single active axis; `1 + Δv = 1 + k sin x`.
pub fn build_v(k: f64, geometry: &TorusGeometry) -> Result<ScalarField> {
    let axis = x1_axis(geometry)?;
    let n = geometry.n();
    // −4k sin x = 2√-1 k e^{√-1 x} − 2√-1 k e^{−√-1 x}
    let mode = |sign: i64| {
        let mut m = vec![0; 2 * n];
        m[axis - 1] = sign;
        m
    };
    let c = Complex64::new(0.0, 2.0 * k);
    Ok(TrigPoly::new(n, vec![(mode(1), c), (mode(-1), -c)]).sample_real(geometry))
}

/// Mean-zero `u` with `1 + Δu = δ/(1 + k sin x)`; fails if `k` violates the
/// discrete compatibility condition by more than `tol`.
pub fn build_u(delta: f64, k: f64, geometry: &TorusGeometry, tol: f64) -> Result<ScalarField> {
    check_delta(delta)?;
    check_k(k)?;
    let axis = x1_axis(geometry)?;
    let rhs = ScalarField::from_real_fn(geometry, |x| delta / (1.0 + k * x[axis - 1].sin()) - 1.0);
    let residual = rhs.mean().re.abs();
    if residual > tol {
        return Err(Error::Compatibility { residual, tol });
    }
    torus::solve_dzdzbar(&torus::mean_zero_project(&rhs), axis.div_ceil(2))
}

/// Two-component form `u·[{3..n},{3..n}] + v·[{2,4..n},{2,4..n}]`.
pub fn assemble_phi(u: &ScalarField, v: &ScalarField, n: usize) -> Result<FormN2> {
    let geometry = u.geometry();
    if geometry.n() != n {
        return Err(Error::Shape(format!("fields live on T^{}, not T^{n}", geometry.n())));
    }
    let first: Vec<usize> = (3..=n).collect();
    let second: Vec<usize> = std::iter::once(2).chain(4..=n).collect();
    let mut phi = FormN2::zero(geometry);
    phi.insert(first.clone(), first, u.clone().into_real(torus::REAL_TOL)?)?;
    phi.insert(second.clone(), second, v.clone().into_real(torus::REAL_TOL)?)?;
    Ok(phi)
}

#[derive(Clone, Debug)]
pub struct ConstructionParams {
    pub n: usize,
    pub delta: f64,
    pub grid: usize,
    /// Bound on the discrete compatibility residual accepted by [`build_u`].
    pub compat_tol: f64,
}

impl ConstructionParams {
    pub fn new(n: usize, delta: f64) -> Self {
        Self {
            n,
            delta,
            grid: 256,
            compat_tol: 1e-10,
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if self.n < 3 {
            return Err(Error::Parameter(format!("n = {} < 3", self.n)));
        }
        if self.grid < 8 || !self.grid.is_multiple_of(2) {
            return Err(Error::Parameter(format!("grid {} must be even and >= 8", self.grid)));
        }
        Ok(())
    }
}

/// Residuals measured on the assembled solution.
#[derive(Clone, Debug, Default)]
pub struct Residuals {
    /// `max |det(Ψ₀+F) − δ det Ψ₀| / (δ det Ψ₀)`.
    pub det_identity: f64,
    /// `max |1 + Δu − δ/(1 + k sin x)|`.
    pub u_equation: f64,
    /// `min (1 + Δu)`.
    pub margin_u: f64,
    /// `min (1 + Δv)`.
    pub margin_v: f64,
    /// `(max − min) / mean` of `‖Ω‖_ω`.
    pub c0_variation: f64,
    /// Sup norm of the hermitian Ricci coefficients.
    pub ricci: f64,
    /// Fraction of `u`'s spectral mass in the top half of the resolved modes.
    pub spectral_tail: f64,
}

#[derive(Clone, Debug)]
pub struct ConstructionResult {
    pub delta: f64,
    pub k: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub phi: FormN2,
    pub psi: PsiField,
    pub omega: MetricField,
    /// Value of the constant `‖Ω‖_ω` for `Ω = dz₁∧…∧dz_n`.
    pub c0: f64,
    pub residuals: Residuals,
}

fn det_identity_residual(psi: &PsiField, psi0: &PsiField, delta: f64) -> f64 {
    psi.field()
        .det_field()
        .samples()
        .iter()
        .zip(psi0.field().det_field().samples())
        .map(|(d, d0)| (d - d0 * delta).norm() / (delta * d0.norm()))
        .fold(0.0, f64::max)
}

fn norm_and_ricci(omega: &MetricField) -> Result<(f64, f64, f64)> {
    let norm = forms::omega_norm_sq(omega, &HolomorphicVolume::standard()).map_real(f64::sqrt);
    let mean = norm.mean().re;
    let variation = (norm.max_re() - norm.min_re()) / mean;
    let ricci = forms::ricci_hermitian(omega)?.max_abs();
    Ok((mean, variation, ricci))
}

fn diagonal_min(f: &HermitianField, i: usize) -> f64 {
    f.entry_field(i, i).add_constant(1.0).min_re()
}

/// Full pipeline on the grid `x₁ ∈ 2πZ/N`, other axes inactive.
pub fn construct(params: &ConstructionParams) -> Result<ConstructionResult> {
    params.validate()?;
    let (n, delta) = (params.n, params.delta);
    let geometry = TorusGeometry::line(n, 1, params.grid)?;
    let k = solve_k_on_grid(delta, params.grid)?;
    let v = build_v(k, &geometry)?;
    let u = build_u(delta, k, &geometry, params.compat_tol)?;
    let phi = assemble_phi(&u, &v, n)?;
    let f = forms::ddbar_to_hermitian(&phi)?;

    let psi0 = forms::power_map(&MetricField::standard(&geometry));
    let psi = forms::perturb(&psi0, &f)?;
    psi.positivity().clone().into_result()?;
    let omega = forms::root_extract(&psi)?;

    let rhs = ScalarField::from_real_fn(&geometry, |x| delta / (1.0 + k * x[0].sin()));
    let u_equation = f.entry_field(2, 2).add_constant(1.0).max_diff(&rhs)?;
    let (c0, c0_variation, ricci) = norm_and_ricci(&omega)?;
    let residuals = Residuals {
        det_identity: det_identity_residual(&psi, &psi0, delta),
        u_equation,
        margin_u: diagonal_min(&f, 2),
        margin_v: diagonal_min(&f, 3),
        c0_variation,
        ricci,
        spectral_tail: Spectrum::new(&u).tail_ratio(0.5),
    };
    Ok(ConstructionResult {
        delta,
        k,
        u,
        v,
        phi,
        psi,
        omega,
        c0,
        residuals,
    })
}

/// `δ^{−1/(2(n−1))}`: `‖Ω‖_ω` of the constructed metric.
pub fn expected_c0(delta: f64, n: usize) -> f64 {
    delta.powf(-1.0 / (2.0 * (n as f64 - 1.0)))
}

/// Solution on `N^m × T^k` with a constant metric `g_N` on the flat factor
/// `N^m` (directions `1..=m`) and the standard metric on `T^k`.
///
/// `ψ_{N∪P', N∪Q'} = det(g_N) · φ_{P,Q}` with `P' = P + m`, i.e.
/// `ψ = (n−1)!/(m!(k−1)!) · ω_N^m ∧ φ`; the factorial ratio compensates the
/// dimension-dependent normalization of the coefficient dictionary.
pub fn construct_product(params: &ConstructionParams, factor: &CMatrix) -> Result<ConstructionResult> {
    params.validate()?;
    let m = factor.nrows();
    if factor.ncols() != m {
        return Err(Error::Shape("factor metric must be square".into()));
    }
    let torus_dim = params.n;
    if torus_dim < 3 {
        return Err(Error::Parameter(format!("torus factor dimension {torus_dim} < 3")));
    }
    let n = m + torus_dim;
    let delta = params.delta;

    let base = construct(params)?;
    let geometry = TorusGeometry::line(n, 2 * m + 1, params.grid)?;
    let det_n = if m == 0 {
        1.0
    } else {
        let chol = linalg::cholesky(factor).map_err(|pivot| Error::NotPositive {
            index: 0,
            coords: Vec::new(),
            pivot,
        })?;
        chol.det()
    };

    let mut psi_form = FormN2::zero(&geometry);
    for (p, q, value) in base.phi.components() {
        let shift = |set: &Vec<usize>| -> Vec<usize> {
            (1..=m).chain(set.iter().map(|i| i + m)).collect()
        };
        psi_form.insert(shift(p), shift(q), value.relocated(&geometry)?.scale(det_n))?;
    }

    let mut g0 = CMatrix::identity(n, n);
    g0.view_mut((0, 0), (m, m)).copy_from(factor);
    let omega0 = MetricField::constant(&geometry, &g0)?;
    let psi0 = forms::power_map(&omega0);
    let f = forms::ddbar_to_hermitian(&psi_form)?;
    let psi = forms::perturb(&psi0, &f)?;
    psi.positivity().clone().into_result()?;
    let omega = forms::root_extract(&psi)?;

    let (c0, c0_variation, ricci) = norm_and_ricci(&omega)?;
    let rhs = ScalarField::from_real_fn(&geometry, |x| delta / (1.0 + base.k * x[2 * m].sin()));
    let u_equation = f
        .entry_field(m + 2, m + 2)
        .scale(1.0 / det_n)
        .add_constant(1.0)
        .max_diff(&rhs)?;
    let residuals = Residuals {
        det_identity: det_identity_residual(&psi, &psi0, delta),
        u_equation,
        margin_u: 1.0 + f.entry_field(m + 2, m + 2).min_re() / det_n,
        margin_v: 1.0 + f.entry_field(m + 3, m + 3).min_re() / det_n,
        c0_variation,
        ricci,
        spectral_tail: base.residuals.spectral_tail,
    };
    Ok(ConstructionResult {
        delta,
        k: base.k,
        u: base.u.relocated(&geometry)?,
        v: base.v.relocated(&geometry)?,
        phi: psi_form,
        psi,
        omega,
        c0,
        residuals,
    })
}

/// Rows `[x, 1 + Δu, 1 + Δv, ‖Ω‖_ω]` over the active axis.
pub fn profile(result: &ConstructionResult) -> Result<Vec<[f64; 4]>> {
    let geometry = result.omega.geometry();
    let axis = geometry.active_axes()[0];
    let direction = axis.div_ceil(2);
    let du = torus::ddbar(&result.u, direction, direction)?;
    let dv = torus::ddbar(&result.v, direction, direction)?;
    let norm = forms::omega_norm_sq(&result.omega, &HolomorphicVolume::standard());
    Ok((0..geometry.len())
        .map(|j| {
            [
                geometry.point(j)[axis - 1],
                1.0 + du.samples()[j].re,
                1.0 + dv.samples()[j].re,
                norm.samples()[j].re.sqrt(),
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::ddbar;

    #[test]
    fn z_anchors() {
        assert_eq!(z_integral(0.0).unwrap(), 1.0);
        let oracle = z_integral_on(0.8, 1 << 16).unwrap();
        assert!((z_integral(0.8).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 1.0 / 0.6).abs() < 1e-13);
        assert!(z_integral(0.999).unwrap() > 20.0);
        assert!(z_integral(1.0).is_err());
        assert!(z_integral(-0.1).is_err());
    }

    #[test]
    fn k_roots() {
        assert!((solve_k(0.6).unwrap() - 0.8).abs() < 1e-12);
        assert!((solve_k(0.8).unwrap() - 0.6).abs() < 1e-12);
        assert!(solve_k(1.0 - 1e-9).unwrap() < 1e-3);
        let k = solve_k(0.1).unwrap();
        assert!((z_integral(k).unwrap() - 10.0).abs() < 1e-12);
        assert!(solve_k(1.5).is_err());
        assert!(solve_k(0.0).is_err());
    }

    #[test]
    fn v_and_u_margins() {
        let g = TorusGeometry::line(3, 1, 64).unwrap();
        let v = build_v(0.8, &g).unwrap();
        let lap_v = ddbar(&v, 1, 1).unwrap().add_constant(1.0);
        assert!((lap_v.min_re() - 0.2).abs() < 1e-13);
        assert_eq!(build_v(0.0, &g).unwrap().max_abs(), 0.0);

        let u = build_u(0.6, 0.8, &g, 1e-10).unwrap();
        assert!(u.mean().norm() < 1e-15);
        let lap_u = ddbar(&u, 1, 1).unwrap().add_constant(1.0);
        assert!((lap_u.min_re() - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            build_u(0.6, 0.5, &g, 1e-10),
            Err(Error::Compatibility { .. })
        ));
    }

    #[test]
    fn phi_gives_diagonal_f() {
        let g = TorusGeometry::line(4, 1, 32).unwrap();
        let u = ScalarField::from_real_fn(&g, |x| (2.0 * x[0]).cos());
        let v = ScalarField::from_real_fn(&g, |x| x[0].sin());
        let f = forms::ddbar_to_hermitian(&assemble_phi(&u, &v, 4).unwrap()).unwrap();
        let (du, dv) = (ddbar(&u, 1, 1).unwrap(), ddbar(&v, 1, 1).unwrap());
        for i in 1..=4 {
            for j in 1..=4 {
                let e = f.entry_field(i, j);
                let err = match (i, j) {
                    (2, 2) => e.max_diff(&du).unwrap(),
                    (3, 3) => e.max_diff(&dv).unwrap(),
                    _ => e.max_abs(),
                };
                assert!(err < 1e-14, "({i},{j}) {err:e}");
            }
        }
    }

    #[test]
    fn construct_reaches_expected_c0() {
        let r = construct(&ConstructionParams::new(3, 0.6)).unwrap();
        assert!((r.k - 0.8).abs() < 1e-12);
        assert!((r.c0 - 0.6_f64.powf(-0.25)).abs() < 1e-12);
        assert!((r.c0 - 1.1362).abs() < 1e-4);
        assert!(r.residuals.det_identity < 1e-10);
        assert!(r.residuals.c0_variation < 1e-10);
        assert!(r.residuals.ricci < 1e-9);
        assert!((r.residuals.margin_u - 0.6 / 1.8).abs() < 1e-13);
        assert!((r.residuals.margin_v - 0.2).abs() < 1e-12);

        let r = construct(&ConstructionParams::new(4, 0.25)).unwrap();
        assert!((r.c0 - expected_c0(0.25, 4)).abs() < 1e-12);
        assert!((r.c0 - 1.2599).abs() < 1e-4);

        let near_one = construct(&ConstructionParams::new(3, 1.0 - 1e-8).with_grid(64)).unwrap();
        // k ≈ √(2·1e-8), and both potentials are O(4k)
        assert!(near_one.u.max_abs() < 1e-3 && near_one.v.max_abs() < 1e-3);
        assert!((near_one.c0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn product_solutions() {
        let params = ConstructionParams::new(3, 0.5).with_grid(64);
        let plain = construct(&params).unwrap();
        let trivial = construct_product(&params, &CMatrix::zeros(0, 0)).unwrap();
        assert!(trivial.omega.field().max_diff(plain.omega.field()).is_ok());
        assert!((trivial.c0 - plain.c0).abs() < 1e-14);

        let one = construct_product(&params, &CMatrix::identity(1, 1)).unwrap();
        assert_eq!(one.omega.n(), 4);
        assert!(one.residuals.det_identity < 1e-10);
        assert!(one.residuals.ricci < 1e-9);

        let scaled = construct_product(&params, &linalg::from_real_diagonal(&[3.0])).unwrap();
        assert!(scaled.residuals.det_identity < 1e-10);
        assert!((scaled.residuals.margin_u - one.residuals.margin_u).abs() < 1e-13);

        assert!(construct_product(&ConstructionParams::new(2, 0.5), &CMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn profile_rows() {
        let r = construct(&ConstructionParams::new(3, 0.6).with_grid(16)).unwrap();
        let rows = profile(&r).unwrap();
        assert_eq!(rows.len(), 16);
        for row in rows {
            assert!((row[1] * (1.0 + r.k * row[0].sin()) - 0.6).abs() < 1e-12);
            assert!((row[3] - r.c0).abs() < 1e-12);
        }
    }
}
