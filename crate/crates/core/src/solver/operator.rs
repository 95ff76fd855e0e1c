//! `M`, its derivative `L` on the ansatz, the adjoint of `L`, and the form `A`.

use num_complex::Complex64;

use super::state::{n_factorial, AnsatzState, Background};
use crate::error::{Error, Result};
use crate::forms::{self, FormN2};
use crate::torus::{self, DiffOperator, ScalarField, Spectrum, Wirtinger};

fn real_field(state: &AnsatzState, values: Vec<f64>) -> ScalarField {
    ScalarField::from_real(state.geometry().clone(), values).expect("grid size matches")
}

fn ddbar_op(n: usize, a: usize, b: usize) -> DiffOperator {
    DiffOperator::wirtinger(n, &[Wirtinger::Z(a), Wirtinger::ZBar(b)]).expect("directions in range")
}

/// `M(u) = log(ω_u^n/ω₀^n) − log(∫ω_u^n / V)`.
pub fn m_map(state: &AnsatzState, bg: &Background) -> ScalarField {
    let det = state.det();
    let det0 = bg.det0();
    let ratio = det.iter().sum::<f64>() / det0.iter().sum::<f64>();
    let values = det
        .iter()
        .zip(det0)
        .map(|(d, d0)| (d / d0).ln() - ratio.ln())
        .collect();
    real_field(state, values)
}

/// `M` at `u`; fails outside the cone.
pub fn m_map_at(u: &ScalarField, bg: &Background) -> Result<ScalarField> {
    Ok(m_map(&AnsatzState::new(u, bg)?, bg))
}

/// Density of `ω_u^n` against `dx₁…dx_{2n}`: `n! det g_u`.
pub fn g_density(state: &AnsatzState) -> ScalarField {
    let nf = n_factorial(state.n());
    real_field(state, state.det().iter().map(|d| nf * d).collect())
}

/// Density of `n/(n−1) · (√-1/2)∂∂̄ψ ∧ ω_u`, i.e. `n!/(n−1) Σ F_{pq̄} g_{pq̄}`.
pub fn linearize_g(psi: &FormN2, state: &AnsatzState) -> Result<ScalarField> {
    if psi.geometry() != state.geometry() {
        return Err(Error::Shape("direction on a different grid".into()));
    }
    let n = state.n();
    let f = forms::ddbar_to_hermitian(psi)?;
    let scale = n_factorial(n) / (n as f64 - 1.0);
    let values = f
        .entries()
        .iter()
        .zip(state.omega().field().entries())
        .map(|(fm, g)| fm.iter().zip(g.iter()).map(|(a, b)| (a * b).re).sum::<f64>() * scale)
        .collect();
    Ok(real_field(state, values))
}

/// `K d = Σ c_{ab} ∂²d/∂z_a∂z̄_b`, the non-projected part of `L`.
pub(crate) fn apply_k(d: &[f64], state: &AnsatzState) -> Result<Vec<f64>> {
    let geometry = state.geometry();
    let n = geometry.n();
    let spectrum = Spectrum::new(&real_field(state, d.to_vec()));
    let mut acc = vec![Complex64::new(0.0, 0.0); d.len()];
    let coeffs = state.coefficients();
    for a in geometry.active_directions() {
        for b in geometry.active_directions() {
            let h = spectrum.apply(&ddbar_op(n, a, b))?;
            for ((s, c), v) in acc.iter_mut().zip(coeffs).zip(h.samples()) {
                *s += c[(a - 1, b - 1)] * v;
            }
        }
    }
    Ok(acc.into_iter().map(|z| z.re).collect())
}

/// Euclidean transpose of [`apply_k`]; uses that `∂_a∂̄_b` is symmetric.
pub(crate) fn apply_k_transpose(y: &[f64], state: &AnsatzState) -> Result<Vec<f64>> {
    let geometry = state.geometry();
    let n = geometry.n();
    let coeffs = state.coefficients();
    let mut acc = vec![0.0; y.len()];
    for a in geometry.active_directions() {
        for b in geometry.active_directions() {
            let weighted = ScalarField::new(
                geometry.clone(),
                coeffs
                    .iter()
                    .zip(y)
                    .map(|(c, v)| c[(a - 1, b - 1)] * v)
                    .collect(),
            )?;
            let d = torus::apply_operator(&weighted, &ddbar_op(n, a, b))?;
            for (s, v) in acc.iter_mut().zip(d.samples()) {
                *s += v.re;
            }
        }
    }
    Ok(acc)
}

pub(crate) fn apply_l_vec(d: &[f64], state: &AnsatzState) -> Result<Vec<f64>> {
    Ok(state.project(&apply_k(d, state)?))
}

/// Adjoint of `L` on `ω_u^n`-mean-zero functions for the `ω_u^n` inner product.
pub(crate) fn apply_l_adjoint_vec(y: &[f64], state: &AnsatzState) -> Result<Vec<f64>> {
    let w = state.det();
    let wy: Vec<f64> = y.iter().zip(w).map(|(a, b)| a * b).collect();
    let total: f64 = wy.iter().sum();
    let w_sum: f64 = w.iter().sum();
    let projected: Vec<f64> = wy.iter().zip(w).map(|(v, wi)| v - wi * total / w_sum).collect();
    let kt = apply_k_transpose(&projected, state)?;
    Ok(state.project(&kt.iter().zip(w).map(|(v, wi)| v / wi).collect::<Vec<_>>()))
}

/// `L d = tr(W F_d)/(n−1) − ⟨·⟩_{ω_u^n}`, the derivative of `M` along `d η^{n−2}`.
pub fn apply_l(d: &ScalarField, state: &AnsatzState) -> Result<ScalarField> {
    same_grid(d, state)?;
    Ok(real_field(state, apply_l_vec(&d.real_parts(), state)?))
}

pub fn apply_l_adjoint(y: &ScalarField, state: &AnsatzState) -> Result<ScalarField> {
    same_grid(y, state)?;
    Ok(real_field(state, apply_l_adjoint_vec(&y.real_parts(), state)?))
}

fn same_grid(f: &ScalarField, state: &AnsatzState) -> Result<()> {
    if f.geometry() != state.geometry() {
        return Err(Error::Shape("field and base point on different grids".into()));
    }
    Ok(())
}

/// `⟨h, v⟩ = ∫ h v ω_u^n`.
pub fn volume_pairing(h: &ScalarField, v: &ScalarField, state: &AnsatzState) -> Result<f64> {
    same_grid(h, state)?;
    same_grid(v, state)?;
    let nf = n_factorial(state.n());
    let sum: f64 = h
        .samples()
        .iter()
        .zip(v.samples())
        .zip(state.det())
        .map(|((a, b), w)| a.re * b.re * w * nf)
        .sum();
    Ok(sum / h.len() as f64 * state.geometry().volume())
}

/// Per-direction samples of `∂_a f` (or `∂̄_a f`).
type Gradient = Vec<Vec<Complex64>>;

/// Weak form `A(u,v)`; equals `−⟨L u, v⟩` when `v` is `ω_u^n`-mean-zero.
///
/// `A = n(n−2)!/(2(n−1)) ∫ [tr g · tr P − tr(g P) + v S] dV` with
/// `P_{ab̄} = u_a v_b̄ + v_a u_b̄` and `S` collecting the first derivatives of `g`.
pub fn bilinear_a(u: &ScalarField, v: &ScalarField, state: &AnsatzState) -> Result<f64> {
    same_grid(u, state)?;
    same_grid(v, state)?;
    let geometry = state.geometry();
    let n = geometry.n();
    let len = geometry.len();
    let dirs = geometry.active_directions();
    let zero = vec![Complex64::new(0.0, 0.0); len];

    let first = |f: &ScalarField| -> Result<(Gradient, Gradient)> {
        let mut d = vec![zero.clone(); n];
        let mut db = vec![zero.clone(); n];
        for &a in &dirs {
            d[a - 1] = torus::wirtinger_d(f, a)?.into_samples();
            db[a - 1] = torus::wirtinger_dbar(f, a)?.into_samples();
        }
        Ok((d, db))
    };
    let (u_d, u_db) = first(u)?;
    let (v_d, v_db) = first(v)?;

    let g = state.omega().field();
    // dg[a][c][e] = ∂_a g_{ce}, dbg[a][c][e] = ∂̄_a g_{ce}
    let mut dg = vec![vec![vec![zero.clone(); n]; n]; n];
    let mut dbg = dg.clone();
    for c in 1..=n {
        for e in 1..=n {
            let entry = g.entry_field(c, e);
            for &a in &dirs {
                dg[a - 1][c - 1][e - 1] = torus::wirtinger_d(&entry, a)?.into_samples();
                dbg[a - 1][c - 1][e - 1] = torus::wirtinger_dbar(&entry, a)?.into_samples();
            }
        }
    }

    let mut total = 0.0;
    for x in 0..len {
        let gm = g.at(x);
        let p = |a: usize, b: usize| u_d[a][x] * v_db[b][x] + v_d[a][x] * u_db[b][x];
        let mut tr_g = Complex64::new(0.0, 0.0);
        let mut tr_p = Complex64::new(0.0, 0.0);
        let mut tr_gp = Complex64::new(0.0, 0.0);
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..n {
            tr_g += gm[(a, a)];
            tr_p += p(a, a);
            for c in 0..n {
                tr_gp += gm[(a, c)] * p(c, a);
                s += u_d[a][x] * dbg[a][c][c][x] - u_d[a][x] * dbg[c][c][a][x]
                    + u_db[a][x] * dg[a][c][c][x]
                    - u_db[c][x] * dg[a][c][a][x];
            }
        }
        total += (tr_g * tr_p - tr_gp + v.samples()[x] * s).re;
    }
    let nf = n as f64 * n_factorial(n - 2) / (2.0 * (n as f64 - 1.0));
    Ok(nf * total / len as f64 * geometry.volume())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::solver::state::ansatz_form;
    use crate::torus::{TorusGeometry, TrigPoly};

    fn setup() -> (Background, AnsatzState, ChaCha8Rng) {
        let g = TorusGeometry::new(3, vec![1, 3], vec![32, 32]).unwrap();
        let bg = Background::standard(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = TrigPoly::random_real(&mut rng, &g, 3, 6, 0.05).sample_real(&g);
        let state = AnsatzState::new(&u, &bg).unwrap();
        (bg, state, rng)
    }

    #[test]
    fn m_vanishes_at_zero_and_is_compatible() {
        let (bg, state, _) = setup();
        assert_eq!(m_map(&AnsatzState::zero(&bg), &bg).max_abs(), 0.0);
        let m = m_map(&state, &bg);
        let num: f64 = m.samples().iter().zip(bg.det0()).map(|(v, w)| v.re.exp() * w).sum();
        let den: f64 = bg.det0().iter().sum();
        assert!((num / den - 1.0).abs() < 1e-14);
    }

    #[test]
    fn l_at_zero_is_scaled_laplacian() {
        let (bg, _, mut rng) = setup();
        let g = bg.geometry().clone();
        let zero = AnsatzState::zero(&bg);
        let d = TrigPoly::random_real(&mut rng, &g, 4, 5, 1.0).without_mean().sample_real(&g);
        let l = apply_l(&d, &zero).unwrap();
        let lap = torus::apply_operator(&d, &DiffOperator::flat_laplacian(3)).unwrap().scale(0.5);
        assert!(l.max_diff(&lap).unwrap() < 1e-12);
    }

    #[test]
    fn l_is_derivative_of_m() {
        let (bg, state, mut rng) = setup();
        let g = bg.geometry().clone();
        let d = TrigPoly::random_real(&mut rng, &g, 3, 4, 1.0).sample_real(&g);
        let m0 = m_map(&state, &bg);
        let ld = apply_l(&d, &state).unwrap();
        let mut prev = f64::INFINITY;
        for t in [1e-2, 1e-3, 1e-4] {
            let shifted = state.u().add(&d.scale(t)).unwrap();
            let mt = m_map_at(&shifted, &bg).unwrap();
            let rem = mt.sub(&m0).unwrap().scale(1.0 / t).max_diff(&ld).unwrap();
            assert!(rem < prev / 5.0, "remainder {rem:e} at t={t}");
            prev = rem;
        }
    }

    #[test]
    fn adjoint_pairs_correctly() {
        let (_, state, mut rng) = setup();
        let g = state.geometry().clone();
        let x = state.project(&TrigPoly::random_real(&mut rng, &g, 4, 6, 1.0).sample_real(&g).real_parts());
        let y = state.project(&TrigPoly::random_real(&mut rng, &g, 4, 6, 1.0).sample_real(&g).real_parts());
        let lx = apply_l_vec(&x, &state).unwrap();
        let lty = apply_l_adjoint_vec(&y, &state).unwrap();
        let w = state.det();
        let lhs: f64 = lx.iter().zip(&y).zip(w).map(|((a, b), c)| a * b * c).sum();
        let rhs: f64 = x.iter().zip(&lty).zip(w).map(|((a, b), c)| a * b * c).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn linearized_g_matches_finite_difference() {
        let (bg, state, mut rng) = setup();
        let g = bg.geometry().clone();
        let d = TrigPoly::random_real(&mut rng, &g, 2, 3, 1.0).sample_real(&g);
        let dir = ansatz_form(&d).unwrap();
        let lin = linearize_g(&dir, &state).unwrap();
        let g0 = g_density(&state);
        let t = 1e-5;
        let shifted = AnsatzState::new(&state.u().add(&d.scale(t)).unwrap(), &bg).unwrap();
        let fd = g_density(&shifted).sub(&g0).unwrap().scale(1.0 / t);
        assert!(fd.max_diff(&lin).unwrap() < 1e-3 * lin.max_abs().max(1.0));
        // a constant direction is killed by ∂∂̄
        let c = ansatz_form(&ScalarField::constant(&g, 2.0)).unwrap();
        assert!(linearize_g(&c, &state).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn weak_form_is_minus_l_pairing() {
        let (_, state, mut rng) = setup();
        let g = state.geometry().clone();
        let u = TrigPoly::random_real(&mut rng, &g, 3, 5, 1.0).sample_real(&g);
        let v0 = TrigPoly::random_real(&mut rng, &g, 3, 5, 1.0).sample_real(&g);
        let v = ScalarField::from_real(g.clone(), state.project(&v0.real_parts())).unwrap();
        let a = bilinear_a(&u, &v, &state).unwrap();
        let pairing = volume_pairing(&apply_l(&u, &state).unwrap(), &v, &state).unwrap();
        assert!((a + pairing).abs() < 1e-9 * a.abs().max(1.0), "A = {a}, <Lu,v> = {pairing}");
    }
}
