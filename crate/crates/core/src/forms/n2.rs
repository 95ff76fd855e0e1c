//! Real `(n−2,n−2)`-forms and `(√-1/2)∂∂̄` into the signed `(n−1,n−1)` basis.
//!
//! Generators are numbered `dz_i ↦ 2(i−1)`, `dz̄_i ↦ 2(i−1)+1`, so a monomial
//! written in increasing generator order is interleaved
//! `dz_1∧dz̄_1∧dz_2∧…`. A component `φ_{P,Q}` multiplies
//! `(n−1)! (√-1/2)^{n−2} β_{P,Q}` with `β_{P,Q}` the increasing monomial on
//! `{dz_p : p∈P} ∪ {dz̄_q : q∈Q}`. Every sign below comes from permutation
//! parities of generator sequences.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::hermitian::HermitianField;
use super::linalg::CMatrix;
use crate::error::{Error, Result};
use crate::torus::{ScalarField, Spectrum, TorusGeometry, Wirtinger, DiffOperator};

/// Sign convention `s(p,q)`: `−1` if `p > q`, else `1`.
pub fn sign_s(p: usize, q: usize) -> f64 {
    if p > q {
        -1.0
    } else {
        1.0
    }
}

pub(crate) fn gen_z(i: usize) -> usize {
    2 * (i - 1)
}

pub(crate) fn gen_zbar(i: usize) -> usize {
    2 * (i - 1) + 1
}

/// Parity of the permutation sorting `seq`; zero if an entry repeats.
pub fn permutation_sign(seq: &[usize]) -> f64 {
    let mut inversions = 0usize;
    for (a, &x) in seq.iter().enumerate() {
        for &y in &seq[a + 1..] {
            if x == y {
                return 0.0;
            }
            if x > y {
                inversions += 1;
            }
        }
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Increasing generator sequence of `β_{P,Q}`.
pub fn basis_monomial(p: &[usize], q: &[usize]) -> Vec<usize> {
    let mut seq: Vec<usize> = p.iter().map(|&i| gen_z(i)).collect();
    seq.extend(q.iter().map(|&j| gen_zbar(j)));
    seq.sort_unstable();
    seq
}

/// `ρ(P,Q)` with `conj(φ) = φ` iff `φ_{Q,P} = ρ(P,Q) · conj(φ_{P,Q})` for all pairs.
///
/// Conjugation swaps `dz ↔ dz̄` inside `β_{P,Q}` (a reordering to `β_{Q,P}`)
/// and turns `(√-1/2)^{n−2}` into `(−1)^{n−2}(√-1/2)^{n−2}`.
pub fn reality_factor(p: &[usize], q: &[usize]) -> f64 {
    let conjugated: Vec<usize> = basis_monomial(p, q).into_iter().map(|g| g ^ 1).collect();
    let n_minus_2 = p.len();
    let parity = if n_minus_2.is_multiple_of(2) { 1.0 } else { -1.0 };
    parity * permutation_sign(&conjugated)
}

fn complement(set: &[usize], n: usize) -> Vec<usize> {
    (1..=n).filter(|i| !set.contains(i)).collect()
}

/// Real `(n−2,n−2)`-form with sparse components `φ_{P,Q}`.
#[derive(Clone, Debug)]
pub struct FormN2 {
    geometry: TorusGeometry,
    components: BTreeMap<(Vec<usize>, Vec<usize>), ScalarField>,
}

impl FormN2 {
    pub fn zero(geometry: &TorusGeometry) -> Self {
        Self {
            geometry: geometry.clone(),
            components: BTreeMap::new(),
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    /// Sets `φ_{P,Q}`; `P`, `Q` are 1-based index sets of size `n−2`.
    pub fn insert(&mut self, p: Vec<usize>, q: Vec<usize>, value: ScalarField) -> Result<()> {
        let n = self.n();
        for set in [&p, &q] {
            if set.len() != n - 2
                || set.windows(2).any(|w| w[0] >= w[1])
                || set.iter().any(|&i| i == 0 || i > n)
            {
                return Err(Error::Shape(format!(
                    "index set {set:?} is not an increasing (n-2)-subset of 1..={n}"
                )));
            }
        }
        if value.geometry() != &self.geometry {
            return Err(Error::Shape("component on a different grid".into()));
        }
        self.components.insert((p, q), value);
        Ok(())
    }

    /// Inserts `φ_{P,Q}` and the partner `φ_{Q,P}` that makes the form real.
    pub fn insert_real_pair(&mut self, p: Vec<usize>, q: Vec<usize>, value: ScalarField) -> Result<()> {
        if p == q {
            let value = value.into_real(1e-12)?;
            return self.insert(p, q, value);
        }
        let rho = reality_factor(&p, &q);
        let partner = value.conj().scale(rho);
        self.insert(p.clone(), q.clone(), value)?;
        self.insert(q, p, partner)
    }

    pub fn get(&self, p: &[usize], q: &[usize]) -> Option<&ScalarField> {
        self.components.get(&(p.to_vec(), q.to_vec()))
    }

    pub fn components(&self) -> impl Iterator<Item = (&Vec<usize>, &Vec<usize>, &ScalarField)> {
        self.components.iter().map(|((p, q), f)| (p, q, f))
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Largest violation of `φ_{Q,P} = ρ(P,Q) conj(φ_{P,Q})`.
    pub fn reality_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((p, q), f) in &self.components {
            let rho = reality_factor(p, q);
            let partner = self.components.get(&(q.clone(), p.clone()));
            let dev = match partner {
                Some(g) => f
                    .conj()
                    .scale(rho)
                    .max_diff(g)
                    .unwrap_or(f64::INFINITY),
                None => f.max_abs(),
            };
            worst = worst.max(dev);
        }
        worst
    }

    pub fn check_reality(&self, tol: f64) -> Result<()> {
        let scale = self
            .components
            .values()
            .map(|f| f.max_abs())
            .fold(1.0, f64::max);
        let deviation = self.reality_deviation();
        if deviation > tol * scale {
            return Err(Error::FormNotReal { deviation });
        }
        Ok(())
    }
}

/// `F_φ` defined by
/// `(√-1/2)∂∂̄φ = (√-1/2)^{n−1}(n−1)! Σ_{p,q} (F_φ)_{pq̄} s(p,q) [basis omitting dz_p, dz̄_q]`.
///
/// Each component contributes `∂²φ_{P,Q}/∂z_a∂z̄_b · dz_a∧dz̄_b∧β_{P,Q}` for
/// `a ∉ P`, `b ∉ Q`; sorting that sequence fixes the sign, and the two
/// omitted generators fix `(p, q)`.
pub fn ddbar_to_hermitian(phi: &FormN2) -> Result<HermitianField> {
    ddbar_to_hermitian_with(phi, &KernelConventions::default())
}

/// Sign and normalization choices of [`ddbar_to_hermitian`], swappable so
/// that a verification run can inject deliberate errors.
#[derive(Clone, Copy, Debug)]
pub(crate) struct KernelConventions {
    pub sign: fn(usize, usize) -> f64,
    /// Whether component storage absorbs the `(n−1)!` factor.
    pub factorial_absorbed: bool,
}

impl Default for KernelConventions {
    fn default() -> Self {
        Self {
            sign: sign_s,
            factorial_absorbed: true,
        }
    }
}

pub(crate) fn ddbar_to_hermitian_with(phi: &FormN2, conv: &KernelConventions) -> Result<HermitianField> {
    phi.check_reality(1e-12)?;
    let geometry = phi.geometry();
    let n = geometry.n();
    let len = geometry.len();
    let mut planes = vec![vec![Complex64::new(0.0, 0.0); len]; n * n];
    let normalization = if conv.factorial_absorbed {
        1.0
    } else {
        1.0 / (1..n).map(|k| k as f64).product::<f64>()
    };

    for (p_set, q_set, value) in phi.components() {
        let spectrum = Spectrum::new(value);
        let beta = basis_monomial(p_set, q_set);
        for a in complement(p_set, n) {
            if !geometry.direction_active(a) {
                continue;
            }
            for b in complement(q_set, n) {
                if !geometry.direction_active(b) {
                    continue;
                }
                let mut seq = vec![gen_z(a), gen_zbar(b)];
                seq.extend_from_slice(&beta);
                let eps = permutation_sign(&seq);
                let mut zs = p_set.clone();
                zs.push(a);
                let mut zbs = q_set.clone();
                zbs.push(b);
                let p = complement(&zs, n)[0];
                let q = complement(&zbs, n)[0];
                let coeff = (conv.sign)(p, q) * eps * normalization;

                let op = DiffOperator::wirtinger(n, &[Wirtinger::Z(a), Wirtinger::ZBar(b)])?;
                let deriv = spectrum.apply(&op)?;
                let plane = &mut planes[(p - 1) * n + (q - 1)];
                for (acc, d) in plane.iter_mut().zip(deriv.samples()) {
                    *acc += d * coeff;
                }
            }
        }
    }

    let entries = (0..len)
        .map(|k| CMatrix::from_fn(n, n, |i, j| planes[i * n + j][k]))
        .collect();
    HermitianField::new(geometry.clone(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{ddbar, integrate};

    #[test]
    fn sign_identity_for_signed_basis() {
        // dz_p ∧ dz̄_q ∧ s(p,q) [basis omitting dz_p, dz̄_q] = dz_1∧dz̄_1∧…∧dz_n∧dz̄_n
        for n in 3..=5 {
            for p in 1..=n {
                for q in 1..=n {
                    let zs: Vec<usize> = (1..=n).filter(|&i| i != p).collect();
                    let zbs: Vec<usize> = (1..=n).filter(|&i| i != q).collect();
                    let mut seq = vec![gen_z(p), gen_zbar(q)];
                    seq.extend(basis_monomial(&zs, &zbs));
                    assert_eq!(sign_s(p, q) * permutation_sign(&seq), 1.0, "n={n} p={p} q={q}");
                }
            }
        }
    }

    #[test]
    fn diagonal_components_are_real() {
        assert_eq!(reality_factor(&[3], &[3]), 1.0);
        assert_eq!(reality_factor(&[3, 4], &[3, 4]), 1.0);
        // off-diagonal pairs carry a definite sign; reapplying gives back the identity
        let (p, q) = (vec![1, 3], vec![2, 3]);
        assert_eq!(reality_factor(&p, &q) * reality_factor(&q, &p), 1.0);
    }

    #[test]
    fn single_diagonal_component() {
        let g = TorusGeometry::line(3, 1, 32).unwrap();
        let u = ScalarField::from_real_fn(&g, |x| x[0].sin() + 0.3 * (2.0 * x[0]).cos());
        let mut phi = FormN2::zero(&g);
        phi.insert(vec![3], vec![3], u.clone()).unwrap();
        let f = ddbar_to_hermitian(&phi).unwrap();
        let lap = ddbar(&u, 1, 1).unwrap();
        for i in 1..=3 {
            for j in 1..=3 {
                let e = f.entry_field(i, j);
                if (i, j) == (2, 2) {
                    assert!(e.max_diff(&lap).unwrap() < 1e-14);
                } else {
                    assert!(e.max_abs() < 1e-14, "entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn entries_have_mean_zero() {
        let g = TorusGeometry::new(4, vec![1, 4, 5], vec![8, 8, 8]).unwrap();
        let mut phi = FormN2::zero(&g);
        let c = ScalarField::from_fn(&g, |x| Complex64::new(x[0].cos() * x[3].sin(), x[4].cos()));
        phi.insert_real_pair(vec![1, 3], vec![2, 3], c).unwrap();
        phi.insert(vec![2, 4], vec![2, 4], ScalarField::from_real_fn(&g, |x| (x[0] + x[4]).sin()))
            .unwrap();
        let f = ddbar_to_hermitian(&phi).unwrap();
        for i in 1..=4 {
            for j in 1..=4 {
                assert!(integrate(&f.entry_field(i, j)).norm() / f.geometry().volume() < 1e-14);
            }
        }
    }

    #[test]
    fn unreal_form_is_rejected() {
        let g = TorusGeometry::line(3, 1, 8).unwrap();
        let mut phi = FormN2::zero(&g);
        phi.insert(vec![1], vec![2], ScalarField::constant(&g, 1.0)).unwrap();
        assert!(matches!(
            ddbar_to_hermitian(&phi),
            Err(Error::FormNotReal { .. })
        ));
        assert!(phi.insert(vec![2, 1], vec![1], ScalarField::constant(&g, 1.0)).is_err());
    }
}
