//! Brute-force exterior algebra over `C^n`, independent of the sign
//! bookkeeping in the `∂∂̄` kernel.
//!
//! A form is a map from increasing generator words to coefficient fields.
//! Words use `dz_i ↦ 2(i−1)`, `dz̄_i ↦ 2i−1`; wedge products are normalized
//! by bubble sort with an explicit swap count.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::Result;
use crate::forms::{CMatrix, FormN2, HermitianField};
use crate::torus::{wirtinger_d, wirtinger_dbar, ScalarField, TorusGeometry};

fn dz(i: usize) -> usize {
    2 * (i - 1)
}

fn dzbar(i: usize) -> usize {
    2 * i - 1
}

/// Sorts `word` in place; returns the sign of the permutation, or `None`
/// when a generator repeats (the wedge vanishes).
pub fn normalize_word(word: &mut [usize]) -> Option<f64> {
    let mut swaps = 0usize;
    for end in (1..word.len()).rev() {
        for k in 0..end {
            if word[k] == word[k + 1] {
                return None;
            }
            if word[k] > word[k + 1] {
                word.swap(k, k + 1);
                swaps += 1;
            }
        }
    }
    if word.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some(if swaps.is_multiple_of(2) { 1.0 } else { -1.0 })
}

/// Differential form with field coefficients.
#[derive(Clone, Debug)]
pub struct ExteriorForm {
    geometry: TorusGeometry,
    terms: BTreeMap<Vec<usize>, ScalarField>,
}

impl ExteriorForm {
    pub fn zero(geometry: &TorusGeometry) -> Self {
        Self {
            geometry: geometry.clone(),
            terms: BTreeMap::new(),
        }
    }

    /// Adds `coefficient · (wedge of word)`, reordering `word` as needed.
    pub fn add_term(&mut self, word: &[usize], coefficient: &ScalarField) -> Result<()> {
        let mut w = word.to_vec();
        let Some(sign) = normalize_word(&mut w) else {
            return Ok(());
        };
        let term = coefficient.scale(sign);
        let entry = match self.terms.remove(&w) {
            Some(existing) => existing.add(&term)?,
            None => term,
        };
        self.terms.insert(w, entry);
        Ok(())
    }

    pub fn coefficient(&self, word: &[usize]) -> Option<&ScalarField> {
        self.terms.get(word)
    }

    /// `φ` as the full form `Σ (n−1)! (√-1/2)^{n−2} φ_{P,Q} β_{P,Q}`, where
    /// `β_{P,Q}` lists its generators in increasing order.
    pub fn from_form(phi: &FormN2) -> Result<Self> {
        let n = phi.n();
        let factorial: f64 = (1..n).map(|k| k as f64).product();
        let prefactor = Complex64::new(0.0, 0.5).powu(n as u32 - 2) * factorial;
        let mut out = Self::zero(phi.geometry());
        for (p, q, value) in phi.components() {
            let mut word: Vec<usize> = p.iter().map(|&i| dz(i)).collect();
            word.extend(q.iter().map(|&j| dzbar(j)));
            word.sort_unstable();
            out.add_term(&word, &value.map(|z| z * prefactor))?;
        }
        Ok(out)
    }

    fn differentiate(&self, holomorphic: bool) -> Result<Self> {
        let n = self.geometry.n();
        let mut out = Self::zero(&self.geometry);
        for (word, f) in &self.terms {
            for a in 1..=n {
                let (generator, derivative) = if holomorphic {
                    (dz(a), wirtinger_d(f, a)?)
                } else {
                    (dzbar(a), wirtinger_dbar(f, a)?)
                };
                let mut w = vec![generator];
                w.extend_from_slice(word);
                out.add_term(&w, &derivative)?;
            }
        }
        Ok(out)
    }

    /// `∂`, acting from the left.
    pub fn del(&self) -> Result<Self> {
        self.differentiate(true)
    }

    /// `∂̄`, acting from the left.
    pub fn del_bar(&self) -> Result<Self> {
        self.differentiate(false)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            terms: self.terms.iter().map(|(w, f)| (w.clone(), f.map(|z| z * c))).collect(),
        }
    }
}

/// `F_φ` read off from the brute-force expansion of `(√-1/2)∂∂̄φ` against
/// the basis `γ_{pq}` fixed by `dz_p ∧ dz̄_q ∧ γ_{pq} = dz_1∧dz̄_1∧…∧dz_n∧dz̄_n`.
pub fn oracle_hermitian(phi: &FormN2) -> Result<HermitianField> {
    let geometry = phi.geometry();
    let n = geometry.n();
    let i_half = Complex64::new(0.0, 0.5);
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    let top = ExteriorForm::from_form(phi)?.del_bar()?.del()?.scale(i_half);
    let normalizer = i_half.powu(n as u32 - 1) * factorial;
    let zero = ScalarField::zeros(geometry);
    let mut planes = vec![vec![zero.clone(); n]; n];
    for p in 1..=n {
        for q in 1..=n {
            let mut gamma: Vec<usize> = (1..=n)
                .flat_map(|i| [dz(i), dzbar(i)])
                .filter(|&g| g != dz(p) && g != dzbar(q))
                .collect();
            gamma.sort_unstable();
            let mut full = vec![dz(p), dzbar(q)];
            full.extend_from_slice(&gamma);
            let orientation = normalize_word(&mut full).expect("distinct generators");
            if let Some(c) = top.coefficient(&gamma) {
                planes[p - 1][q - 1] = c.map(|z| z * orientation / normalizer);
            }
        }
    }
    HermitianField::from_entry_fields(geometry, &planes)
}

/// Largest `|A − B|` entry over the listed grid points.
pub fn sampled_difference(a: &HermitianField, b: &HermitianField, points: &[usize]) -> f64 {
    points
        .iter()
        .map(|&k| {
            let d: CMatrix = a.at(k) - b.at(k);
            d.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
        })
        .fold(0.0, f64::max)
}
