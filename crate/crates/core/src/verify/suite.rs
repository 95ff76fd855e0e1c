use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{oracle_hermitian, sampled_difference};
use crate::construction::{self, ConstructionParams};
use crate::error::{Error, Result};
use crate::forms::{
    self, ddbar_to_hermitian_with, linalg, sign_s, AmgmVerdict, CMatrix, FormN2, HermitianField,
    HolomorphicVolume, KernelConventions, MetricField,
};
use crate::torus::{self, ScalarField, Spectrum, TorusGeometry, TrigPoly};

/// Deliberate defect injected into the kernels under test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mutation {
    #[default]
    None,
    /// `s(p,q) = −1` for `p < q` instead of `p > q`.
    FlipSign,
    /// Component storage no longer absorbs `(n−1)!`.
    DropFactorial,
    /// Mean-zero projection becomes the identity.
    BreakMeanZero,
}

impl Mutation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::FlipSign => "flip-sign",
            Self::DropFactorial => "drop-factorial",
            Self::BreakMeanZero => "break-mean-zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "flip-sign" => Ok(Self::FlipSign),
            "drop-factorial" => Ok(Self::DropFactorial),
            "break-mean-zero" => Ok(Self::BreakMeanZero),
            other => Err(Error::Parameter(format!("unknown mutation {other:?}"))),
        }
    }

    fn conventions(&self) -> KernelConventions {
        fn flipped(p: usize, q: usize) -> f64 {
            if p < q {
                -1.0
            } else {
                1.0
            }
        }
        match self {
            Self::FlipSign => KernelConventions {
                sign: flipped,
                ..KernelConventions::default()
            },
            Self::DropFactorial => KernelConventions {
                factorial_absorbed: false,
                ..KernelConventions::default()
            },
            _ => KernelConventions {
                sign: sign_s,
                factorial_absorbed: true,
            },
        }
    }

    fn project(&self, f: &ScalarField) -> ScalarField {
        match self {
            Self::BreakMeanZero => f.clone(),
            _ => torus::mean_zero_project(f),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub n: usize,
    /// Real axes carrying grid points for the random-field checks.
    pub active_axes: Vec<usize>,
    /// Points per active axis.
    pub grid: usize,
    /// Relative tolerance for identities that hold exactly.
    pub tol: f64,
    /// Tolerance for agreement with the exterior-algebra oracle.
    pub oracle_tol: f64,
    /// Sup-norm bound on `Ric^h` of the constructed metric.
    pub ricci_tol: f64,
    pub seed: u64,
    /// Random forms compared against the oracle.
    pub oracle_samples: usize,
    /// Restrict to these checks; unknown names fail.
    pub only: Option<Vec<String>>,
    pub mutation: Mutation,
}

impl SuiteConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            active_axes: vec![1, 3],
            grid: 16,
            tol: 1e-10,
            oracle_tol: 1e-12,
            ricci_tol: 1e-9,
            seed: 2024,
            oracle_samples: 20,
            only: None,
            mutation: Mutation::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    /// Statement the check tests.
    pub anchor: String,
    pub measured: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub passed: bool,
    /// Set when the check aborted with an error.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub n: usize,
    pub grid: usize,
    pub seed: u64,
    pub mutation: Mutation,
    /// Sorted by name.
    pub checks: Vec<CheckResult>,
    pub environment: String,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `key = value` lines without the environment stamp.
    pub fn body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "grid = {}", self.grid);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "mutation = {}", self.mutation.as_str());
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            let _ = writeln!(out, "check.{}.anchor = {}", c.name, c.anchor);
            let _ = writeln!(out, "check.{}.measured = {:.6e}", c.name, c.measured);
            let _ = writeln!(out, "check.{}.tolerance = {} {:.3e}", c.name, rel, c.tolerance);
            if let Some(e) = &c.error {
                let _ = writeln!(out, "check.{}.error = {}", c.name, e);
            }
            let _ = writeln!(out, "check.{}.result = {}", c.name, if c.passed { "pass" } else { "fail" });
        }
        let _ = writeln!(out, "passed = {}", self.checks.iter().filter(|c| c.passed).count());
        let _ = writeln!(out, "failed = {}", self.checks.iter().filter(|c| !c.passed).count());
        let _ = writeln!(out, "verdict = {}", if self.all_passed() { "pass" } else { "fail" });
        out
    }

    pub fn to_text(&self) -> String {
        format!("environment = {}\n{}", self.environment, self.body())
    }
}

fn environment_stamp() -> String {
    format!(
        "ftcy-core {} {}-{}",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

type CheckFn = fn(&SuiteConfig, &mut ChaCha8Rng) -> Result<(f64, bool)>;

struct Check {
    name: &'static str,
    anchor: &'static str,
    relation: Relation,
    tolerance: fn(&SuiteConfig) -> f64,
    run: CheckFn,
}

const CHECKS: &[Check] = &[
    Check {
        name: "amgm_rigidity",
        anchor: "mean-zero B with I+B > 0 and det(I+B) = c >= 1 forces c = 1 and B = 0",
        relation: Relation::AtLeast,
        tolerance: |_| 1e-6,
        run: check_amgm_rigidity,
    },
    Check {
        name: "amgm_trace_determinant",
        anchor: "tr(A)/n >= det(A)^(1/n) for positive A, with equality at multiples of I",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_amgm_inequality,
    },
    Check {
        name: "constructed_metric_ricci_flat",
        anchor: "explicit solution has constant |Omega| and vanishing Ric^h",
        relation: Relation::AtMost,
        tolerance: |c| c.ricci_tol,
        run: check_constructed_ricci,
    },
    Check {
        name: "ddbar_integrals_vanish",
        anchor: "integrals of d_i dbar_j f and d_i d_j f over the torus vanish for all i, j",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_integrals,
    },
    Check {
        name: "ddbar_oracle_equivalence",
        anchor: "F_phi equals the brute-force exterior expansion of (i/2) d dbar phi",
        relation: Relation::AtMost,
        tolerance: |c| c.oracle_tol,
        run: check_oracle,
    },
    Check {
        name: "f_phi_mean_zero",
        anchor: "every entry of F_phi integrates to zero",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_f_mean_zero,
    },
    Check {
        name: "kahler_integral_identity",
        anchor: "constant omega_0: integral of tr(Psi_0^-1 F_phi) against omega_0^n vanishes",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_kahler_integral,
    },
    Check {
        name: "laplacian_solve_round_trip",
        anchor: "d dbar is invertible on mean-zero functions",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_solve_round_trip,
    },
    Check {
        name: "norm_ricci_equivalence",
        anchor: "Ric^h = d dbar log |Omega|^2, so |Omega| constant iff Ric^h = 0",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_norm_ricci,
    },
    Check {
        name: "norm_volume_identity",
        anchor: "det omega / det omega_0 = |Omega|^2_omega_0 / |Omega|^2_omega pointwise",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_norm_volume,
    },
    Check {
        name: "power_map_determinant",
        anchor: "det Psi(g) = det(g)^(n-1)",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_power_det,
    },
    Check {
        name: "power_root_round_trip",
        anchor: "root extraction inverts the power map",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_round_trip,
    },
    Check {
        name: "volume_normalization",
        anchor: "Omega can be rescaled so that |Omega| = (integral of omega^n)^(-1/2)",
        relation: Relation::AtMost,
        tolerance: |c| c.tol,
        run: check_volume_normalization,
    },
];

/// Names of all checks in report order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

fn name_salt(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.n < 3 {
        return Err(Error::Parameter(format!("suite needs n >= 3, got {}", cfg.n)));
    }
    let selected: Vec<String> = match &cfg.only {
        Some(names) => names.clone(),
        None => CHECKS.iter().map(|c| c.name.to_string()).collect(),
    };
    let mut checks = Vec::with_capacity(selected.len());
    for name in selected {
        let Some(check) = CHECKS.iter().find(|c| c.name == name) else {
            checks.push(CheckResult {
                name,
                anchor: "unknown check".into(),
                measured: f64::NAN,
                tolerance: 0.0,
                relation: Relation::AtMost,
                passed: false,
                error: Some("no check with this name".into()),
            });
            continue;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ name_salt(check.name));
        let tolerance = (check.tolerance)(cfg);
        let (measured, extra_ok, error) = match (check.run)(cfg, &mut rng) {
            Ok((m, ok)) => (m, ok, None),
            Err(e) => (f64::INFINITY, false, Some(e.to_string())),
        };
        let within = match check.relation {
            Relation::AtMost => measured <= tolerance,
            Relation::AtLeast => measured >= tolerance,
        };
        checks.push(CheckResult {
            name: check.name.into(),
            anchor: check.anchor.into(),
            measured,
            tolerance,
            relation: check.relation,
            passed: within && extra_ok,
            error,
        });
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(SuiteReport {
        n: cfg.n,
        grid: cfg.grid,
        seed: cfg.seed,
        mutation: cfg.mutation,
        checks,
        environment: environment_stamp(),
    })
}

fn geometry(cfg: &SuiteConfig) -> Result<TorusGeometry> {
    TorusGeometry::new(cfg.n, cfg.active_axes.clone(), vec![cfg.grid; cfg.active_axes.len()])
}

/// One real axis per complex direction, so every `∂_a` is exercised.
fn oracle_geometry(cfg: &SuiteConfig) -> Result<TorusGeometry> {
    let axes: Vec<usize> = (1..=cfg.n).map(|i| if i % 2 == 1 { 2 * i - 1 } else { 2 * i }).collect();
    let size = if cfg.n > 3 { 8 } else { cfg.grid.min(16) };
    TorusGeometry::new(cfg.n, axes.clone(), vec![size; axes.len()])
}

fn max_wavenumber(g: &TorusGeometry) -> i64 {
    let min = *g.grid_shape().iter().min().expect("active axes") as i64;
    (min / 2 - 1).clamp(1, 3)
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (1..=n).collect();
    while all.len() > n - 2 {
        let k = rng.gen_range(0..all.len());
        all.remove(k);
    }
    all
}

/// Real form with `terms` random components (diagonal or conjugate pairs).
pub fn random_form(rng: &mut ChaCha8Rng, g: &TorusGeometry, terms: usize, amplitude: f64) -> Result<FormN2> {
    let n = g.n();
    let k = max_wavenumber(g);
    let mut phi = FormN2::zero(g);
    for _ in 0..terms {
        let p = random_subset(rng, n);
        let q = if rng.gen_bool(0.4) { p.clone() } else { random_subset(rng, n) };
        if p == q {
            let value = TrigPoly::random_real(rng, g, k, 4, amplitude).sample_real(g);
            phi.insert(p, q, value)?;
        } else {
            let value = TrigPoly::random_complex(rng, g, k, 4, amplitude).sample(g);
            phi.insert_real_pair(p, q, value)?;
        }
    }
    Ok(phi)
}

/// Pointwise `B B* + I/2` with `B = I + amplitude · (random band-limited entries)`.
pub fn random_metric(rng: &mut ChaCha8Rng, g: &TorusGeometry, amplitude: f64) -> Result<MetricField> {
    let n = g.n();
    let k = max_wavenumber(g);
    let mut entries = vec![CMatrix::identity(n, n); g.len()];
    for i in 0..n {
        for j in 0..n {
            let f = TrigPoly::random_complex(rng, g, k, 3, amplitude).sample(g);
            for (m, z) in entries.iter_mut().zip(f.samples()) {
                m[(i, j)] += z;
            }
        }
    }
    let half = CMatrix::identity(n, n) * Complex64::new(0.5, 0.0);
    let entries = entries.into_iter().map(|b| &b * b.adjoint() + &half).collect();
    MetricField::new(HermitianField::new(g.clone(), entries)?)
}

fn random_constant_metric(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let b = CMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        Complex64::new(d + 0.3 * rng.gen_range(-1.0..1.0), 0.3 * rng.gen_range(-1.0..1.0))
    });
    &b * b.adjoint() + CMatrix::identity(n, n) * Complex64::new(0.5, 0.0)
}

fn relative_entry_gap(a: &HermitianField, b: &HermitianField) -> Result<f64> {
    Ok(a.max_diff(b)? / b.max_abs().max(1.0))
}

fn check_integrals(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let n = g.n();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let f = TrigPoly::random_real(rng, &g, max_wavenumber(&g), 6, 1.0).sample_real(&g);
        let spectrum = Spectrum::new(&f);
        let scale = f.max_abs().max(f64::MIN_POSITIVE) * g.volume();
        for i in 1..=n {
            for j in 1..=n {
                for factors in [
                    [torus::Wirtinger::Z(i), torus::Wirtinger::ZBar(j)],
                    [torus::Wirtinger::Z(i), torus::Wirtinger::Z(j)],
                ] {
                    let op = torus::DiffOperator::wirtinger(n, &factors)?;
                    let integral = torus::integrate(&spectrum.apply(&op)?).norm();
                    worst = worst.max(integral / scale);
                }
            }
        }
    }
    Ok((worst, true))
}

fn check_oracle(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = oracle_geometry(cfg)?;
    let conv = cfg.mutation.conventions();
    let points: Vec<usize> = (0..100).map(|_| rng.gen_range(0..g.len())).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.oracle_samples {
        let terms = rng.gen_range(1..=3);
        let phi = random_form(rng, &g, terms, 1.0)?;
        let kernel = ddbar_to_hermitian_with(&phi, &conv)?;
        let oracle = oracle_hermitian(&phi)?;
        let scale = oracle.max_abs().max(1.0);
        worst = worst.max(sampled_difference(&kernel, &oracle, &points) / scale);
    }
    Ok((worst, true))
}

fn check_f_mean_zero(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let n = g.n();
    let phi = random_form(rng, &g, 4, 1.0)?;
    let f = ddbar_to_hermitian_with(&phi, &cfg.mutation.conventions())?;
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            worst = worst.max(f.entry_field(i, j).mean().norm() / scale);
        }
    }
    Ok((worst, true))
}

fn check_kahler_integral(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let omega0 = MetricField::constant(&g, &random_constant_metric(rng, g.n()))?;
    let psi0 = forms::power_map(&omega0);
    let chol = linalg::cholesky(psi0.field().at(0)).map_err(|pivot| Error::NotPositive {
        index: 0,
        coords: g.coords(0),
        pivot,
    })?;
    let inverse = linalg::spd_inverse(&chol);
    let det0 = omega0.det_values()[0];
    let phi = random_form(rng, &g, 4, 1.0)?;
    let f = ddbar_to_hermitian_with(&phi, &cfg.mutation.conventions())?;
    let density: Vec<Complex64> = f
        .entries()
        .iter()
        .map(|m| linalg::trace(&(&inverse * m)) * det0)
        .collect();
    let integrand = ScalarField::new(g.clone(), density)?;
    let scale = integrand.max_abs().max(f64::MIN_POSITIVE) * g.volume();
    Ok((torus::integrate(&integrand).norm() / scale, true))
}

fn check_norm_volume(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let omega = random_metric(rng, &g, 0.4)?;
    let omega0 = MetricField::constant(&g, &random_constant_metric(rng, g.n()))?;
    let volume = HolomorphicVolume::new(Complex64::new(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0)))?;
    let lhs: Vec<f64> = omega
        .det_values()
        .iter()
        .zip(omega0.det_values())
        .map(|(d, d0)| d / d0)
        .collect();
    let n0 = forms::omega_norm_sq(&omega0, &volume);
    let n1 = forms::omega_norm_sq(&omega, &volume);
    let worst = lhs
        .iter()
        .zip(n0.samples().iter().zip(n1.samples()))
        .map(|(l, (a, b))| (l - a.re / b.re).abs() / l.abs())
        .fold(0.0, f64::max);
    Ok((worst, true))
}

fn check_round_trip(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let omega = random_metric(rng, &g, 0.4)?;
    let back = forms::root_extract(&forms::power_map(&omega))?;
    Ok((relative_entry_gap(back.field(), omega.field())?, true))
}

fn check_power_det(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let n = g.n() as i32;
    let omega = random_metric(rng, &g, 0.4)?;
    let psi = forms::power_map(&omega);
    let worst = psi
        .field()
        .det_field()
        .samples()
        .iter()
        .zip(omega.det_values())
        .map(|(dp, d)| {
            let want = d.powi(n - 1);
            (dp.re - want).abs() / want
        })
        .fold(0.0, f64::max);
    Ok((worst, true))
}

fn check_amgm_rigidity(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let zero = HermitianField::zeros(&g);
    let rigid = forms::amgm_report(&zero, 1.0, cfg.tol)?.verdict == AmgmVerdict::Rigid;
    let mut min_gap = f64::INFINITY;
    let mut never_rigid = true;
    for _ in 0..10 {
        let phi = random_form(rng, &g, 3, 1.0)?;
        let b0 = forms::ddbar_to_hermitian(&phi)?;
        let b0 = b0.scale(0.5 / b0.max_abs().max(f64::MIN_POSITIVE));
        let c = 1.0 + rng.gen_range(0.0..0.5);
        let b = renormalize_determinant(&b0, c)?;
        let report = forms::amgm_evaluate(&b, c, cfg.tol)?;
        never_rigid &= report.verdict != AmgmVerdict::Rigid;
        min_gap = min_gap.min(report.integral_gap);
    }
    Ok((min_gap, rigid && never_rigid))
}

/// `(c / det(I+B₀))^{1/n} (I+B₀) − I`, which has `det(I+B) = c` everywhere.
pub fn renormalize_determinant(b0: &HermitianField, c: f64) -> Result<HermitianField> {
    let n = b0.n();
    let id = CMatrix::identity(n, n);
    let mut entries = Vec::with_capacity(b0.entries().len());
    for (index, m) in b0.entries().iter().enumerate() {
        let shifted = &id + m;
        let chol = linalg::cholesky(&shifted).map_err(|pivot| Error::NotPositive {
            index,
            coords: b0.geometry().coords(index),
            pivot,
        })?;
        let factor = (c / chol.det()).powf(1.0 / n as f64);
        entries.push(shifted * Complex64::new(factor, 0.0) - &id);
    }
    HermitianField::new(b0.geometry().clone(), entries)
}

fn check_amgm_inequality(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let n = g.n() as f64;
    let omega = random_metric(rng, &g, 0.6)?;
    let mut deficit: f64 = 0.0;
    for (m, d) in omega.field().entries().iter().zip(omega.det_values()) {
        let gap = linalg::trace(m).re / n - d.powf(1.0 / n);
        deficit = deficit.max(-gap);
    }
    let scalar = CMatrix::identity(g.n(), g.n()) * Complex64::new(rng.gen_range(0.5..3.0), 0.0);
    let det = linalg::cholesky(&scalar).map(|c| c.det()).unwrap_or(f64::NAN);
    let equality_gap = linalg::trace(&scalar).re / n - det.powf(1.0 / n);
    Ok((deficit.max(equality_gap.abs()), true))
}

fn check_norm_ricci(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = geometry(cfg)?;
    let n = g.n();
    let omega = random_metric(rng, &g, 0.2)?;
    let volume = HolomorphicVolume::standard();
    let ricci = forms::ricci_hermitian(&omega)?;
    let log_norm = forms::omega_norm_sq(&omega, &volume).map_real(f64::ln);
    let zero = ScalarField::zeros(&g);
    let mut planes = vec![vec![zero; n]; n];
    for k in g.active_directions() {
        for l in g.active_directions() {
            planes[k - 1][l - 1] = torus::ddbar(&log_norm, k, l)?;
        }
    }
    let from_norm = HermitianField::from_entry_fields(&g, &planes)?;
    Ok((relative_entry_gap(&ricci, &from_norm)?, true))
}

fn construction_grid(cfg: &SuiteConfig) -> usize {
    cfg.grid.max(8)
}

fn check_constructed_ricci(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let delta = rng.gen_range(0.2..0.9);
    let result = construction::construct(&ConstructionParams::new(cfg.n, delta).with_grid(construction_grid(cfg)))?;
    let constant = result.residuals.c0_variation <= cfg.tol
        && (result.c0 - construction::expected_c0(delta, cfg.n)).abs() <= cfg.tol * result.c0;
    Ok((result.residuals.ricci, constant))
}

fn check_volume_normalization(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let delta = rng.gen_range(0.2..0.9);
    let result = construction::construct(&ConstructionParams::new(cfg.n, delta).with_grid(construction_grid(cfg)))?;
    let volume = HolomorphicVolume::standard()
        .normalized_to_volume(&result.omega, cfg.tol)
        .ok_or_else(|| Error::Parameter("norm of Omega is not constant".into()))?;
    let norm_sq = forms::omega_norm_sq(&result.omega, &volume).mean().re;
    let total = forms::volume_form_integral(&result.omega);
    Ok(((norm_sq * total - 1.0).abs(), true))
}

fn check_solve_round_trip(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let g = TorusGeometry::line(cfg.n, 1, cfg.grid)?;
    let f = TrigPoly::random_real(rng, &g, max_wavenumber(&g), 6, 1.0)
        .sample_real(&g)
        .add_constant(0.5);
    let rhs = cfg.mutation.project(&f);
    let u = torus::solve_dzdzbar(&rhs, 1)?;
    let back = torus::ddbar(&u, 1, 1)?;
    let reference = torus::mean_zero_project(&f);
    Ok((back.max_diff(&reference)? / reference.max_abs().max(f64::MIN_POSITIVE), true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes_for_three_and_four() {
        for n in [3, 4] {
            let report = run_suite(&SuiteConfig::new(n)).unwrap();
            assert!(report.all_passed(), "{}", report.body());
            assert_eq!(report.checks.len(), CHECKS.len());
        }
    }

    #[test]
    fn each_mutation_is_caught() {
        for (mutation, culprit) in [
            (Mutation::FlipSign, "ddbar_oracle_equivalence"),
            (Mutation::DropFactorial, "ddbar_oracle_equivalence"),
            (Mutation::BreakMeanZero, "laplacian_solve_round_trip"),
        ] {
            let cfg = SuiteConfig {
                mutation,
                ..SuiteConfig::new(3)
            };
            let report = run_suite(&cfg).unwrap();
            assert!(!report.all_passed());
            assert!(!report.check(culprit).unwrap().passed, "{mutation:?}");
        }
    }

    #[test]
    fn report_is_deterministic_and_fails_closed() {
        let cfg = SuiteConfig {
            only: Some(vec!["power_root_round_trip".into(), "no_such_check".into()]),
            ..SuiteConfig::new(3)
        };
        let a = run_suite(&cfg).unwrap();
        let b = run_suite(&cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.check("power_root_round_trip").unwrap().passed);
        assert!(!a.check("no_such_check").unwrap().passed);
        assert!(!a.all_passed());
        assert!(a.body().contains("check.power_root_round_trip.anchor = root extraction"));
    }

    #[test]
    fn verdicts_do_not_depend_on_resolution() {
        let verdicts = |grid| {
            let report = run_suite(&SuiteConfig {
                grid,
                ..SuiteConfig::new(3)
            })
            .unwrap();
            report.checks.iter().map(|c| (c.name.clone(), c.passed)).collect::<Vec<_>>()
        };
        assert_eq!(verdicts(8), verdicts(256));
    }
}
