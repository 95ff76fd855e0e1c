//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ftcy_core::construction::{self, ConstructionParams};
use ftcy_core::forms::{self, AmgmVerdict, HermitianField};
use ftcy_core::solver::{
    apply_l, bilinear_a, kernel_margin, m_map, m_map_at, newton_solve, newton_solve_from,
    volume_pairing, AnsatzState, Background, LinearConfig, NewtonConfig, SourceTerm,
};
use ftcy_core::torus::{ScalarField, TorusGeometry, TrigPoly};
use ftcy_core::verify::{self, oracle, SuiteConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn plane(size: usize) -> TorusGeometry {
    TorusGeometry::new(3, vec![1, 3], vec![size, size]).unwrap()
}

fn random_real(rng: &mut ChaCha8Rng, g: &TorusGeometry, maxk: i64, terms: usize, sup: f64) -> ScalarField {
    let f = TrigPoly::random_real(rng, g, maxk, terms, 1.0)
        .without_mean()
        .sample_real(g);
    let scale = sup / f.max_abs();
    f.scale(scale)
}

fn explicit_construction() -> Outcome {
    let mut worst_det: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for n in [3, 4] {
        for delta in [0.1, 0.25, 0.5, 0.6, 0.75, 0.9] {
            let start = Instant::now();
            let result = construction::construct(&ConstructionParams::new(n, delta).with_grid(256)).unwrap();
            slowest = slowest.max(start.elapsed().as_secs_f64());
            worst_det = worst_det.max(result.residuals.det_identity);
        }
    }
    outcome(
        worst_det < 1e-10 && slowest < 5.0,
        format!("max det residual {worst_det:.2e}, slowest case {slowest:.2}s"),
    )
}

/// Trapezoid sum on `2^16` nodes and bisection, independent of the library.
fn oracle_k(delta: f64) -> f64 {
    let points = 1 << 16;
    let z = |k: f64| {
        let h = std::f64::consts::TAU / points as f64;
        (0..points).map(|j| 1.0 / (1.0 + k * (h * j as f64).sin())).sum::<f64>() / points as f64
    };
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if z(mid) < 1.0 / delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn z_anchors() -> Outcome {
    let z0 = construction::z_integral(0.0).unwrap();
    let k = construction::solve_k(0.6).unwrap();
    let reference = oracle_k(0.6);
    let sweep: Vec<f64> = (0..100)
        .map(|i| construction::z_integral(0.99 * i as f64 / 99.0).unwrap())
        .collect();
    let monotone = sweep.windows(2).all(|w| w[1] > w[0]);
    outcome(
        z0 == 1.0 && (k - 0.8).abs() < 1e-10 && (k - reference).abs() < 1e-10 && monotone,
        format!("Z(0) = {z0}, k(0.6) = {k:.12}, oracle {reference:.12}, monotone {monotone}"),
    )
}

fn ricci_flat_witness() -> Outcome {
    let mut ok = true;
    let (mut worst_c0, mut worst_var, mut worst_ric): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for n in [3, 4] {
        for delta in [0.1, 0.5, 0.9] {
            let r = construction::construct(&ConstructionParams::new(n, delta)).unwrap();
            let expected = delta.powf(-1.0 / (2.0 * (n as f64 - 1.0)));
            worst_c0 = worst_c0.max((r.c0 - expected).abs() / expected);
            worst_var = worst_var.max(r.residuals.c0_variation);
            worst_ric = worst_ric.max(r.residuals.ricci);
            ok &= r.c0 > 1.0;
        }
    }
    outcome(
        ok && worst_c0 < 1e-10 && worst_var < 1e-10 && worst_ric < 1e-9,
        format!("C0 error {worst_c0:.2e}, variation {worst_var:.2e}, Ricci {worst_ric:.2e}"),
    )
}

fn amgm_rigidity() -> Outcome {
    let g = TorusGeometry::new(3, vec![1, 3], vec![16, 16]).unwrap();
    let zero = forms::amgm_report(&HermitianField::zeros(&g), 1.0, 1e-10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut min_gap = f64::INFINITY;
    let mut any_rigid = false;
    for _ in 0..100 {
        let phi = verify::random_form(&mut rng, &g, 3, 1.0).unwrap();
        let b0 = forms::ddbar_to_hermitian(&phi).unwrap();
        // eigenvalues of B₀ in [−1/2, 1/2] keep I + B₀ positive
        let frobenius = b0.entries().iter().map(|m| m.norm()).fold(0.0, f64::max);
        let b0 = b0.scale(0.5 / frobenius);
        let c = 1.0 + rng.gen_range(0.0..0.5);
        let b = verify::renormalize_determinant(&b0, c).unwrap();
        let report = forms::amgm_evaluate(&b, c, 1e-10).unwrap();
        any_rigid |= report.verdict == AmgmVerdict::Rigid;
        min_gap = min_gap.min(report.integral_gap);
    }
    outcome(
        zero.verdict == AmgmVerdict::Rigid && !any_rigid && min_gap > 1e-6,
        format!("B = 0: {}, rigid among samples {any_rigid}, min gap {min_gap:.3e}", zero.verdict.as_str()),
    )
}

const EXACT_IDENTITIES: [&str; 6] = [
    "ddbar_integrals_vanish",
    "norm_volume_identity",
    "power_root_round_trip",
    "power_map_determinant",
    "f_phi_mean_zero",
    "kahler_integral_identity",
];

fn exact_identities() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for n in [3, 4] {
        let mut cfg = SuiteConfig::new(n);
        cfg.only = Some(EXACT_IDENTITIES.iter().map(|s| s.to_string()).collect());
        let report = verify::run_suite(&cfg).unwrap();
        for name in EXACT_IDENTITIES {
            let check = report.check(name).unwrap();
            ok &= check.passed && check.measured < 1e-10;
            worst = worst.max(check.measured);
        }
    }
    outcome(ok, format!("worst relative residual {worst:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let g = TorusGeometry::new(3, vec![1, 4, 5], vec![12, 12, 12]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points: Vec<usize> = (0..100).map(|_| rng.gen_range(0..g.len())).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let terms = rng.gen_range(1..=3);
        let phi = verify::random_form(&mut rng, &g, terms, 1.0).unwrap();
        let kernel = forms::ddbar_to_hermitian(&phi).unwrap();
        let brute = oracle::oracle_hermitian(&phi).unwrap();
        worst = worst.max(oracle::sampled_difference(&kernel, &brute, &points) / brute.max_abs().max(1.0));
    }
    outcome(worst < 1e-12, format!("max sampled difference {worst:.2e}"))
}

fn slope(ts: &[f64], values: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn linearization_order() -> Outcome {
    let g = plane(32);
    let bg = Background::standard(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ts = [1e-2, 1e-3, 1e-4, 1e-5];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10 {
        let base = random_real(&mut rng, &g, 3, 6, 0.1);
        let state = AnsatzState::new(&base, &bg).unwrap();
        let dir = random_real(&mut rng, &g, 3, 4, 1.0);
        let m0 = m_map(&state, &bg);
        let ld = apply_l(&dir, &state).unwrap();
        let remainders: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let mt = m_map_at(&state.u().add(&dir.scale(t)).unwrap(), &bg).unwrap();
                mt.sub(&m0).unwrap().scale(1.0 / t).max_diff(&ld).unwrap()
            })
            .collect();
        let order = slope(&ts, &remainders);
        lo = lo.min(order);
        hi = hi.max(order);
    }
    outcome(
        (lo - 1.0).abs() <= 0.1 && (hi - 1.0).abs() <= 0.1,
        format!("observed orders in [{lo:.3}, {hi:.3}]"),
    )
}

fn weak_form_adjointness() -> Outcome {
    let g = plane(32);
    let bg = Background::standard(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base = random_real(&mut rng, &g, 3, 6, 0.1);
    let state = AnsatzState::new(&base, &bg).unwrap();
    let norm = |f: &ScalarField| volume_pairing(f, f, &state).unwrap().sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u = random_real(&mut rng, &g, 4, 6, 1.0);
        let u = ScalarField::from_real(g.clone(), state.project(&u.real_parts())).unwrap();
        let v = random_real(&mut rng, &g, 4, 6, 1.0);
        let v = ScalarField::from_real(g.clone(), state.project(&v.real_parts())).unwrap();
        let a = bilinear_a(&u, &v, &state).unwrap();
        let pairing = volume_pairing(&apply_l(&u, &state).unwrap(), &v, &state).unwrap();
        worst = worst.max((a + pairing).abs() / (norm(&u) * norm(&v)));
    }
    outcome(worst < 1e-8, format!("max |A + <Lu,v>| / (|u||v|) = {worst:.2e}"))
}

fn manufactured_solve(size: usize, target: &dyn Fn(&[f64]) -> f64) -> (f64, usize, Option<f64>, f64) {
    let g = plane(size);
    let bg = Background::standard(&g);
    let exact = AnsatzState::new(&ScalarField::from_real_fn(&g, target), &bg).unwrap();
    let f = SourceTerm::new(&m_map(&exact, &bg), &bg).unwrap();
    let out = newton_solve(&f, &bg, &NewtonConfig::default()).unwrap();
    let error = out.state.u().max_diff(exact.u()).unwrap();
    let iterations = out.stages.iter().map(|s| s.dampings.len()).max().unwrap_or(0);
    let margin = kernel_margin(&out.state, &LinearConfig::default(), 1).unwrap().margin;
    (error, iterations, out.order(1e-12), margin)
}

fn openness_witness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let shape = TrigPoly::random_real(&mut rng, &plane(64), 3, 8, 1.0).without_mean();
    let sup = shape.sample_real(&plane(256)).max_abs();
    let target = move |x: &[f64]| 0.05 * shape.eval(x).re / sup;
    let (error, iterations, order, margin) = manufactured_solve(64, &target);
    let (_, _, _, margin_fine) = manufactured_solve(128, &target);
    let drift = (margin - margin_fine).abs() / margin_fine;
    let elapsed = start.elapsed().as_secs_f64();
    let order = order.unwrap_or(f64::NAN);
    outcome(
        error < 1e-7 && iterations <= 8 && order >= 1.9 && margin > 0.0 && drift < 0.05 && elapsed < 60.0,
        format!(
            "|u - u*| {error:.2e}, at most {iterations} Newton steps per stage, order {order:.2}, margin {margin:.4} \
             (128²: {margin_fine:.4}, drift {:.2}%), {elapsed:.1}s",
            100.0 * drift
        ),
    )
}

fn uniqueness_at_zero() -> Outcome {
    let g = plane(32);
    let bg = Background::standard(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = NewtonConfig {
        newton_tol: 1e-12,
        ..NewtonConfig::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let initial = random_real(&mut rng, &g, 3, 6, 0.1);
        let out = newton_solve_from(&SourceTerm::zero(&bg), &bg, &cfg, &initial).unwrap();
        worst = worst.max(out.state.u().max_abs());
    }
    outcome(worst < 1e-9, format!("max |u| {worst:.2e}"))
}

type Criterion = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("explicit construction fidelity", explicit_construction),
        ("Z-function anchors", z_anchors),
        ("Ricci-flat witness with C0 > 1", ricci_flat_witness),
        ("AM-GM rigidity", amgm_rigidity),
        ("exact-identity suite", exact_identities),
        ("ddbar oracle equivalence", oracle_equivalence),
        ("linearization remainder order", linearization_order),
        ("weak-form adjointness", weak_form_adjointness),
        ("openness witness", openness_witness),
        ("uniqueness at f = 0", uniqueness_at_zero),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = run();
        let verdict = if result.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {}", i + 1, result.detail);
        failures += usize::from(!result.passed);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
