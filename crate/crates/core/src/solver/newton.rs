//! Linear solves with `L`, damped Newton continuation for `M(u) = f`, and the
//! injectivity margin of `L`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::krylov::{gmres, GmresConfig};
use super::operator::{apply_l_adjoint_vec, apply_l_vec, m_map};
use super::state::{AnsatzState, Background, SourceTerm};
use crate::error::{Error, Result};
use crate::forms::CMatrix;
use crate::torus::{DiffOperator, Multiplier, ScalarField, TrigPoly, Wirtinger};

#[derive(Clone, Debug)]
pub struct LinearConfig {
    /// Target `‖L u − h‖_∞ ≤ lin_tol · ‖h‖_∞`.
    pub lin_tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            lin_tol: 1e-10,
            restart: 40,
            max_iters: 600,
        }
    }
}

/// Solution of `L u = h` with the Krylov residual history.
#[derive(Clone, Debug)]
pub struct LinearSolve {
    pub u: ScalarField,
    pub iterations: usize,
    pub history: Vec<f64>,
    /// `‖L u − h‖_∞ / ‖h‖_∞`.
    pub residual: f64,
}

/// `A^{−1}(v / ĉ)` with `A = Σ c̄_{ab} ∂_a∂̄_b` built from the grid average
/// `c̄` of the coefficients of `L` and `ĉ(x) = tr c(x) / tr c̄`; exact at
/// `u = 0` on the standard background.
struct Preconditioner {
    inverse: Multiplier,
    weight: Vec<f64>,
}

impl Preconditioner {
    fn new(state: &AnsatzState) -> Result<Self> {
        let geometry = state.geometry();
        let n = geometry.n();
        let len = state.coefficients().len() as f64;
        let mean = state
            .coefficients()
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, c| acc + c)
            / num_complex::Complex64::new(len, 0.0);
        let mut op = DiffOperator::zero(n);
        for a in geometry.active_directions() {
            for b in geometry.active_directions() {
                let term = DiffOperator::wirtinger(n, &[Wirtinger::Z(a), Wirtinger::ZBar(b)])?;
                op = op.plus(&term.scaled(mean[(a - 1, b - 1)]));
            }
        }
        let trace_mean = mean.trace().re;
        let weight = state
            .coefficients()
            .iter()
            .map(|c| trace_mean / c.trace().re)
            .collect();
        Ok(Self {
            inverse: Multiplier::inverse_of(geometry, &op)?,
            weight,
        })
    }

    fn apply(&self, x: &[f64], state: &AnsatzState) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = x.iter().zip(&self.weight).map(|(v, w)| v * w).collect();
        let field = ScalarField::from_real(state.geometry().clone(), scaled)?;
        let y = self.inverse.apply(&field)?;
        Ok(state.project(&y.real_parts()))
    }
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_rhs(h: &[f64], state: &AnsatzState) -> Result<()> {
    let mean = state.weighted_mean(h).abs();
    let tol = 1e-10 * max_abs(h).max(f64::MIN_POSITIVE);
    if mean > tol {
        return Err(Error::NotMeanZero { mean, tol });
    }
    Ok(())
}

fn krylov_solve(
    h: &[f64],
    x0: &[f64],
    state: &AnsatzState,
    cfg: &LinearConfig,
    adjoint: bool,
) -> Result<LinearSolve> {
    check_rhs(h, state)?;
    let geometry = state.geometry().clone();
    let h_norm = max_abs(h);
    if h_norm == 0.0 && max_abs(x0) == 0.0 {
        return Ok(LinearSolve {
            u: ScalarField::zeros(&geometry),
            iterations: 0,
            history: Vec::new(),
            residual: 0.0,
        });
    }
    let pre = Preconditioner::new(state)?;
    let apply = |x: &[f64]| {
        if adjoint {
            apply_l_adjoint_vec(x, state)
        } else {
            apply_l_vec(x, state)
        }
    };
    let mut x = state.project(x0);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut rel_tol = 0.1 * cfg.lin_tol;
    let mut residual = f64::INFINITY;
    for _ in 0..4 {
        let gcfg = GmresConfig {
            rel_tol,
            restart: cfg.restart,
            max_iters: cfg.max_iters.saturating_sub(iterations).max(1),
        };
        let out = gmres(apply, |v| pre.apply(v, state), h, &x, &gcfg).map_err(|e| match e {
            Error::KrylovStagnation {
                iterations: it,
                residual,
                history: mut tail,
            } => {
                let mut all = history.clone();
                all.append(&mut tail);
                Error::KrylovStagnation {
                    iterations: iterations + it,
                    residual,
                    history: all,
                }
            }
            other => other,
        })?;
        iterations += out.iterations;
        history.extend(out.history);
        x = state.project(&out.x);
        let lx = apply(&x)?;
        let err = lx.iter().zip(h).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        residual = err / h_norm.max(f64::MIN_POSITIVE);
        if err <= cfg.lin_tol * h_norm || h_norm == 0.0 {
            return Ok(LinearSolve {
                u: ScalarField::from_real(geometry, x)?,
                iterations,
                history,
                residual,
            });
        }
        rel_tol *= 0.01;
    }
    Err(Error::KrylovStagnation {
        iterations,
        residual,
        history,
    })
}

/// Solves `L u = h` for `ω_u^n`-mean-zero `h`, returning mean-zero `u`.
pub fn solve_l(h: &ScalarField, state: &AnsatzState, cfg: &LinearConfig) -> Result<LinearSolve> {
    let zero = vec![0.0; h.len()];
    solve_l_from(h, &zero, state, cfg)
}

/// As [`solve_l`] with a Krylov initial guess.
pub fn solve_l_from(
    h: &ScalarField,
    x0: &[f64],
    state: &AnsatzState,
    cfg: &LinearConfig,
) -> Result<LinearSolve> {
    if h.geometry() != state.geometry() {
        return Err(Error::Shape("right-hand side on a different grid".into()));
    }
    krylov_solve(&h.real_parts(), x0, state, cfg, false)
}

/// Solves `L^† y = h` for the `ω_u^n` inner product.
pub fn solve_l_adjoint(h: &ScalarField, state: &AnsatzState, cfg: &LinearConfig) -> Result<LinearSolve> {
    let zero = vec![0.0; h.len()];
    krylov_solve(&h.real_parts(), &zero, state, cfg, true)
}

#[derive(Clone, Debug)]
pub struct NewtonConfig {
    /// Final `‖M(u) − f‖_∞` target.
    pub newton_tol: f64,
    /// Target on intermediate continuation stages.
    pub stage_tol: f64,
    /// Newton iterations allowed per stage.
    pub max_iters: usize,
    /// Initial continuation step is `1 / continuation_steps`.
    pub continuation_steps: usize,
    /// Smallest damping factor tried before giving up on a step.
    pub min_damping: f64,
    /// Continuation steps shrink by at most `2^{−max_refinements}` below the
    /// initial step.
    pub max_refinements: usize,
    pub linear: LinearConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-8,
            stage_tol: 1e-6,
            max_iters: 20,
            continuation_steps: 8,
            min_damping: 1.0 / 1024.0,
            max_refinements: 6,
            linear: LinearConfig::default(),
        }
    }
}

/// History of one continuation stage `M(u) = f_t`.
#[derive(Clone, Debug)]
pub struct StageReport {
    pub t: f64,
    /// `‖M(u) − f_t‖_∞` before each step and after the last one.
    pub residuals: Vec<f64>,
    pub dampings: Vec<f64>,
    pub linear_iterations: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub state: AnsatzState,
    pub stages: Vec<StageReport>,
}

impl NewtonOutcome {
    pub fn final_stage(&self) -> &StageReport {
        self.stages.last().expect("at least one stage")
    }

    pub fn final_residual(&self) -> f64 {
        *self.final_stage().residuals.last().expect("nonempty history")
    }

    /// Newton steps taken at `t = 1`.
    pub fn final_iterations(&self) -> usize {
        self.final_stage().dampings.len()
    }

    /// Observed order at `t = 1`; see [`convergence_order`].
    pub fn order(&self, floor: f64) -> Option<f64> {
        convergence_order(&self.final_stage().residuals, floor)
    }
}

/// `log(r_k/r_{k−1}) / log(r_{k−1}/r_{k−2})` over the last three residuals
/// above `floor`.
pub fn convergence_order(residuals: &[f64], floor: f64) -> Option<f64> {
    let above: Vec<f64> = residuals.iter().copied().filter(|&r| r > floor).collect();
    if above.len() < 3 {
        return None;
    }
    let k = above.len() - 1;
    let (r0, r1, r2) = (above[k - 2], above[k - 1], above[k]);
    let denom = (r1 / r0).ln();
    if denom >= 0.0 {
        return None;
    }
    Some((r2 / r1).ln() / denom)
}

fn residual_field(state: &AnsatzState, f: &SourceTerm, bg: &Background) -> Vec<f64> {
    let m = m_map(state, bg);
    m.samples()
        .iter()
        .zip(f.field().samples())
        .map(|(a, b)| a.re - b.re)
        .collect()
}

fn newton_stage(
    mut state: AnsatzState,
    f: &SourceTerm,
    t: f64,
    tol: f64,
    bg: &Background,
    cfg: &NewtonConfig,
) -> Result<(AnsatzState, StageReport)> {
    let mut report = StageReport {
        t,
        residuals: Vec::new(),
        dampings: Vec::new(),
        linear_iterations: Vec::new(),
    };
    let mut r = residual_field(&state, f, bg);
    let mut rn = max_abs(&r);
    report.residuals.push(rn);
    let geometry = state.geometry().clone();
    for _ in 0..cfg.max_iters {
        if rn < tol {
            return Ok((state, report));
        }
        let rhs: Vec<f64> = state.project(&r).iter().map(|v| -v).collect();
        // inexact Newton: the forcing term shrinks with the residual
        let linear = LinearConfig {
            lin_tol: cfg.linear.lin_tol.max((0.01 * rn).min(1e-3)),
            ..cfg.linear.clone()
        };
        let step = solve_l(&ScalarField::from_real(geometry.clone(), rhs)?, &state, &linear)?;
        report.linear_iterations.push(step.iterations);
        let mut alpha = 1.0;
        loop {
            let candidate = state.u().add(&step.u.scale(alpha))?;
            match AnsatzState::new(&candidate, bg) {
                Ok(next) => {
                    let r_next = residual_field(&next, f, bg);
                    let n_next = max_abs(&r_next);
                    if n_next < (1.0 - 1e-4 * alpha) * rn || n_next < tol {
                        state = next;
                        r = r_next;
                        rn = n_next;
                        break;
                    }
                    if alpha <= cfg.min_damping {
                        return Err(Error::NotConverged {
                            t,
                            iterations: report.dampings.len(),
                            residual: rn,
                        });
                    }
                }
                Err(Error::NotPositive { .. }) => {
                    if alpha <= cfg.min_damping {
                        return Err(Error::ConeExit { t, residual: rn });
                    }
                }
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        report.dampings.push(alpha);
        report.residuals.push(rn);
    }
    if rn < tol {
        return Ok((state, report));
    }
    Err(Error::NotConverged {
        t,
        iterations: report.dampings.len(),
        residual: rn,
    })
}

/// Damped Newton for `M(u η^{n−2}) = f` from `u = 0`, continued along `t·f`.
pub fn newton_solve(f: &SourceTerm, bg: &Background, cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    newton_solve_from(f, bg, cfg, &ScalarField::zeros(bg.geometry()))
}

/// As [`newton_solve`] starting from `initial` (which must lie in the cone).
pub fn newton_solve_from(
    f: &SourceTerm,
    bg: &Background,
    cfg: &NewtonConfig,
    initial: &ScalarField,
) -> Result<NewtonOutcome> {
    let mut state = AnsatzState::new(initial, bg).map_err(|e| match e {
        Error::NotPositive { .. } => Error::ConeExit {
            t: 0.0,
            residual: f64::INFINITY,
        },
        other => other,
    })?;
    let initial_dt = 1.0 / cfg.continuation_steps.max(1) as f64;
    let min_dt = initial_dt * 0.5_f64.powi(cfg.max_refinements as i32);
    let mut dt = initial_dt;
    let mut t_prev = 0.0;
    let mut stages = Vec::new();
    while t_prev < 1.0 {
        let t = if t_prev + dt > 1.0 - 1e-12 { 1.0 } else { t_prev + dt };
        let f_t = if t == 1.0 { f.clone() } else { f.scaled(t, bg)? };
        let tol = if t == 1.0 { cfg.newton_tol } else { cfg.stage_tol.max(cfg.newton_tol) };
        match newton_stage(state.clone(), &f_t, t, tol, bg, cfg) {
            Ok((next, report)) => {
                state = next;
                stages.push(report);
                t_prev = t;
                dt = (2.0 * dt).min(initial_dt);
            }
            Err(
                e @ (Error::ConeExit { .. }
                | Error::NotConverged { .. }
                | Error::KrylovStagnation { .. }),
            ) => {
                if dt * 0.5 < min_dt * (1.0 - 1e-12) {
                    return Err(classify_stall(e, &state, t));
                }
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(NewtonOutcome { state, stages })
}

/// Relative determinant spread below which a stalled continuation is
/// reported as leaving the cone.
const DEGENERACY: f64 = 1e-2;

/// A continuation that cannot advance from a nearly degenerate metric has
/// run into the cone boundary; other stalls keep their own error.
fn classify_stall(e: Error, state: &AnsatzState, t: f64) -> Error {
    let det = state.det();
    let min = det.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = det.iter().sum::<f64>() / det.len() as f64;
    match e {
        Error::NotConverged { residual, .. } if min < DEGENERACY * mean => Error::ConeExit { t, residual },
        Error::KrylovStagnation { residual, .. } if min < DEGENERACY * mean => Error::ConeExit { t, residual },
        other => other,
    }
}

#[derive(Clone, Debug)]
pub struct MarginReport {
    /// Estimate of `min ‖L x‖ / ‖x‖` over mean-zero `x` (norms against `ω_u^n`).
    pub margin: f64,
    pub iterations: usize,
    pub grid_shape: Vec<usize>,
}

fn weighted_dot(state: &AnsatzState, x: &[f64], y: &[f64]) -> f64 {
    let w = state.det();
    let num: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| a * b * c).sum();
    num / w.iter().sum::<f64>()
}

/// Vectors carried by the subspace iteration; the lowest singular values of
/// `L` come in clusters from the lattice symmetries.
const MARGIN_BLOCK: usize = 8;

/// Orthonormalizes `block` in the `ω_u^n` inner product, dropping
/// dependent vectors.
fn orthonormalize(state: &AnsatzState, block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut v in block {
        for _ in 0..2 {
            for q in &basis {
                let c = weighted_dot(state, q, &v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = state.weighted_norm(&v);
        if norm > 1e-12 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Smallest singular value of `L` on mean-zero functions, by subspace
/// iteration with `(L^† L)^{-1}` and Rayleigh-Ritz on `‖L x‖²`.
pub fn kernel_margin(state: &AnsatzState, cfg: &LinearConfig, seed: u64) -> Result<MarginReport> {
    let geometry = state.geometry().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (0..MARGIN_BLOCK)
        .map(|_| {
            let x = TrigPoly::random_real(&mut rng, &geometry, 3, 8, 1.0).sample_real(&geometry);
            state.project(&x.real_parts())
        })
        .collect();
    let mut block = orthonormalize(state, start);
    let zero = vec![0.0; block[0].len()];

    let mut estimate = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let mut next_block = Vec::with_capacity(block.len());
        for x in &block {
            let z = krylov_solve(x, &zero, state, cfg, false)?;
            let y = krylov_solve(&z.u.real_parts(), &zero, state, cfg, true)?;
            next_block.push(state.project(&y.u.real_parts()));
        }
        let basis = orthonormalize(state, next_block);
        let images = basis.iter().map(|q| apply_l_vec(q, state)).collect::<Result<Vec<_>>>()?;
        let m = basis.len();
        let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| weighted_dot(state, &images[i], &images[j]));
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        block = order
            .iter()
            .map(|&k| {
                let mut v = vec![0.0; zero.len()];
                for (i, q) in basis.iter().enumerate() {
                    let c = eig.eigenvectors[(i, k)];
                    v.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
                }
                v
            })
            .collect();
        let next = eig.eigenvalues[order[0]].max(0.0).sqrt();
        let converged = (next - estimate).abs() <= 1e-8 * next;
        estimate = next;
        if converged {
            break;
        }
    }
    let x = &block[0];
    let lx = apply_l_vec(x, state)?;
    let margin = state.weighted_norm(&lx) / state.weighted_norm(x);
    Ok(MarginReport {
        margin,
        iterations,
        grid_shape: geometry.grid_shape().to_vec(),
    })
}

/// One amplitude of an openness sweep.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub amplitude: f64,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct OpennessReport {
    pub entries: Vec<SweepEntry>,
    /// Largest amplitude below which every tried amplitude converged.
    pub radius: f64,
}

/// Runs [`newton_solve`] on `a · shape` for each amplitude `a`.
pub fn openness_sweep(
    shape: &ScalarField,
    amplitudes: &[f64],
    bg: &Background,
    cfg: &NewtonConfig,
) -> Result<OpennessReport> {
    let mut sorted = amplitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut entries = Vec::with_capacity(sorted.len());
    let mut radius = 0.0;
    let mut intact = true;
    for &a in &sorted {
        let f = SourceTerm::new(&shape.scale(a), bg)?;
        let entry = match newton_solve(&f, bg, cfg) {
            Ok(out) => SweepEntry {
                amplitude: a,
                converged: true,
                residual: out.final_residual(),
                iterations: out.stages.iter().map(|s| s.dampings.len()).sum(),
                failure: None,
            },
            Err(e) => SweepEntry {
                amplitude: a,
                converged: false,
                residual: match &e {
                    Error::ConeExit { residual, .. } | Error::NotConverged { residual, .. } => *residual,
                    _ => f64::NAN,
                },
                iterations: 0,
                failure: Some(e.to_string()),
            },
        };
        if intact && entry.converged {
            radius = a;
        } else {
            intact = false;
        }
        entries.push(entry);
    }
    Ok(OpennessReport { entries, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::operator::{apply_l, m_map_at};
    use crate::torus::TorusGeometry;

    fn plane(size: usize) -> TorusGeometry {
        TorusGeometry::new(3, vec![1, 3], vec![size, size]).unwrap()
    }

    #[test]
    fn order_estimate() {
        assert!((convergence_order(&[1e-1, 1e-2, 1e-4, 1e-8, 1e-15], 1e-12).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_order(&[1e-1, 1e-13], 1e-12).is_none());
    }

    #[test]
    fn linear_solve_round_trip() {
        let g = plane(32);
        let bg = Background::standard(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = TrigPoly::random_real(&mut rng, &g, 2, 4, 0.1).sample_real(&g);
        let state = AnsatzState::new(&base, &bg).unwrap();
        let h0 = TrigPoly::random_real(&mut rng, &g, 5, 8, 1.0).sample_real(&g);
        let h = ScalarField::from_real(g.clone(), state.project(&h0.real_parts())).unwrap();
        let sol = solve_l(&h, &state, &LinearConfig::default()).unwrap();
        let back = apply_l(&sol.u, &state).unwrap();
        assert!(back.max_diff(&h).unwrap() < 1e-10 * h.max_abs());
        assert!(state.weighted_mean(&sol.u.real_parts()).abs() < 1e-14);

        let guess: Vec<f64> = h0.real_parts().iter().map(|v| 3.0 * v).collect();
        let other = solve_l_from(&h, &guess, &state, &LinearConfig::default()).unwrap();
        assert!(other.u.max_diff(&sol.u).unwrap() < 1e-9);

        let zero = solve_l(&ScalarField::zeros(&g), &state, &LinearConfig::default()).unwrap();
        assert_eq!(zero.u.max_abs(), 0.0);
        assert!(matches!(
            solve_l(&ScalarField::constant(&g, 1.0), &state, &LinearConfig::default()),
            Err(Error::NotMeanZero { .. })
        ));
    }

    #[test]
    fn zero_source_needs_no_step() {
        let bg = Background::standard(&plane(16));
        let out = newton_solve(&SourceTerm::zero(&bg), &bg, &NewtonConfig::default()).unwrap();
        assert_eq!(out.final_iterations(), 0);
        assert_eq!(out.state.u().max_abs(), 0.0);
    }

    #[test]
    fn manufactured_recovery_small() {
        let g = plane(32);
        let bg = Background::standard(&g);
        let target = ScalarField::from_real_fn(&g, |x| 0.05 * x[0].sin() * x[2].sin());
        let f = SourceTerm::new(&m_map_at(&target, &bg).unwrap(), &bg).unwrap();
        let out = newton_solve(&f, &bg, &NewtonConfig::default()).unwrap();
        let want = AnsatzState::new(&target, &bg).unwrap();
        assert!(out.state.u().max_diff(want.u()).unwrap() < 1e-7);
    }

    #[test]
    fn margin_at_zero_is_quarter_over_n_minus_one() {
        let bg = Background::standard(&plane(16));
        let report = kernel_margin(&AnsatzState::zero(&bg), &LinearConfig::default(), 1).unwrap();
        assert!((report.margin - 0.125).abs() < 1e-8, "{}", report.margin);
    }

    #[test]
    fn huge_source_leaves_the_cone() {
        let g = plane(16);
        let bg = Background::standard(&g);
        let shape = ScalarField::from_real_fn(&g, |x| x[0].cos() * x[2].cos());
        let cfg = NewtonConfig {
            max_refinements: 1,
            ..NewtonConfig::default()
        };
        let report = openness_sweep(&shape, &[0.1, 40.0], &bg, &cfg).unwrap();
        assert!(report.entries[0].converged);
        assert!(!report.entries[1].converged);
        assert_eq!(report.radius, 0.1);
    }
}
