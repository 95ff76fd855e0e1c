use std::fs;
use std::path::{Path, PathBuf};

use ftcy_core::construction::{self, ConstructionParams};
use ftcy_core::fdf::{self, FieldDump};
use ftcy_core::forms;
use ftcy_core::solver::{self, Background, NewtonConfig, SourceTerm};
use ftcy_core::torus::{TorusGeometry, TrigPoly};
use ftcy_core::verify::{self, Mutation, SuiteConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigFile, IndexList};
use crate::failure::Failure;
use crate::report::{self, ensure_dir, write_csv, KeyValues};
use crate::{ConstructArgs, ReportArgs, RicciArgs, SolveArgs, VerifyArgs};

const RICCI_TOL: f64 = 1e-9;

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::usage(format!("missing --{flag}")))
}

fn write_field(dir: &Path, name: &str, dump: &FieldDump) -> Result<(), Failure> {
    let path = dir.join(name);
    fdf::write(&path, dump).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))
}

fn read_field(path: &Path) -> Result<FieldDump, Failure> {
    fdf::read(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))
}

pub fn construct(args: &ConstructArgs, file: &ConfigFile) -> Result<(), Failure> {
    let delta: f64 = required(file.lookup(args.delta, "delta")?, "delta")?;
    let n = file.resolve(args.n, "n", 3)?;
    let grid = file.resolve(args.grid, "grid", 256)?;
    let tol = file.resolve(args.tol, "tol", 1e-10)?;
    let out: PathBuf = required(file.lookup(args.out.clone(), "out")?, "out")?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Failure::usage(format!("--delta {delta} must lie in (0, 1)")));
    }

    let result = construction::construct(&ConstructionParams::new(n, delta).with_grid(grid))?;
    let r = &result.residuals;
    let passed = r.det_identity <= tol && r.c0_variation <= tol && r.ricci <= RICCI_TOL;

    ensure_dir(&out)?;
    write_field(&out, "u.fdf", &FieldDump::Scalar(result.u.clone()))?;
    write_field(&out, "v.fdf", &FieldDump::Scalar(result.v.clone()))?;
    write_field(&out, "omega.fdf", &FieldDump::Metric(result.omega.clone()))?;
    let rows = construction::profile(&result)?
        .into_iter()
        .map(|row| row.iter().map(|v| format!("{v:.15e}")).collect::<Vec<_>>());
    write_csv(
        &out.join("profile.csv"),
        &["x1", "one_plus_laplacian_u", "one_plus_laplacian_v", "omega_norm"],
        rows,
    )?;

    let mut kv = KeyValues::new("construct");
    kv.push("n", n)
        .float("delta", delta)
        .push("grid", grid)
        .float("k", result.k)
        .float("c0", result.c0)
        .float("c0_expected", construction::expected_c0(delta, n))
        .float("residual.det_identity", r.det_identity)
        .float("residual.u_equation", r.u_equation)
        .float("residual.c0_variation", r.c0_variation)
        .float("residual.ricci", r.ricci)
        .float("margin.u", r.margin_u)
        .float("margin.v", r.margin_v)
        .float("spectral_tail", r.spectral_tail)
        .push("status", if passed { "pass" } else { "fail" });
    kv.write(&out.join("report.txt"))?;
    print!("{}", kv.render());
    if passed {
        Ok(())
    } else {
        Err(Failure::numerical("construction residuals exceed tolerance"))
    }
}

fn broadcast(list: IndexList, len: usize) -> Vec<usize> {
    if list.0.len() == 1 {
        vec![list.0[0]; len]
    } else {
        list.0
    }
}

pub fn solve(args: &SolveArgs, file: &ConfigFile) -> Result<(), Failure> {
    let out: PathBuf = required(file.lookup(args.out.clone(), "out")?, "out")?;
    let tol = file.resolve(args.tol, "tol", 1e-8)?;
    let f_path: Option<PathBuf> = file.lookup(args.f.clone(), "f")?;
    let (f, source) = match f_path {
        Some(path) => {
            let f = read_field(&path)?.into_scalar()?;
            (f, format!("file {}", path.display()))
        }
        None => {
            let n = file.resolve(args.n, "n", 3)?;
            let axes = file.resolve(args.axes.clone(), "axes", IndexList(vec![1, 3]))?;
            let grid = broadcast(file.resolve(args.grid.clone(), "grid", IndexList(vec![64]))?, axes.0.len());
            let amplitude = file.resolve(args.amplitude, "amplitude", 0.05)?;
            let seed = file.resolve(args.seed, "seed", 1)?;
            let geometry = TorusGeometry::new(n, axes.0, grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = TrigPoly::random_real(&mut rng, &geometry, 3, 8, 1.0)
                .without_mean()
                .sample_real(&geometry);
            let peak = raw.max_abs();
            let f = if peak > 0.0 { raw.scale(amplitude / peak) } else { raw };
            (f, format!("random amplitude={amplitude} seed={seed}"))
        }
    };
    let geometry = f.geometry().clone();
    let bg = Background::standard(&geometry);
    let source_term = SourceTerm::new(&f, &bg)?;
    let cfg = NewtonConfig {
        newton_tol: tol,
        ..NewtonConfig::default()
    };

    ensure_dir(&out)?;
    let mut kv = KeyValues::new("solve");
    kv.push("source", &source)
        .push("n", geometry.n())
        .push("axes", join(geometry.active_axes()))
        .push("grid", join(geometry.grid_shape()))
        .float("tol", tol)
        .float("compatibility_shift", source_term.shift());

    let outcome = match solver::newton_solve(&source_term, &bg, &cfg) {
        Ok(o) => o,
        Err(e) => {
            let failure = Failure::from(e);
            kv.push("status", "fail").push("failure", &failure.message);
            kv.write(&out.join("report.txt"))?;
            return Err(failure);
        }
    };

    write_field(&out, "u.fdf", &FieldDump::Scalar(outcome.state.u().clone()))?;
    write_field(&out, "omega.fdf", &FieldDump::Metric(outcome.state.omega().clone()))?;
    let mut rows = Vec::new();
    for (stage, s) in outcome.stages.iter().enumerate() {
        for (it, r) in s.residuals.iter().enumerate() {
            let damping = if it == 0 { String::new() } else { format!("{}", s.dampings[it - 1]) };
            let linear = if it == 0 { String::new() } else { s.linear_iterations[it - 1].to_string() };
            rows.push(vec![
                stage.to_string(),
                format!("{}", s.t),
                it.to_string(),
                format!("{r:.6e}"),
                damping,
                linear,
            ]);
        }
    }
    write_csv(
        &out.join("history.csv"),
        &["stage", "t", "iteration", "residual", "damping", "linear_iterations"],
        rows,
    )?;

    kv.push("status", "pass")
        .push("stages", outcome.stages.len())
        .push("newton_iterations", outcome.final_iterations())
        .float("final_residual", outcome.final_residual())
        .float("u_sup", outcome.state.u().max_abs());
    if let Some(order) = outcome.order(1e-13) {
        kv.float("convergence_order", order);
    }
    if !args.no_margin {
        let margin = solver::kernel_margin(&outcome.state, &cfg.linear, 7)?;
        kv.float("kernel_margin", margin.margin)
            .push("kernel_margin_iterations", margin.iterations);
    }
    kv.write(&out.join("report.txt"))?;
    print!("{}", kv.render());
    Ok(())
}

fn join(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn verify(args: &VerifyArgs, file: &ConfigFile) -> Result<(), Failure> {
    let n = file.resolve(args.n, "n", 3)?;
    let mut cfg = SuiteConfig::new(n);
    cfg.grid = file.resolve(args.grid, "grid", cfg.grid)?;
    cfg.seed = file.resolve(args.seed, "seed", cfg.seed)?;
    cfg.tol = file.resolve(args.tol, "tol", cfg.tol)?;
    if let Some(only) = file.lookup(args.only.clone(), "only")? {
        cfg.only = Some(only.split(',').map(|s| s.trim().to_string()).collect());
    }
    if let Some(m) = file.lookup::<String>(args.mutation.clone(), "mutation")? {
        cfg.mutation = Mutation::parse(&m)?;
    }
    let suite = verify::run_suite(&cfg)?;
    let text = suite.to_text();
    if let Some(out) = file.lookup(args.out.clone(), "out")? {
        ensure_dir(&out)?;
        let path: PathBuf = out.join("suite_report.txt");
        fs::write(&path, format!("command = verify\n{text}"))
            .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    }
    print!("{text}");
    if suite.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = suite.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::numerical(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn ricci(args: &RicciArgs, file: &ConfigFile) -> Result<(), Failure> {
    let path: PathBuf = required(file.lookup(args.metric.clone(), "metric")?, "metric")?;
    let dump = read_field(&path)?;
    let metric = dump.into_metric()?;
    let ric = forms::ricci_hermitian(&metric)?;
    let mut kv = KeyValues::new("ricci");
    kv.push("metric", path.display())
        .float("sup_norm", ric.max_abs())
        .float("min_pivot", metric.min_pivot());
    if let Some(out) = file.lookup(args.out.clone(), "out")? {
        ensure_dir(&out)?;
        write_field(&out, "ricci.fdf", &FieldDump::Hermitian(ric))?;
        kv.write(&out.join("ricci_report.txt"))?;
    }
    print!("{}", kv.render());
    Ok(())
}

/// Reports named `report.txt` in `dir` and its immediate subdirectories.
fn collect_reports(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::io(format!("cannot read {}: {e}", dir.display())))?;
    let mut found = Vec::new();
    let own = dir.join("report.txt");
    if own.is_file() {
        found.push(own);
    }
    for entry in entries {
        let path = entry?.path();
        let candidate = path.join("report.txt");
        if path.is_dir() && candidate.is_file() {
            found.push(candidate);
        }
    }
    found.sort();
    Ok(found)
}

pub fn report(args: &ReportArgs, file: &ConfigFile) -> Result<(), Failure> {
    let dir: PathBuf = required(file.lookup(args.dir.clone(), "dir")?, "dir")?;
    let inputs = collect_reports(&dir)?;
    if inputs.is_empty() {
        return Err(Failure::io(format!("no report.txt found under {}", dir.display())));
    }

    let mut summary = KeyValues::new("report");
    summary.push("inputs", inputs.len());
    let mut sweep = Vec::new();
    let mut histories = Vec::new();
    for path in &inputs {
        let text = fs::read_to_string(path)?;
        let values = report::parse(&text);
        let label = path
            .parent()
            .and_then(|p| p.strip_prefix(&dir).ok())
            .map(|p| p.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        let command = values.get("command").cloned().unwrap_or_else(|| "unknown".into());
        let status = values.get("status").cloned().unwrap_or_else(|| "unknown".into());
        summary.push(&format!("run.{label}.command"), &command);
        summary.push(&format!("run.{label}.status"), &status);
        match command.as_str() {
            "construct" => {
                let get = |k: &str| values.get(k).cloned().unwrap_or_default();
                let delta: f64 = get("delta").parse().unwrap_or(f64::NAN);
                sweep.push((
                    get("n").parse::<usize>().unwrap_or(0),
                    delta,
                    vec![
                        get("n"),
                        get("delta"),
                        get("grid"),
                        get("k"),
                        get("c0"),
                        get("c0_expected"),
                        get("residual.det_identity"),
                        get("residual.ricci"),
                    ],
                ));
            }
            "solve" => {
                if let Some(k) = values.get("final_residual") {
                    summary.push(&format!("run.{label}.final_residual"), k);
                }
                let history = path.with_file_name("history.csv");
                if history.is_file() {
                    let mut reader = csv::Reader::from_path(&history)?;
                    for record in reader.records() {
                        let mut row = vec![label.clone()];
                        row.extend(record?.iter().map(str::to_string));
                        histories.push(row);
                    }
                }
            }
            _ => {}
        }
    }

    sweep.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let monotone = sweep.windows(2).all(|w| {
        let c0 = |row: &Vec<String>| row[4].parse::<f64>().unwrap_or(f64::NAN);
        w[0].0 != w[1].0 || c0(&w[0].2) > c0(&w[1].2)
    });
    summary.push("construct_runs", sweep.len());
    if !sweep.is_empty() {
        summary.push("c0_decreasing_in_delta", monotone);
        write_csv(
            &dir.join("c0_sweep.csv"),
            &["n", "delta", "grid", "k", "c0", "c0_expected", "det_identity", "ricci"],
            sweep.iter().map(|(_, _, row)| row.clone()),
        )?;
    }
    if !histories.is_empty() {
        write_csv(
            &dir.join("newton_history.csv"),
            &["run", "stage", "t", "iteration", "residual", "damping", "linear_iterations"],
            histories,
        )?;
    }
    summary.write(&dir.join("summary.txt"))?;
    print!("{}", summary.render());
    Ok(())
}
