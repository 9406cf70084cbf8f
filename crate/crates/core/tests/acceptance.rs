//! Acceptance suite: criteria 1-9, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report is always printed.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chnl_core::diagnostics::{grad_norm_sq, identity_suite, l2_distance, IDENTITY_TOL};
use chnl_core::kernels::{build_kernel, check_adhesion_constraint, field_battery};
use chnl_core::nonlocal_ops::{apply_b, apply_k, calibrate_limit_constant, limit_coefficients, AdhesionKernel, OpKind};
use chnl_core::solvers::{InitialCondition, Model, Solver, SolverConfig, ENERGY_TOL};
use chnl_core::sweep::{run_sweep, SweepPhysics, SweepPlan, SweepResult};
use chnl_core::{Error, LaplacianScheme, MobilitySpec, MollifierProfile, PotentialSpec, TorusField, TorusGrid};

// 30-digit quadrature of the normalised 1D bump exp(-1/(1-z^2)).
const BUMP_1D_W: f64 = 0.158_113_636_263_798_23;
const BUMP_1D_C_OMEGA: f64 = 0.334_453_997_709_975_33;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn merge(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        pass: parts.iter().all(|p| p.pass),
        detail: parts.iter().map(|p| p.detail.as_str()).collect::<Vec<_>>().join("; "),
    }
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

/// `∬ J (u(x) - u(y))^2` over all grid pairs, with `J` evaluated from the
/// profile at the minimal-image separation.
fn bbm_all_pairs(u: &TorusField, profile: &MollifierProfile, eps: f64, alpha: f64) -> f64 {
    let g = u.grid();
    let v = u.values();
    let l = g.length();
    let wrap = |d: f64| d - l * (d / l).round();
    let mut total = 0.0;
    for x in 0..g.len() {
        let cx = g.coords(x);
        for y in 0..g.len() {
            if x == y {
                continue;
            }
            let cy = g.coords(y);
            let dx = wrap(cx[0] - cy[0]);
            let dy = if g.dim() == 2 { wrap(cx[1] - cy[1]) } else { 0.0 };
            let r = (dx * dx + dy * dy).sqrt();
            let j = profile.scaled(r, eps) / (eps.powf(2.0 - alpha) * r.powf(alpha));
            total += j * (v[x] - v[y]).powi(2);
        }
    }
    total * g.cell_volume() * g.cell_volume()
}

fn random_field(grid: TorusGrid, seed: u64) -> TorusField {
    InitialCondition::Random { low: -1.0, high: 1.0 }.build(grid, seed).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    for (dim, n) in [(1, 64), (2, 32)] {
        let grid = TorusGrid::new(dim, n, 2.0 * PI).unwrap();
        let profile = MollifierProfile::compact_bump(dim).unwrap();
        for alpha in [0.0, 0.5] {
            for seed in 0..3 {
                for c in identity_suite(&grid, &profile, 0.8, alpha, seed).unwrap() {
                    worst = worst.max(c.defect);
                    if !c.pass {
                        fails.push(format!("{} d={dim} alpha={alpha}: {:e}", c.name, c.defect));
                    }
                }
                // seminorm identity against an all-pairs sum that never touches the kernel table
                let u = random_field(grid, 100 + seed);
                let kernel = build_kernel(&profile, 0.8, alpha, &grid).unwrap();
                let two_b = 2.0 * apply_b(&u, &kernel).unwrap().inner(&u).unwrap();
                let direct = bbm_all_pairs(&u, &profile, 0.8, alpha);
                let d = (two_b - direct).abs() / direct.abs().max(1.0);
                worst = worst.max(d);
                if d > IDENTITY_TOL {
                    fails.push(format!("all-pairs seminorm d={dim} alpha={alpha}: {d:e}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        fails.is_empty() && secs < 10.0,
        format!("max defect {worst:.2e} (tol {IDENTITY_TOL:e}), {secs:.2}s; failures: {fails:?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let grid = TorusGrid::new(1, 8192, 2.0 * PI).unwrap();
    let profile = MollifierProfile::compact_bump(1).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let b = calibrate_limit_constant(OpKind::B, &profile, 0.0, &eps, &grid).unwrap();
    let k = calibrate_limit_constant(OpKind::K, &profile, 0.0, &eps, &grid).unwrap();
    let c_b_rel = (b.c_eff / (BUMP_1D_W / 2.0) - 1.0).abs();
    let c_k_rel = (k.c_eff / (-BUMP_1D_C_OMEGA) - 1.0).abs();
    // independent bound constant: M2 = ∫ omega z^2 = W in 1D, phi'' = -k^2 sin with k = 1
    let bound = 0.5 * BUMP_1D_W;
    let linear_ok = k.errors.iter().zip(&eps).all(|(e, x)| *e <= bound * x);
    let secs = start.elapsed().as_secs_f64();
    merge(vec![
        check(c_b_rel <= 1e-3, format!("c_B/(W/2) - 1 = {c_b_rel:.2e}")),
        check((b.order - 2.0).abs() <= 0.3, format!("B order {:.3}", b.order)),
        check((k.order - 2.0).abs() <= 0.3, format!("K order {:.3}", k.order)),
        check(c_k_rel <= 1e-3, format!("c_K/(-C_omega) - 1 = {c_k_rel:.2e}")),
        check(linear_ok, format!("K errors [{}] <= {bound:.4} eps", sci(&k.errors))),
        check(k.linear_bound_holds() == Some(true), format!("library bound {:?}", k.linear_bound)),
        check(secs < 30.0, format!("{secs:.2}s")),
    ])
}

fn grid_256() -> TorusGrid {
    TorusGrid::new(1, 256, 2.0 * PI).unwrap()
}

fn four_systems(grid: TorusGrid) -> Vec<(&'static str, Model)> {
    let bump = MollifierProfile::compact_bump(1).unwrap();
    let fh = PotentialSpec::flory_huggins(2.0, 1e-8).unwrap();
    let m = MobilitySpec::degenerate(1, 1).unwrap();
    let (c_b, c_k) = limit_coefficients(&bump, 0.0).unwrap();
    let check = check_adhesion_constraint(0.5, 0.1, &bump, &grid).unwrap();
    vec![
        (
            "ch_nonlocal",
            Model::ch_nonlocal(build_kernel(&bump, 0.1, 0.0, &grid).unwrap(), fh, m).unwrap(),
        ),
        ("ch_local", Model::ch_local(c_b, LaplacianScheme::Stencil, fh, m).unwrap()),
        (
            "adhesion_nonlocal",
            Model::adhesion_nonlocal(AdhesionKernel::new(&bump, 0.1, &grid).unwrap(), 0.5, c_k, &check).unwrap(),
        ),
        ("adhesion_local", Model::adhesion_local(c_k, 0.5, grid, &check).unwrap()),
    ]
}

fn criterion_3() -> (Outcome, Vec<Vec<u8>>) {
    let start = Instant::now();
    let grid = grid_256();
    let u0 = InitialCondition::Random { low: 0.4, high: 0.6 }.build(grid, 7).unwrap();
    let mut parts = Vec::new();
    let mut finals = Vec::new();
    for (name, model) in four_systems(grid) {
        let is_nonlocal_ch = name == "ch_nonlocal";
        let solver = Solver::new(model, SolverConfig::new(1e-3, 1.0), grid).unwrap();
        let out = solver.run(u0.clone(), |_| Ok(())).unwrap();
        let r = &out.record;
        let drift = r.max_relative_mass_drift();
        let steps = out.state.step;
        parts.push(check(steps == 1000 && drift <= 1e-10, format!("{name}: {steps} steps, mass drift {drift:.1e}")));
        if is_nonlocal_ch {
            let v = r.energy_violations(ENERGY_TOL);
            let worst = r.max_relative_energy_increment();
            parts.push(check(v == 0, format!("{name}: {v} energy increases (max rel. increment {worst:.1e})")));
        }
        finals.push(chnl_core::snapshot::encode(&out.state.u, out.state.t));
    }
    let secs = start.elapsed().as_secs_f64();
    parts.push(check(secs < 120.0, format!("{secs:.2}s")));
    (merge(parts), finals)
}

fn criterion_4() -> Outcome {
    let grid = grid_256();
    let bump = MollifierProfile::compact_bump(1).unwrap();
    let model = Model::ch_nonlocal(
        build_kernel(&bump, 0.1, 0.0, &grid).unwrap(),
        PotentialSpec::flory_huggins(2.0, 1e-8).unwrap(),
        MobilitySpec::degenerate(1, 1).unwrap(),
    )
    .unwrap();
    let u0 = InitialCondition::Random { low: 0.4, high: 0.6 }.build(grid, 11).unwrap();
    let solver = Solver::new(model, SolverConfig::new(1e-3, 1.0), grid).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let out = solver
        .run(u0, |s| {
            lo = lo.min(s.u.min());
            hi = hi.max(s.u.max());
            Ok(())
        })
        .unwrap();
    lo = lo.min(out.record.min_u());
    hi = hi.max(out.record.max_u());
    let bound_events = out.record.events.iter().filter(|e| e.message.contains("left [0, 1]")).count();
    check(
        out.state.step == 1000 && lo >= -1e-6 && hi <= 1.0 + 1e-6 && bound_events == 0,
        format!("{} steps, u in [{lo:.6}, {hi:.6}], {bound_events} bound events", out.state.step),
    )
}

fn criterion_5(result: &SweepResult, secs: f64) -> Outcome {
    let mut parts = Vec::new();
    for (j, t) in result.times.iter().enumerate() {
        let col: Vec<f64> = result.err_l2.iter().map(|r| r[j]).collect();
        let dec = col.windows(2).all(|w| w[1] < w[0]);
        parts.push(check(dec, format!("t={t}: e = [{}]", sci(&col))));
    }
    let last = result.times.len() - 1;
    let e01 = result.err_l2[result.eps.iter().position(|&e| e == 0.1).unwrap()][last];
    let norm = result.local_norm(last);
    parts.push(check(e01 <= 0.05 * norm, format!("e(0.1, t=100) = {e01:.4} <= 0.05 * {norm:.4}")));
    let flags = &result.flags[result.eps.iter().position(|&e| e == 1.0).unwrap()];
    parts.push(check(
        flags.sharper_interface() == Some(true),
        format!(
            "eps=1 t={} interface width nonlocal {:?} vs local {:?}",
            flags.t, flags.width_nonlocal, flags.width_local
        ),
    ));
    parts.push(check(
        flags.slower_smoothing() == Some(true),
        format!(
            "eps=1 smoothing time nonlocal {:?} vs local {:?}",
            flags.smoothing_nonlocal, flags.smoothing_local
        ),
    ));
    parts.push(check(result.aborted.is_empty(), format!("aborted {:?}", result.aborted)));
    parts.push(check(secs < 600.0, format!("{secs:.1}s")));
    merge(parts)
}

fn criterion_6(result: &SweepResult) -> Outcome {
    let order = result.order_l2[0].map(|(p, _)| p);
    let order_h1 = result.order_h1[0].map(|(p, _)| p);
    merge(vec![
        check(result.l2_strictly_decreasing(), format!("L2 e = [{}]", sci(&result.err_l2.concat()))),
        check(result.h1_strictly_decreasing(), format!("H1 e = [{}]", sci(&result.err_h1.concat()))),
        check(order.is_some(), format!("fitted order L2 {order:?}, H1 {order_h1:?} (reported only)")),
    ])
}

fn adhesion_plan() -> SweepPlan {
    let grid = TorusGrid::new(1, 1024, 2.0 * PI).unwrap();
    SweepPlan {
        grid,
        profile: MollifierProfile::compact_bump(1).unwrap(),
        alpha: 0.0,
        physics: SweepPhysics::Adhesion { a: 0.5 },
        solver: SolverConfig::new(1e-3, 1.0),
        eps: vec![0.4, 0.2, 0.1],
        times: vec![1.0],
        initial: InitialCondition::Cosine {
            mean: 0.5,
            amplitude: 0.2,
            mode: 1,
        },
        seed: 0,
        local_scheme: LaplacianScheme::Stencil,
        c_b: None,
        c_k: None,
    }
}

fn criterion_7() -> (Outcome, SweepResult) {
    let plan = adhesion_plan();
    let grid = plan.grid;
    let profile = plan.profile;
    let base = check_adhesion_constraint(0.0, 0.4, &profile, &grid).unwrap();
    let a_crit = 1.0 / base.c_est.sqrt();
    let above = check_adhesion_constraint(1.001 * a_crit, 0.4, &profile, &grid).unwrap();
    let below = check_adhesion_constraint(0.999 * a_crit, 0.4, &profile, &grid).unwrap();
    let refused = matches!(
        Model::adhesion_local(-1.0, 1.001 * a_crit, grid, &above),
        Err(Error::AdhesionConstraint { .. })
    );
    let accepted = Model::adhesion_local(-1.0, 0.999 * a_crit, grid, &below).is_ok();

    // ‖K_eps u‖² <= C_est ‖∇u‖² over the battery and the estimate's eps ladder
    let battery = field_battery(&grid, 8, 0x5eed);
    let mut worst: f64 = 0.0;
    for &eps in &base.eps_values {
        let k = AdhesionKernel::new(&profile, eps, &grid).unwrap();
        for f in &battery {
            let g2 = grad_norm_sq(f);
            if g2 > 0.0 {
                let k2: f64 = apply_k(f, &k).unwrap().iter().map(|c| c.norm_l2().powi(2)).sum();
                worst = worst.max(k2 / (base.c_est * g2));
            }
        }
    }

    let result = run_sweep(&plan).unwrap();
    let gap = |e: f64| result.err_l2[result.eps.iter().position(|&x| x == e).unwrap()][0];
    let (g1, g2) = (gap(0.1), gap(0.2));
    (
        merge(vec![
            check(
                refused && accepted,
                format!("a_crit = {a_crit:.4}: refused above {refused}, accepted below {accepted}"),
            ),
            check(
                worst <= 1.0,
                format!("max ‖K u‖²/(C_est ‖∇u‖²) = {worst:.4} over {} fields", battery.len()),
            ),
            check(g1 < g2, format!("gap(0.1) = {g1:.3e} < gap(0.2) = {g2:.3e}")),
        ]),
        result,
    )
}

fn criterion_8() -> Outcome {
    let grid = grid_256();
    let u0 = InitialCondition::Cosine {
        mean: 0.5,
        amplitude: 0.3,
        mode: 1,
    }
    .build(grid, 0)
    .unwrap();
    let dt = 1e-4;
    let t_final = 0.1;
    let mut parts = Vec::new();
    for (i, (name, _)) in four_systems(grid).into_iter().enumerate() {
        let solve = |d: f64| {
            let model = four_systems(grid).swap_remove(i).1;
            Solver::new(model, SolverConfig::new(d, t_final), grid)
                .unwrap()
                .run(u0.clone(), |_| Ok(()))
                .unwrap()
                .state
                .u
        };
        let (a, b, c) = (solve(dt), solve(dt / 2.0), solve(dt / 4.0));
        let ratio = l2_distance(&a, &b).unwrap() / l2_distance(&b, &c).unwrap();
        parts.push(check((ratio - 2.0).abs() <= 0.4, format!("{name} {ratio:.3}")));
    }
    merge(parts)
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_chnl")).args(args).output().expect("spawn chnl")
}

/// Manifest lines for deterministic artifacts only.
fn stable_manifest(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("manifest.sha256")).unwrap();
    let volatile: Vec<String> = text
        .lines()
        .filter_map(|l| l.strip_prefix("# volatile (timings): ").map(str::to_string))
        .collect();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter(|l| !volatile.iter().any(|v| l.ends_with(&format!("  {v}"))))
        .map(str::to_string)
        .collect()
}

fn run_twice(args: &[&str], root: &Path, tag: &str) -> Outcome {
    let mut manifests = Vec::new();
    for k in 0..2 {
        let dir = root.join(format!("{tag}_{k}"));
        let mut full: Vec<&str> = args.to_vec();
        let d = dir.display().to_string();
        full.extend(["--out", d.as_str()]);
        let out = cli(&full);
        if !out.status.success() {
            return check(
                false,
                format!("{tag}: exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
            );
        }
        manifests.push(stable_manifest(&dir));
    }
    let same = manifests[0] == manifests[1] && !manifests[0].is_empty();
    check(same, format!("{tag}: {} artifacts identical", manifests[0].len()))
}

const RUN_CONFIG: &str = r#"
seed = 7
[grid]
n = 256
[kernel]
eps = 0.1
alpha = 0.0
[potential]
kind = "flory_huggins"
theta = 2.0
[solver]
system = "ch_nonlocal"
dt = 1e-3
t_final = 1.0
output_every = 250
"#;

const ADHESION_SWEEP: &str = r#"
[grid]
n = 1024
[kernel]
alpha = 0.0
[solver]
system = "adhesion_nonlocal"
dt = 1e-3
t_final = 1.0
[adhesion]
a = 0.5
[initial]
kind = "cosine"
mean = 0.5
amplitude = 0.2
mode = 1
[sweep]
eps = [0.4, 0.2, 0.1]
times = [1.0]
"#;

fn criterion_9(
    c3_first: &[Vec<u8>],
    c3_second: &[Vec<u8>],
    s5: (&SweepResult, &SweepResult),
    c6: (&SweepResult, &SweepResult),
    c7: (&SweepResult, &SweepResult),
) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let run_cfg = root.join("run.toml");
    std::fs::write(&run_cfg, RUN_CONFIG).unwrap();
    let sweep_cfg = root.join("sweep.toml");
    std::fs::write(&sweep_cfg, ADHESION_SWEEP).unwrap();
    let run_cfg = run_cfg.display().to_string();
    let sweep_cfg = sweep_cfg.display().to_string();

    let same_sweep = |a: &SweepResult, b: &SweepResult| {
        a.err_l2 == b.err_l2
            && a.err_h1 == b.err_h1
            && a.u0_sha256 == b.u0_sha256
            && a.nonlocal.iter().zip(&b.nonlocal).all(|(x, y)| x.states == y.states)
    };
    merge(vec![
        run_twice(&["check"], root, "check"),
        run_twice(&["calibrate", "--op", "b"], root, "calibrate_b"),
        run_twice(&["calibrate", "--op", "k"], root, "calibrate_k"),
        run_twice(&["run", "--config", &run_cfg], root, "run"),
        run_twice(&["sweep", "--config", &sweep_cfg], root, "sweep"),
        check(c3_first == c3_second, "criterion-3 final states bit-identical".into()),
        check(same_sweep(s5.0, s5.1), "smooth-well preset rerun bit-identical".into()),
        check(same_sweep(c6.0, c6.1), "degenerate preset rerun bit-identical".into()),
        check(same_sweep(c7.0, c7.1), "adhesion sweep rerun bit-identical".into()),
    ])
}

fn report(id: u32, title: &str, outcome: &Outcome, elapsed: Duration) -> bool {
    println!(
        "criterion {id} [{}] {title} ({:.1}s): {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        outcome.detail
    );
    outcome.pass
}

fn main() {
    // `cargo test -- --list` and filters: this target has a single entry.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "exact identities", &criterion_1(), t.elapsed());

    let t = Instant::now();
    all &= report(2, "operator consistency", &criterion_2(), t.elapsed());

    let t = Instant::now();
    let (c3, c3_finals) = criterion_3();
    all &= report(3, "conservation and dissipation", &c3, t.elapsed());

    let t = Instant::now();
    all &= report(4, "bound monitoring", &criterion_4(), t.elapsed());

    let t = Instant::now();
    let s5 = run_sweep(&SweepPlan::smooth_well_preset().unwrap()).unwrap();
    let s5_secs = t.elapsed().as_secs_f64();
    all &= report(5, "smooth-well eps sweep", &criterion_5(&s5, s5_secs), t.elapsed());

    let t = Instant::now();
    let c6 = run_sweep(&SweepPlan::degenerate_preset().unwrap()).unwrap();
    all &= report(6, "degenerate nonlocal-to-local", &criterion_6(&c6), t.elapsed());

    let t = Instant::now();
    let (c7, c7_result) = criterion_7();
    all &= report(7, "adhesion", &c7, t.elapsed());

    let t = Instant::now();
    all &= report(8, "time self-convergence", &criterion_8(), t.elapsed());

    let t = Instant::now();
    let (_, c3_again) = criterion_3();
    let s5_again = run_sweep(&SweepPlan::smooth_well_preset().unwrap()).unwrap();
    let c6_again = run_sweep(&SweepPlan::degenerate_preset().unwrap()).unwrap();
    let c7_again = run_sweep(&adhesion_plan()).unwrap();
    let c9 = criterion_9(
        &c3_finals,
        &c3_again,
        (&s5, &s5_again),
        (&c6, &c6_again),
        (&c7_result, &c7_again),
    );
    all &= report(9, "determinism", &c9, t.elapsed());

    if all {
        println!("acceptance: all criteria PASS");
    } else {
        println!("acceptance: FAILURES present");
        std::process::exit(1);
    }
}
