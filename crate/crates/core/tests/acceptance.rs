//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.
//!
//! Run with `cargo test -p ulam-acim --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ulam_acim::analysis::{l1_between, l1_vs_exact};
use ulam_acim::catalog;
use ulam_acim::dsl::{compile_map, eval_expr, parse_expr, BinOp, Expr, Func, MapDefinition, Var};
use ulam_acim::map::{MapSpec, Resolution, DEFAULT_TAIL_INDEX};
use ulam_acim::oracle::{birkhoff_density, OrbitOptions};
use ulam_acim::solver::{stationary_density, SolveReport, SolverOptions};
use ulam_acim::truncation::truncate;
use ulam_acim::ulam::{project_q, ulam_matrix, ulam_matrix_with, AssemblyOptions};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn solve(base: &MapSpec, n: usize, k: usize) -> SolveReport {
    let t = truncate(base, n).expect("truncation");
    let m = ulam_matrix(t.spec(), k, 1e-12).expect("assembly");
    stationary_density(&m, SolverOptions::default()).expect("solve")
}

const EXAMPLE1_TABLE: [(usize, usize, f64); 7] = [
    (5, 100, 0.219_547_062_3),
    (5, 1000, 0.219_524_350_5),
    (6, 100, 0.194_354_167_3),
    (6, 1000, 0.194_354_167_3),
    (7, 1000, 0.174_240_735_2),
    (10, 1000, 0.133_493_040),
    (12, 1000, 0.115_519_23),
];

fn example1_error(n: usize, k: usize) -> f64 {
    let d = solve(&catalog::example1(catalog::default_branches(n)), n, k).density;
    l1_vs_exact(&d, &catalog::example1_density(), 1e-12).expect("affine reference")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for (n, k, published) in EXAMPLE1_TABLE {
        let err = example1_error(n, k);
        worst = worst.max((err - published).abs());
        cells.push(format!("({n},{k})={err:.6}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 2e-3 && secs < 30.0,
        format!("max |err - table| = {worst:.2e} (tol 2e-3), {secs:.3}s (limit 30s); {}", cells.join(" ")),
    )
}

fn criterion_2() -> Outcome {
    let errors: Vec<f64> = [5, 6, 7, 10, 12].iter().map(|&n| example1_error(n, 1000)).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let list: Vec<String> = errors.iter().map(|e| format!("{e:.6}")).collect();
    outcome(decreasing, format!("k=1000, n=5,6,7,10,12: {}", list.join(" > ")))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let base = catalog::example2(40);
    let f10_1000 = solve(&base, 10, 1000).density;
    let f10_500 = solve(&base, 10, 500).density;
    let f11_1000 = solve(&base, 11, 1000).density;
    let f12_1000 = solve(&base, 12, 1000).density;
    let checks = [
        ("|f10,1000 - f10,500|", l1_between(&f10_1000, &f10_500), 0.00035, 0.00075),
        ("|f10,1000 - f11,1000|", l1_between(&f10_1000, &f11_1000), 0.00015, 0.00055),
        ("|f11,1000 - f12,1000|", l1_between(&f11_1000, &f12_1000), 0.00009, 0.00049),
    ];
    let secs = start.elapsed().as_secs_f64();
    let ok = checks.iter().all(|(_, v, lo, hi)| (lo..=hi).contains(&v)) && secs < 60.0;
    let detail: Vec<String> = checks.iter().map(|(name, v, lo, hi)| format!("{name} = {v:.6} in [{lo}, {hi}]")).collect();
    outcome(ok, format!("{}; {secs:.3}s (limit 60s)", detail.join(", ")))
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = [0.0f64; 6];
    // Index 4 tracks sup - bound, which is negative when the bound holds.
    worst[4] = f64::NEG_INFINITY;
    for base in [catalog::example1(40), catalog::example2(40)] {
        for n in [2, 5, 10] {
            let t = truncate(&base, n).expect("truncation");
            let ly = t.ly_constants(DEFAULT_TAIL_INDEX).expect("contracting for n >= 2");
            for k in [16, 100, 1000] {
                let tag = format!("{} n={n} k={k}", base.name());
                let m = ulam_matrix(t.spec(), k, 1e-12).expect("assembly");
                let bisect = ulam_matrix_with(
                    t.spec(),
                    k,
                    AssemblyOptions { tol: 1e-10, force_bisection: true, ..AssemblyOptions::default() },
                )
                .expect("assembly");
                let r = stationary_density(&m, SolverOptions::default()).expect("solve");
                let f = &r.density;
                let sup = f.sup();
                let mass_defect = (f.mass() - 1.0).abs();
                let values = [
                    m.max_row_defect(),
                    bisect.max_row_defect(),
                    r.residual_l1,
                    r.monotonicity_defect,
                    sup - ly.sup_bound,
                    mass_defect,
                ];
                for (w, v) in worst.iter_mut().zip(values) {
                    *w = w.max(v);
                }
                let limits = [1e-6, 1e-6, 1e-10, 1e-9, 1e-9, 1e-12];
                let names = ["row sum", "row sum (bisection)", "residual", "monotonicity", "sup bound", "mass"];
                for ((name, v), lim) in names.iter().zip(values).zip(limits) {
                    if !(v <= lim) {
                        failures.push(format!("{tag}: {name} {v:e} > {lim:e}"));
                    }
                }
            }
        }
    }
    let summary = format!(
        "worst: row {:.1e}, row(bisect) {:.1e}, residual {:.1e}, defect {:.1e}, max(sup - bound) {:.3}, mass {:.1e}",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
    );
    if failures.is_empty() {
        outcome(true, format!("18 cases; {summary}"))
    } else {
        outcome(false, format!("{summary}; {}", failures.join("; ")))
    }
}

fn criterion_5() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for base in [catalog::example1(40), catalog::example2(40)] {
        let spec = truncate(&base, 12).expect("truncation").into_spec();
        let m = ulam_matrix(&spec, 100, 1e-12).expect("assembly");
        let ulam_density = stationary_density(&m, SolverOptions::default()).expect("solve").density;
        let opts = OrbitOptions { steps: 10_000_000, seed: 2024, ..OrbitOptions::default() };
        let orbit = birkhoff_density(&spec, 100, &opts).expect("orbit");
        let d = l1_between(&orbit, &ulam_density);
        ok &= d <= 0.05;
        parts.push(format!("{} n=12: {d:.4}", base.name()));
    }
    outcome(ok, format!("{} (tol 0.05, k=100, 1e7 steps)", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in [1, 2, 3, 7, 10, 16, 100, 333, 1000] {
        let m = ulam_matrix(&catalog::doubling(), k, 1e-12).expect("assembly");
        let f = stationary_density(&m, SolverOptions::default()).expect("solve").density;
        worst = worst.max(f.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    }
    let g = catalog::example1_density();
    let e2 = l1_vs_exact(&project_q(|x| g.eval(x), 2, 1e-13).unwrap(), &g, 1e-12).unwrap();
    let e1000 = l1_vs_exact(&project_q(|x| g.eval(x), 1000, 1e-13).unwrap(), &g, 1e-12).unwrap();
    let ok = worst <= 1e-12 && (e2 - 0.25).abs() <= 1e-12 && (e1000 - 0.0005).abs() <= 1e-12;
    outcome(
        ok,
        format!("doubling max |f - 1| = {worst:.1e}; k=2: {e2:.15}, k=1000: {e1000:.15} (tol 1e-12)"),
    )
}

fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    if depth <= 1 || rng.random_bool(0.25) {
        return match rng.random_range(0..3) {
            0 => Expr::Var(Var::X),
            1 => Expr::Var(Var::I),
            _ => Expr::Num(match rng.random_range(0..3) {
                0 => rng.random_range(0..100) as f64,
                1 => rng.random::<f64>(),
                _ => rng.random::<f64>() * 10f64.powi(rng.random_range(-12..12)),
            }),
        };
    }
    match rng.random_range(0..7) {
        0 => Expr::neg(random_expr(rng, depth - 1)),
        1 => Expr::call(if rng.random_bool(0.5) { Func::Sqrt } else { Func::Abs }, random_expr(rng, depth - 1)),
        op => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][op - 2];
            Expr::bin(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))
        }
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for (text, reference) in [
        (catalog::EXAMPLE1_DEFINITION, catalog::example1(40)),
        (catalog::EXAMPLE2_DEFINITION, catalog::example2(40)),
    ] {
        let def = MapDefinition::parse(text).expect("shipped definition parses");
        let compiled = compile_map(&def, Resolution::Branches(40)).expect("compiles");
        let lo = reference.partition_point(40);
        for _ in 0..1000 {
            let x = rng.random_range(lo..=1.0);
            let d = (compiled.eval(x).unwrap() - reference.eval(x).unwrap()).abs();
            worst = worst.max(d);
        }
    }
    let mut round_trip_failures = 0;
    for _ in 0..1000 {
        let e = random_expr(&mut rng, 6);
        if parse_expr(&e.to_string()).ok().as_ref() != Some(&e) {
            round_trip_failures += 1;
        }
    }
    let eval = |s: &str| eval_expr(&parse_expr(s).unwrap(), 0.0, 0).unwrap();
    let precedence = eval("1-2-3") == -4.0 && eval("2^3^2") == 512.0;
    outcome(
        worst <= 1e-12 && round_trip_failures == 0 && precedence,
        format!(
            "max |dsl - catalog| = {worst:.1e} over 2x1000 points (tol 1e-12); round trip {}/1000; precedence {}",
            1000 - round_trip_failures,
            if precedence { "ok" } else { "wrong" }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 example 1 table", criterion_1),
        ("2 example 1 trend in n", criterion_2),
        ("3 example 2 pairwise differences", criterion_3),
        ("4 property suite", criterion_4),
        ("5 orbit oracle agreement", criterion_5),
        ("6 exact-density sanity", criterion_6),
        ("7 definition-file conformance", criterion_7),
    ];
    let mut all = true;
    for (name, run) in criteria {
        let o = run();
        all &= o.passed;
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

