use std::path::Path;
use std::process::{Command, Output};

use ulam_acim::io;

fn ulam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulam")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_example1_reports_table_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let run = ulam(&[
        "solve", "--map", "example1", "--n", "10", "--k", "1000", "--method", "power", "--tol", "1e-12", "--out",
        path_str(&out),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&run);
    let err = v["error_l1"].as_f64().unwrap();
    assert!((err - 0.1335).abs() <= 2e-3, "{err}");
    let density = io::from_file(&out, io::read_density).unwrap();
    assert_eq!(density.k(), 1000);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1001);
}

#[test]
fn identity_matrix_has_unit_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let run = ulam(&["matrix", "--map", "identity", "--k", "4", "--n", "1", "--out", path_str(&out)]);
    assert!(run.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "row,col,value\n0,0,1.0\n1,1,1.0\n2,2,1.0\n3,3,1.0\n");
    let m = io::from_file(&out, |r| io::read_matrix(r, Some(4))).unwrap();
    assert_eq!(m.to_dense(), vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ]);
}

#[test]
fn example2_sweep_differences() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let run = ulam(&["sweep", "--map", "example2", "--n-list", "10,11,12", "--k-list", "1000", "--out", path_str(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = io::from_file(&out, io::read_sweep).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].error_l1.is_none());
    let d1 = rows[1].error_l1.unwrap();
    let d2 = rows[2].error_l1.unwrap();
    assert!((d1 - 0.00035).abs() <= 2e-4, "{d1}");
    assert!((d2 - 0.00029).abs() <= 2e-4, "{d2}");
    assert!(rows.iter().all(|r| r.runtime_ms.is_none()));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<Vec<u8>>> = (0..2)
        .map(|r| {
            let p = |name: &str| dir.path().join(format!("{r}-{name}"));
            let (m, d, s, o, g) = (p("m.csv"), p("d.csv"), p("s.csv"), p("o.csv"), p("g.csv"));
            for args in [
                vec!["matrix", "--map", "example2", "--n", "6", "--k", "200", "--out", path_str(&m)],
                vec!["solve", "--map", "example1", "--n", "5", "--k", "300", "--out", path_str(&d)],
                vec!["sweep", "--map", "example1", "--n-list", "5,6", "--k-list", "100,200", "--out", path_str(&s)],
                vec![
                    "oracle", "--map", "example2", "--n", "8", "--k", "50", "--steps", "200000", "--seed", "7", "--out",
                    path_str(&o),
                ],
                vec!["truncate", "--map", "example1", "--n", "5", "--graph", path_str(&g)],
            ] {
                let out = ulam(&args);
                assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            }
            [m, d, s, o, g].iter().map(|f| std::fs::read(f).unwrap()).collect()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn every_csv_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    assert!(ulam(&["matrix", "--map", "example1", "--n", "4", "--k", "64", "--out", path_str(&p("m.csv"))]).status.success());
    assert!(ulam(&["solve", "--map", "example2", "--n", "4", "--k", "64", "--out", path_str(&p("d.csv"))]).status.success());
    assert!(ulam(&["sweep", "--map", "example1", "--n-list", "3", "--k-list", "32", "--timing", "--out", path_str(&p("s.csv"))])
        .status
        .success());
    assert!(ulam(&["truncate", "--map", "example2", "--n", "3", "--graph", path_str(&p("g.csv"))]).status.success());

    let m = io::from_file(p("m.csv"), |r| io::read_matrix(r, None)).unwrap();
    let mut buf = Vec::new();
    io::write_matrix(&m, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(p("m.csv")).unwrap());

    let d = io::from_file(p("d.csv"), io::read_density).unwrap();
    let mut buf = Vec::new();
    io::write_density(&d, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(p("d.csv")).unwrap());

    let s = io::from_file(p("s.csv"), io::read_sweep).unwrap();
    assert!(s[0].runtime_ms.is_some());
    let mut buf = Vec::new();
    io::write_sweep(&s, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(p("s.csv")).unwrap());

    let g = io::from_file(p("g.csv"), io::read_graph).unwrap();
    assert_eq!(g.len(), 2001);
    let mut buf = Vec::new();
    io::write_graph(&g, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(p("g.csv")).unwrap());
}

#[test]
fn definition_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ex2.map");
    std::fs::write(&file, ulam_acim::catalog::EXAMPLE2_DEFINITION).unwrap();
    let from_file = json(&ulam(&["solve", "--map", path_str(&file), "--n", "6", "--k", "100"]));
    let from_catalog = json(&ulam(&["solve", "--map", "example2", "--n", "6", "--k", "100"]));
    let a = from_file["summary"]["sup"].as_f64().unwrap();
    let b = from_catalog["summary"]["sup"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
}

#[test]
fn exit_codes() {
    assert_eq!(ulam(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(ulam(&["solve", "--map", "example1"]).status.code(), Some(64));
    assert_eq!(ulam(&["solve", "--map", "nowhere", "--n", "3"]).status.code(), Some(64));
    assert_eq!(ulam(&["solve", "--map", "example1", "--n", "3", "--k", "0"]).status.code(), Some(64));
    assert_eq!(ulam(&["--help"]).status.code(), Some(0));
    assert_eq!(ulam(&["--version"]).status.code(), Some(0));
    assert_eq!(ulam(&["error", "--map", "example2", "--n", "3", "--k", "10"]).status.code(), Some(64));
    assert_eq!(ulam(&["validate", "--map", "example1"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let concave = dir.path().join("sqrt.map");
    std::fs::write(&concave, "name = sqrt\nclass = finite\npiece = 0, 1, sqrt(x)\n").unwrap();
    assert_eq!(ulam(&["validate", "--map", path_str(&concave)]).status.code(), Some(1));
    let broken = dir.path().join("broken.map");
    std::fs::write(&broken, "name = b\nclass = finite\npiece = 0, 1, x +\n").unwrap();
    assert_eq!(ulam(&["validate", "--map", path_str(&broken)]).status.code(), Some(1));

    // Too few materialized branches for the requested truncation.
    assert_eq!(ulam(&["truncate", "--map", "example1", "--n", "50", "--branches", "45"]).status.code(), Some(64));
    assert_eq!(ulam(&["truncate", "--map", "example1", "--n", "50"]).status.code(), Some(0));
    assert_eq!(ulam(&["truncate", "--map", "example1", "--n", "0"]).status.code(), Some(64));
    // The identity map is not ergodic; the direct solver reports a singular system.
    assert_eq!(
        ulam(&["solve", "--map", "identity", "--n", "1", "--k", "8", "--method", "direct"]).status.code(),
        Some(2)
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_ulam"))
            .env("ULAM_THREADS", threads)
            .args(["sweep", "--map", "example2", "--n-list", "4,5,6", "--k-list", "128"])
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(run("zero").status.code(), Some(64));
}

#[test]
fn error_subcommand() {
    let v = json(&ulam(&["error", "--map", "example1", "--n", "5", "--k", "1000"]));
    assert!((v["error_l1"].as_f64().unwrap() - 0.21952).abs() <= 2e-3);
    let v = json(&ulam(&["error", "--map", "doubling", "--n", "1", "--k", "16"]));
    assert!(v["error_l1"].as_f64().unwrap() <= 1e-12);
}
