use std::process::{Command, Output};

use lattice_zeta::report::{Report, ResultRow};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lattice-zeta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn rows(out: &Output) -> Vec<ResultRow> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Report::read_csv(&out.stdout[..]).unwrap()
}

#[test]
fn single_vertex_trace_is_two() {
    let r = rows(&run(&["zeta", "--walk", "lsrw", "--R", "1"]));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].value, 2.0);
    assert_eq!((r[0].n, r[0].method.as_str()), (Some(1), "exact"));
}

#[test]
fn metadata_header_is_present() {
    let out = run(&["zeta", "--walk", "king", "--R", "4", "--seed", "9"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# lattice-zeta "));
    for key in ["# command=zeta", "# walk=king", "# tol=1e-10"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
    assert!(text.contains("walk,shape,R,N,method,value,stderr,seed,tol,runtime_ms,notes"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["zeta", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(out.stdout.is_empty());
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["zeta", "--walk", "bishop"]).status.code(), Some(1));
    assert_eq!(run(&["ledger", "--R", "20", "--eta", "0.7"]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    // dense path refuses N = 6400
    let out = run(&["zeta", "--R", "80", "--method", "dense"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["kirchhoff", "--graph", "complete:300"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let a = run(&["pi", "--walk", "king,triangular", "--R", "12,16"]);
    let b = run(&["pi", "--walk", "king,triangular", "--R", "12,16", "--threads", "1"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let h1 = run(&["zeta", "--R", "8", "--method", "hutchinson", "--probes", "16", "--seed", "3"]);
    let h2 = run(&["zeta", "--R", "8", "--method", "hutchinson", "--probes", "16", "--seed", "3"]);
    assert_eq!(h1.stdout, h2.stdout);
    let h3 = rows(&run(&["zeta", "--R", "8", "--method", "hutchinson", "--probes", "16", "--seed", "4"]));
    assert_ne!(rows(&h1)[0].value, h3[0].value);
}

#[test]
fn json_mirrors_csv() {
    let csv = rows(&run(&["pi", "--walk", "knight", "--R", "10"]));
    let out = run(&["pi", "--walk", "knight", "--R", "10", "--out", "json"]);
    let rep: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep.rows, csv);
    assert_eq!(rep.metadata.command, "pi");
}

#[test]
fn pi_row_is_consistent() {
    let r = rows(&run(&["pi", "--walk", "king", "--R", "12", "--method", "dense"]));
    let trace: f64 = r[0]
        .notes
        .split(';')
        .find_map(|kv| kv.strip_prefix("trace="))
        .unwrap()
        .parse()
        .unwrap();
    let r2 = 144f64;
    assert!((r[0].value * trace - 2.0 / 3.0 * r2 * r2.ln()).abs() < 1e-9);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# path of length 2\nshape = path\nR = 2\n").unwrap();
    let r = rows(&run(&["zeta", "--R", "50", "--config", cfg.to_str().unwrap()]));
    assert!((r[0].value - 8.0 / 3.0).abs() < 1e-12);
    assert_eq!(r[0].shape, "path");
}

#[test]
fn exports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let a = rows(&run(&[
        "zeta", "--R", "6", "--conductances", "1,4", "--env-seed", "5",
        "--env-out", &p("env.csv"), "--operator-out", &p("op.mtx"),
    ]));
    let b = rows(&run(&["zeta", "--R", "6", "--env-in", &p("env.csv")]));
    assert_eq!(a[0].value, b[0].value);
    let mtx = std::fs::read_to_string(p("op.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket"));
    let env = std::fs::read_to_string(p("env.csv")).unwrap();
    assert!(env.starts_with("# extent=6x6"));

    rows(&run(&["ledger", "--R", "20", "--layer-out", &p("layer.csv")]));
    let layer = std::fs::read_to_string(p("layer.csv")).unwrap();
    assert_eq!(layer.lines().count(), 401);

    let h = rows(&run(&["heat-constant", "--tmax", "400", "--series-out", &p("series.csv")]));
    assert!((h[0].value - 2.0 / std::f64::consts::PI).abs() < 5e-3);
    let series = std::fs::read_to_string(p("series.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("t,p_t,t_p_t"));
    assert_eq!(series.lines().count(), 402);
}

#[test]
fn kirchhoff_and_dimension() {
    let k = rows(&run(&["kirchhoff", "--graph", "path:3"]));
    assert!((k[0].value - 4.0).abs() < 1e-12);
    assert!((k[1].value - 4.0).abs() < 1e-9);
    let k = rows(&run(&["kirchhoff", "--graph", "random:30:0.1", "--seed", "11"]));
    assert!((k[0].value - k[1].value).abs() < 1e-9 * k[0].value);
    let d = rows(&run(&["dimension"]));
    assert!((d[0].value - 8.0 / 3.0).abs() < 1e-12);
    assert!(d.iter().any(|r| r.shape == "square"));
}

#[test]
fn fit_g_reports_rows_and_fit() {
    let r = rows(&run(&["fit-g", "--walk", "lsrw", "--R", "8,10,12,14"]));
    assert_eq!(r.len(), 5);
    let fit = r.last().unwrap();
    assert_eq!(fit.method, "fit");
    assert!(fit.stderr.unwrap() >= 0.0);
    assert_eq!(run(&["fit-g", "--R", "8,10,12"]).status.code(), Some(1));
}

#[test]
fn timing_fills_runtime_column() {
    let r = rows(&run(&["zeta", "--R", "3", "--timing"]));
    assert!(r[0].runtime_ms.is_some());
    let r = rows(&run(&["zeta", "--R", "3"]));
    assert!(r[0].runtime_ms.is_none());
}
