use std::path::Path;
use std::process::{Command, Output};

fn gsoliton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsoliton"))
        .args(args)
        .env("GSOLITON_THREADS", "1")
        .output()
        .expect("run binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn solve_p1(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name);
    let out_s = out.to_str().unwrap().to_string();
    let mut args = vec!["solve", "--example", "p1", "-N", "257", "-R", "8", "--t-max", "0.95", "-o", &out_s];
    args.extend_from_slice(extra);
    let o = gsoliton(&args);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    out_s
}

#[test]
fn list_examples() {
    let o = gsoliton(&["list-examples"]);
    assert_eq!(code(&o), 0);
    let names: Vec<String> = stdout(&o).split_whitespace().map(String::from).collect();
    for n in ["p1", "p2", "p1xp1", "bl1p2", "bl2p2", "bl3p2"] {
        assert!(names.iter().any(|x| x == n), "{names:?}");
    }
}

#[test]
fn polytope_reports() {
    let o = gsoliton(&["polytope", "--example", "p2"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("m_X          0.0000000000"), "{s}");
    assert!(s.contains("m_X < 1: yes"));
    assert!(s.contains("volume       4.500000000000"));

    let o = gsoliton(&["polytope", "--example", "bl1p2", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["m_x"].as_f64().unwrap() - 5.0 / 11.0).abs() < 1e-12);
    assert_eq!(v["reflexive"], true);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "dimension 2\nfacet 1 0 -2\nfacet 0 1 -2\nfacet -1 -1 -2\n").unwrap();
    assert_eq!(code(&gsoliton(&["polytope", "--polytope", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&gsoliton(&["polytope", "--example", "p9"])), 2);
    assert_eq!(code(&gsoliton(&["solve", "--example", "p1", "--weight", "nonsense", "-o", "/dev/null"])), 2);
    assert_eq!(code(&gsoliton(&["solve", "--example", "p1", "--t-max", "2", "-o", "/dev/null"])), 2);
    assert_eq!(code(&gsoliton(&["solve", "--example", "p1", "-N", "64", "-o", "/dev/null"])), 2);
    let junk = dir.path().join("junk.jsonl");
    std::fs::write(&junk, "{\"type\":\"state\"}\n").unwrap();
    assert_eq!(code(&gsoliton(&["verify", junk.to_str().unwrap()])), 2);
    assert_eq!(code(&gsoliton(&["verify", "/nonexistent/record.jsonl"])), 2);
}

#[test]
fn solve_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.dat");
    let rec = solve_p1(dir.path(), "p1.jsonl", &["--plot", plot.to_str().unwrap()]);
    let cols = std::fs::read_to_string(&plot).unwrap();
    assert!(cols.starts_with("# t E"));
    assert!(cols.lines().count() > 3);

    let o = gsoliton(&["verify", &rec]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("rho_identity"));

    let o = gsoliton(&["verify", &rec, "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), 13);

    for check in ["ij_monotone", "eigen_margin", "projection_invariance"] {
        let o = gsoliton(&["verify", &rec, "--inject", check]);
        assert_eq!(code(&o), 1, "{check}: {}", stdout(&o));
    }
    assert_eq!(code(&gsoliton(&["verify", &rec, "--inject", "bogus"])), 2);
}

#[test]
fn oracle_commands() {
    let o = gsoliton(&["oracle1d", "--weight", "affine:0.5", "--t", "1"]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("no solution"));
    let o = gsoliton(&["oracle1d", "--weight", "quadratic:1,0,-0.3", "--t", "0.5,1"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().count(), 2);

    let dir = tempfile::tempdir().unwrap();
    let rec = solve_p1(dir.path(), "p1.jsonl", &["--no-eigen"]);
    let o = gsoliton(&["oracle1d", "--record", &rec, "--t", "0", "--tol", "5e-3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    let o = gsoliton(&["oracle1d", "--record", &rec, "--t", "0", "--tol", "1e-9"]);
    assert_eq!(code(&o), 1);
}
