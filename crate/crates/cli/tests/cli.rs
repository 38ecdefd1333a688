use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn markoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markoff"))
        .args(args)
        .env_remove("MARKOFF_THREADS")
        .env_remove("MARKOFF_PRECISION")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = markoff(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err_class(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(v["formatVersion"], 1);
    v["error"]["class"].as_str().unwrap().to_string()
}

#[test]
fn orbit_count_examples() {
    let v = ok_json(&["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:100"]);
    assert_eq!(v["total"], 29);
    let first = serde_json::to_string(&v).unwrap();
    assert!(first.starts_with("{\"formatVersion\":1"), "{first}");

    let v = ok_json(&["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:2"]);
    assert_eq!(v["total"], 1);
}

#[test]
fn malformed_base_is_a_usage_error() {
    let out = markoff(&["orbit", "count", "--base", "2,2,2", "--log-radius", "ln:100"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_class(&out), "DimensionMismatch");
}

#[test]
fn unknown_flags_exit_two() {
    let out = markoff(&["orbit", "count", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_class(&out), "Usage");
}

#[test]
fn reduce_examples() {
    let v = ok_json(&["reduce", "--point", "82,22,2,2"]);
    assert_eq!(v["word"], serde_json::json!([1, 2, 1]));
    assert_eq!(v["root"], serde_json::json!(["2", "2", "2", "2"]));

    let v = ok_json(&["reduce", "--point", "2,2,2,2"]);
    assert_eq!(v["word"], serde_json::json!([]));

    let out = markoff(&["reduce", "--point", "1,1,1,1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(err_class(&out), "NotOnVariety");
}

#[test]
fn reduce_text_shows_each_step() {
    let out = markoff(&["reduce", "--point", "82,22,2,2", "--path", "--format", "text"]);
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("step 1: m1 -> (6,22,2,2)"), "{s}");
    assert!(s.contains("step 3: m1 -> (2,2,2,2)"), "{s}");
}

#[test]
fn fundamental_examples() {
    let v = ok_json(&["fundamental", "--n", "4", "--a", "1", "--box", "100"]);
    assert_eq!(v["solutions"], serde_json::json!([["2", "2", "2", "2"]]));
    let v = ok_json(&["fundamental", "--n", "3", "--a", "3", "--box", "10"]);
    assert_eq!(v["solutions"], serde_json::json!([["1", "1", "1"]]));
}

#[test]
fn verify_finds_no_violations_off_the_root() {
    let v = ok_json(&["verify", "--base", "2,2,2,2", "--log-radius", "ln:1000000"]);
    assert_eq!(v["nonRootViolations"], 0);
    assert_eq!(v["rootViolates"], true);
    assert!(v["checked"].as_u64().unwrap() > 100);
}

#[test]
fn geodesics_from_lengths_and_coordinates_agree() {
    let l2 = 2.0 * (2.0f64).asinh();
    let lengths = [l2; 4].map(|l| l.to_string()).join(",");
    let a = ok_json(&["geodesics", "count", "--lengths", &lengths, "--max-coordinate", "22"]);
    let b = ok_json(&["geodesics", "count", "--coordinates", "2,2,2,2", "--max-coordinate", "22"]);
    assert_eq!(a["rawCount"], 17);
    assert_eq!(b["rawCount"], 17);
    assert_eq!(a["caveat"], true);
}

#[test]
fn fit_beta_on_synthetic_series() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("synthetic.csv");
    let mut s = String::from("L,logL,N,logN\n");
    for i in 0..20 {
        let l = 10.0 * 1.3f64.powi(i);
        let n = l.powf(2.45);
        s.push_str(&format!("{l},{},{n},{}\n", l.ln(), n.ln()));
    }
    std::fs::write(&csv, s).unwrap();
    let svg = dir.path().join("fit.svg");
    let v = ok_json(&[
        "fit-beta",
        "--series",
        csv.to_str().unwrap(),
        "--plot",
        svg.to_str().unwrap(),
    ]);
    assert!((v["beta"].as_f64().unwrap() - 2.45).abs() < 1e-9, "{v}");
    assert_eq!(v["bracketVerdict"], "Inside");
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn output_is_independent_of_threads() {
    let base = ["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:100000000"];
    let runs: Vec<Vec<u8>> = ["1", "4", "8"]
        .iter()
        .map(|t| {
            let mut args = base.to_vec();
            args.extend(["--threads", t]);
            let out = markoff(&args);
            assert!(out.status.success());
            out.stdout
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# defaults\nformat = csv\nthreads = 2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let out = markoff(&["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:100", "--config", c]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "depth,count\n0,1\n1,4\n2,12\n3,12\n");
    let v = ok_json(&[
        "orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:100", "--config", c, "--format", "json",
    ]);
    assert_eq!(v["total"], 29);

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let out = markoff(&["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:100", "--config", c]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_class(&out), "ParseError");
}

#[test]
fn checkpoint_path_resumes_to_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("run.ckpt");
    let args = |p: &Path| {
        vec![
            "orbit".to_string(),
            "count".into(),
            "--base".into(),
            "2,2,2,2".into(),
            "--log-radius".into(),
            "ln:1000000".into(),
            "--checkpoint-path".into(),
            p.to_str().unwrap().into(),
        ]
    };
    let a: Vec<String> = args(&ck);
    let refs: Vec<&str> = a.iter().map(String::as_str).collect();
    let first = ok_json(&refs);
    assert!(ck.exists());
    let again = ok_json(&refs);
    let plain = ok_json(&["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:1000000"]);
    assert_eq!(first, plain);
    assert_eq!(again, plain);

    let out = markoff(&["orbit", "count", "--base", "2,2,2,2", "--log-radius", "ln:999", "--checkpoint-path", refs[7]]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(err_class(&out), "DigestMismatch");
}

#[test]
fn series_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("s.csv");
    let out = markoff(&[
        "series",
        "--base",
        "2,2,2,2",
        "--range",
        "5,20",
        "--samples",
        "6",
        "--format",
        "csv",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.starts_with("L,logL,N,logN\n"));
    assert_eq!(s.lines().count(), 7);
    assert_eq!(std::fs::read_to_string(&out_csv).unwrap(), s);
}
