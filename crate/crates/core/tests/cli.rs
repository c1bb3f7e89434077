use std::process::Command;

use ruijsenaars::cli::{run, EXIT_FAIL, EXIT_OK, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["ruijsenaars"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("ruijsenaars-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn verify_writes_one_report_per_line() {
    let (code, out, err) = call(&["verify", "--family", "rational", "--ids", "thm-at1,thm-at2", "--m", "2", "--samples", "4"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for (v, id) in lines.iter().zip(["thm-at1", "thm-at2"]) {
        assert_eq!(v["id"], id);
        assert_eq!(v["family"], "rational");
        assert_eq!((v["m"].as_u64(), v["n"].as_u64()), (Some(2), Some(2)));
        assert!(v["max_residual"].as_f64().unwrap() < 1e-10);
        assert!(v["params"].is_object());
    }
    assert!(err.contains("PASS"));
}

#[test]
fn verify_is_deterministic_and_seed_sensitive() {
    let args = ["verify", "--family", "elliptic", "--ids", "partial-fraction,thm-bce1", "--samples", "6"];
    let a = call(&args);
    let b = call(&args);
    assert_eq!(a.0, EXIT_OK);
    assert_eq!(a.1, b.1);
    let mut other = args.to_vec();
    other.extend(["--seed", "8"]);
    assert_ne!(call(&other).1, a.1);
}

#[test]
fn verify_exit_codes() {
    assert_eq!(call(&["verify", "--ids", "not-an-identity"]).0, EXIT_USAGE);
    assert_eq!(call(&["verify", "--family", "hyperbolic"]).0, EXIT_USAGE);
    assert_eq!(call(&["verify", "--samples", "0", "--ids", "riemann"]).0, EXIT_USAGE);
    let (code, _, err) = call(&["verify", "--ids", "thm-at1", "--m", "2", "--tol", "1e-30"]);
    assert_eq!(code, EXIT_FAIL);
    assert!(err.contains("FAIL"));
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
}

#[test]
fn verify_writes_to_file() {
    let path = scratch("verify.jsonl");
    let (code, out, _) = call(&["verify", "--ids", "riemann", "--samples", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(v["id"], "riemann");
}

#[test]
fn params_file_overlay_and_mode_separation() {
    let numeric = scratch("numeric.toml");
    std::fs::write(&numeric, "seed = 3\n[params]\nkappa = [0.19, 0.13]\n").unwrap();
    let (code, out, _) = call(&["verify", "--ids", "thm-at1", "--m", "1", "--params-file", numeric.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["params"]["kappa"], serde_json::json!([0.19, 0.13]));
    assert_eq!(call(&["koornwinder", "--lambda", "1", "--m", "1", "--params-file", numeric.to_str().unwrap()]).0, EXIT_USAGE);

    let exact = scratch("exact.toml");
    std::fs::write(&exact, "[exact.params]\nsq = \"1/3\"\n").unwrap();
    assert_eq!(call(&["verify", "--ids", "riemann", "--params-file", exact.to_str().unwrap()]).0, EXIT_USAGE);
    let missing = scratch("absent.toml");
    assert_eq!(call(&["verify", "--params-file", missing.to_str().unwrap()]).0, EXIT_USAGE);
}

#[test]
fn koornwinder_command() {
    let (code, out, _) = call(&["koornwinder", "--lambda", "1", "--m", "1"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["eigenvalue"]["num"], "351");
    assert_eq!(v["eigenvalue"]["den"], "44");
    assert_eq!(v["lambda"], serde_json::json!([1]));

    let (code, out, _) = call(&["koornwinder", "--check", "column", "--r", "2", "--m", "2"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["check"]["equal"], true);

    assert_eq!(call(&["koornwinder", "--lambda", "1,1", "--m", "1"]).0, EXIT_USAGE);
    assert_eq!(call(&["koornwinder", "--m", "1"]).0, EXIT_USAGE);
    assert_eq!(call(&["koornwinder", "--lambda", "1,2", "--m", "2"]).0, EXIT_USAGE);
    assert_eq!(call(&["koornwinder", "--check", "row", "--m", "2"]).0, EXIT_USAGE);
}

#[test]
fn interp_command() {
    let (code, out, _) = call(&["interp", "--kind", "column-e", "--m", "2"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["m"], 2);
    assert_eq!(call(&["interp", "--kind", "row-h", "--m", "0"]).0, EXIT_USAGE);
    assert_eq!(call(&["interp", "--kind", "diagonal", "--m", "1"]).0, EXIT_USAGE);
}

#[test]
fn binary_reports_exit_status() {
    let bin = env!("CARGO_BIN_EXE_ruijsenaars");
    let ok = Command::new(bin).args(["verify", "--ids", "duplication", "--family", "trig", "--samples", "3"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert_eq!(String::from_utf8(ok.stdout).unwrap().lines().count(), 1);
    let bad = Command::new(bin).args(["verify", "--bogus"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
