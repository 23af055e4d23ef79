use std::fs;
use std::process::Command;

use propagation_incentives::cli::run_with;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("propinc").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn eliminate_lemma_order_writes_survivors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let (code, out, _) = run(&[
        "eliminate", "--t", "7", "--d", "3", "--H", "2", "--scheme", "almost-uniform", "--beta", "1",
        "--extra-aware", "8", "--order", "lemma", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["all_fully_propagating"], true);
    let survivors = json(&fs::read_to_string(out_dir.join("survivors.json")).unwrap());
    for node in survivors.as_object().unwrap().values() {
        for set in node.as_object().unwrap().values() {
            let set = set.as_array().unwrap();
            assert_eq!(set.len(), 1);
            assert_eq!(set[0]["p"], 0);
            assert!(set[0]["c"].as_array().unwrap().iter().all(|c| c == 0));
        }
    }
    let trace = fs::read_to_string(out_dir.join("trace.jsonl")).unwrap();
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn thin_competition_is_a_domain_error() {
    let (code, _, err) = run(&["eliminate", "--t", "2", "--d", "3", "--H", "2"]);
    assert_eq!(code, 1);
    assert!(err.contains("domination check failed"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["simulate", "--t", "2", "--d", "1", "--H", "2"]).0, 2);
    assert_eq!(run(&["simulate", "--t", "2", "--H", "2"]).0, 2);
    assert_eq!(run(&["no-such-command"]).0, 2);
    assert_eq!(run(&["bounds", "--t", "2"]).0, 2);
    assert_eq!(run(&["lp-oracle", "--hs", "9", "--t", "2"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn bounds_prints_the_dominant_bound() {
    let (code, out, _) = run(&["bounds", "--t", "2", "--H", "5"]);
    assert_eq!(code, 0);
    let approx: f64 = json(&out)["dominant_payment_bound"]["approx"].as_str().unwrap().parse().unwrap();
    assert!((approx - 0.05677).abs() < 1e-5);
}

#[test]
fn lp_oracle_matches_by_hand_value() {
    let (code, out, _) = run(&["lp-oracle", "--hs", "2", "--t", "2"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["value"], "1/1");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"topology": {"t": 2, "d": 3, "H": 2},
            "scheme": {"kind": "almost-uniform", "beta": "1"},
            "solver": {"order": "lemma", "extra_aware": 1}}"#,
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    // the file alone is below the competition threshold
    assert_eq!(run(&["eliminate", "--config", cfg]).0, 1);
    // the flag lifts it
    assert_eq!(run(&["eliminate", "--config", cfg, "--extra-aware", "13"]).0, 0);

    fs::write(&path, r#"{"topology": {"t": 2, "bogus": 1}}"#).unwrap();
    assert_eq!(run(&["eliminate", "--config", cfg]).0, 2);
}

#[test]
fn sybil_report_and_single_gain() {
    let (code, out, _) = run(&["check-sybil", "--t", "1", "--d", "3", "--H", "2", "--extra-aware", "14"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("scheme,node,deviation,gain"));
    assert!(lines.all(|l| l.ends_with(",none,0/1")));

    let (code, out, _) = run(&[
        "check-sybil", "--scheme", "geometric", "--base", "2000", "--ratio", "1/2", "--position", "2", "--length", "3",
    ]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["gain"], "500/1");
}

#[test]
fn hybrid_scheme_summary() {
    let (code, out, err) = run(&["scheme", "--scheme", "hybrid", "--a", "7", "--b", "7", "--d", "3", "--H", "9"]);
    assert_eq!(code, 0);
    assert!(err.is_empty());
    let v = json(&out);
    assert_eq!(v["expected_payment"], "1517/758");
    assert_eq!(v["worst_case_payment"]["B"], "4/1");

    let (code, _, err) = run(&["scheme", "--scheme", "hybrid", "--a", "2", "--b", "2", "--d", "3", "--H", "3"]);
    assert_eq!(code, 0);
    assert!(err.contains("warning"));
}

#[test]
fn custody_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.bin");
    let env_s = env.to_str().unwrap();
    assert_eq!(run(&["custody", "create", "--seed", "4", "--hops", "1", "--fee", "12", "--out", env_s]).0, 0);
    let (code, out, _) = run(&["custody", "verify", env_s]);
    assert_eq!((code, json(&out)["h"].as_u64()), (0, Some(2)));
    let (code, out, _) = run(&["custody", "settle", env_s]);
    assert_eq!(code, 0);
    let amounts: Vec<u64> = json(&out)["payouts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["amount"].as_u64().unwrap())
        .collect();
    assert_eq!(amounts, vec![20, 4]);

    let mut bytes = fs::read(&env).unwrap();
    let last = bytes.len() - 10;
    bytes[last] ^= 1;
    fs::write(&env, bytes).unwrap();
    assert_eq!(run(&["custody", "verify", env_s]).0, 1);
}

#[test]
fn binary_output_is_reproducible() {
    let bin = env!("CARGO_BIN_EXE_propinc");
    let args = ["simulate", "--t", "7", "--d", "3", "--H", "2", "--extra-aware", "8", "--trials", "5000", "--seed", "11"];
    let a = Command::new(bin).args(args).output().unwrap();
    let b = Command::new(bin).args(args).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let other = Command::new(bin).args(&args[..args.len() - 1]).arg("12").output().unwrap();
    assert_ne!(a.stdout, other.stdout);

    let bad = Command::new(bin).args(["simulate", "--d", "1", "--t", "1", "--H", "2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
