use xamba::cli::{exit_code, run, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VERIFY};
use xamba::XambaError;

fn xamba(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("xamba").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn simulate_reports_speedup_only_with_passes() {
    let (code, out, _) = xamba(&["--json", "simulate", "--model", "mamba2"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v.get("speedup").is_none());
    assert!(v["report"]["breakdown"]["CumSum"].as_f64().unwrap() > 0.5);

    let (code, out, _) = xamba(&["--json", "simulate", "--model", "mamba2", "--passes", "cumba"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let s = v["speedup"].as_f64().unwrap();
    assert!((s / 1.8 - 1.0).abs() <= 0.15, "{s}");
}

#[test]
fn simulate_decode_reports_tokens_per_second() {
    let (code, out, _) = xamba(&["simulate", "--model", "mamba", "--mode", "decode", "--passes", "actiba"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("tokens/s="), "{out}");
}

#[test]
fn simulate_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let (code, _, _) = xamba(&[
        "simulate",
        "--model",
        "mamba",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let nodes = v["nodes"].as_array().unwrap().len();
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), nodes + 1);
}

#[test]
fn verify_exit_codes() {
    assert_eq!(
        xamba(&["verify", "--model", "mamba", "--passes", "cumba,reduba"]).0,
        EXIT_OK
    );
    let (code, out, _) = xamba(&["verify", "--model", "mamba", "--passes", "actiba", "--segments", "2"]);
    assert_eq!(code, EXIT_VERIFY, "{out}");
    assert!(out.starts_with("FAIL"));
}

#[test]
fn verify_of_identity_has_zero_difference() {
    let (code, out, _) = xamba(&["--json", "verify", "--model", "mamba", "--samples", "3"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["max_abs_diff"].as_f64(), Some(0.0));
}

#[test]
fn bench_is_deterministic_with_ten_rows() {
    let (code, a, _) = xamba(&["bench"]);
    assert_eq!(code, EXIT_OK);
    let (_, b, _) = xamba(&["bench", "--seed", "42"]);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 11);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&header[..4], &["model", "passes", "total_us", "speedup"]);
    for row in &lines[1..] {
        let shares: f64 = row.split(',').skip(4).map(|s| s.parse::<f64>().unwrap()).sum();
        assert!((shares - 1.0).abs() < 1e-9, "{row}");
    }
}

#[test]
fn census_matches_expected_counts() {
    for model in ["mamba", "mamba2"] {
        let (code, out, _) = xamba(&["census", "--model", model]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(out.contains("Gather"));
    }
    let (_, out, _) = xamba(&["--json", "census", "--model", "mamba2", "--passes", "cumba,reduba"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["counts"].get("CumSum").is_none());
    assert!(v.get("targets").is_none());
}

#[test]
fn rewrite_emits_a_loadable_graph() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let (code, _, _) = xamba(&[
        "rewrite",
        "--model",
        "mamba2",
        "--passes",
        "all",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let g = xamba::OpGraph::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(g.metadata["passes"], "cumba,reduba,actiba");
    let (code, out, _) = xamba(&["rewrite", "--graph", path.to_str().unwrap(), "--passes", "cumba"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(xamba::OpGraph::from_json(&out).unwrap().len(), g.len());
}

#[test]
fn fitted_table_file_reports_its_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("silu.clut");
    let p = path.to_str().unwrap();
    let (code, _, _) = xamba(&[
        "fit-plu",
        "--func",
        "silu",
        "--segments",
        "32",
        "--lo",
        "-6",
        "--hi",
        "6",
        "--out",
        p,
    ]);
    assert_eq!(code, EXIT_OK);
    let (code, out, _) = xamba(&["--json", "plu-error", "--table", p, "--grid", "10001"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["segments"], 32);
    assert!(v["max_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(xamba(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(xamba(&["simulate", "--model", "mamba3"]).0, EXIT_USAGE);
    let (code, _, err) = xamba(&["simulate", "--passes", "cumba,bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("bogus"));
    assert_eq!(xamba(&["plu-error"]).0, EXIT_USAGE);
    assert_eq!(xamba(&["--help"]).0, EXIT_OK);
}

#[test]
fn bad_calibration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.json");
    std::fs::write(&path, r#"{"mpu_macs_per_cycle": 0}"#).unwrap();
    let (code, _, err) = xamba(&["simulate", "--calibration", path.to_str().unwrap()]);
    assert_ne!(code, EXIT_OK);
    assert!(err.starts_with("error:"));
}

#[test]
fn numeric_errors_map_to_four() {
    let e = XambaError::Numeric {
        node: "n".into(),
        msg: "inf".into(),
    };
    assert_eq!(exit_code(&e), EXIT_NUMERIC);
}
