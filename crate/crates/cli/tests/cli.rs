use serde_json::Value;
use std::process::Command;
use ttkit_cli::run;

fn ok(args: &[&str]) -> String {
    let out = run(std::iter::once("ttkit").chain(args.iter().copied()));
    assert_eq!(out.code, 0, "{args:?}: {}", out.stderr);
    out.stdout
}

fn structured(args: &[&str]) -> (i32, Value) {
    let out = run(["ttkit", "--format", "structured"].into_iter().chain(args.iter().copied()));
    let v = serde_json::from_str(out.stdout.trim()).unwrap_or_else(|e| panic!("{e}: {:?}", out));
    (out.code, v)
}

fn decimal(v: &Value) -> f64 {
    v["decimal"].as_str().unwrap().parse().unwrap()
}

#[test]
fn theta_lambda_and_candidate() {
    let s = ok(&["lambda", "fixtures/theta314.g", "fixtures/theta314.map"]);
    assert!(s.starts_with("lambda 2.414213562"), "{s}");
    assert!(s.contains("candidate "));
    let (code, v) = structured(&["lambda", "theta314.g", "theta314.map", "--set", "t=3/4"]);
    assert_eq!(code, 0);
    assert!((decimal(&v["lambda"]) - (1.0 + 2f64.sqrt())).abs() < 1e-6);
    assert!(v["lambda"]["exact"].as_str().unwrap().contains('/'));
}

#[test]
fn golden_train_track() {
    let s = ok(&["traintrack", "fixtures/rose2.g", "fixtures/phifib.map"]);
    assert!(s.contains("classification InteriorTrainTrack"), "{s}");
    assert!(s.contains("lambda 1.618033989"), "{s}");
    assert!(s.contains("a/b=1.618033"), "{s}");
}

#[test]
fn boundary_search_reports_the_stack() {
    let (code, v) = structured(&["traintrack", "rose4.g", "exjumpseg.map", "--budget", "16"]);
    assert_eq!(code, 0);
    assert_eq!(v["classification"], "TrainTrackAtInfinity");
    assert_eq!(v["stack"], serde_json::json!([["a0", "b0"]]));
    assert_eq!(v["jump"]["verdict"], "NotJumped");
    assert!(v["trajectory"].as_array().unwrap().len() >= 3);
}

#[test]
fn validate_rose() {
    assert!(ok(&["validate", "fixtures/rose2.g"]).starts_with("isValidPoint true"));
}

#[test]
fn parse_errors_exit_two_with_position() {
    let dir = std::env::temp_dir().join(format!("ttkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.g");
    std::fs::write(&bad, "graph g\nvertex v free\nedge a v w len 1\n").unwrap();
    let (code, v) = structured(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(v["error"], "Parse");
    assert_eq!((v["line"].as_u64(), v["col"].as_u64()), (Some(3), Some(10)));
    let out = run(["ttkit", "minimize", "rose2.g", "phifib.map", "--floor", "1/"]);
    assert_eq!(out.code, 2, "{out:?}");
    assert_eq!(run(["ttkit", "frobnicate"]).code, 2);
}

#[test]
fn domain_errors_exit_one() {
    let (code, v) = structured(&["weakopt", "rose2.g", "phifib.map", "--target", "1"]);
    assert_eq!((code, v["error"].as_str()), (1, Some("TargetUnreachable")));
    let (code, v) = structured(&["jump", "rose4.g", "exjumpseg.map", "--collapse", "a0"]);
    assert_eq!((code, v["error"].as_str()), (1, Some("NotInvariant")));
    let (code, v) = structured(&["--policy", "float:1e-9", "minimize", "rose2.g", "phifib.map"]);
    assert_eq!((code, v["error"].as_str()), (1, Some("NumericalPolicyViolation")));
    let (code, v) = structured(&["lambda", "missing.g", "phifib.map"]);
    assert_eq!((code, v["error"].as_str()), (1, Some("Io")));
}

#[test]
fn minimize_reports_closed_and_open() {
    let (_, v) = structured(&["minimize", "rose2.g", "phifib.map"]);
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((decimal(&v["lambda"]) - phi).abs() < 1e-9);
    assert!((decimal(&v["open"]["lambda"]) - phi).abs() < 1e-6);
    let (_, v) = structured(&["minimize", "rose2.g", "phifib.map", "--floor", "1/10", "--tol", "1e-6"]);
    assert!(v.get("open").is_none());
}

#[test]
fn weakopt_certificate_and_trace() {
    let dir = std::env::temp_dir().join(format!("ttkit-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("events.jsonl");
    let (code, v) = structured(&["weakopt", "fig322.g", "fig322.map", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["bound_holds"], true);
    let lines: Vec<Value> =
        std::fs::read_to_string(&trace).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len() as u64, v["events"].as_u64().unwrap());
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["index"].as_u64(), Some(i as u64));
    }
}

#[test]
fn power_and_segment() {
    let (_, v) = structured(&["power", "rose2.g", "phifib.map", "--k", "3"]);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    let dir = std::env::temp_dir().join(format!("ttkit-lens-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (a, b) = (dir.join("A.lens"), dir.join("B.lens"));
    std::fs::write(&a, "# unit rose\na 1\nb 1\n").unwrap();
    std::fs::write(&b, "a 1/3\nb golden\n").unwrap();
    let (code, v) = structured(&["segment", "rose2.g", "phifib.map", a.to_str().unwrap(), b.to_str().unwrap(), "--samples", "5"]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["samples"].as_array().unwrap().len(), 6);
    assert_eq!(v["quasi_convex"], true);
    std::fs::write(&b, "a 1/3\n").unwrap();
    let (code, _) = structured(&["segment", "rose2.g", "phifib.map", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn dot_exports() {
    let s = ok(&["dot", "rose2.g"]);
    assert_eq!(s.matches(" -> ").count(), 2);
    let s = ok(&["--policy", "float:1e-9", "dot", "theta314.g", "theta314.map"]);
    assert_eq!(s.matches("penwidth=3").count(), 3);
    let s = ok(&["dot", "rose4.g", "exjumpseg.map", "--trajectory"]);
    assert!(s.contains("subgraph cluster_"));
}

#[test]
fn candidates_and_spectrum() {
    let (_, v) = structured(&["candidates", "rose2.g", "phifib.map"]);
    let rows = v["candidates"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["loop"] == "a" && r["ratio"]["exact"] == "2"));
    let a = ok(&["--seed", "5", "spectrum", "rose2.g", "phifib.map", "--samples", "4"]);
    let b = ok(&["--seed", "5", "spectrum", "rose2.g", "phifib.map", "--samples", "4"]);
    assert_eq!(a, b);
    assert!(a.contains("1.618033989"), "{a}");
}

#[test]
fn fixtures_round_trip_through_disk() {
    let dir = std::env::temp_dir().join(format!("ttkit-fix-{}", std::process::id()));
    let (_, v) = structured(&["fixtures", "--write", dir.to_str().unwrap()]);
    for f in v["files"].as_array().unwrap() {
        let name = f.as_str().unwrap();
        let disk = std::fs::read_to_string(dir.join(name)).unwrap();
        assert_eq!(disk, ok(&["fixtures", "--show", name]).trim_end().to_string() + "\n");
    }
    let g = dir.join("rose2.g");
    let m = dir.join("phifib.map");
    assert!(ok(&["lambda", g.to_str().unwrap(), m.to_str().unwrap()]).starts_with("lambda 2"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ttkit");
    let st = Command::new(bin).args(["validate", "rose2.g"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("isValidPoint true"));
    let st = Command::new(bin).args(["weakopt", "rose2.g", "phifib.map", "--target", "1"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("below the displacement"));
    let st = Command::new(bin).arg("--policy").arg("fuzzy").arg("validate").arg("rose2.g").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}
