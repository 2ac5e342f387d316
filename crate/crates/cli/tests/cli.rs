use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use placement_core::fixtures;

fn placement(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_placement")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fixture_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sql-responses.csv")
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no '{key}' in\n{text}"))
        .to_string()
}

#[test]
fn demo_reproduces_the_worked_example() {
    let first = placement(&["demo-paper"]);
    assert_eq!(first.status.code(), Some(0), "{}", stdout(&first));
    let text = stdout(&first);
    assert!(text.trim_end().ends_with("PASS"));
    assert!(text.contains("First iteration: theta_0 = 1"));
    assert!(text.contains("Second iteration: theta_1 = "));
    assert!(text.contains("1\t0\t0.1\t0.7109\t0.2891\t-0.7109\t0.2055"));
    assert!(text.contains("SUM\t\t\t\t\t2.23106\t4.61966"));
    assert_eq!(stdout(&placement(&["demo-paper"])), text);
}

#[test]
fn demo_from_zero_reaches_the_same_estimate() {
    let out = placement(&["demo-paper", "--theta0", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("theta_1: skipped"));
    let line = text.lines().find(|l| l.starts_with("estimate: theta = ")).unwrap();
    let theta: f64 = line["estimate: theta = ".len()..].split(',').next().unwrap().parse().unwrap();
    assert!((theta - 1.4882).abs() < 1e-3);
}

#[test]
fn estimate_fixture_file() {
    let csv = fixture_csv();
    let out = placement(&["estimate", "--theta0", "1.0", "--responses", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let theta: f64 = field(&text, "theta").parse().unwrap();
    let se: f64 = field(&text, "standard_error").parse().unwrap();
    assert!((theta - 1.4882).abs() < 1e-3);
    assert!((se - 0.4740).abs() < 1e-3);
    assert_eq!(field(&text, "status"), "converged");
}

#[test]
fn estimate_trace_mirrors_the_printed_columns() {
    let csv = fixture_csv();
    let out = placement(&["estimate", "--theta0", "1", "--trace", "--responses", csv.to_str().unwrap()]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration 1 (theta_0 = 1)");
    assert_eq!(lines[1], "i\tU_i\tb\tP_i\tQ_i\tNum\tDenom");
    assert_eq!(lines[2], "1\t0\t0.1\t0.7109\t0.2891\t-0.7109\t0.2055");
    assert_eq!(lines[22], "SUM\t\t\t\t\t2.23106\t4.61966");
    assert!(lines[23].starts_with("theta_1 = 1 + 2.23106 / 4.61966 = 1.48294"));
}

#[test]
fn estimate_csv_and_json_agree() {
    let csv = fixture_csv();
    let p = csv.to_str().unwrap();
    let as_csv = stdout(&placement(&["estimate", "--theta0", "1", "--format", "csv", "--responses", p]));
    let row: Vec<&str> = as_csv.lines().nth(1).unwrap().split(',').collect();
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&placement(&["estimate", "--theta0", "1", "--format", "json", "--responses", p]))).unwrap();
    assert_eq!(row[0].parse::<f64>().unwrap(), json["theta"].as_f64().unwrap());
    assert_eq!(row[1].parse::<f64>().unwrap(), json["standardError"].as_f64().unwrap());
    assert_eq!(row[2], "converged");
}

#[test]
fn estimate_all_wrong_is_flagged_not_failed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zeros.csv");
    std::fs::write(&path, "item_id,a,b,u\nq1,1,0.1,0\nq2,1,0.2,0\nq3,1.4,-1,0\n").unwrap();
    let out = placement(&["estimate", "--responses", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(field(&text, "status"), "non_finite_mle");
    assert_eq!(field(&text, "theta"), "-3");
}

#[test]
fn estimate_malformed_line_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "item_id,a,b,u\nq1,1,0.1,0\nq2,1,0.2,yes\n").unwrap();
    let out = placement(&["estimate", "--responses", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    let out = placement(&["estimate", "--responses", "/no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fixtures::write_repository(dir.path()).unwrap();
    let out = placement(&["validate", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("0 errors"));

    let cyclic = fixtures::RELATIONAL_ALGEBRA_COMPETENCE.replace("<title>", "<prerequisite ref=\"sql\"/>\n  <title>");
    std::fs::write(dir.path().join("competences/relational-algebra.xml"), cyclic).unwrap();
    let out = placement(&["validate", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("error: ") && text.contains("relational-algebra") && text.contains("sql"), "{text}");
    assert!(text.to_lowercase().contains("cycle"), "{text}");

    let out = placement(&["validate", dir.path().to_str().unwrap(), "--format", "json"]);
    let findings: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(findings[0]["kind"], "prerequisite_cycle");

    let out = placement(&["validate", "/no/such/repository"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_malformed_document_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    fixtures::write_repository(dir.path()).unwrap();
    std::fs::write(dir.path().join("items/broken.xml"), "<itemBank competenceRef=\"sql\"><item").unwrap();
    let out = placement(&["validate", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("broken.xml"), "{}", stderr(&out));
}

#[test]
fn simulate_is_reproducible_and_execution_independent() {
    let args = ["simulate", "--thetas", "-1,0,1", "--items", "20", "--reps", "30", "--seed", "9", "--format", "csv"];
    let a = placement(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = placement(&args);
    assert_eq!(stdout(&a), stdout(&b));
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert_eq!(stdout(&placement(&seq)), stdout(&a));
    assert_eq!(stdout(&a).lines().count(), 4);
}

#[test]
fn simulate_default_spec_has_small_bias() {
    let out = placement(&["simulate", "--format", "csv"]);
    let text = stdout(&out);
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[4].abs() < 0.15, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn simulate_usage_errors() {
    assert_eq!(placement(&["simulate", "--reps", "0"]).status.code(), Some(2));
    assert_eq!(placement(&["simulate", "--thetas", "4"]).status.code(), Some(2));
    assert_eq!(placement(&["simulate", "--items", "5", "--test-length", "9"]).status.code(), Some(2));
    let adaptive = placement(&["simulate", "--mode", "adaptive", "--items", "30", "--test-length", "10", "--reps", "5"]);
    assert_eq!(adaptive.status.code(), Some(0), "{}", stderr(&adaptive));
}

#[test]
fn serve_rejects_a_bad_listen_address() {
    let out = placement(&["serve", "--listen", "not-an-address", "--repo", "."]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = placement(&["serve", "--listen", "127.0.0.1:0", "--repo", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_subcommand_is_a_usage_error() {
    assert_eq!(placement(&[]).status.code(), Some(2));
}
