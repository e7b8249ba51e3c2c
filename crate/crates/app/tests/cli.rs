use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/harvey").join(name)
}

fn floodfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floodfuse"))
        .arg("--config")
        .arg(fixture("config.toml"))
        .args(args)
        .env("FLOODFUSE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn assess_reproduces_golden_json() {
    let golden = std::fs::read_to_string(fixture("golden/assess_77067_multimodal.json")).unwrap();
    let args = ["assess", "--zip", "77067", "--start", "2017-08-25", "--end", "2017-09-01"];
    let first = floodfuse(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(stdout(&first), golden);
    let second = floodfuse(&args);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn text_only_never_touches_imagery() {
    let o = floodfuse(&["assess", "--zip", "77096", "--start", "2017-08-27", "--end", "2017-08-28", "--mode", "text_only"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "text_only");
    assert_eq!(v["provenance"]["imagery"]["consulted"], false);
    assert_eq!(v["provenance"]["imagery"]["tile_ids"].as_array().unwrap().len(), 0);
    assert_eq!(v["evidence_refs"]["imagery_tile_ids"].as_array().unwrap().len(), 0);
    assert_eq!(v["provenance"]["analysts"]["visual_called"], false);
    assert_eq!(v["branch_taken"], "text_only_fallback");
}

#[test]
fn unknown_zip_exits_4() {
    let o = floodfuse(&["assess", "--zip", "99999", "--start", "2017-08-27", "--end", "2017-08-28"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown zip"));
}

#[test]
fn bad_arguments_exit_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_floodfuse")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = floodfuse(&["assess", "--zip", "77096", "--start", "2017-08-29", "--end", "2017-08-27"]);
    assert_eq!(o.status.code(), Some(2));
    let o = floodfuse(&["assess", "--zip", "7709", "--start", "2017-08-27", "--end", "2017-08-28"]);
    assert_eq!(o.status.code(), Some(2));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn eval_reproduces_golden_metrics_and_hand_mae() {
    let dir = tempfile::tempdir().unwrap();
    let o = floodfuse(&["eval", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out, std::fs::read_to_string(fixture("golden/eval_metrics.csv")).unwrap());
    assert_eq!(out, std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap());

    let expected = csv_rows(&std::fs::read_to_string(fixture("golden/expected_mae.csv")).unwrap());
    let got = csv_rows(&out);
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!((&g[0], &g[1]), (&e[0], &e[1]));
        let want = e[2].parse::<f64>().unwrap() / e[3].parse::<f64>().unwrap();
        assert!((g[2].parse::<f64>().unwrap() - want).abs() <= 1e-12, "{g:?}");
        assert_eq!(g[5], e[3]);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["records"], 36);
    assert_eq!(summary["skipped"].as_array().unwrap().len(), 0);
    let geo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("predictions.geojson")).unwrap()).unwrap();
    assert_eq!(geo["features"].as_array().unwrap().len(), 36);
    let records = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 37);
}

#[test]
fn eval_subset_of_configs() {
    let o = floodfuse(&["eval", "--configs", "text_only,multimodal"]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[0] != "text_caption"));
    assert_eq!(floodfuse(&["eval", "--configs", "vision"]).status.code(), Some(2));
}

#[test]
fn ingest_writes_store_and_postings() {
    let dir = tempfile::tempdir().unwrap();
    let o = floodfuse(&["ingest", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let filter = &summary["filter"];
    let parts = ["retweets_removed", "blocked", "no_allow_match", "spam_removed", "kept"]
        .iter()
        .map(|k| filter[k].as_u64().unwrap())
        .sum::<u64>();
    assert_eq!(parts, filter["input_count"].as_u64().unwrap());
    let docs = std::fs::read_to_string(dir.path().join("documents.jsonl")).unwrap();
    assert_eq!(docs.lines().count() as u64, summary["documents"].as_u64().unwrap());
    assert!(dir.path().join("postings.jsonl").exists());
    assert!(!docs.contains("RT @"));
}
