use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use itac_core::ingest::MockTrendsServer;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn config() -> PathBuf {
    fixtures().join("pipeline.toml")
}

fn itac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itac")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = itac(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_writes_indicator_csv() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&[
        "build", "--method", "dfm", "--variant", "itacons", "--config", s(&config()), "--out", s(tmp.path()),
        "--quarterly",
    ]);
    let csv = std::fs::read_to_string(tmp.path().join("itac_dfm.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("date,value"));
    assert!(lines.next().unwrap().starts_with("2008-01,"));
    let q = std::fs::read_to_string(tmp.path().join("itac_dfm_quarterly.csv")).unwrap();
    assert!(q.lines().nth(1).unwrap().starts_with("2008-Q1,"));
    let json = std::fs::read_to_string(tmp.path().join("itac_dfm.json")).unwrap();
    assert!(json.contains("indicator-series"));
}

#[test]
fn evaluate_writes_table_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(&["evaluate", "--config", s(&config()), "--out", s(dir.path()), "--seed", "11"]);
    }
    let table = std::fs::read(a.path().join("table4.csv")).unwrap();
    assert_eq!(table, std::fs::read(b.path().join("table4.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.path().join("table4.json")).unwrap(),
        std::fs::read(b.path().join("table4.json")).unwrap()
    );
    let text = String::from_utf8(table).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "category,estimate,mse,rmse,p_dm,p_gw");
    assert!(text.lines().all(|l| l.split(',').count() == 6));
    assert!(text.lines().last().unwrap().starts_with("Total,"));
}

#[test]
fn report_plot_and_search_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    run_ok(&["report", "--config", s(&config()), "--out", out]);
    for f in ["correlations.csv", "correlations.json", "folds.csv", "stage_one.csv", "stage_one.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let folds = std::fs::read_to_string(tmp.path().join("folds.csv")).unwrap();
    assert!(folds.contains("2022-06"));

    run_ok(&["plot", "--config", s(&config()), "--out", out, "--method", "pca"]);
    let svg = std::fs::read_to_string(tmp.path().join("plot_pca_itacons.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("consumption"));
    assert!(tmp.path().join("plot_pca_itacons_quarterly.svg").exists());

    let search = run_ok(&["search", "--config", s(&config()), "--out", out, "--method", "pca"]);
    assert!(String::from_utf8_lossy(&search.stdout).starts_with("best components="));
    let board = std::fs::read_to_string(tmp.path().join("leaderboard_pca.csv")).unwrap();
    assert_eq!(board.lines().count(), 1 + 11);
}

#[test]
fn usage_errors_exit_2() {
    let bad_flag = itac(&["build", "--colour", "red", "--config", s(&config())]);
    assert_eq!(bad_flag.status.code(), Some(2));
    assert_eq!(itac(&["transmogrify"]).status.code(), Some(2));
    assert_eq!(itac(&["build", "--method", "svm", "--config", s(&config())]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let missing = itac(&["evaluate", "--config", s(&tmp.path().join("nope.toml"))]);
    assert_eq!(missing.status.code(), Some(2));

    let text = std::fs::read_to_string(config()).unwrap().replace("[pca]", "[pca]\nwhiten = true");
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, text).unwrap();
    let out = itac(&["evaluate", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("whiten"));
}

/// Copies the fixture config into `dir` with absolute data paths.
fn relocated_config(dir: &Path, extra: &str, trends: &Path) -> PathBuf {
    let text = std::fs::read_to_string(config())
        .unwrap()
        .replace("trends_dir = \"trends\"", &format!("trends_dir = {:?}\n{extra}", s(trends)))
        .replace("\"targets/", &format!("\"{}/targets/", s(&fixtures())));
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let cfg = relocated_config(tmp.path(), "", &empty);
    let out = itac(&["build", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn fetch_populates_trends_from_endpoint() {
    let server = MockTrendsServer::start(fixtures().join("trends")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let trends = tmp.path().join("fetched");
    let cfg = relocated_config(
        tmp.path(),
        &format!("endpoint = {:?}\ncache_dir = {:?}", server.base_url(), s(&tmp.path().join("cache"))),
        &trends,
    );
    run_ok(&["fetch", "--config", s(&cfg), "--geo", "PE"]);
    assert_eq!(std::fs::read_dir(&trends).unwrap().count(), 32);
    let original = std::fs::read(fixtures().join("trends/restaurants.csv")).unwrap();
    assert_eq!(std::fs::read(trends.join("restaurants.csv")).unwrap(), original);

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["build", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["build", "--config", s(&config()), "--out", s(&b)]);
    assert_eq!(
        std::fs::read(a.join("itac_pca.csv")).unwrap(),
        std::fs::read(b.join("itac_pca.csv")).unwrap()
    );

    server.respond_with_status("hotels", 404);
    std::fs::remove_dir_all(tmp.path().join("cache")).unwrap();
    let failed = itac(&["fetch", "--config", s(&cfg)]);
    assert_eq!(failed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("hotels"));
}

#[test]
fn fixture_command_reproduces_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&["fixture", s(tmp.path())]);
    for rel in ["pipeline.toml", "targets/consumption.csv", "trends/restaurants.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join(rel)).unwrap(),
            std::fs::read(fixtures().join(rel)).unwrap(),
            "{rel}"
        );
    }
}
