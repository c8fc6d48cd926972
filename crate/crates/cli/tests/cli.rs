use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_trustbench");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two members per blob, short sessions.
fn simulate(dir: &Path, seed: &str) -> String {
    ok(&[
        "simulate",
        "--out",
        p(dir),
        "--seed",
        seed,
        "--members-per-blob",
        "2",
        "--fuel",
        "240",
    ])
}

fn jsonl_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_deterministic_and_writes_three_sessions_per_member() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let msg = simulate(&a, "7");
    simulate(&b, "7");
    assert!(msg.contains("18 session logs for 6 members"), "{msg}");
    let (fa, fb) = (jsonl_files(&a), jsonl_files(&b));
    assert_eq!(fa.len(), 18);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let members: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("members.json")).unwrap()).unwrap();
    assert_eq!(members.as_array().unwrap().len(), 6);
}

#[test]
fn identify_cluster_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let (cohort, models, eval) = (tmp.path().join("c"), tmp.path().join("m"), tmp.path().join("e"));
    simulate(&cohort, "3");

    ok(&[
        "identify",
        "--cohort-dir",
        p(&cohort),
        "--out",
        p(&models),
        "--population",
    ]);
    assert!(models.join("population.json").is_file());
    ok(&[
        "identify",
        "--cohort-dir",
        p(&cohort),
        "--out",
        p(&models),
        "--individual",
    ]);
    assert_eq!(std::fs::read_dir(models.join("individual")).unwrap().count(), 6);

    let groups = tmp.path().join("groups.json");
    std::fs::write(&groups, r#"{"first": ["syn00", "syn01"]}"#).unwrap();
    ok(&[
        "identify",
        "--cohort-dir",
        p(&cohort),
        "--out",
        p(&models),
        "--groups",
        p(&groups),
    ]);
    assert!(models.join("groups/first.json").is_file());

    let out = run(&["cluster", "--models", p(&models), "--k", "7"]);
    assert_eq!(out.status.code(), Some(14), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ok(&["cluster", "--models", p(&models), "--k", "1", "--replicates", "10"]);
    assert!(out.contains("cluster 0: 6 members"), "{out}");
    let cluster: serde_json::Value =
        serde_json::from_slice(&std::fs::read(models.join("cluster.json")).unwrap()).unwrap();
    assert!(cluster["selection"].is_null());
    assert_eq!(cluster["styles"].as_array().unwrap().len(), 1);

    let out = ok(&[
        "evaluate",
        "--cohort-dir",
        p(&cohort),
        "--models",
        p(&models),
        "--out",
        p(&eval),
    ]);
    for family in ["Ind1", "Pop", "Cluster"] {
        assert!(out.contains(family), "{out}");
        assert_eq!(std::fs::read_dir(eval.join("runs").join(family)).unwrap().count(), 6);
    }
    let mut table = csv::Reader::from_path(eval.join("mse.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = table.records().map(Result::unwrap).collect();
    assert!(rows.len() >= 18);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() >= 0.0));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(eval.join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());
    for f in ["scatter.csv", "taper_low.csv", "taper_high.csv"] {
        assert!(eval.join(f).is_file(), "{f}");
    }

    // A member without its test session cannot be evaluated.
    std::fs::remove_file(cohort.join("syn00_s2.jsonl")).unwrap();
    let out = run(&[
        "evaluate",
        "--cohort-dir",
        p(&cohort),
        "--models",
        p(&models),
        "--out",
        p(&eval),
    ]);
    assert_eq!(out.status.code(), Some(15), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = run(&[
        "identify",
        "--cohort-dir",
        p(&missing),
        "--out",
        p(tmp.path()),
        "--population",
    ]);
    assert_eq!(out.status.code(), Some(17));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.starts_with("error (io):") && stderr.contains("missing"),
        "{stderr}"
    );

    let out = run(&["simulate", "--out", p(tmp.path()), "--tau1", "0.9", "--tau2", "0.1"]);
    assert_eq!(out.status.code(), Some(11));

    let out = run(&["cluster", "--models", p(tmp.path()), "--k-range", "3-x"]);
    assert_eq!(out.status.code(), Some(11));

    let bad = tmp.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    std::fs::write(bad.join("x_s1.jsonl"), "{not json\n").unwrap();
    let out = run(&[
        "identify",
        "--cohort-dir",
        p(&bad),
        "--out",
        p(tmp.path()),
        "--population",
    ]);
    assert_eq!(out.status.code(), Some(16), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn serve_reports_address_and_refuses_a_busy_port() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("logs");
    let mut child = Command::new(BIN)
        .args(["serve", "--listen", "127.0.0.1:0"])
        .env("TRUSTBENCH_DATA_DIR", &data)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .strip_prefix("listening on http://")
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap_or_else(|| panic!("unexpected ready line {line:?}"))
        .to_string();
    assert!(line.contains(p(&data)), "{line}");
    assert!(data.is_dir());

    let out = run(&["serve", "--listen", &addr, "--data-dir", p(tmp.path())]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(out.status.code(), Some(17), "{}", String::from_utf8_lossy(&out.stderr));
}
