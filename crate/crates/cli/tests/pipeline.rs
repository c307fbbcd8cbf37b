use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
simulate.stocks = 2
simulate.days = 90
simulate.start = 2015-09-01
simulate.snapshots_per_interval = 2
features.window = 20
filters.warm_up_days = 20
split.fraction = 0.6
replicates.count = 3
selection.trials = 20
selection.bins = 10
grid.forest = 5,10
grid.replicates = 1
signal.rule = band:137:0.05
";

fn jumplab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumplab"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifests(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir.join("work/manifests"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read_to_string(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn full_pipeline_is_deterministic_and_short_circuits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, "p.conf", TINY);
    let first = jumplab(d, &["all", "--config", "p.conf"]);
    assert!(first.status.success(), "{}", stderr(&first));
    for f in ["marks.csv", "instances.csv", "models.json", "report/table_metrics.csv", "report/fig_jump_counts.svg"] {
        assert!(d.join("work").join(f).exists(), "missing {f}");
    }
    let table = fs::read_to_string(d.join("work/report/table_metrics.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "learner,scope,problem,metric,mean,sd,replicates");
    assert!(table.lines().skip(1).all(|l| l.starts_with("RF,comp,binary,") && l.ends_with(",3")));
    let before = manifests(d);
    assert_eq!(before.len(), 10);

    let again = jumplab(d, &["all", "--config", "p.conf"]);
    assert!(again.status.success());
    assert_eq!(stdout(&again).matches("up to date").count(), 10, "{}", stdout(&again));
    assert_eq!(manifests(d), before);

    let instances = fs::read(d.join("work/instances.csv")).unwrap();
    fs::remove_file(d.join("work/instances.csv")).unwrap();
    let rebuilt = jumplab(d, &["all", "--config", "p.conf"]);
    assert!(rebuilt.status.success(), "{}", stderr(&rebuilt));
    assert!(stdout(&rebuilt).contains("assemble: wrote"));
    assert_eq!(fs::read(d.join("work/instances.csv")).unwrap(), instances);
    assert_eq!(manifests(d), before);

    let refused = jumplab(d, &["assemble", "--config", "p.conf", "--alpha", "0.01"]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("detect.alpha: manifest \"0.05\" vs config \"0.01\""), "{}", stderr(&refused));

    fs::write(d.join("work/marks.csv"), "tampered").unwrap();
    let tampered = jumplab(d, &["featurize", "--config", "p.conf", "--force"]);
    assert!(tampered.status.success());
    let downstream = jumplab(d, &["assemble", "--config", "p.conf"]);
    assert_eq!(downstream.status.code(), Some(3));
    assert!(stderr(&downstream).contains("marks.csv"));
}

#[test]
fn null_data_detection_reports_spurious_rate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, "n.conf", &format!("{TINY}simulate.jump_intensity = 0\nsimulate.profile = flat\n"));
    for stage in ["simulate", "ingest", "detect"] {
        let o = jumplab(d, &[stage, "--config", "n.conf"]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("work/detect_summary.json")).unwrap()).unwrap();
    let truth = &s["truth"];
    assert_eq!(truth["planted"], 0);
    assert_eq!(truth["spurious"], s["marks"]);
    let rate = truth["spurious_rate"].as_f64().unwrap();
    let expect = s["marks"].as_f64().unwrap() / s["tested"].as_f64().unwrap();
    assert_eq!(rate, expect);
    assert!(rate < 0.01);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, "bad.conf", "detect.alhpa = 0.01\n");
    let o = jumplab(d, &["detect", "--config", "bad.conf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key `detect.alhpa`"));

    write_config(d, "val.conf", "simulate.sigma = -1\n");
    assert_eq!(jumplab(d, &["simulate", "--config", "val.conf"]).status.code(), Some(2));

    write_config(d, "empty.conf", "");
    let o = jumplab(d, &["detect", "--config", "empty.conf"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("needs the ingest stage first"));

    write_config(d, "missing.conf", "paths.snapshots = absent.csv\n");
    assert_eq!(jumplab(d, &["ingest", "--config", "missing.conf"]).status.code(), Some(3));

    assert_eq!(jumplab(d, &["nonsense", "--config", "empty.conf"]).status.code(), Some(2));
    assert_eq!(jumplab(d, &["detect", "--config", "absent.conf"]).status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, "s.conf", "simulate.stocks = 1\nsimulate.days = 3\nsimulate.snapshots_per_interval = 1\n");
    assert!(jumplab(d, &["simulate", "--config", "s.conf"]).status.success());
    let a = fs::read(d.join("work/snapshots.csv")).unwrap();
    let o = jumplab(d, &["simulate", "--config", "s.conf", "--seed", "9"]);
    assert!(stdout(&o).contains("simulate: wrote"));
    assert_ne!(fs::read(d.join("work/snapshots.csv")).unwrap(), a);
    let o = jumplab(d, &["simulate", "--config", "s.conf", "--seed", "9"]);
    assert!(stdout(&o).contains("simulate: up to date"));
}
