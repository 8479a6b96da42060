use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn refvos(args: &[&str]) -> Output {
    refvos_env(args, &[])
}

fn refvos_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_refvos"));
    cmd.args(args);
    for var in ["REFVOS_ASR_URL", "REFVOS_JUDGE_URL", "REFVOS_SEGMENT_URL", "REFVOS_REFINE_URL"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated dataset in `dir`: fixtures, metadata, config and ground truth.
fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", p(dir)];
    args.extend_from_slice(extra);
    let o = refvos(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

fn run(dir: &Path, out: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    let exprs = dir.join("expressions.json");
    let mut args = vec!["run", "--config", p(&cfg), "--expressions", p(&exprs), "--out", p(out)];
    args.extend_from_slice(extra);
    refvos(&args)
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn files(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read_to_string(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn scripted_run_matches_golden_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &["--seed", "1", "--expressions", "4", "--frames", "4", "--size", "24"]);
    let pred = tmp.path().join("pred");
    let o = run(&data, &pred, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let golden = golden_dir();
    if std::env::var_os("REFVOS_BLESS").is_some() {
        let _ = fs::remove_dir_all(&golden);
        for (rel, text) in files(&pred) {
            let dest = golden.join(rel);
            fs::create_dir_all(dest.parent().unwrap()).unwrap();
            fs::write(dest, text).unwrap();
        }
    }
    assert_eq!(files(&pred), files(&golden), "rerun with REFVOS_BLESS=1 to update");
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config.toml does not exist"), "{}", stderr(&o));

    let o = refvos(&["run", "--expressions", "x.json", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "2", "--clean"]);
    let cfg = tmp.path().join("config.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("parallelism = 1", "parallelism = 0");
    fs::write(&cfg, text).unwrap();
    let o = run(tmp.path(), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parallelism"));
    let o = run(tmp.path(), &tmp.path().join("out"), &["--gate-policy", "sometimes"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn everything_gated_off_gives_no_object_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "3", "--frames", "3", "--size", "20"]);
    let mut meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("expressions.json")).unwrap()).unwrap();
    for video in meta["videos"].as_object_mut().unwrap().values_mut() {
        for exp in video["expressions"].as_object_mut().unwrap().values_mut() {
            exp["presence_info"] = json!({"target_exists": false});
        }
    }
    fs::write(tmp.path().join("expressions.json"), meta.to_string()).unwrap();
    let out = tmp.path().join("pred");
    let o = run(tmp.path(), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let preds = manifest["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 3);
    for e in preds {
        assert_eq!(e["meta_text"], "[META:NO_OBJ] target_exists=false");
    }
    assert!(stdout(&o).contains("3 no-object"));
}

#[test]
fn expression_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "3", "--frames", "3", "--size", "20"]);
    // drop every segmentation fixture
    let path = tmp.path().join("fixtures.json");
    let mut fixtures: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    fixtures["segment"] = json!([]);
    fs::write(&path, fixtures.to_string()).unwrap();
    let out = tmp.path().join("pred");
    let o = run(tmp.path(), &out, &["--gate-policy", "off"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 failed"), "{}", stdout(&o));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("[META:ERROR] segment").count(), 3);
}

#[test]
fn environment_overrides_backend_addresses() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "1", "--frames", "2", "--size", "20"]);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let cfg = tmp.path().join("config.toml");
    let exprs = tmp.path().join("expressions.json");
    let out = tmp.path().join("pred");
    let o = refvos_env(
        &["run", "--config", p(&cfg), "--expressions", p(&exprs), "--out", p(&out)],
        &[("REFVOS_ASR_URL", &url)],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("at transcript: asr backend error"), "{}", stdout(&o));
}

#[test]
fn eval_perfect_and_misaligned() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "4", "--frames", "3", "--size", "24"]);
    let gt = tmp.path().join("gt");
    let scores = tmp.path().join("scores.json");
    let o = refvos(&["eval", "--pred", p(&gt), "--gt", p(&gt), "--out", p(&scores)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.lines().next().unwrap().contains("J&F"));
    assert!(table.contains("1.0000   1.0000   1.0000   1.0000   1.0000   1.000000"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&scores).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["final"], 1.0);
    assert_eq!(report["expressions"].as_array().unwrap().len(), 4);

    // precomputed scores reproduce the same aggregate
    let o = refvos(&["eval", "--scores", p(&scores)]);
    assert_eq!(stdout(&o), table);

    let other = tmp.path().join("other");
    simulate(&other, &["--seed", "9", "--expressions", "2", "--frames", "3", "--size", "24"]);
    let o = refvos(&["eval", "--pred", p(&other.join("gt")), "--gt", p(&gt)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("missing predictions: syn0000/0") && err.contains("unknown expressions: syn9000/0"), "{err}");

    let o = refvos(&["eval", "--pred", p(&gt)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gate_subcommand_reports_decisions() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "4", "--frames", "3", "--size", "24"]);
    let cfg = tmp.path().join("config.toml");
    let exprs = tmp.path().join("expressions.json");
    let out = tmp.path().join("gate.json");
    let o = refvos(&["gate", "--config", p(&cfg), "--expressions", p(&exprs), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let absent = doc["decisions"].as_array().unwrap().iter().filter(|d| d["exists"] == false).count();
    assert_eq!(absent, 1);
    assert!(doc["decisions"].as_array().unwrap().iter().all(|d| d["source"] == "judge"));
}

#[test]
fn inspect_prints_every_report_field() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--expressions", "2", "--frames", "3", "--size", "24"]);
    let gt = tmp.path().join("gt");
    let fields = [
        "frame_count",
        "non_empty_frames",
        "coverage",
        "area_smoothness",
        "fragmentation",
        "solidity",
        "anchor",
        "refine_recommended",
    ];
    let o = refvos(&["inspect", p(&gt)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in fields {
        assert!(stdout(&o).contains(&format!("  {f}: ")), "{f}");
    }
    let traj = fs::read_dir(gt.join("trajectories")).unwrap().next().unwrap().unwrap().path();
    let pgm = tmp.path().join("pgm");
    let o = refvos(&["inspect", p(&traj), "--json", "--pgm", p(&pgm)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    for f in fields {
        assert!(doc["report"].get(f).is_some(), "{f}");
    }
    assert_eq!(fs::read_dir(&pgm).unwrap().count(), 3);

    let o = refvos(&["inspect", p(&tmp.path().join("nothing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_from_scenario_file() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    simulate(&first, &["--seed", "4", "--expressions", "2", "--frames", "3", "--size", "24"]);
    let second = tmp.path().join("second");
    let scen = first.join("scenarios.json");
    simulate(&second, &["--scenarios", p(&scen)]);
    assert_eq!(
        fs::read(first.join("fixtures.json")).unwrap(),
        fs::read(second.join("fixtures.json")).unwrap()
    );
}

#[test]
fn eval_leaderboard_fixture_from_precomputed_scores() {
    // 43 target-present expressions (42 predicted), 66 absent (59 predicted empty)
    let mut expressions = Vec::new();
    for i in 0..43 {
        expressions.push(json!({
            "expression_id": format!("present/{i}"),
            "j_mean": 0.6381,
            "f_mean": 0.7019,
            "gt_present": true,
            "pred_present": i != 0,
        }));
    }
    for i in 0..66 {
        expressions.push(json!({
            "expression_id": format!("absent/{i}"),
            "j_mean": 1.0,
            "f_mean": 1.0,
            "gt_present": false,
            "pred_present": i < 7,
        }));
    }
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("scores.json");
    fs::write(&scores, json!({ "expressions": expressions }).to_string()).unwrap();
    let report = tmp.path().join("report.json");
    let o = refvos(&["eval", "--scores", p(&scores), "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let agg = &doc["aggregate"];
    let close = |k: &str, v: f64| (agg[k].as_f64().unwrap() - v).abs() <= 1e-3;
    assert!(close("jf", 0.6700));
    assert!(close("n_acc", 0.8939));
    assert!(close("t_acc", 0.9767));
    assert!(close("final", 0.8469), "{agg}");
    assert!(stdout(&o).contains("0.846895"), "{}", stdout(&o));
}
