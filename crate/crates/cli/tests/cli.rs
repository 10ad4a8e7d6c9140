use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn racer(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_racer")).args(args).current_dir(cwd).output().expect("run racer")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = racer(args, cwd);
    assert!(
        out.status.success(),
        "racer {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_two_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(&["gen", "--kind", "oscillatory", "--seed", "7", "--duration", "60", "--noise", "0.1", "-o", out], d);
    }
    let mut names: Vec<_> = fs::read_dir(d.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "trajectory.csv"]);
    for f in ["manifest.json", "trajectory.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap());
    }
    let m = json(&d.join("a/manifest.json"));
    assert_eq!(m["command"], "gen");
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.json"), r#"{"seed": 3, "gen": {"duration": 60.0, "kind": "dips"}}"#).unwrap();
    ok(&["--config", "c.json", "gen", "--duration", "90", "-o", "g"], d);
    let m = json(&d.join("g/manifest.json"));
    assert_eq!(m["config"]["duration"], 90.0);
    assert_eq!(m["config"]["kind"], "dips");
    assert_eq!(m["config"]["seed"], 3);
    let rows = fs::read_to_string(d.join("g/trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 901);
}

#[test]
fn validation_failures_exit_with_1_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [(&[&str], &str); 5] = [
        (&["gen", "--kind", "zigzag", "-o", "x"], "kind"),
        (&["gen", "--params", "mid-gap", "-o", "x"], "params"),
        (&["calibrate", "--data", "missing.csv", "-o", "x"], "data"),
        (&["train", "--data", "missing.csv", "--model", "lstm"], "model"),
        (&["--config", "nope.json", "gen"], "config"),
    ];
    for (args, field) in cases {
        let out = racer(args, d);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{args:?}: {err}");
    }
    assert_eq!(racer(&["no-such-command"], d).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--duration", "60", "-o", "data"], d);
    ok(
        &["train", "--data", "data/trajectory.csv", "--model", "nn", "--epochs", "1", "--lstm-layers", "1",
          "--lstm-hidden", "4", "--seq-head", "4", "--phy-hidden", "4", "-o", "nn"],
        d,
    );
    let params = d.join("nn/model/model.bin");
    let mut bytes = fs::read(&params).unwrap();
    bytes[0] ^= 1;
    fs::write(&params, bytes).unwrap();
    let out = racer(&["simulate", "--data", "data/trajectory.csv", "--checkpoint", "nn/model", "-o", "sim"], d);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_tabulates_three_metrics_for_four_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--duration", "120", "--noise", "0.05", "--seed", "2", "-o", "data"], d);
    ok(&["calibrate", "--data", "data/trajectory.csv", "-o", "cal"], d);
    let small = ["--epochs", "2", "--lstm-layers", "1", "--lstm-hidden", "6", "--seq-head", "6", "--phy-hidden", "6"];
    for model in ["nn", "pinn", "racer"] {
        let mut args = vec!["train", "--data", "data/trajectory.csv", "--model", model, "--calibration", "cal/calibration.json", "-o", model];
        args.extend(small);
        ok(&args, d);
        ok(&["simulate", "--data", &format!("{model}/split/test.csv"), "--checkpoint", &format!("{model}/model"), "-o", &format!("{model}_sim")], d);
    }
    ok(&["simulate", "--data", "racer/split/test.csv", "--calibration", "cal/calibration.json", "-o", "ovrv_sim"], d);
    ok(
        &["report", "--sim", "ovrv=ovrv_sim", "--sim", "nn=nn_sim", "--sim", "pinn=pinn_sim", "--sim", "racer=racer_sim", "-o", "rep"],
        d,
    );
    let md = fs::read_to_string(d.join("rep/report.md")).unwrap();
    let table: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
    assert_eq!(table[0], "| Metric | ovrv | nn | pinn | racer |");
    assert_eq!(table.len(), 2 + 3);
    assert!(table[2..].iter().all(|l| l.matches('|').count() == 6));
    let csv = fs::read_to_string(d.join("rep/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    assert_eq!(json(&d.join("pinn/train.json"))["alpha"], 0.5);
}

#[test]
fn desk_pipeline_yields_a_compliant_racer_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = desk_config();
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "gen", "-o", "data"], d);
    ok(&["--config", cfg, "calibrate", "--data", "data/trajectory.csv", "-o", "cal"], d);
    ok(&["--config", cfg, "train", "--data", "data/trajectory.csv", "-o", "racer"], d);
    ok(&["--config", cfg, "simulate", "--data", "racer/split/test.csv", "--checkpoint", "racer/model", "-o", "sim"], d);
    ok(&["--config", cfg, "audit", "--data", "racer/split/test.csv", "--checkpoint", "racer/model", "-o", "audit"], d);

    let audit = json(&d.join("audit/audit.json"));
    assert!(audit["samples"].as_u64().unwrap() > 0);
    for c in ["speed", "spacing", "relative_speed", "any"] {
        assert_eq!(audit[c]["count"], 0, "{c}");
    }
    let sim = json(&d.join("sim/rollout.json"));
    assert_eq!(sim["crashed"], false);
    assert!(sim["rmse"]["spacing"].as_f64().unwrap() < 2.0);
    let train = json(&d.join("racer/train.json"));
    assert_eq!(train["kind"], "racer");
}
