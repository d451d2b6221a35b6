use std::path::Path;
use std::process::{Command, Output};

use windshare::boost::BoostModel;
use windshare::config::RunConfig;

fn windshare(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windshare"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "seed = 3\n[data]\nout_dir = {:?}\n[synth.cluster]\nn_farms = 3\nsteps = 1440\n\
         [features]\nlags = 4\nnwp_steps = 2\nhorizons = [4]\n[boost]\ntrees = 3\ndepth = 2\nbins = 8\n",
        dir.join("out")
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn show_config_prints_parseable_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&windshare(dir.path(), &["--show-config"]));
    assert_eq!(RunConfig::parse(&out).unwrap(), RunConfig::default());
    let seeded = stdout(&windshare(dir.path(), &["--show-config", "--seed", "9"]));
    assert_eq!(RunConfig::parse(&seeded).unwrap().seed, 9);
}

#[test]
fn train_then_predict_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let bundle: serde_json::Value = serde_json::from_str(&stdout(&windshare(dir.path(), &["-c", cfg, "train"]))).unwrap();

    let model_file = dir.path().join("out/model/model.pwxg");
    let bytes = std::fs::read(&model_file).unwrap();
    assert_eq!(BoostModel::load(&model_file).unwrap().to_bytes(), bytes);

    let pred: serde_json::Value = serde_json::from_str(&stdout(&windshare(dir.path(), &["-c", cfg, "predict"]))).unwrap();
    assert_eq!(pred["rmse"], bundle["test_rmse"]);
    assert_eq!(pred["mae"], bundle["test_mae"]);
    let csv = std::fs::read_to_string(dir.path().join("out/predictions.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("timestamp,prediction,actual"));
    assert_eq!(csv.lines().count() as u64, pred["rows"].as_u64().unwrap() + 1);
}

#[test]
fn select_and_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    stdout(&windshare(dir.path(), &["-c", cfg, "select", "--csv", "adj.csv"]));
    let sel: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/selection.json")).unwrap()).unwrap();
    let a = sel["adjacency"]["a"].as_array().unwrap();
    assert_eq!(a.len(), 3);
    for i in 0..3 {
        assert_eq!(a[i][i], 1.0);
        for j in 0..3 {
            assert_eq!(a[i][j], a[j][i]);
        }
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("adj.csv")).unwrap().lines().count(), 4);

    let table = stdout(&windshare(dir.path(), &["-c", cfg, "eval"]));
    assert!(table.contains("RMSE%") && table.contains("MAE%"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/eval.json")).unwrap()).unwrap();
    let h = &report["horizons"][0];
    assert!(h["rmse"].as_f64().unwrap() >= h["mae"].as_f64().unwrap());
}

#[test]
fn bench_over_processes_emits_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = stdout(&windshare(dir.path(), &["-c", cfg.to_str().unwrap(), "bench", "--parties", "2..3", "--repeats", "1", "--tcp"]));
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "parties,train_seconds,predict_seconds_per_sample,bytes_on_wire");
    assert_eq!(rows.len(), 3);
    let bytes: Vec<u64> = rows[1..].iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(bytes[1] > bytes[0]);
}

#[test]
fn errors_exit_with_category_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[boost]\neta = 5.0\n").unwrap();
    let o = windshare(dir.path(), &["-c", bad.to_str().unwrap(), "eval"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");

    let missing = dir.path().join("missing.toml");
    std::fs::write(&missing, "[[data.farms]]\nid = 1\npath = \"nope.csv\"\ncapacity = 10.0\n").unwrap();
    let o = windshare(dir.path(), &["-c", missing.to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(3));

    let o = windshare(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}
