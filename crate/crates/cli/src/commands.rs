use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use windshare::boost::{BoostModel, BoundaryStore};
use windshare::config::{FarmConfig, RunConfig, Transport};
use windshare::data::FarmSeries;
use windshare::metrics::{mae, rmse};
use windshare::party::{farm_ids, run_party, PartyReport};
use windshare::pipeline::{self, BenchRow, Experiment, FittedBoost, Method};

use crate::failure::{Failure, TRANSPORT};

type Result<T> = std::result::Result<T, Failure>;

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn out_path(cfg: &RunConfig, given: Option<PathBuf>, default: &str) -> PathBuf {
    given.unwrap_or_else(|| cfg.data.out_dir.join(default))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Failure::io(&path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
}

fn default_horizon(cfg: &RunConfig, given: Option<usize>) -> usize {
    given.unwrap_or(cfg.features.horizons[0])
}

/// Load the data and resolve the target farm.
fn series(cfg: &RunConfig) -> Result<(Vec<FarmSeries>, usize)> {
    let s = pipeline::load_series(cfg)?;
    let t = pipeline::target_index(&s, cfg.data.target)?;
    Ok((s, t))
}

#[derive(Serialize)]
struct IngestRow {
    id: u32,
    steps: usize,
    present: usize,
    start: i64,
    nwp_vars: usize,
    cached: PathBuf,
}

pub fn ingest(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    if cfg.data.farms.is_empty() {
        return Err(Failure::usage("no [[data.farms]] configured; nothing to ingest"));
    }
    let dir = out_path(cfg, out, "series");
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    let mut rows = Vec::new();
    for s in pipeline::load_series(cfg)? {
        let cached = dir.join(format!("farm_{}.csv", s.farm_id));
        s.write_csv(&cached)?;
        rows.push(IngestRow {
            id: s.farm_id,
            steps: s.len(),
            present: s.present.iter().filter(|&&p| p).count(),
            start: s.start,
            nwp_vars: s.nwp_vars,
            cached,
        });
    }
    println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let mut synthetic = cfg.clone();
    synthetic.data.farms.clear();
    let dir = out_path(cfg, out, "synth");
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    let mut farms = Vec::new();
    for s in pipeline::load_series(&synthetic)? {
        let path = dir.join(format!("farm_{}.csv", s.farm_id));
        s.write_csv(&path)?;
        farms.push(FarmConfig {
            id: s.farm_id,
            path,
            capacity: s.capacity,
        });
    }
    // a config that reads the files back
    let mut snippet = RunConfig::default();
    snippet.seed = cfg.seed;
    snippet.data.farms = farms;
    snippet.data.target = cfg.data.target;
    let toml = dir.join("farms.toml");
    write_text(&toml, &snippet.to_toml())?;
    println!("{}", toml.display());
    Ok(())
}

#[derive(Serialize)]
struct SelectReport<'a> {
    target: u32,
    participants: &'a [u32],
    farm_ids: &'a [u32],
    adjacency: &'a windshare::select::Adjacency,
}

pub fn select(cfg: &RunConfig, out: Option<PathBuf>, csv: Option<PathBuf>) -> Result<()> {
    let (s, target) = series(cfg)?;
    let exp = Experiment::from_config(cfg)?;
    // same history cut as training, so the report matches what `eval` uses
    let until = pipeline::prepare(&s, target, &exp).ok().map(|p| p.cut_timestamp());
    let sel = pipeline::select(&s, target, until, &cfg.selection)?;
    let report = SelectReport {
        target: s[target].farm_id,
        participants: &sel.participant_ids,
        farm_ids: &sel.farm_ids,
        adjacency: &sel.adjacency,
    };
    let path = out_path(cfg, out, "selection.json");
    write_json(&path, &report)?;
    if let Some(csv) = csv {
        let mut text = String::from("farm");
        for id in &sel.farm_ids {
            write!(text, ",{id}").unwrap();
        }
        text.push('\n');
        for (id, row) in sel.farm_ids.iter().zip(&sel.adjacency.a) {
            write!(text, "{id}").unwrap();
            for v in row {
                write!(text, ",{v}").unwrap();
            }
            text.push('\n');
        }
        write_text(&csv, &text)?;
    }
    println!("target {} participants {:?}", report.target, sel.participant_ids);
    Ok(())
}

/// Metadata saved next to the model and boundary files.
#[derive(Debug, Serialize, Deserialize)]
pub struct Bundle {
    pub target: u32,
    pub horizon: usize,
    /// Party (farm) ids in model order, active first.
    pub parties: Vec<u32>,
    pub train_seconds: f64,
    pub bytes_on_wire: u64,
    pub test_rmse: f64,
    pub test_mae: f64,
}

const MODEL_FILE: &str = "model.pwxg";
const BUNDLE_FILE: &str = "bundle.json";

fn store_file(id: u32) -> String {
    format!("store-{id}.pwxb")
}

/// Frames of `parties` (active first) for one horizon, split at the cut.
fn frames_for(cfg: &RunConfig, horizon: usize, parties: Option<&[u32]>) -> Result<(Experiment, pipeline::Prepared, Vec<usize>)> {
    let (s, target) = series(cfg)?;
    let mut exp = Experiment::from_config(cfg)?;
    exp.horizons = vec![horizon];
    let prep = pipeline::prepare(&s, target, &exp)?;
    let peers = match parties {
        Some(ids) => {
            if ids.first() != Some(&s[target].farm_id) {
                return Err(Failure::usage(format!("model was trained for target {:?}, config targets {}", ids.first(), s[target].farm_id)));
            }
            ids[1..]
                .iter()
                .map(|id| {
                    s.iter()
                        .position(|f| f.farm_id == *id)
                        .ok_or_else(|| Failure::usage(format!("model party {id} is not a configured farm")))
                })
                .collect::<Result<_>>()?
        }
        None => pipeline::select(&s, target, Some(prep.cut_timestamp()), &cfg.selection)?.participants,
    };
    Ok((exp, prep, peers))
}

pub fn train(cfg: &RunConfig, horizon: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let horizon = default_horizon(cfg, horizon);
    let (exp, prep, peers) = frames_for(cfg, horizon, None)?;
    let (train, test) = prep.split(&peers, true);
    let (ytr, yte) = prep.targets(horizon)?;
    let fit = pipeline::fit_boost(&train, &ytr, &exp.boost, &exp)?;
    let pred = pipeline::predict_boost(&fit, &test, &exp)?;
    let dir = out_path(cfg, out, "model");
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    fit.model.save(&dir.join(MODEL_FILE))?;
    for st in &fit.stores {
        st.save(&dir.join(store_file(st.party.0)))?;
    }
    let bundle = Bundle {
        target: train[0].farm_id,
        horizon,
        parties: fit.model.parties.iter().map(|p| p.0).collect(),
        train_seconds: fit.train_seconds,
        bytes_on_wire: fit.bytes,
        test_rmse: rmse(&yte, &pred)?,
        test_mae: mae(&yte, &pred)?,
    };
    write_json(&dir.join(BUNDLE_FILE), &bundle)?;
    println!("{}", serde_json::to_string_pretty(&bundle).expect("bundle serializes"));
    Ok(())
}

pub fn predict(cfg: &RunConfig, model: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let dir = model.unwrap_or_else(|| cfg.data.out_dir.join("model"));
    let text = fs::read_to_string(dir.join(BUNDLE_FILE)).map_err(|e| Failure::io(&dir.join(BUNDLE_FILE).display().to_string(), e))?;
    let bundle: Bundle = serde_json::from_str(&text).map_err(|e| Failure::from(windshare::Error::Model(format!("{BUNDLE_FILE}: {e}"))))?;
    let m = BoostModel::load(&dir.join(MODEL_FILE))?;
    let stores = bundle
        .parties
        .iter()
        .map(|&id| BoundaryStore::load(&dir.join(store_file(id))))
        .collect::<windshare::Result<Vec<_>>>()?;
    let (exp, prep, peers) = frames_for(cfg, bundle.horizon, Some(&bundle.parties))?;
    let (_, test) = prep.split(&peers, true);
    let (_, yte) = prep.targets(bundle.horizon)?;
    let fit = FittedBoost {
        model: m,
        stores,
        train_seconds: 0.0,
        bytes: 0,
        phases: Vec::new(),
    };
    let pred = pipeline::predict_boost(&fit, &test, &exp)?;
    let mut csv = String::from("timestamp,prediction,actual\n");
    for ((t, p), a) in test[0].sample_index.iter().zip(&pred).zip(&yte) {
        writeln!(csv, "{t},{p},{a}").unwrap();
    }
    let path = out_path(cfg, out, "predictions.csv");
    write_text(&path, &csv)?;
    println!(
        "{}",
        serde_json::json!({
            "rows": pred.len(),
            "rmse": rmse(&yte, &pred)?,
            "mae": mae(&yte, &pred)?,
            "predictions": path,
        })
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let (s, target) = series(cfg)?;
    let exp = Experiment::from_config(cfg)?;
    let report = pipeline::evaluate(&s, target, &exp)?;
    write_json(&out_path(cfg, out, "eval.json"), &report)?;
    println!("target {} with {} parties {:?}", report.target, report.parties, report.participants);
    println!("{:>8} {:>9} {:>9} {:>10} {:>10} {:>12}", "horizon", "RMSE%", "MAE%", "train_s", "predict_s", "bytes");
    for h in &report.horizons {
        println!(
            "{:>7}h {:>9.3} {:>9.3} {:>10.3} {:>10.3} {:>12}",
            h.horizon as f64 / 4.0,
            h.rmse,
            h.mae,
            h.train_seconds,
            h.predict_seconds,
            h.bytes_on_wire
        );
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig, names: &[String], out: Option<PathBuf>) -> Result<()> {
    let methods: Vec<Method> = if names.is_empty() {
        Method::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| {
                Method::ALL
                    .into_iter()
                    .find(|m| m.name().eq_ignore_ascii_case(n))
                    .ok_or_else(|| Failure::usage(format!("unknown method {n}")))
            })
            .collect::<Result<_>>()?
    };
    let (s, target) = series(cfg)?;
    let exp = Experiment::from_config(cfg)?;
    let c = pipeline::compare(&s, target, &methods, &exp)?;
    write_json(&out_path(cfg, out, "compare.json"), &c)?;
    println!("target {} participants {:?}", c.target, c.participants);
    print!("{}", c.table());
    Ok(())
}

/// `a..b` inclusive, or `a,b,c`.
pub fn parse_counts(text: &str) -> Result<Vec<usize>> {
    let bad = || Failure::usage(format!("bad party counts {text:?}; use a..b or a,b,c"));
    let counts: Vec<usize> = match text.split_once("..") {
        Some((a, b)) => {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            (a..=b).collect()
        }
        None => text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?,
    };
    if counts.is_empty() || counts.contains(&0) {
        return Err(bad());
    }
    Ok(counts)
}

pub fn bench(cfg: &RunConfig, counts: &str, repeats: usize, horizon: Option<usize>, tcp: bool, out: Option<PathBuf>) -> Result<()> {
    let counts = parse_counts(counts)?;
    let horizon = default_horizon(cfg, horizon);
    let rows = if tcp {
        bench_tcp(cfg, &counts, repeats, horizon)?
    } else {
        let s = pipeline::load_series(cfg)?;
        pipeline::bench_parties(&s, &counts, repeats, horizon, &Experiment::from_config(cfg)?)?
    };
    write_json(&out_path(cfg, out, "bench.json"), &rows)?;
    println!("parties,train_seconds,predict_seconds_per_sample,bytes_on_wire");
    for r in &rows {
        println!("{},{:.6},{:.9},{}", r.parties, r.train_seconds, r.predict_seconds_per_sample, r.bytes_on_wire);
    }
    Ok(())
}

fn free_port() -> Result<u16> {
    let l = TcpListener::bind("127.0.0.1:0").map_err(|e| Failure::io("reserve port", e))?;
    Ok(l.local_addr().map_err(|e| Failure::io("reserve port", e))?.port())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Same rows as the in-process bench, with every party in its own child
/// process. The last farm is the active party and the first `m - 1` join.
fn bench_tcp(cfg: &RunConfig, counts: &[usize], repeats: usize, horizon: usize) -> Result<Vec<BenchRow>> {
    let farms = farm_ids(cfg)?;
    if counts.iter().any(|&m| m > farms.len()) {
        return Err(Failure::usage(format!("party counts {counts:?} need at most {} farms", farms.len())));
    }
    let exe = std::env::current_exe().map_err(|e| Failure::io("locate executable", e))?;
    let dir = cfg.data.out_dir.join("bench-tcp");
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    let target = *farms.last().expect("counts checked against farms");
    let mut rows = Vec::new();
    for &m in counts {
        let mut train = Vec::new();
        let mut predict = Vec::new();
        let mut bytes = 0;
        for r in 0..repeats.max(1) {
            bytes = 0;
            let mut c = cfg.clone();
            c.topology.transport = Transport::Tcp;
            c.data.target = Some(target);
            c.features.horizons = vec![horizon];
            let mut chosen: Vec<u32> = farms[..m - 1].to_vec();
            chosen.push(target);
            c.selection.participants = Some(chosen);
            let topo = windshare::party::party_topology(&c, &farms)?;
            c.topology.addresses.clear();
            for p in topo.all() {
                c.topology.addresses.insert(p.0.to_string(), format!("127.0.0.1:{}", free_port()?));
            }
            let path = dir.join(format!("m{m}-r{r}.toml"));
            write_text(&path, &c.to_toml())?;
            let children = topo
                .all()
                .into_iter()
                .map(|p| {
                    Command::new(&exe)
                        .args(["--config".as_ref(), path.as_os_str()])
                        .args(["party", "--id", &p.0.to_string(), "--horizon", &horizon.to_string()])
                        .stdout(Stdio::piped())
                        .stderr(Stdio::piped())
                        .spawn()
                        .map(|child| (p, child))
                        .map_err(|e| Failure::io("spawn party", e))
                })
                .collect::<Result<Vec<_>>>()?;
            for (p, child) in children {
                let output = child.wait_with_output().map_err(|e| Failure::io("wait for party", e))?;
                if !output.status.success() {
                    return Err(Failure {
                        code: TRANSPORT,
                        kind: "party_failed".into(),
                        message: format!("party {} exited with {}: {}", p.0, output.status, String::from_utf8_lossy(&output.stderr).trim()),
                    });
                }
                let rep: serde_json::Value = serde_json::from_slice(&output.stdout).map_err(|e| Failure::usage(format!("party report: {e}")))?;
                // each process counts what it sent
                bytes += rep["bytes_on_wire"].as_u64().unwrap_or(0);
                if p.0 == target {
                    train.push(rep["train_seconds"].as_f64().unwrap_or(f64::NAN));
                    let per = rep["predict_seconds"].as_f64().unwrap_or(f64::NAN) / rep["test_rows"].as_f64().unwrap_or(f64::NAN);
                    predict.push(per);
                }
            }
        }
        rows.push(BenchRow {
            parties: m,
            train_seconds: median(train.clone()),
            predict_seconds_per_sample: median(predict),
            bytes_on_wire: bytes,
            runs: train,
        });
    }
    Ok(rows)
}

pub fn party(cfg: &RunConfig, id: u32, horizon: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let horizon = default_horizon(cfg, horizon);
    let report: PartyReport = run_party(cfg, id, horizon)?;
    if let (Some(path), Some(rows)) = (out, &report.predictions) {
        let mut csv = String::from("timestamp,prediction,actual\n");
        for (t, p, a) in rows {
            writeln!(csv, "{t},{p},{a}").unwrap();
        }
        write_text(&path, &csv)?;
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_parse() {
        assert_eq!(parse_counts("2..6").unwrap(), vec![2, 3, 4, 5, 6]);
        assert_eq!(parse_counts("2, 4").unwrap(), vec![2, 4]);
        assert!(parse_counts("0..2").is_err());
        assert!(parse_counts("x").is_err());
        assert!(parse_counts("5..2").is_err());
    }
}
