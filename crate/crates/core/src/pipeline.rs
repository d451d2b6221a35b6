//! End-to-end experiments: feature preparation, participant selection,
//! baseline comparison, evaluation and the scalability harness.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::boost::{oracle_train, predict_federated, train_federated, BoostModel, BoostParams, BoundaryStore, FederationOptions, ProtocolOptions};
use crate::config::{EngineKind, RunConfig, SelectionConfig, Transport};
use crate::data::{align, build_features, synth_cluster, synth_mixed_cluster, ClusterSpec, FarmSeries, FeatureFrame, FeatureSpec, LabelFrame, STEP_SECONDS};
use crate::error::{Error, Result};
use crate::lasso::{Lasso, LassoParams};
use crate::metrics::{mae, rmse};
use crate::net::{PartyId, PhaseTiming, TransportMode, DEFAULT_RECV_TIMEOUT};
use crate::ring::FixedCodec;
use crate::select::{adjacency, sample_windows, select_participants, Adjacency, KernelSpec, SampleSet};

/// How the vertical models are trained.
#[derive(Clone, Debug)]
pub enum Engine {
    /// The full multi-party protocol, every party on its own thread.
    Secure(FederationOptions),
    /// Co-located plaintext training with the same quantized gradients;
    /// produces the same model as `Secure`.
    Plaintext,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub features: FeatureSpec,
    pub horizons: Vec<usize>,
    pub train_fraction: f64,
    pub boost: BoostParams,
    pub lasso: LassoParams,
    pub selection: SelectionConfig,
    pub protocol: ProtocolOptions,
    pub engine: Engine,
}

impl Experiment {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let protocol = ProtocolOptions {
            codec: FixedCodec::new(cfg.protocol.frac_bits)?,
            seed: cfg.seed,
            mode: cfg.protocol.aggregation,
        };
        let transport = match cfg.topology.transport {
            Transport::InProcess => TransportMode::InProcess,
            Transport::TcpLoopback => TransportMode::TcpLoopback,
            Transport::Tcp => {
                return Err(Error::Config("process-per-party runs go through the `party` subcommand".into()));
            }
        };
        Ok(Experiment {
            features: cfg.features.spec(),
            horizons: cfg.features.horizons.clone(),
            train_fraction: cfg.data.train_fraction,
            boost: cfg.boost,
            lasso: cfg.lasso,
            selection: cfg.selection.clone(),
            protocol,
            engine: match cfg.protocol.engine {
                EngineKind::Secure => Engine::Secure(FederationOptions {
                    protocol,
                    transport,
                    audit: cfg.protocol.audit,
                    recv_timeout: cfg.topology.recv_timeout_secs.map_or(DEFAULT_RECV_TIMEOUT, Duration::from_secs),
                }),
                EngineKind::Plaintext => Engine::Plaintext,
            },
        })
    }
}

/// Load the farms named in the config, or generate the synthetic cluster.
pub fn load_series(cfg: &RunConfig) -> Result<Vec<FarmSeries>> {
    if cfg.data.farms.is_empty() {
        let spec = ClusterSpec {
            seed: cfg.seed,
            ..cfg.synth.cluster.clone()
        };
        return if cfg.synth.independent > 0 {
            Ok(synth_mixed_cluster(&spec, cfg.synth.independent)?.farms)
        } else {
            synth_cluster(&spec)
        };
    }
    cfg.data
        .farms
        .iter()
        .map(|f| crate::data::ingest_csv(&f.path, f.id, f.capacity))
        .collect()
}

/// Index of the configured target farm; default the last one.
pub fn target_index(series: &[FarmSeries], target: Option<u32>) -> Result<usize> {
    match target {
        None if !series.is_empty() => Ok(series.len() - 1),
        None => Err(Error::EmptySet),
        Some(id) => series
            .iter()
            .position(|s| s.farm_id == id)
            .ok_or_else(|| Error::Config(format!("target farm {id} not among the loaded farms"))),
    }
}

/// Aligned feature frames of every farm plus the target's labels, split
/// chronologically into training and test rows.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub farm_ids: Vec<u32>,
    pub frames: Vec<FeatureFrame>,
    pub labels: LabelFrame,
    pub target: usize,
    /// First test row.
    pub cut: usize,
    pub lags: usize,
}

pub fn prepare(series: &[FarmSeries], target: usize, exp: &Experiment) -> Result<Prepared> {
    if target >= series.len() {
        return Err(Error::Param(format!("target {target} out of {} farms", series.len())));
    }
    let mut frames = Vec::with_capacity(series.len());
    let mut labels = None;
    for (k, s) in series.iter().enumerate() {
        let (x, y) = build_features(s, &exp.features, &exp.horizons)?;
        if k == target {
            labels = Some(y);
        }
        frames.push(x);
    }
    let frames = align(&frames)?;
    let labels = labels.expect("target in range").select(&frames[0].sample_index)?;
    let rows = frames[0].rows;
    let cut = (rows as f64 * exp.train_fraction).round() as usize;
    if cut == 0 || cut >= rows {
        return Err(Error::Length(format!("{rows} aligned rows leave an empty train or test split")));
    }
    Ok(Prepared {
        farm_ids: series.iter().map(|s| s.farm_id).collect(),
        frames,
        labels,
        target,
        cut,
        lags: exp.features.lags,
    })
}

fn power_only(f: &FeatureFrame, lags: usize) -> FeatureFrame {
    let mut x = Vec::with_capacity(f.rows * lags);
    for i in 0..f.rows {
        x.extend_from_slice(&f.row(i)[..lags]);
    }
    FeatureFrame {
        farm_id: f.farm_id,
        rows: f.rows,
        cols: lags,
        x,
        names: f.names[..lags].to_vec(),
        sample_index: f.sample_index.clone(),
    }
}

impl Prepared {
    /// Train and test frames for `farms` (indices into the series), with
    /// the target first.
    pub fn split(&self, farms: &[usize], nwp: bool) -> (Vec<FeatureFrame>, Vec<FeatureFrame>) {
        let rows = self.frames[0].rows;
        std::iter::once(self.target)
            .chain(farms.iter().copied().filter(|&k| k != self.target))
            .map(|k| {
                let f = if nwp { self.frames[k].clone() } else { power_only(&self.frames[k], self.lags) };
                (f.rows_range(0, self.cut), f.rows_range(self.cut, rows))
            })
            .unzip()
    }

    pub fn targets(&self, horizon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let y = self.labels.horizon(horizon)?;
        Ok((y[..self.cut].to_vec(), y[self.cut..].to_vec()))
    }

    /// Timestamp of the first test row: history after it is off limits to
    /// selection.
    pub fn cut_timestamp(&self) -> i64 {
        self.frames[0].sample_index[self.cut]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Selection {
    pub adjacency: Adjacency,
    /// Farm ids in series order.
    pub farm_ids: Vec<u32>,
    /// Selected peers of the target, as series indices.
    pub participants: Vec<usize>,
    pub participant_ids: Vec<u32>,
}

/// MMD adjacency over the farms' recent history before `until`, and the
/// target's selected peers.
pub fn select(series: &[FarmSeries], target: usize, until: Option<i64>, cfg: &SelectionConfig) -> Result<Selection> {
    let sets: Vec<SampleSet> = series
        .iter()
        .map(|s| {
            let end = until.map_or(s.len(), |ts| (((ts - s.start) / STEP_SECONDS).max(0) as usize).min(s.len()));
            sample_windows(&s.slice(0, end), &cfg.window)
        })
        .collect::<Result<_>>()?;
    let k = KernelSpec::median_heuristic(&sets, &cfg.multipliers)?;
    let adj = adjacency(&sets, cfg.beta, &k)?;
    let participants = match &cfg.participants {
        Some(ids) => ids
            .iter()
            .map(|id| {
                series
                    .iter()
                    .position(|s| s.farm_id == *id)
                    .ok_or_else(|| Error::Config(format!("participant {id} not among the loaded farms")))
            })
            .filter(|r| !matches!(r, Ok(k) if *k == target))
            .collect::<Result<Vec<_>>>()?,
        None => select_participants(&adj, target)?,
    };
    Ok(Selection {
        participant_ids: participants.iter().map(|&k| series[k].farm_id).collect(),
        farm_ids: series.iter().map(|s| s.farm_id).collect(),
        adjacency: adj,
        participants,
    })
}

/// A trained vertical model with every party's thresholds.
#[derive(Clone, Debug)]
pub struct FittedBoost {
    pub model: BoostModel,
    pub stores: Vec<BoundaryStore>,
    pub train_seconds: f64,
    pub bytes: u64,
    pub phases: Vec<PhaseTiming>,
}

pub fn fit_boost(train: &[FeatureFrame], y: &[f64], params: &BoostParams, exp: &Experiment) -> Result<FittedBoost> {
    let refs: Vec<&FeatureFrame> = train.iter().collect();
    let started = Instant::now();
    match &exp.engine {
        Engine::Secure(opts) => {
            let run = train_federated(&refs, y, params, opts)?;
            Ok(FittedBoost {
                model: run.output.model,
                stores: run.output.stores,
                train_seconds: started.elapsed().as_secs_f64(),
                bytes: run.metrics.total_bytes(),
                phases: run.metrics.phases,
            })
        }
        Engine::Plaintext => {
            let parties: Vec<PartyId> = train.iter().map(|f| PartyId(f.farm_id)).collect();
            let t = oracle_train(&refs, &parties, y, params, Some(&exp.protocol.codec))?;
            Ok(FittedBoost {
                model: t.model,
                stores: t.stores,
                train_seconds: started.elapsed().as_secs_f64(),
                bytes: 0,
                phases: Vec::new(),
            })
        }
    }
}

pub fn predict_boost(fit: &FittedBoost, test: &[FeatureFrame], exp: &Experiment) -> Result<Vec<f64>> {
    let refs: Vec<&FeatureFrame> = test.iter().collect();
    match &exp.engine {
        Engine::Secure(opts) => Ok(predict_federated(&fit.model, &fit.stores, &refs, opts)?.output),
        Engine::Plaintext => fit.model.predict(&refs, &fit.stores),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Persistence,
    LocalXgbWoNwp,
    LocalXgb,
    LassoWoNwp,
    Lasso,
    PwXgbWoMmd,
    PwXgb,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Persistence,
        Method::LocalXgbWoNwp,
        Method::LocalXgb,
        Method::LassoWoNwp,
        Method::Lasso,
        Method::PwXgbWoMmd,
        Method::PwXgb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Persistence => "Persistence",
            Method::LocalXgbWoNwp => "Local_XGBoost_wo_nwp",
            Method::LocalXgb => "Local_XGBoost",
            Method::LassoWoNwp => "Lasso_wo_nwp",
            Method::Lasso => "Lasso",
            Method::PwXgbWoMmd => "pwXGBoost_wo_mmd",
            Method::PwXgb => "pwXGBoost",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Score {
    pub method: String,
    pub horizon: usize,
    pub rmse: f64,
    pub mae: f64,
    pub parties: usize,
}

/// Test-set predictions of `method` at `horizon`. `selected` are the MMD
/// peers of the target; the no-selection variant uses every farm.
pub fn run_method(prep: &Prepared, method: Method, selected: &[usize], horizon: usize, exp: &Experiment) -> Result<(Vec<f64>, usize)> {
    let (ytr, _) = prep.targets(horizon)?;
    let all: Vec<usize> = (0..prep.frames.len()).collect();
    let boost = |farms: &[usize], nwp: bool| -> Result<(Vec<f64>, usize)> {
        let (train, test) = prep.split(farms, nwp);
        let fit = fit_boost(&train, &ytr, &exp.boost, exp)?;
        Ok((predict_boost(&fit, &test, exp)?, train.len()))
    };
    let linear = |nwp: bool| -> Result<(Vec<f64>, usize)> {
        let (train, test) = prep.split(selected, nwp);
        let m = Lasso::fit(&FeatureFrame::hstack(&train)?, &ytr, &exp.lasso)?;
        Ok((m.predict(&FeatureFrame::hstack(&test)?)?, train.len()))
    };
    match method {
        Method::Persistence => {
            let f = &prep.frames[prep.target];
            Ok(((prep.cut..f.rows).map(|i| f.at(i, prep.lags - 1)).collect(), 1))
        }
        Method::LocalXgbWoNwp => boost(&[], false),
        Method::LocalXgb => boost(&[], true),
        Method::LassoWoNwp => linear(false),
        Method::Lasso => linear(true),
        Method::PwXgbWoMmd => boost(&all, true),
        Method::PwXgb => boost(selected, true),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub target: u32,
    pub participants: Vec<u32>,
    pub scores: Vec<Score>,
}

impl Comparison {
    pub fn get(&self, method: Method, horizon: usize) -> Option<&Score> {
        self.scores.iter().find(|s| s.method == method.name() && s.horizon == horizon)
    }

    /// Methods as rows, horizons as columns, RMSE/MAE in percent.
    pub fn table(&self) -> String {
        let mut horizons: Vec<usize> = self.scores.iter().map(|s| s.horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();
        let mut out = format!("{:<22}", "model");
        for h in &horizons {
            out += &format!(" {:>16}", format!("{}h RMSE/MAE", *h as f64 / 4.0));
        }
        out.push('\n');
        for m in Method::ALL {
            if !self.scores.iter().any(|s| s.method == m.name()) {
                continue;
            }
            out += &format!("{:<22}", m.name());
            for &h in &horizons {
                match self.get(m, h) {
                    Some(s) => out += &format!(" {:>16}", format!("{:.3}/{:.3}", s.rmse, s.mae)),
                    None => out += &format!(" {:>16}", "-"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn compare(series: &[FarmSeries], target: usize, methods: &[Method], exp: &Experiment) -> Result<Comparison> {
    let prep = prepare(series, target, exp)?;
    let sel = select(series, target, Some(prep.cut_timestamp()), &exp.selection)?;
    let mut scores = Vec::new();
    for &h in &exp.horizons {
        let (_, yte) = prep.targets(h)?;
        for &m in methods {
            let (pred, parties) = run_method(&prep, m, &sel.participants, h, exp)?;
            scores.push(Score {
                method: m.name().to_string(),
                horizon: h,
                rmse: rmse(&yte, &pred)?,
                mae: mae(&yte, &pred)?,
                parties,
            });
        }
    }
    Ok(Comparison {
        target: series[target].farm_id,
        participants: sel.participant_ids,
        scores,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HorizonScore {
    pub horizon: usize,
    pub rmse: f64,
    pub mae: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
    pub bytes_on_wire: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub target: u32,
    pub participants: Vec<u32>,
    pub parties: usize,
    pub horizons: Vec<HorizonScore>,
    pub phases: Vec<PhaseTiming>,
}

/// Train and score the vertical model for every horizon.
pub fn evaluate(series: &[FarmSeries], target: usize, exp: &Experiment) -> Result<EvalReport> {
    let prep = prepare(series, target, exp)?;
    let sel = select(series, target, Some(prep.cut_timestamp()), &exp.selection)?;
    let (train, test) = prep.split(&sel.participants, true);
    let mut horizons = Vec::new();
    let mut phases = Vec::new();
    for &h in &exp.horizons {
        let (ytr, yte) = prep.targets(h)?;
        let fit = fit_boost(&train, &ytr, &exp.boost, exp)?;
        let started = Instant::now();
        let pred = predict_boost(&fit, &test, exp)?;
        horizons.push(HorizonScore {
            horizon: h,
            rmse: rmse(&yte, &pred)?,
            mae: mae(&yte, &pred)?,
            train_seconds: fit.train_seconds,
            predict_seconds: started.elapsed().as_secs_f64(),
            bytes_on_wire: fit.bytes,
        });
        phases.extend(fit.phases);
    }
    Ok(EvalReport {
        target: series[target].farm_id,
        participants: sel.participant_ids,
        parties: train.len(),
        horizons,
        phases,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub parties: usize,
    /// Median over repeats.
    pub train_seconds: f64,
    pub predict_seconds_per_sample: f64,
    pub bytes_on_wire: u64,
    pub runs: Vec<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Secure training and prediction time over party counts on fixed data:
/// the cluster's last farm is the active party and the first `m - 1`
/// farms join it.
pub fn bench_parties(series: &[FarmSeries], counts: &[usize], repeats: usize, horizon: usize, exp: &Experiment) -> Result<Vec<BenchRow>> {
    let max = counts.iter().copied().max().ok_or(Error::EmptySet)?;
    if max > series.len() || counts.contains(&0) {
        return Err(Error::Param(format!("party counts {counts:?} need 1..={} farms", series.len())));
    }
    let exp = Experiment {
        horizons: vec![horizon],
        ..exp.clone()
    };
    let target = series.len() - 1;
    let prep = prepare(series, target, &exp)?;
    let (ytr, _) = prep.targets(horizon)?;
    let mut rows = Vec::new();
    for &m in counts {
        let peers: Vec<usize> = (0..m - 1).collect();
        let (train, test) = prep.split(&peers, true);
        let mut runs = Vec::with_capacity(repeats);
        let mut preds = Vec::with_capacity(repeats);
        let mut bytes = 0;
        for _ in 0..repeats.max(1) {
            let fit = fit_boost(&train, &ytr, &exp.boost, &exp)?;
            let started = Instant::now();
            predict_boost(&fit, &test, &exp)?;
            preds.push(started.elapsed().as_secs_f64() / test[0].rows as f64);
            runs.push(fit.train_seconds);
            bytes = fit.bytes;
        }
        rows.push(BenchRow {
            parties: m,
            train_seconds: median(&mut runs.clone()),
            predict_seconds_per_sample: median(&mut preds),
            bytes_on_wire: bytes,
            runs,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferenceRow {
    pub trees: usize,
    pub depth: usize,
    pub seconds_per_sample: f64,
}

/// Secure prediction time per sample as trees and depth grow. Models are
/// fitted co-located (the protocol yields the same ones); only prediction
/// runs over the mesh.
pub fn bench_inference(
    series: &[FarmSeries],
    shapes: &[(usize, usize)],
    repeats: usize,
    parties: usize,
    horizon: usize,
    exp: &Experiment,
) -> Result<Vec<InferenceRow>> {
    let opts = match &exp.engine {
        Engine::Secure(o) => o.clone(),
        Engine::Plaintext => FederationOptions::default(),
    };
    let exp = Experiment {
        horizons: vec![horizon],
        engine: Engine::Plaintext,
        ..exp.clone()
    };
    let target = series.len() - 1;
    let prep = prepare(series, target, &exp)?;
    let (ytr, _) = prep.targets(horizon)?;
    let peers: Vec<usize> = (0..parties.saturating_sub(1).min(series.len() - 1)).collect();
    let (train, test) = prep.split(&peers, true);
    let refs: Vec<&FeatureFrame> = test.iter().collect();
    let mut out = Vec::new();
    for &(trees, depth) in shapes {
        let params = BoostParams { trees, depth, ..exp.boost };
        let fit = fit_boost(&train, &ytr, &params, &exp)?;
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats.max(1) {
            let started = Instant::now();
            predict_federated(&fit.model, &fit.stores, &refs, &opts)?;
            times.push(started.elapsed().as_secs_f64() / test[0].rows as f64);
        }
        out.push(InferenceRow {
            trees,
            depth,
            seconds_per_sample: median(&mut times),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp() -> Experiment {
        Experiment {
            features: FeatureSpec { lags: 4, nwp_steps: 4 },
            horizons: vec![4],
            train_fraction: 0.75,
            boost: BoostParams {
                trees: 5,
                bins: 8,
                ..BoostParams::default()
            },
            lasso: LassoParams::default(),
            selection: SelectionConfig::default(),
            protocol: ProtocolOptions::default(),
            engine: Engine::Plaintext,
        }
    }

    fn farms() -> Vec<FarmSeries> {
        synth_cluster(&ClusterSpec {
            n_farms: 3,
            steps: 20 * 96,
            seed: 5,
            ..ClusterSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn split_puts_target_first_and_drops_nwp() {
        let s = farms();
        let p = prepare(&s, 2, &exp()).unwrap();
        let (train, test) = p.split(&[0, 2], false);
        assert_eq!(train.len(), 2);
        assert_eq!(train[0].farm_id, 3);
        assert_eq!(train[1].cols, 4);
        assert_eq!(train[0].rows + test[0].rows, p.frames[0].rows);
        assert!(train[0].sample_index.last() < test[0].sample_index.first());
    }

    #[test]
    fn persistence_reads_the_latest_lag() {
        let s = farms();
        let p = prepare(&s, 0, &exp()).unwrap();
        let (pred, _) = run_method(&p, Method::Persistence, &[], 4, &exp()).unwrap();
        let f = &p.frames[0];
        assert_eq!(pred[0], f.at(p.cut, 3));
        assert_eq!(f.names[3], "p[t]");
    }

    #[test]
    fn secure_and_plaintext_engines_agree() {
        let s = farms();
        let e = exp();
        let secure = Experiment {
            engine: Engine::Secure(FederationOptions::default()),
            ..e.clone()
        };
        let p = prepare(&s, 2, &e).unwrap();
        let a = run_method(&p, Method::PwXgb, &[0, 1], 4, &e).unwrap();
        let b = run_method(&p, Method::PwXgb, &[0, 1], 4, &secure).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_is_reproducible() {
        let s = farms();
        let methods = [Method::Persistence, Method::LocalXgb, Method::Lasso];
        let a = compare(&s, 2, &methods, &exp()).unwrap();
        let b = compare(&s, 2, &methods, &exp()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.table().contains("Local_XGBoost"));
    }
}
