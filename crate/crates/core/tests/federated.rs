use std::time::Duration;

use windshare::boost::{oracle_train, predict_federated, train_federated, AggregationMode, BoostParams, FederationOptions, ProtocolOptions};
use windshare::data::{align, build_features, synth_cluster, ClusterSpec, FeatureFrame, FeatureSpec};
use windshare::net::{FrameKind, PartyId, TransportMode};
use windshare::{Error, FixedCodec};

fn cluster(n_farms: usize, steps: usize, seed: u64) -> (Vec<FeatureFrame>, Vec<f64>) {
    let farms = synth_cluster(&ClusterSpec {
        n_farms,
        steps,
        seed,
        ..ClusterSpec::default()
    })
    .unwrap();
    let spec = FeatureSpec { lags: 4, nwp_steps: 2 };
    let mut frames = Vec::new();
    let mut labels = None;
    // the most downwind farm is the active party
    for (k, f) in farms.iter().rev().enumerate() {
        let (x, y) = build_features(f, &spec, &[4]).unwrap();
        if k == 0 {
            labels = Some(y);
        }
        frames.push(x);
    }
    let frames = align(&frames).unwrap();
    let labels = labels.unwrap().select(&frames[0].sample_index).unwrap();
    (frames, labels.horizon(4).unwrap().to_vec())
}

fn small() -> BoostParams {
    BoostParams {
        trees: 4,
        depth: 3,
        bins: 8,
        ..BoostParams::default()
    }
}

fn parties(frames: &[FeatureFrame]) -> Vec<PartyId> {
    frames.iter().map(|f| PartyId(f.farm_id)).collect()
}

#[test]
fn federated_model_equals_plaintext_oracle() {
    let (frames, y) = cluster(3, 400, 1);
    let refs: Vec<&FeatureFrame> = frames.iter().collect();
    let params = small();
    let opts = FederationOptions {
        audit: true,
        ..FederationOptions::default()
    };
    let run = train_federated(&refs, &y, &params, &opts).unwrap();
    let oracle = oracle_train(&refs, &parties(&frames), &y, &params, Some(&FixedCodec::default())).unwrap();
    assert_eq!(run.output.model, oracle.model);
    assert_eq!(run.output.stores, oracle.stores);
    assert_eq!(run.output.trace, oracle.trace);
    assert!(run.output.trace.iter().any(|r| r.choice.party > 0), "no passive split exercised");

    let audit = run.audit.unwrap();
    assert!(audit.is_clean(), "{audit:?}");
    assert!(audit.frames_inspected > 0);

    // every node aggregation is a single resharing round
    assert!(!run.metrics.rounds.is_empty());
    assert!(run.metrics.rounds.values().all(|&r| r == 1), "{:?}", run.metrics.rounds);

    let pred = predict_federated(&run.output.model, &run.output.stores, &refs, &opts).unwrap();
    let local = oracle.predict(&refs).unwrap();
    for (a, b) in pred.output.iter().zip(&local) {
        assert!((a - b).abs() <= 1e-9);
    }
    assert!(pred.audit.unwrap().is_clean());
}

#[test]
fn servers_only_see_shares_and_control() {
    let (frames, y) = cluster(2, 200, 2);
    let refs: Vec<&FeatureFrame> = frames.iter().collect();
    let params = BoostParams { trees: 2, ..small() };
    let run = train_federated(&refs, &y, &params, &FederationOptions::default()).unwrap();
    let servers = *run.topology.servers();
    for (&(_, to, kind), stats) in &run.metrics.kinds {
        if servers.contains(&to) && stats.frames > 0 {
            let k = FrameKind::from_u8(kind).unwrap();
            assert!(
                matches!(k, FrameKind::Control | FrameKind::GradientShares | FrameKind::BinShares | FrameKind::Reshare),
                "{k:?} reached a server"
            );
        }
    }
}

#[test]
fn equality_circuit_mode_matches() {
    let (frames, y) = cluster(2, 120, 3);
    let frames: Vec<FeatureFrame> = frames.iter().map(|f| f.rows_range(0, 40)).collect();
    let y = &y[..40];
    let refs: Vec<&FeatureFrame> = frames.iter().collect();
    let params = BoostParams {
        trees: 2,
        depth: 2,
        bins: 4,
        ..BoostParams::default()
    };
    let opts = FederationOptions {
        protocol: ProtocolOptions {
            mode: AggregationMode::EqualityCircuit,
            ..ProtocolOptions::default()
        },
        ..FederationOptions::default()
    };
    let run = train_federated(&refs, y, &params, &opts).unwrap();
    let oracle = oracle_train(&refs, &parties(&frames), y, &params, Some(&FixedCodec::default())).unwrap();
    assert_eq!(run.output.model, oracle.model);
    assert_eq!(run.output.stores, oracle.stores);
}

#[test]
fn tcp_transport_matches_in_process() {
    let (frames, y) = cluster(3, 200, 4);
    let refs: Vec<&FeatureFrame> = frames.iter().collect();
    let params = BoostParams { trees: 2, ..small() };
    let mem = train_federated(&refs, &y, &params, &FederationOptions::default()).unwrap();
    let tcp = train_federated(
        &refs,
        &y,
        &params,
        &FederationOptions {
            transport: TransportMode::TcpLoopback,
            ..FederationOptions::default()
        },
    )
    .unwrap();
    assert_eq!(mem.output.model, tcp.output.model);
    assert_eq!(mem.output.stores, tcp.output.stores);
}

#[test]
fn single_party_runs_without_servers_traffic() {
    let (frames, y) = cluster(1, 300, 5);
    let refs: Vec<&FeatureFrame> = frames.iter().collect();
    let run = train_federated(&refs, &y, &small(), &FederationOptions::default()).unwrap();
    let oracle = oracle_train(&refs, &parties(&frames), &y, &small(), Some(&FixedCodec::default())).unwrap();
    assert_eq!(run.output.model, oracle.model);
    assert!(run.metrics.rounds.is_empty());
}

#[test]
fn misaligned_passive_aborts_training() {
    let (mut frames, y) = cluster(2, 200, 6);
    frames[1] = frames[1].rows_range(0, frames[1].rows - 1);
    let refs: Vec<&FeatureFrame> = frames.iter().collect();
    let opts = FederationOptions {
        recv_timeout: Duration::from_secs(5),
        ..FederationOptions::default()
    };
    let r = train_federated(&refs, &y, &small(), &opts);
    assert!(matches!(r, Err(Error::Shape(_))), "{r:?}");
}
