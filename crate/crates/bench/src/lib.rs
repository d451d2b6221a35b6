//! Fixtures shared by the benches: shared vectors for the secure kernels
//! and a small aligned cluster for training runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use windshare::data::{align, build_features, synth_cluster, ClusterSpec, FeatureFrame, FeatureSpec};
use windshare::sharing::share_tensor;
use windshare::{FixedCodec, ShareTensor, WordKind};

/// Three server views of an `n`-vector of fixed-point values in `[-4, 4)`.
pub fn shared_fixed(n: usize, seed: u64) -> [ShareTensor; 3] {
    let codec = FixedCodec::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let words: Vec<_> = (0..n).map(|_| codec.encode(rng.random_range(-4.0..4.0)).unwrap()).collect();
    share_tensor(&words, n, 1, WordKind::Fixed, &mut rng).unwrap()
}

/// Shares of an `rows x cols` one-hot matrix (integer words) and of an
/// `rows x 2` gradient matrix, as the servers see them during aggregation.
pub fn shared_onehot(rows: usize, cols: usize, seed: u64) -> ([ShareTensor; 3], [ShareTensor; 3]) {
    let codec = FixedCodec::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hot = vec![windshare::RingElement(0); rows * cols];
    for i in 0..rows {
        hot[i * cols + rng.random_range(0..cols)] = windshare::RingElement(1);
    }
    let grads: Vec<_> = (0..rows * 2).map(|_| codec.encode(rng.random_range(-1.0..1.0)).unwrap()).collect();
    (
        share_tensor(&hot, rows, cols, WordKind::Integer, &mut rng).unwrap(),
        share_tensor(&grads, rows, 2, WordKind::Fixed, &mut rng).unwrap(),
    )
}

/// Aligned frames of an `m`-farm synthetic cluster (active first) and the
/// active party's horizon-4 labels.
pub fn cluster(m: usize, days: usize, seed: u64) -> (Vec<FeatureFrame>, Vec<f64>) {
    let farms = synth_cluster(&ClusterSpec {
        n_farms: m,
        steps: days * 96,
        seed,
        ..ClusterSpec::default()
    })
    .unwrap();
    let spec = FeatureSpec { lags: 8, nwp_steps: 4 };
    let mut frames = Vec::new();
    let mut labels = None;
    for (k, f) in farms.iter().rev().enumerate() {
        let (x, y) = build_features(f, &spec, &[4]).unwrap();
        if k == 0 {
            labels = Some(y);
        }
        frames.push(x);
    }
    let frames = align(&frames).unwrap();
    let y = labels.unwrap().select(&frames[0].sample_index).unwrap().horizon(4).unwrap().to_vec();
    (frames, y)
}
