use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use windshare::boost::{oracle_train, predict_federated, train_federated, BoostParams, FederationOptions};
use windshare::net::PartyId;
use windshare_bench::cluster;

fn params(trees: usize, depth: usize) -> BoostParams {
    BoostParams {
        trees,
        depth,
        bins: 16,
        ..BoostParams::default()
    }
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    let opts = FederationOptions::default();
    for m in [2usize, 4, 6] {
        let (frames, y) = cluster(m, 12, 5);
        let refs: Vec<_> = frames.iter().collect();
        g.bench_with_input(BenchmarkId::new("federated", m), &m, |b, _| {
            b.iter(|| train_federated(&refs, &y, &params(3, 3), &opts).unwrap())
        });
        let parties: Vec<PartyId> = frames.iter().map(|f| PartyId(f.farm_id)).collect();
        g.bench_with_input(BenchmarkId::new("plaintext", m), &m, |b, _| {
            b.iter(|| oracle_train(&refs, &parties, &y, &params(3, 3), None).unwrap())
        });
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    let mut g = c.benchmark_group("predict");
    g.sample_size(10);
    let opts = FederationOptions::default();
    let (frames, y) = cluster(3, 12, 6);
    let refs: Vec<_> = frames.iter().collect();
    let parties: Vec<PartyId> = frames.iter().map(|f| PartyId(f.farm_id)).collect();
    for (trees, depth) in [(5usize, 2usize), (20, 3), (40, 4)] {
        let m = oracle_train(&refs, &parties, &y, &params(trees, depth), None).unwrap();
        g.bench_with_input(BenchmarkId::new("federated", format!("T{trees}D{depth}")), &trees, |b, _| {
            b.iter(|| predict_federated(&m.model, &m.stores, &refs, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, training, inference);
criterion_main!(benches);
