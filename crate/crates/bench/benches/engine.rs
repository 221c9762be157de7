use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vartodd_core::bench::{gen_gf2n, gf2n_network, MultiplicationSpec};
use vartodd_core::engine::{z_candidates, RowProducts};
use vartodd_core::policy::Policy;
use vartodd_core::search::{optimize, run_iteration, SearchBudget};

fn spec(n: usize) -> MultiplicationSpec {
    MultiplicationSpec::standard(n).expect("table modulus")
}

fn nullspace(c: &mut Criterion) {
    let mut g = c.benchmark_group("nullspace");
    for n in [3, 4, 5] {
        let (p, _) = gen_gf2n(&spec(n));
        let z = z_candidates(&p)[0].clone();
        g.bench_function(format!("row_products_gf2^{n}"), |b| b.iter(|| RowProducts::new(black_box(&p))));
        let rp = RowProducts::new(&p);
        g.bench_function(format!("n_z_gf2^{n}"), |b| b.iter(|| rp.nullspace_for_z(black_box(&z), false)));
        g.bench_function(format!("tohpe_gf2^{n}"), |b| b.iter(|| rp.tohpe_subspace()));
    }
    g.finish();
}

fn simplify(c: &mut Criterion) {
    let mut g = c.benchmark_group("simplify");
    for n in [4, 8] {
        let raw = gf2n_network(&spec(n));
        g.bench_function(format!("raw_gf2^{n}_{}_columns", raw.column_count()), |b| {
            b.iter(|| black_box(&raw).simplify())
        });
        g.bench_function(format!("tensor_gf2^{n}"), |b| b.iter(|| black_box(&raw).signature_tensor()));
    }
    g.finish();
}

fn iteration(c: &mut Criterion) {
    let mut g = c.benchmark_group("iteration");
    g.sample_size(20);
    let pol = Policy::default();
    for n in [3, 4] {
        let (p, _) = gen_gf2n(&spec(n));
        g.bench_function(format!("run_iteration_gf2^{n}"), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| run_iteration(black_box(&p), &pol, &mut rng).expect("valid policy"))
        });
    }
    let (p, _) = gen_gf2n(&spec(3));
    g.bench_function("optimize_gf2^3", |b| {
        b.iter(|| optimize(black_box(&p), &pol, &SearchBudget::iterations(100), 0).expect("bounded"))
    });
    g.finish();
}

criterion_group!(benches, nullspace, simplify, iteration);
criterion_main!(benches);
