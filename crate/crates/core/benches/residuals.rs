use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kmsflow::cocycle::{check_cocycle_identity, solve_transfer, TransferConfig};
use kmsflow::kms::{derive, Beta};
use kmsflow::measure::{bernoulli_for, extend_to_two_sided, pf4_residual, quasi_invariance_residual, MeasureRep};
use kmsflow::num::rat;
use kmsflow::par::Exec;
use kmsflow::symbolic::BiSeq;
use kmsflow::Num;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn residuals(c: &mut Criterion) {
    let p = derive(5, 3, Beta::LogOf(rat(5, 2))).unwrap();
    let mu = bernoulli_for(&p).unwrap();
    let mut g = c.benchmark_group("pf4_residual");
    for depth in [12usize, 16] {
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, depth), &depth, |b, &d| b.iter(|| pf4_residual(&mu, &p, d, exec).unwrap()));
        }
    }
    g.finish();

    let table = MeasureRep::CylinderTable(extend_to_two_sided(&mu, &p, 8, 8, 1e-12, Exec::Parallel).unwrap());
    let (lambda, q) = (p.lambda.clone().unwrap(), p.q.clone().unwrap());
    let mut g = c.benchmark_group("quasi_invariance_residual");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| quasi_invariance_residual(&table, &lambda, &q, 8, exec).unwrap()));
    }
    g.finish();

    let tm = BiSeq::thue_morse();
    let pairs: Vec<(i64, i64)> = (0..256).map(|i| (i * 37 % 1000 - 500, i * 91 % 600 - 300)).collect();
    let half = Num::Exact(rat(1, 2));
    let mut g = c.benchmark_group("cocycle_identity");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| check_cocycle_identity(&tm, &pairs, &half, exec)));
    }
    g.finish();

    let mut g = c.benchmark_group("solve_transfer");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| solve_transfer(std::slice::from_ref(&tm), &rat(1, 2), 8, &TransferConfig::default(), exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, residuals);
criterion_main!(benches);
