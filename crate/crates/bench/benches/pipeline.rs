use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lmm_es_core::analysis::prepare;
use lmm_es_core::{
    build_v, f2_curve, generate, gls_fit, CovarianceStructure, EstimateOptions, GenConfig,
    ModelSpec, Optimizer, RemlProblem,
};

fn dataset(n: usize) -> (lmm_es_core::EncodedDesign, lmm_es_core::LinearHypothesis) {
    let mut config = GenConfig::new(n, 15, [100.0, 15.0, 0.5], 393.4455, 180.4234, 1);
    config.x2.mean = 50.0;
    config.x2.sd = 10.0;
    let frame = generate(&config).unwrap();
    let spec = ModelSpec::new(vec!["X1".into()], vec!["X2".into()], vec!["Z".into()]);
    prepare(&frame, &spec).unwrap()
}

fn bench_gls(c: &mut Criterion) {
    let mut group = c.benchmark_group("gls_fit");
    group.sample_size(10);
    for n in [250, 1000] {
        let (design, _) = dataset(n);
        let cov = CovarianceStructure::single(0.46, design.factors()[0].clone()).unwrap();
        let v = build_v(&cov, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| gls_fit(&design.y, &design.x, &v).unwrap())
        });
    }
    group.finish();
}

fn bench_reml(c: &mut Criterion) {
    let (design, _) = dataset(1000);
    let factors = design.factors();
    let problem = RemlProblem::new(&design.y, &design.x, &factors).unwrap();
    c.bench_function("reml_criterion/1000", |b| {
        b.iter(|| problem.criterion(&[0.46]).unwrap())
    });

    let mut group = c.benchmark_group("estimate_ratios/1000");
    for (name, optimizer) in [
        ("scalar", Optimizer::Scalar),
        ("simplex", Optimizer::Simplex),
    ] {
        let opts = EstimateOptions {
            optimizer,
            ..Default::default()
        };
        group.bench_function(name, |b| b.iter(|| problem.estimate(&opts).unwrap()));
    }
    group.finish();
}

fn bench_curve(c: &mut Criterion) {
    let (design, block1) = dataset(1000);
    let factors = design.factors();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let mut group = c.benchmark_group("f2_curve");
    group.sample_size(10);
    group.bench_function("1000x21", |b| {
        b.iter(|| f2_curve(&design.y, &design.x, &factors[0], &block1, &grid).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_gls, bench_reml, bench_curve);
criterion_main!(benches);
