use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use misclass_bench::{case_control, linear};
use misclass_core::covariate_mc::{sample_latent_covariate, ConditionalModel};
use misclass_core::latent_gaussian::{fit_latent_gaussian, LatentGaussianModel};
use misclass_core::response_mc::{marginalize_sens_spec, SensSpecGrid, Target};
use misclass_core::simulate::{simulate_latent_gaussian, simulate_response_mc};
use misclass_core::{run_importance_sampling, Family, GlmSpec, SamplerConfig, StreamFactory};

fn conditional_fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("conditional_fit");
    for n in [100, 1000] {
        let fixture = linear(n, 1);
        let model = ConditionalModel::new(&fixture.dataset, &fixture.spec).unwrap();
        let mut rng = StreamFactory::new(2).stream(0);
        let x = sample_latent_covariate(&fixture.dataset, &fixture.mc_model, &fixture.exposure, &mut rng).unwrap();
        group.bench_with_input(BenchmarkId::new("gaussian", n), &x, |b, x| b.iter(|| model.fit(x).unwrap()));
    }
    let fixture = case_control();
    let model = ConditionalModel::new(&fixture.dataset, &fixture.spec).unwrap();
    let mut rng = StreamFactory::new(3).stream(0);
    let x = sample_latent_covariate(&fixture.dataset, &fixture.mc_model, &fixture.exposure, &mut rng).unwrap();
    group.bench_function("logit_case_control", |b| b.iter(|| model.fit(&x).unwrap()));
    group.finish();
}

fn importance_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("importance_sampling");
    group.sample_size(10);
    let fixture = linear(100, 4);
    let config = SamplerConfig::new(2_000, 5);
    group.bench_function("linear_n100_m2000", |b| {
        b.iter(|| {
            run_importance_sampling(&fixture.dataset, &fixture.spec, &fixture.mc_model, &fixture.exposure, &config)
                .unwrap()
        })
    });
    let fixture = case_control();
    group.bench_function("logit_case_control_m2000", |b| {
        b.iter(|| {
            run_importance_sampling(&fixture.dataset, &fixture.spec, &fixture.mc_model, &fixture.exposure, &config)
                .unwrap()
        })
    });
    group.finish();
}

fn latent_gaussian(c: &mut Criterion) {
    let mut group = c.benchmark_group("latent_gaussian");
    group.sample_size(10);
    let sample = simulate_latent_gaussian(200, 1.0, 1.0, 1.0, 1.0, 1.0, 6).unwrap();
    let model = LatentGaussianModel::default();
    group.bench_function("n200_grid49", |b| b.iter(|| fit_latent_gaussian(&sample.dataset, &model).unwrap()));
    group.finish();
}

fn response_grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("response_mc");
    group.sample_size(10);
    let data = simulate_response_mc(1000, 0.10, 0.90, 0.95, 7).unwrap();
    let spec = GlmSpec::new(Family::BernoulliSslogit { pi00: 0.9, pi11: 0.95 }, "y");
    let grid = SensSpecGrid::from_intervals((0.85, 0.95), (0.925, 0.975), 11).unwrap();
    let target = Target::SuccessProbability(vec![1.0]);
    group.bench_function("grid_121", |b| b.iter(|| marginalize_sens_spec(&data, &spec, &grid, &target).unwrap()));
    group.finish();
}

criterion_group!(benches, conditional_fits, importance_sampling, latent_gaussian, response_grid);
criterion_main!(benches);
