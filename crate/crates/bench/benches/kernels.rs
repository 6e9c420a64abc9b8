use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evsim_core::channel::analytic::{AnalyticSolver, SpectralGrid};
use evsim_core::channel::grid::{AdvectionScheme, GridSolver};
use evsim_core::receiver::{integrate, DrivingSeries};
use evsim_core::release::{self, poisson};
use evsim_core::scenario::ScenarioConfig;

fn scenario_b() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("scenario_B").unwrap();
    cfg.release.horizon_s = 1.0;
    cfg
}

fn profile(cfg: &ScenarioConfig) -> release::ReleaseProfile {
    let r = &cfg.release;
    let drive = release::synth_calcium_drive(
        r.drive.heart_rate_bpm,
        r.drive.pulse_amplitude_um_per_s,
        r.drive.pulse_width_s,
        r.horizon_s,
        r.dt_s,
    )
    .unwrap();
    release::release_profile(&drive, &cfg.exocytosis(), &cfg.mvb(), r.gamma_scale).unwrap()
}

fn poisson_sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("poisson");
    for mean in [0.5, 8.0, 40.0, 1e4] {
        g.bench_with_input(BenchmarkId::from_parameter(mean), &mean, |b, &m| {
            let mut rng = poisson::substream(1, 0);
            b.iter(|| poisson::sample(&mut rng, black_box(m)))
        });
    }
    g.finish();
    let phi = vec![150.0; 100_000];
    c.bench_function("sample_events_1e5", |b| {
        b.iter(|| release::sample_events(black_box(&phi), 0.005, 7).unwrap())
    });
}

fn analytic_probe(c: &mut Criterion) {
    let cfg = scenario_b();
    let params = cfg.channel_params();
    let gamma = profile(&cfg);
    let mut g = c.benchmark_group("analytic_probe");
    g.sample_size(10);
    for points in [128, 256] {
        let spectral = SpectralGrid::covering(&params, 1.0, cfg.release.dt_s, points, None).unwrap();
        let solver = AnalyticSolver::new(&params, &spectral, &gamma).unwrap();
        let times = solver.times();
        g.bench_with_input(BenchmarkId::new("lag_sum", points), &points, |b, _| {
            b.iter(|| solver.probe(black_box(&cfg.probes_um), &times).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("frequency", points), &points, |b, _| {
            b.iter(|| solver.probe_frequency_domain(black_box(&cfg.probes_um)).unwrap())
        });
    }
    g.finish();
}

fn grid_step(c: &mut Criterion) {
    let cfg = scenario_b();
    let params = cfg.channel_params();
    let mut g = c.benchmark_group("grid_step");
    for spacing in [2.0, 1.0] {
        let mut grid = cfg.box_grid().unwrap();
        grid.spacing = spacing;
        for scheme in [AdvectionScheme::Upwind, AdvectionScheme::Central] {
            let solver = GridSolver::new(&params, &grid, scheme).unwrap();
            let state = solver.state_from(|x| params.source_shape(x));
            let mut next = solver.zero_state();
            let id = BenchmarkId::new(format!("{scheme:?}"), spacing);
            g.bench_function(id, |b| {
                b.iter(|| solver.step_into(black_box(&state), 1.0, &mut next).unwrap())
            });
        }
    }
    g.finish();
}

fn receiver_rk4(c: &mut Criterion) {
    let cfg = ScenarioConfig::preset("fig6").unwrap();
    let lr = cfg.ligand_receptor();
    let cm = cfg.clathrin();
    let drive = DrivingSeries::constant(1e-3, 5000.0, 1.0).unwrap();
    c.bench_function("receiver_rk4_5000s", |b| {
        b.iter(|| integrate(&lr, &cm, &drive, (0.0, 5000.0), 0.01, 1000).unwrap())
    });
}

criterion_group!(benches, poisson_sampling, analytic_probe, grid_step, receiver_rk4);
criterion_main!(benches);
