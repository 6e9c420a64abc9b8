//! Analytic solver checked against closed forms and direct quadrature.

use std::f64::consts::PI;

use evsim_core::channel::analytic::{
    self, green_1d, kernel_spectrum, source_spectrum, AnalyticSolver, SpectralGrid,
};
use evsim_core::channel::{Axis, ChannelParams, DegradationConvention};
use evsim_core::release::ReleaseProfile;
use num_complex::Complex64;

fn constant_profile(level: f64, horizon: f64, dt: f64) -> ReleaseProfile {
    let n = (horizon / dt).round() as usize;
    let times = (0..=n).map(|i| i as f64 * dt).collect();
    ReleaseProfile::new(times, vec![level; n + 1], 1.0).unwrap()
}

/// Release only in the first sample.
fn impulse_profile(horizon: f64, dt: f64) -> ReleaseProfile {
    let n = (horizon / dt).round() as usize;
    let times = (0..=n).map(|i| i as f64 * dt).collect();
    let mut g = vec![0.0; n + 1];
    g[0] = 1.0;
    ReleaseProfile::new(times, g, 1.0).unwrap()
}

/// Closed-form Gaussian source smeared by the drifting heat kernel.
fn smeared(params: &ChannelParams, x: [f64; 3], s: f64) -> f64 {
    let d = params.axis_diffusivity();
    (0..3)
        .map(|a| {
            let sig = params.source_sigma[a];
            let w = sig * sig + 2.0 * d[a] * s;
            let off = x[a] - params.source_center[a] - params.velocity[a] * s;
            sig / w.sqrt() * (-off * off / (2.0 * w)).exp()
        })
        .product()
}

/// Composite Simpson over `[a, b]`.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn drifting() -> ChannelParams {
    ChannelParams {
        velocity: [5.0, -5.0, 5.0],
        k_e: 0.5,
        tortuosity: [1.1; 3],
        ..Default::default()
    }
}

#[test]
fn constant_release_matches_quadrature() {
    let params = drifting();
    let (dt, horizon) = (0.005, 2.0);
    let gamma = constant_profile(0.7, horizon, dt);
    let grid = SpectralGrid::covering(&params, horizon, dt, 512, None).unwrap();
    let points = [[2.0, 0.0, 20.0], [6.0, -3.0, 22.0], [10.0, -8.0, 27.0]];
    let times = [0.5, 1.0, 2.0];
    let got = analytic::probe(&params, &grid, &gamma, &points, &times).unwrap();
    let kappa = params.decay_rate();
    for (p, x) in points.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate() {
            let want = 0.7 / params.volume_fraction
                * simpson(|s| (-kappa * s).exp() * smeared(&params, *x, s), 0.0, t, 4000);
            // linear interpolation between spectral nodes dominates the error
            let rel = (got.values[p][ti] - want).abs() / want;
            assert!(rel < 1e-3, "point {p} t={t}: {} vs {want} ({rel:e})", got.values[p][ti]);
        }
    }
}

#[test]
fn impulse_response_is_closed_form_gaussian() {
    let params = drifting();
    let (dt, horizon): (f64, f64) = (0.01, 1.0);
    let gamma = impulse_profile(horizon, dt);
    let grid = SpectralGrid::covering(&params, horizon, dt, 512, None).unwrap();
    let solver = AnalyticSolver::new(&params, &grid, &gamma).unwrap();
    let x = [4.0, -2.0, 25.0];
    let series = solver.probe(&[x], &[0.3, 1.0]).unwrap();
    for (ti, &t) in [0.3, 1.0].iter().enumerate() {
        // trapezoid weight 1/2 on the single nonzero sample
        let want = 0.5 * dt / params.volume_fraction
            * (-params.decay_rate() * t).exp()
            * smeared(&params, x, t);
        let rel = (series.values[0][ti] - want).abs() / want;
        assert!(rel < 2e-4, "t={t}: {rel:e}");
    }
}

#[test]
fn mass_matches_source_integral() {
    let params = ChannelParams {
        k_e: 0.0,
        ..Default::default()
    };
    let (dt, horizon, level) = (0.01, 1.0, 0.4);
    let gamma = constant_profile(level, horizon, dt);
    let grid = SpectralGrid::covering(&params, horizon, dt, 128, None).unwrap();
    let solver = AnalyticSolver::new(&params, &grid, &gamma).unwrap();
    let field = solver.field_on(grid.axes, &[horizon]).unwrap();
    let want = params.source_volume() * level * horizon / params.volume_fraction;
    let rel = (field.integral(0) - want).abs() / want;
    assert!(rel < 5e-3, "mass {} vs {want}", field.integral(0));
}

#[test]
fn doubling_binding_rate_scales_by_exponential() {
    let base = ChannelParams::default();
    let doubled = ChannelParams {
        k_e: 2.0 * base.k_e,
        ..base.clone()
    };
    let (dt, horizon): (f64, f64) = (0.01, 2.0);
    let gamma = impulse_profile(horizon, dt);
    let times = [0.5, 1.0, 2.0];
    let x = [[3.0, 1.0, 18.0]];
    let grid = SpectralGrid::covering(&base, horizon, dt, 256, None).unwrap();
    let a = analytic::probe(&base, &grid, &gamma, &x, &times).unwrap();
    let b = analytic::probe(&doubled, &grid, &gamma, &x, &times).unwrap();
    let dk = doubled.decay_rate() - base.decay_rate();
    for (i, t) in times.iter().enumerate() {
        let ratio = b.values[0][i] / a.values[0][i];
        assert!((ratio - (-dk * t).exp()).abs() < 1e-12, "t={t}: {ratio}");
    }
}

#[test]
fn paper_literal_convention_decays_slower() {
    let scaled = ChannelParams::default();
    let literal = ChannelParams {
        degradation_convention: DegradationConvention::PaperLiteral,
        ..scaled.clone()
    };
    let (dt, horizon): (f64, f64) = (0.01, 1.0);
    let gamma = impulse_profile(horizon, dt);
    let grid = SpectralGrid::covering(&scaled, horizon, dt, 256, None).unwrap();
    let x = [[0.0, 0.0, 20.0]];
    let a = analytic::probe(&scaled, &grid, &gamma, &x, &[1.0]).unwrap();
    let b = analytic::probe(&literal, &grid, &gamma, &x, &[1.0]).unwrap();
    let want = (-(scaled.decay_rate() - literal.k_e)).exp();
    assert!((a.values[0][0] / b.values[0][0] - want).abs() < 1e-12);
}

#[test]
fn galilean_shift() {
    let still = ChannelParams::default();
    let dv = [3.0, -2.0, 1.5];
    let moving = ChannelParams {
        velocity: dv,
        ..still.clone()
    };
    let (dt, horizon): (f64, f64) = (0.01, 2.0);
    let gamma = impulse_profile(horizon, dt);
    let g0 = SpectralGrid::covering(&still, horizon, dt, 512, None).unwrap();
    let g1 = SpectralGrid::covering(&moving, horizon, dt, 512, None).unwrap();
    let t = 2.0;
    let pts = [[1.0, 2.0, 19.0], [-4.0, 0.0, 24.0]];
    let shifted: Vec<[f64; 3]> = pts
        .iter()
        .map(|p| std::array::from_fn(|a| p[a] + dv[a] * t))
        .collect();
    let a = analytic::probe(&still, &g0, &gamma, &pts, &[t]).unwrap();
    let b = analytic::probe(&moving, &g1, &gamma, &shifted, &[t]).unwrap();
    for p in 0..pts.len() {
        let rel = (a.values[p][0] - b.values[p][0]).abs() / a.values[p][0];
        assert!(rel < 1e-3, "point {p}: {rel:e}");
    }
}

#[test]
fn linear_in_release_rate() {
    let params = drifting();
    let (dt, horizon): (f64, f64) = (0.01, 1.5);
    let n = (horizon / dt).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let g1: Vec<f64> = times.iter().map(|t| (3.0 * t).sin().abs()).collect();
    let g2: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
    let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
    let p1 = ReleaseProfile::new(times.clone(), g1, 1.0).unwrap();
    let p2 = ReleaseProfile::new(times.clone(), g2, 1.0).unwrap();
    let p12 = ReleaseProfile::new(times.clone(), sum, 1.0).unwrap();
    let grid = SpectralGrid::covering(&params, horizon, dt, 64, None).unwrap();
    let f = |p: &ReleaseProfile| AnalyticSolver::new(&params, &grid, p).unwrap().field().unwrap();
    let (a, b, c) = (f(&p1), f(&p2), f(&p12));
    let max = c.max();
    for i in 0..c.values.len() {
        assert!((a.values[i] + b.values[i] - c.values[i]).abs() <= 1e-10 * max);
    }
}

#[test]
fn semigroup_in_space_and_frequency() {
    let (d, v) = (0.6, 1.3);
    let (t1, t2) = (0.4, 1.1);
    for beta in [-0.9, -0.2, 0.0, 0.35, 1.7] {
        let lhs = kernel_spectrum(beta, t1 + t2, d, v);
        let rhs = kernel_spectrum(beta, t1, d, v) * kernel_spectrum(beta, t2, d, v);
        assert!((lhs - rhs).norm() < 1e-12);
    }
    // real-space composition by quadrature, compared spectrally via the FFT route
    let h = 0.02;
    let n = 4096;
    let x0 = -(n as f64) * h / 2.0;
    let sample = |t: f64| -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new(green_1d(x0 + i as f64 * h, t, d, v).unwrap() * h, 0.0))
            .collect()
    };
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let (mut a, mut b, mut c) = (sample(t1), sample(t2), sample(t1 + t2));
    fft.process(&mut a);
    fft.process(&mut b);
    fft.process(&mut c);
    // composing two kernels anchored at x0 shifts the origin once more
    for k in 0..n {
        let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        let beta = 2.0 * PI * signed / (n as f64 * h);
        let shift = Complex64::from_polar(1.0, beta * x0);
        let composed = a[k] * b[k] * shift;
        assert!((composed - c[k]).norm() < 1e-8, "k={k}");
    }
}

fn quad_spectrum(f: impl Fn(f64) -> f64, beta: f64, lo: f64, hi: f64) -> Complex64 {
    let re = simpson(|x| f(x) * (beta * x).cos(), lo, hi, 200_000);
    let im = simpson(|x| -f(x) * (beta * x).sin(), lo, hi, 200_000);
    Complex64::new(re, im)
}

#[test]
fn spectra_match_quadrature() {
    let cases = [(1.0, 2.0, 0.5, 1.0), (0.35, -5.0, 1.2, 3.0), (0.8, 0.0, 0.05, 0.2)];
    for (d, v, beta, t) in cases {
        let q = quad_spectrum(|x| green_1d(x, t, d, v).unwrap(), beta, v * t - 60.0, v * t + 60.0);
        assert!((q - kernel_spectrum(beta, t, d, v)).norm() < 1e-6, "{d} {v} {beta} {t}");
    }
    let k = kernel_spectrum(0.5, 1.0, 1.0, 2.0);
    assert!((k - Complex64::from_polar((-0.25f64).exp(), -1.0)).norm() < 1e-15);

    for (sigma, center, beta) in [(7.0, 20.0, 0.1), (7.0, 0.0, 0.4), (3.0, -4.0, 1.0)] {
        let f = |x: f64| (-(x - center) * (x - center) / (2.0 * sigma * sigma)).exp();
        let q = quad_spectrum(f, beta, center - 12.0 * sigma, center + 12.0 * sigma);
        assert!((q - source_spectrum(beta, sigma, center)).norm() < 1e-6);
    }
    let s = source_spectrum(0.1, 7.0, 20.0);
    assert!((s.norm() - (2.0 * PI).sqrt() * 7.0 * (-0.245f64).exp()).abs() < 1e-12);
    assert!((s.arg() + 2.0).abs() < 1e-12);
}

#[test]
fn time_and_frequency_paths_agree() {
    let params = drifting();
    let (dt, horizon): (f64, f64) = (0.01, 3.0);
    let n = (horizon / dt).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let g: Vec<f64> = times.iter().map(|t| (2.0 * PI * t).sin().powi(2)).collect();
    let profile = ReleaseProfile::new(times.clone(), g, 1.0).unwrap();
    let grid = SpectralGrid::covering(&params, horizon, dt, 128, None).unwrap();
    let solver = AnalyticSolver::new(&params, &grid, &profile).unwrap();
    let pts = [[2.0, 0.0, 20.0], [10.0, -5.0, 25.0]];
    let direct = solver.probe(&pts, &times).unwrap();
    let spectral = solver.probe_frequency_domain(&pts).unwrap();
    for p in 0..pts.len() {
        let max = direct.values[p].iter().cloned().fold(0.0, f64::max);
        for i in 0..times.len() {
            assert!((direct.values[p][i] - spectral.values[p][i]).abs() < 1e-9 * max);
        }
    }
}

#[test]
fn truncated_lags_for_long_horizons() {
    let params = ChannelParams {
        k_e: 0.8,
        ..Default::default()
    };
    let (dt, horizon): (f64, f64) = (0.01, 200.0);
    let gamma = constant_profile(1.0, horizon, dt);
    let grid = SpectralGrid::covering(&params, horizon, dt, 64, None).unwrap();
    let solver = AnalyticSolver::new(&params, &grid, &gamma).unwrap();
    assert!(solver.lags() < gamma.times.len() / 2);
    // steady state reached: late samples agree
    let s = analytic::probe(&params, &grid, &gamma, &[[0.0, 0.0, 20.0]], &[150.0, 200.0]).unwrap();
    assert!((s.values[0][0] - s.values[0][1]).abs() < 1e-10 * s.values[0][1]);
}

#[test]
fn probe_properties() {
    let params = ChannelParams::default();
    let (dt, horizon): (f64, f64) = (0.01, 3.0);
    let n = (horizon / dt).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let g: Vec<f64> = times.iter().map(|t| 1.0 + (5.0 * t).cos()).collect();
    let profile = ReleaseProfile::new(times.clone(), g, 1.0).unwrap();
    let grid = SpectralGrid::covering(&params, horizon, dt, 256, None).unwrap();
    let pts = [[0.0, 0.0, 20.0], [10.0, 0.0, 20.0]];
    let s = analytic::probe(&params, &grid, &profile, &pts, &times).unwrap();
    for i in 0..times.len() {
        assert!(s.values[0][i] >= s.values[1][i]);
    }

    let zero = ReleaseProfile::new(times.clone(), vec![0.0; times.len()], 1.0).unwrap();
    let z = analytic::probe(&params, &grid, &zero, &pts, &times).unwrap();
    assert!(z.values.iter().flatten().all(|&v| v == 0.0));

    let coarse = SpectralGrid::covering(&params, horizon, dt, 128, None).unwrap();
    let c = analytic::probe(&params, &coarse, &profile, &pts, &times).unwrap();
    for p in 0..pts.len() {
        for i in 1..times.len() {
            let rel = (c.values[p][i] - s.values[p][i]).abs() / s.values[p][i];
            assert!(rel < 0.01, "point {p} sample {i}: {rel}");
        }
    }

    let outside = [[1e4, 0.0, 20.0]];
    assert!(analytic::probe(&params, &grid, &profile, &outside, &times).is_err());
}

#[test]
fn field_on_custom_axes_matches_probe() {
    let params = drifting();
    let (dt, horizon): (f64, f64) = (0.01, 1.0);
    let gamma = constant_profile(1.0, horizon, dt);
    let grid = SpectralGrid::covering(&params, horizon, dt, 256, None).unwrap();
    let solver = AnalyticSolver::new(&params, &grid, &gamma).unwrap();
    let axes = [Axis::new(-4.0, 2.0, 5), Axis::new(-4.0, 2.0, 5), Axis::new(16.0, 2.0, 5)];
    let f = solver.field_on(axes, &[1.0]).unwrap();
    let p = solver.probe(&[[0.0, 2.0, 20.0]], &[1.0]).unwrap();
    assert!((f.at(0, 2, 3, 2) - p.values[0][0]).abs() < 1e-12 * p.values[0][0]);
}

#[test]
fn mismatched_step_rejected() {
    let params = ChannelParams::default();
    let gamma = constant_profile(1.0, 1.0, 0.01);
    let grid = SpectralGrid::covering(&params, 1.0, 0.02, 64, None).unwrap();
    assert!(AnalyticSolver::new(&params, &grid, &gamma).is_err());
}
