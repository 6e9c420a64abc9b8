//! Free-space solution by separable Green's function convolution.
//!
//! For a diagonal diffusivity the impulse response factors into one drifting
//! heat kernel per axis. Convolving each factor with the matching Gaussian
//! source factor is done in Fourier space using the closed-form transforms
//! ([`kernel_spectrum`], [`source_spectrum`]) and one inverse FFT per axis and
//! lag. The time convolution with the release rate is a trapezoid sum over
//! lags, with the decay applied as `exp(-κ s)`:
//!
//! ```text
//! C(x, t) = (1/α) ∫ γ(t - s) e^{-κ s} Π_ν (G^ν(·, s) ⁎ S^ν)(x_ν) ds
//! ```
//!
//! The vesicle half-life is not part of this solution.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Axis, ChannelParams, ConcentrationField, ProbeSeries, Provenance};
use crate::error::{Error, Result};
use crate::release::ReleaseProfile;

/// Lags whose decay factor `exp(-κ s)` falls below this are dropped.
pub const DECAY_CUTOFF: f64 = 1e-12;

/// Number of kernel widths the spectral domain must extend past the source.
pub const WRAP_GUARD: f64 = 5.0;

pub const MIN_POINTS: usize = 16;

/// One-dimensional drifting heat kernel, µm⁻¹.
pub fn green_1d(nu: f64, t: f64, d_nu: f64, v_nu: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("green_1d needs t > 0, got {t}")));
    }
    if !(d_nu > 0.0) {
        return Err(Error::Domain(format!("green_1d needs D > 0, got {d_nu}")));
    }
    let x = nu - v_nu * t;
    Ok((-(x * x) / (4.0 * d_nu * t)).exp() / (4.0 * PI * t * d_nu).sqrt())
}

/// Fourier transform of [`green_1d`] at spatial frequency `beta`:
/// `exp(-D β² t - j β v t)`. Valid for `t >= 0`.
pub fn kernel_spectrum(beta: f64, t: f64, d_nu: f64, v_nu: f64) -> Complex64 {
    Complex64::from_polar((-d_nu * beta * beta * t).exp(), -beta * v_nu * t)
}

/// Fourier transform of the source factor `exp(-(ν-ν_L)²/(2σ²))`.
pub fn source_spectrum(beta: f64, sigma: f64, nu_l: f64) -> Complex64 {
    let mag = (2.0 * PI).sqrt() * sigma * (-0.5 * sigma * sigma * beta * beta).exp();
    Complex64::from_polar(mag, -beta * nu_l)
}

/// Longest lag that still contributes, s.
pub fn kernel_support(params: &ChannelParams, horizon: f64) -> f64 {
    let kappa = params.decay_rate();
    if kappa > 0.0 {
        horizon.min(-DECAY_CUTOFF.ln() / kappa)
    } else {
        horizon
    }
}

/// Discretization of the spectral evaluation: one periodic axis per
/// direction plus the time step shared with the release profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub axes: [Axis; 3],
    pub horizon: f64,
    pub dt: f64,
}

impl SpectralGrid {
    /// Half-width around the source each axis must cover to keep periodic
    /// images of the kernel out of the domain.
    pub fn required_half_width(params: &ChannelParams, horizon: f64) -> [f64; 3] {
        let support = kernel_support(params, horizon);
        let d = params.axis_diffusivity();
        std::array::from_fn(|a| {
            WRAP_GUARD
                * params.source_sigma[a]
                    .max((2.0 * d[a] * support).sqrt())
                    .max(params.velocity[a].abs() * support)
        })
    }

    /// Smallest grid with `points` nodes per axis (rounded up to a power of
    /// two) satisfying the wraparound rule and containing `include`, given as
    /// per-axis `[lo, hi]` bounds.
    pub fn covering(
        params: &ChannelParams,
        horizon: f64,
        dt: f64,
        points: usize,
        include: Option<[[f64; 2]; 3]>,
    ) -> Result<Self> {
        params.validate()?;
        if !(horizon > 0.0) || !(dt > 0.0) {
            return Err(Error::Grid(format!(
                "horizon and dt must be positive, got {horizon} and {dt}"
            )));
        }
        let n = points.max(MIN_POINTS).next_power_of_two();
        let half = Self::required_half_width(params, horizon);
        let axes = std::array::from_fn(|a| {
            let c = params.source_center[a];
            let (mut lo, mut hi) = (c - half[a], c + half[a]);
            if let Some(inc) = include {
                lo = lo.min(inc[a][0]);
                hi = hi.max(inc[a][1]);
            }
            Axis::new(lo, (hi - lo) / (n - 1) as f64, n)
        });
        let grid = Self { axes, horizon, dt };
        grid.validate(params)?;
        Ok(grid)
    }

    pub fn validate(&self, params: &ChannelParams) -> Result<()> {
        let half = Self::required_half_width(params, self.horizon);
        for (a, axis) in self.axes.iter().enumerate() {
            if axis.len < MIN_POINTS || !axis.len.is_power_of_two() {
                return Err(Error::Grid(format!(
                    "spectral axis {a} needs a power of two >= {MIN_POINTS} points, got {}",
                    axis.len
                )));
            }
            let c = params.source_center[a];
            let tol = 1e-9 * half[a].max(1.0);
            if axis.origin > c - half[a] + tol || axis.end() < c + half[a] - tol {
                return Err(Error::Grid(format!(
                    "spectral axis {a} spans [{}, {}] but must cover [{}, {}] to avoid wraparound",
                    axis.origin,
                    axis.end(),
                    c - half[a],
                    c + half[a]
                )));
            }
        }
        Ok(())
    }
}

/// Per-axis machinery for evaluating `F^ν(·, s) = G^ν(·, s) ⁎ S^ν` on the
/// spectral nodes.
struct AxisTransform {
    axis: Axis,
    betas: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
    diffusivity: f64,
    velocity: f64,
    sigma: f64,
    center: f64,
}

impl AxisTransform {
    fn new(planner: &mut FftPlanner<f64>, axis: Axis, params: &ChannelParams, a: usize) -> Self {
        let n = axis.len;
        let period = n as f64 * axis.spacing;
        let betas = (0..n)
            .map(|k| {
                let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                2.0 * PI * signed / period
            })
            .collect();
        Self {
            axis,
            betas,
            ifft: planner.plan_fft_inverse(n),
            diffusivity: params.axis_diffusivity()[a],
            velocity: params.velocity[a],
            sigma: params.source_sigma[a],
            center: params.source_center[a],
        }
    }

    /// Nodal values of the smeared kernel at lag `s`.
    fn profile(&self, s: f64, buf: &mut [Complex64]) -> Vec<f64> {
        let x0 = self.axis.origin;
        for (slot, &beta) in buf.iter_mut().zip(&self.betas) {
            // the e^{+jβx0} factor re-anchors the transform at the first node
            *slot = kernel_spectrum(beta, s, self.diffusivity, self.velocity)
                * source_spectrum(beta, self.sigma, self.center)
                * Complex64::from_polar(1.0, beta * x0);
        }
        self.ifft.process(buf);
        let norm = 1.0 / (self.axis.len as f64 * self.axis.spacing);
        buf.iter().map(|c| c.re * norm).collect()
    }
}

/// Evaluates the convolution solution for one release profile.
pub struct AnalyticSolver<'a> {
    params: &'a ChannelParams,
    grid: &'a SpectralGrid,
    gamma: &'a [f64],
    t0: f64,
    transforms: [AxisTransform; 3],
    lags: usize,
}

impl<'a> AnalyticSolver<'a> {
    pub fn new(
        params: &'a ChannelParams,
        grid: &'a SpectralGrid,
        profile: &'a ReleaseProfile,
    ) -> Result<Self> {
        params.validate()?;
        grid.validate(params)?;
        let dt = profile.dt();
        if (dt - grid.dt).abs() > 1e-9 * grid.dt {
            return Err(Error::Grid(format!(
                "release profile sampled every {dt}s but the spectral grid steps {}s",
                grid.dt
            )));
        }
        let t0 = profile.times[0];
        let n = (((grid.horizon - t0) / dt + 1e-9).floor() as usize + 1).min(profile.gamma.len());
        let support = kernel_support(params, grid.horizon);
        let lags = ((support / dt).ceil() as usize + 1).min(n);
        let mut planner = FftPlanner::new();
        let transforms =
            std::array::from_fn(|a| AxisTransform::new(&mut planner, grid.axes[a], params, a));
        Ok(Self {
            params,
            grid,
            gamma: &profile.gamma[..n],
            t0,
            transforms,
            lags,
        })
    }

    /// Sample times covered by this solver.
    pub fn times(&self) -> Vec<f64> {
        (0..self.gamma.len())
            .map(|i| self.t0 + i as f64 * self.grid.dt)
            .collect()
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    fn time_index(&self, t: f64) -> Result<usize> {
        let u = (t - self.t0) / self.grid.dt;
        let i = u.round();
        if (u - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.gamma.len() {
            return Err(Error::Grid(format!(
                "time {t}s is not a release sample in [{}, {}] with step {}",
                self.t0,
                self.t0 + (self.gamma.len() - 1) as f64 * self.grid.dt,
                self.grid.dt
            )));
        }
        Ok(i as usize)
    }

    /// Trapezoid coefficients `(dt/α) w_m γ_{n-m} e^{-κ s_m}` for output
    /// sample `n`.
    fn coefficients(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        let dt = self.grid.dt;
        let kappa = self.params.decay_rate();
        let scale = dt / self.params.volume_fraction;
        let last = n.min(self.lags - 1);
        (0..=last)
            .map(|m| {
                let w = if m == 0 || m == n { 0.5 } else { 1.0 };
                scale * w * self.gamma[n - m] * (-kappa * m as f64 * dt).exp()
            })
            .collect()
    }

    /// Per-lag kernel factors sampled at the given coordinates of each axis.
    fn lag_samples(&self, coords: &[Vec<f64>; 3]) -> Result<Vec<[Vec<f64>; 3]>> {
        for a in 0..3 {
            let axis = &self.grid.axes[a];
            if let Some(x) = coords[a].iter().find(|&&x| !axis.contains(x)) {
                return Err(Error::Grid(format!(
                    "coordinate {x} on axis {a} is outside the spectral domain [{}, {}]",
                    axis.origin,
                    axis.end()
                )));
            }
        }
        let dt = self.grid.dt;
        Ok((0..self.lags)
            .into_par_iter()
            .map_init(
                || vec![Complex64::default(); self.grid.axes.iter().map(|a| a.len).max().unwrap()],
                |buf, m| {
                    std::array::from_fn(|a| {
                        let tr = &self.transforms[a];
                        let prof = tr.profile(m as f64 * dt, &mut buf[..tr.axis.len]);
                        coords[a]
                            .iter()
                            .map(|&x| tr.axis.interpolate(&prof, x).unwrap_or(0.0))
                            .collect()
                    })
                },
            )
            .collect())
    }

    /// Field on an arbitrary rectilinear grid at the given sample times.
    pub fn field_on(&self, axes: [Axis; 3], times: &[f64]) -> Result<ConcentrationField> {
        let idx: Vec<usize> = times
            .iter()
            .map(|&t| self.time_index(t))
            .collect::<Result<_>>()?;
        let coords = axes.map(|a| a.coords());
        let samples = self.lag_samples(&coords)?;
        let mut field = ConcentrationField::zeros(
            axes,
            idx.iter().map(|&n| self.t0 + n as f64 * self.grid.dt).collect(),
            Provenance::Analytic,
        );
        let (ny, nz) = (axes[1].len, axes[2].len);
        for (ti, &n) in idx.iter().enumerate() {
            let coef = self.coefficients(n);
            field
                .slab_mut(ti)
                .par_chunks_mut(ny * nz)
                .enumerate()
                .for_each(|(i, plane)| {
                    for (m, &c) in coef.iter().enumerate() {
                        if c == 0.0 {
                            continue;
                        }
                        let [fx, fy, fz] = &samples[m];
                        let cx = c * fx[i];
                        for j in 0..ny {
                            let cxy = cx * fy[j];
                            let row = &mut plane[j * nz..(j + 1) * nz];
                            for (v, f) in row.iter_mut().zip(fz) {
                                *v += cxy * f;
                            }
                        }
                    }
                });
        }
        field.clamp_ringing();
        Ok(field)
    }

    /// Field on the spectral nodes at every release sample.
    pub fn field(&self) -> Result<ConcentrationField> {
        self.field_on(self.grid.axes, &self.times())
    }

    /// Impulse-response kernel `e^{-κ s} Π F^ν` at each point, per lag.
    fn point_kernels(&self, points: &[[f64; 3]]) -> Result<Vec<Vec<f64>>> {
        let coords: [Vec<f64>; 3] = std::array::from_fn(|a| points.iter().map(|p| p[a]).collect());
        let samples = self.lag_samples(&coords)?;
        let kappa = self.params.decay_rate();
        Ok((0..points.len())
            .map(|p| {
                samples
                    .iter()
                    .enumerate()
                    .map(|(m, [fx, fy, fz])| {
                        (-kappa * m as f64 * self.grid.dt).exp() * fx[p] * fy[p] * fz[p]
                    })
                    .collect()
            })
            .collect())
    }

    /// Time series at points, evaluated by direct summation over lags.
    pub fn probe(&self, points: &[[f64; 3]], times: &[f64]) -> Result<ProbeSeries> {
        let idx: Vec<usize> = times
            .iter()
            .map(|&t| self.time_index(t))
            .collect::<Result<_>>()?;
        let kernels = self.point_kernels(points)?;
        let scale = self.grid.dt / self.params.volume_fraction;
        let values = kernels
            .iter()
            .map(|k| {
                idx.iter()
                    .map(|&n| {
                        if n == 0 {
                            return 0.0;
                        }
                        let last = n.min(self.lags - 1);
                        (0..=last)
                            .map(|m| {
                                let w = if m == 0 || m == n { 0.5 } else { 1.0 };
                                w * self.gamma[n - m] * k[m]
                            })
                            .sum::<f64>()
                            * scale
                    })
                    .collect()
            })
            .collect();
        Ok(ProbeSeries {
            points: points.to_vec(),
            times: idx.iter().map(|&n| self.t0 + n as f64 * self.grid.dt).collect(),
            values,
        })
    }

    /// Time series at points for every release sample, with the time
    /// convolution done as a product of temporal spectra.
    pub fn probe_frequency_domain(&self, points: &[[f64; 3]]) -> Result<ProbeSeries> {
        let kernels = self.point_kernels(points)?;
        let n = self.gamma.len();
        let len = (n + self.lags - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut g: Vec<Complex64> = self.gamma.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        g.resize(len, Complex64::default());
        fwd.process(&mut g);
        let scale = self.grid.dt / self.params.volume_fraction;
        let values = kernels
            .iter()
            .map(|k| {
                let mut h: Vec<Complex64> = k.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                h.resize(len, Complex64::default());
                fwd.process(&mut h);
                for (a, b) in h.iter_mut().zip(&g) {
                    *a *= b;
                }
                inv.process(&mut h);
                (0..n)
                    .map(|i| {
                        if i == 0 {
                            return 0.0;
                        }
                        let mut c = h[i].re / len as f64;
                        // trapezoid end corrections
                        c -= 0.5 * self.gamma[i] * k[0];
                        if i < self.lags {
                            c -= 0.5 * self.gamma[0] * k[i];
                        }
                        c * scale
                    })
                    .collect()
            })
            .collect();
        Ok(ProbeSeries {
            points: points.to_vec(),
            times: self.times(),
            values,
        })
    }
}

/// Field on the spectral grid at every release sample up to the horizon.
pub fn field(
    params: &ChannelParams,
    grid: &SpectralGrid,
    gamma: &ReleaseProfile,
) -> Result<ConcentrationField> {
    AnalyticSolver::new(params, grid, gamma)?.field()
}

/// Point time series, by direct lag summation when that is cheap and by
/// temporal FFT otherwise.
pub fn probe(
    params: &ChannelParams,
    grid: &SpectralGrid,
    gamma: &ReleaseProfile,
    points: &[[f64; 3]],
    times: &[f64],
) -> Result<ProbeSeries> {
    let solver = AnalyticSolver::new(params, grid, gamma)?;
    if (times.len() as f64) * (solver.lags() as f64) < 5e7 {
        return solver.probe(points, times);
    }
    let all = solver.probe_frequency_domain(points)?;
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| solver.time_index(t))
        .collect::<Result<_>>()?;
    Ok(ProbeSeries {
        points: all.points,
        times: idx.iter().map(|&i| all.times[i]).collect(),
        values: all
            .values
            .iter()
            .map(|v| idx.iter().map(|&i| v[i]).collect())
            .collect(),
    })
}
