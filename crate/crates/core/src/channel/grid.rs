//! Finite-difference solver on a Neumann-bounded cube.
//!
//! Node-centered grid with nodes on the walls. Diffusion uses the
//! second-order central stencil per axis, advection either central or
//! first-order upwind differences, and zero-flux walls are imposed through
//! mirror ghost nodes (`C[-1] = C[1]`). Time stepping is explicit Euler with
//! the source sampled at the step midpoint.
//!
//! The sink combines extracellular binding (rate from
//! [`ChannelParams::decay_rate`]) and, when a half-life is set, the
//! time-dependent coefficient `(1 - exp(-t/τ)) / α` with `τ = Λ½ / ln 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{trapezoid_integral, trilinear, Axis, ChannelParams, ConcentrationField, ProbeSeries, Provenance, CLAMP_FRACTION};
use crate::error::{Error, Result};
use crate::release::ReleaseProfile;

/// Values this many times the source scale are treated as a blow-up.
pub const BLOWUP_FACTOR: f64 = 1e6;

/// Safety factor applied to every explicit stability bound.
pub const CFL_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvectionScheme {
    /// First-order upwind; monotone but diffusive (numerical diffusion `|v| h / 2`).
    #[default]
    Upwind,
    /// Second-order central differences.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    /// Cube center, µm.
    pub center: [f64; 3],
    /// Edge length, µm.
    pub edge: f64,
    /// Node spacing h, µm.
    pub spacing: f64,
    /// Time step, s.
    pub dt: f64,
}

impl Default for BoxGrid {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0, 20.0],
            edge: 40.0,
            spacing: 1.0,
            dt: 0.005,
        }
    }
}

impl BoxGrid {
    pub fn nodes_per_axis(&self) -> Result<usize> {
        if !(self.spacing > 0.0) || !(self.edge > 0.0) {
            return Err(Error::Grid(format!(
                "edge and spacing must be positive, got {} and {}",
                self.edge, self.spacing
            )));
        }
        let cells = self.edge / self.spacing;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 2.0 {
            return Err(Error::Grid(format!(
                "spacing {} does not divide edge {} into at least two cells",
                self.spacing, self.edge
            )));
        }
        Ok(cells.round() as usize + 1)
    }

    pub fn axes(&self) -> Result<[Axis; 3]> {
        let n = self.nodes_per_axis()?;
        Ok(self.center.map(|c| Axis::new(c - 0.5 * self.edge, self.spacing, n)))
    }

    /// Per-axis `[lo, hi]` wall positions.
    pub fn bounds(&self) -> [[f64; 2]; 3] {
        self.center
            .map(|c| [c - 0.5 * self.edge, c + 0.5 * self.edge])
    }

    /// Largest stable explicit step for this spacing, s.
    pub fn stability_limit(params: &ChannelParams, spacing: f64, scheme: AdvectionScheme) -> f64 {
        let d = params.axis_diffusivity();
        let max_d = d.iter().cloned().fold(0.0, f64::max);
        let max_v = params.velocity.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut limit = spacing * spacing / (6.0 * max_d);
        if max_v > 0.0 {
            limit = limit.min(spacing / max_v);
        }
        if scheme == AdvectionScheme::Central {
            // FTCS advection-diffusion: sum(D) dt / h² <= 1/4 and
            // dt * sum(v²/D) <= 1 together keep every Fourier mode bounded
            let sum_d: f64 = d.iter().sum();
            limit = limit.min(spacing * spacing / (4.0 * sum_d));
            let pe: f64 = (0..3).map(|a| params.velocity[a].powi(2) / d[a]).sum();
            if pe > 0.0 {
                limit = limit.min(1.0 / pe);
            }
        }
        let sink = params.decay_rate() + params.half_life.map_or(0.0, |_| 1.0 / params.volume_fraction);
        if sink > 0.0 {
            limit = limit.min(1.0 / sink);
        }
        CFL_SAFETY * limit
    }

    /// Grid whose step evenly divides `sample_dt` and respects the stability limit.
    pub fn with_auto_step(
        center: [f64; 3],
        edge: f64,
        spacing: f64,
        params: &ChannelParams,
        scheme: AdvectionScheme,
        sample_dt: f64,
    ) -> Result<Self> {
        let limit = Self::stability_limit(params, spacing, scheme);
        let sub = (sample_dt / limit).ceil().max(1.0);
        let grid = Self {
            center,
            edge,
            spacing,
            dt: sample_dt / sub,
        };
        grid.nodes_per_axis()?;
        Ok(grid)
    }

    pub fn validate(&self, params: &ChannelParams, scheme: AdvectionScheme) -> Result<()> {
        self.nodes_per_axis()?;
        let limit = Self::stability_limit(params, self.spacing, scheme);
        if !(self.dt > 0.0) || self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Grid(format!(
                "time step {}s violates the stability limit {limit}s for spacing {}um",
                self.dt, self.spacing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub values: Vec<f64>,
    pub time: f64,
}

/// Per-record solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostic {
    pub t: f64,
    pub mass: f64,
    /// Cumulative number of clamped samples.
    pub clamped: usize,
    pub min: f64,
    pub max: f64,
    /// Stability limit divided by the step in use.
    pub stability_margin: f64,
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub field: ConcentrationField,
    pub probes: ProbeSeries,
    pub diagnostics: Vec<GridDiagnostic>,
    /// Largest nodal value seen at any step.
    pub peak: f64,
}

pub struct GridSolver {
    params: ChannelParams,
    grid: BoxGrid,
    scheme: AdvectionScheme,
    axes: [Axis; 3],
    n: usize,
    source: Vec<f64>,
    diffusivity: [f64; 3],
    blowup_limit: f64,
}

impl GridSolver {
    pub fn new(params: &ChannelParams, grid: &BoxGrid, scheme: AdvectionScheme) -> Result<Self> {
        params.validate()?;
        grid.validate(params, scheme)?;
        let axes = grid.axes()?;
        let n = axes[0].len;
        let mut source = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    source[(i * n + j) * n + k] =
                        params.source_shape([axes[0].coord(i), axes[1].coord(j), axes[2].coord(k)]);
                }
            }
        }
        Ok(Self {
            params: params.clone(),
            grid: *grid,
            scheme,
            axes,
            n,
            source,
            diffusivity: params.axis_diffusivity(),
            blowup_limit: f64::MAX,
        })
    }

    /// Sets the magnitude, µM, above which a step is reported as unstable.
    pub fn with_source_scale(mut self, scale: f64) -> Self {
        if scale > 0.0 {
            self.blowup_limit = BLOWUP_FACTOR * scale;
        }
        self
    }

    pub fn axes(&self) -> [Axis; 3] {
        self.axes
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn zero_state(&self) -> PdeState {
        PdeState {
            values: vec![0.0; self.n * self.n * self.n],
            time: 0.0,
        }
    }

    /// State holding `f` evaluated at every node.
    pub fn state_from(&self, f: impl Fn([f64; 3]) -> f64) -> PdeState {
        let mut s = self.zero_state();
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s.values[(i * n + j) * n + k] =
                        f([self.axes[0].coord(i), self.axes[1].coord(j), self.axes[2].coord(k)]);
                }
            }
        }
        s
    }

    fn sink_rate(&self, t: f64) -> f64 {
        let half_life = self.params.half_life.map_or(0.0, |lambda| {
            let tau = lambda / std::f64::consts::LN_2;
            (1.0 - (-t / tau).exp()) / self.params.volume_fraction
        });
        self.params.decay_rate() + half_life
    }

    /// Advances one step with release rate `gamma_t` (µM/s) over the step.
    pub fn step(&self, state: &PdeState, gamma_t: f64) -> Result<PdeState> {
        let mut next = self.zero_state();
        self.step_into(state, gamma_t, &mut next)?;
        Ok(next)
    }

    /// Two-buffer step: reads `state`, writes `next`.
    pub fn step_into(&self, state: &PdeState, gamma_t: f64, next: &mut PdeState) -> Result<()> {
        let n = self.n;
        let h = self.grid.spacing;
        let dt = self.grid.dt;
        let inv_h2 = 1.0 / (h * h);
        let [dx, dy, dz] = self.diffusivity;
        let v = self.params.velocity;
        let sink = self.sink_rate(state.time);
        let src = gamma_t / self.params.volume_fraction;
        let scheme = self.scheme;
        let c = &state.values;
        // mirror ghost: index -1 -> 1, index n -> n - 2
        let lo = |i: usize| if i == 0 { 1 } else { i - 1 };
        let hi = |i: usize| if i == n - 1 { n - 2 } else { i + 1 };
        let adv = |vel: f64, minus: f64, mid: f64, plus: f64| -> f64 {
            match scheme {
                AdvectionScheme::Central => -vel * (plus - minus) / (2.0 * h),
                AdvectionScheme::Upwind => {
                    if vel > 0.0 {
                        -vel * (mid - minus) / h
                    } else {
                        -vel * (plus - mid) / h
                    }
                }
            }
        };
        next.values
            .par_chunks_mut(n * n)
            .enumerate()
            .for_each(|(i, plane)| {
                let (im, ip) = (lo(i), hi(i));
                for j in 0..n {
                    let (jm, jp) = (lo(j), hi(j));
                    for k in 0..n {
                        let (km, kp) = (lo(k), hi(k));
                        let at = |a: usize, b: usize, d: usize| c[(a * n + b) * n + d];
                        let mid = at(i, j, k);
                        let (xm, xp) = (at(im, j, k), at(ip, j, k));
                        let (ym, yp) = (at(i, jm, k), at(i, jp, k));
                        let (zm, zp) = (at(i, j, km), at(i, j, kp));
                        let diffusion = inv_h2
                            * (dx * (xp - 2.0 * mid + xm)
                                + dy * (yp - 2.0 * mid + ym)
                                + dz * (zp - 2.0 * mid + zm));
                        let advection =
                            adv(v[0], xm, mid, xp) + adv(v[1], ym, mid, yp) + adv(v[2], zm, mid, zp);
                        let idx = (i * n + j) * n + k;
                        plane[j * n + k] = mid
                            + dt * (diffusion + advection - sink * mid + src * self.source[idx]);
                    }
                }
            });
        next.time = state.time + dt;
        if let Some(bad) = next
            .values
            .iter()
            .position(|x| !x.is_finite() || x.abs() > self.blowup_limit)
        {
            return Err(Error::numerical(
                "grid solver",
                format!(
                    "value {} at node {} exceeds {} at t={}s; reduce the time step (dt={}s, limit {}s)",
                    next.values[bad],
                    bad,
                    self.blowup_limit,
                    next.time,
                    dt,
                    BoxGrid::stability_limit(&self.params, h, self.scheme)
                ),
            ));
        }
        Ok(())
    }

    /// Trapezoid-rule volume integral of the state, µM·µm³.
    pub fn total_mass(&self, state: &PdeState) -> f64 {
        trapezoid_integral(&self.axes, &state.values)
    }

    /// Integrates from a zero state up to `horizon`, recording probes and
    /// diagnostics every `record_dt` (a multiple of the step) and field
    /// snapshots at the steps nearest `snapshot_times`.
    pub fn run(
        &self,
        gamma: &ReleaseProfile,
        probes: &[[f64; 3]],
        snapshot_times: &[f64],
        horizon: f64,
        record_dt: f64,
    ) -> Result<GridRun> {
        let dt = self.grid.dt;
        let stride_f = record_dt / dt;
        let stride = stride_f.round();
        if stride < 1.0 || (stride_f - stride).abs() > 1e-6 {
            return Err(Error::Grid(format!(
                "record interval {record_dt}s is not a multiple of the step {dt}s"
            )));
        }
        let stride = stride as usize;
        let steps = (horizon / dt + 1e-9).floor() as usize;
        if gamma.horizon() + 1e-9 < steps as f64 * dt {
            return Err(Error::Grid(format!(
                "release profile ends at {}s but the run needs {}s",
                gamma.horizon(),
                steps as f64 * dt
            )));
        }
        for p in probes {
            trilinear(&self.axes, &self.zero_state().values, *p)?;
        }
        let snap_steps: Vec<usize> = snapshot_times
            .iter()
            .map(|&t| {
                if !(0.0..=steps as f64 * dt + 1e-9).contains(&t) {
                    Err(Error::Grid(format!("snapshot time {t}s outside [0, {horizon}]s")))
                } else {
                    Ok((t / dt).round() as usize)
                }
            })
            .collect::<Result<_>>()?;

        let margin = BoxGrid::stability_limit(&self.params, self.grid.spacing, self.scheme) / dt;
        let mut field = ConcentrationField::zeros(
            self.axes,
            snap_steps.iter().map(|&s| s as f64 * dt).collect(),
            Provenance::Grid,
        );
        let mut series = ProbeSeries {
            points: probes.to_vec(),
            times: Vec::new(),
            values: vec![Vec::new(); probes.len()],
        };
        let mut diagnostics = Vec::new();
        let mut state = self.zero_state();
        let mut scratch = self.zero_state();
        let mut clamped = 0usize;
        let mut peak = 0.0f64;

        for step in 0..=steps {
            if step > 0 {
                let g = gamma.gamma_at(state.time + 0.5 * dt);
                self.step_into(&state, g, &mut scratch)?;
                std::mem::swap(&mut state, &mut scratch);
                state.time = step as f64 * dt;
                let (max, n_clamped) = clamp_negative(&mut state.values);
                clamped += n_clamped;
                peak = peak.max(max);
            }
            for (si, _) in snap_steps.iter().enumerate().filter(|(_, &s)| s == step) {
                field.slab_mut(si).copy_from_slice(&state.values);
            }
            if step % stride == 0 {
                series.times.push(state.time);
                for (p, pt) in probes.iter().enumerate() {
                    series.values[p].push(trilinear(&self.axes, &state.values, *pt)?);
                }
                let (min, max) = state
                    .values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                diagnostics.push(GridDiagnostic {
                    t: state.time,
                    mass: self.total_mass(&state),
                    clamped,
                    min,
                    max,
                    stability_margin: margin,
                });
            }
        }
        field.clamped = clamped;
        Ok(GridRun {
            field,
            probes: series,
            diagnostics,
            peak,
        })
    }
}

fn clamp_negative(values: &mut [f64]) -> (f64, usize) {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let floor = -CLAMP_FRACTION * max;
    let mut n = 0;
    for v in values.iter_mut() {
        if *v < floor {
            *v = 0.0;
            n += 1;
        }
    }
    (max, n)
}

pub fn write_diagnostics_csv<W: std::io::Write>(rows: &[GridDiagnostic], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "mass", "clamped", "min", "max", "stability_margin"])?;
    for r in rows {
        w.write_record(&[
            r.t.to_string(),
            r.mass.to_string(),
            r.clamped.to_string(),
            r.min.to_string(),
            r.max.to_string(),
            r.stability_margin.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("diagnostics csv", e))?;
    Ok(())
}
