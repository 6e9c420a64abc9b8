//! Vesicle transport through the extracellular matrix.
//!
//! Two independent solvers share the parameter set and output types here:
//! [`analytic`] evaluates the separable free-space Green's function solution
//! spectrally, [`grid`] integrates the full boundary-value problem with finite
//! differences on a cube.

pub mod analytic;
pub mod grid;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the extracellular binding rate enters the decay term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegradationConvention {
    /// Decay rate `k_e`, as in the closed-form convolution.
    PaperLiteral,
    /// Decay rate `k_e / α`, as in the transport PDE.
    #[default]
    AlphaScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Free diffusion coefficient D, µm²/s.
    pub diffusion: f64,
    /// Tortuosity per axis; the effective diffusivity is D/λ².
    pub tortuosity: [f64; 3],
    /// Bulk flow, µm/s.
    pub velocity: [f64; 3],
    /// Volume fraction α accessible to vesicles.
    pub volume_fraction: f64,
    /// Extracellular binding rate, s⁻¹.
    pub k_e: f64,
    /// Vesicle half-life, s. Only the grid solver uses it.
    pub half_life: Option<f64>,
    /// Release site, µm.
    pub source_center: [f64; 3],
    /// Gaussian source widths, µm.
    pub source_sigma: [f64; 3],
    pub degradation_convention: DegradationConvention,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            tortuosity: [1.1, 1.4, 1.7],
            velocity: [0.0; 3],
            volume_fraction: 0.6,
            k_e: 0.2,
            half_life: None,
            source_center: [0.0, 0.0, 20.0],
            source_sigma: [7.0; 3],
            degradation_convention: DegradationConvention::AlphaScaled,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion > 0.0) || !self.diffusion.is_finite() {
            return Err(Error::validation("diffusion", "must be positive"));
        }
        for a in 0..3 {
            if !(self.tortuosity[a] >= 1.0) || !self.tortuosity[a].is_finite() {
                return Err(Error::validation(
                    format!("tortuosity[{a}]"),
                    format!("must be >= 1, got {}", self.tortuosity[a]),
                ));
            }
            if !(self.source_sigma[a] > 0.0) {
                return Err(Error::validation(
                    format!("source_sigma[{a}]"),
                    format!("must be positive, got {}", self.source_sigma[a]),
                ));
            }
            if !self.velocity[a].is_finite() || !self.source_center[a].is_finite() {
                return Err(Error::validation(format!("velocity[{a}]"), "must be finite"));
            }
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return Err(Error::validation(
                "volume_fraction",
                format!("must lie in (0, 1], got {}", self.volume_fraction),
            ));
        }
        if !(self.k_e >= 0.0) || !self.k_e.is_finite() {
            return Err(Error::validation("k_e", format!("must be >= 0, got {}", self.k_e)));
        }
        if let Some(h) = self.half_life {
            if !(h > 0.0) {
                return Err(Error::validation("half_life", format!("must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// Effective diffusivity D/λ² per axis, µm²/s.
    pub fn axis_diffusivity(&self) -> [f64; 3] {
        self.tortuosity.map(|l| self.diffusion / (l * l))
    }

    /// First-order decay rate applied to the free vesicles, s⁻¹.
    pub fn decay_rate(&self) -> f64 {
        match self.degradation_convention {
            DegradationConvention::PaperLiteral => self.k_e,
            DegradationConvention::AlphaScaled => self.k_e / self.volume_fraction,
        }
    }

    /// Unnormalized Gaussian source shape at `x` (peak value 1).
    pub fn source_shape(&self, x: [f64; 3]) -> f64 {
        let mut e = 0.0;
        for a in 0..3 {
            let d = x[a] - self.source_center[a];
            e += d * d / (2.0 * self.source_sigma[a] * self.source_sigma[a]);
        }
        (-e).exp()
    }

    /// Spatial integral of the source shape, µm³.
    pub fn source_volume(&self) -> f64 {
        let root_two_pi = (2.0 * std::f64::consts::PI).sqrt();
        self.source_sigma.iter().map(|s| root_two_pi * s).product()
    }
}

/// Uniformly spaced coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub origin: f64,
    pub spacing: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(origin: f64, spacing: f64, len: usize) -> Self {
        Self {
            origin,
            spacing,
            len,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn end(&self) -> f64 {
        self.coord(self.len - 1)
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = 1e-9 * self.spacing;
        x >= self.origin - tol && x <= self.end() + tol
    }

    /// Cell index and fractional offset for linear interpolation.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !self.contains(x) || self.len < 2 {
            return None;
        }
        let u = ((x - self.origin) / self.spacing).clamp(0.0, (self.len - 1) as f64);
        let i = (u.floor() as usize).min(self.len - 2);
        Some((i, u - i as f64))
    }

    /// Linear interpolation of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        let (i, f) = self.locate(x)?;
        Some(values[i] * (1.0 - f) + values[i + 1] * f)
    }

    pub fn same_as(&self, other: &Axis) -> bool {
        self.len == other.len
            && (self.origin - other.origin).abs() <= 1e-9 * self.spacing.max(1.0)
            && (self.spacing - other.spacing).abs() <= 1e-9 * self.spacing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Grid,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Grid => "grid",
        }
    }
}

/// Concentration samples C(x, t), µM, stored row-major over (t, x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationField {
    pub axes: [Axis; 3],
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
    /// Number of negative samples that were clamped to zero.
    pub clamped: usize,
}

/// Ringing below this fraction of the field maximum is clamped to zero.
pub const CLAMP_FRACTION: f64 = 1e-9;

impl ConcentrationField {
    pub fn zeros(axes: [Axis; 3], times: Vec<f64>, provenance: Provenance) -> Self {
        let n = times.len() * axes.iter().map(|a| a.len).product::<usize>();
        Self {
            axes,
            times,
            values: vec![0.0; n],
            provenance,
            clamped: 0,
        }
    }

    pub fn slab_len(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.axes[1].len + j) * self.axes[2].len + k
    }

    pub fn slab(&self, t: usize) -> &[f64] {
        let n = self.slab_len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn slab_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.slab_len();
        &mut self.values[t * n..(t + 1) * n]
    }

    pub fn at(&self, t: usize, i: usize, j: usize, k: usize) -> f64 {
        self.slab(t)[self.index(i, j, k)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Trilinear interpolation of snapshot `t` at `p`.
    pub fn interpolate(&self, t: usize, p: [f64; 3]) -> Result<f64> {
        trilinear(&self.axes, self.slab(t), p)
    }

    /// Trapezoid-rule volume integral of snapshot `t`, µM·µm³.
    pub fn integral(&self, t: usize) -> f64 {
        trapezoid_integral(&self.axes, self.slab(t))
    }

    /// Concentration-weighted mean position of snapshot `t`.
    pub fn centroid(&self, t: usize) -> [f64; 3] {
        let slab = self.slab(t);
        let mut m = 0.0;
        let mut s = [0.0; 3];
        for i in 0..self.axes[0].len {
            for j in 0..self.axes[1].len {
                for k in 0..self.axes[2].len {
                    let c = slab[self.index(i, j, k)];
                    m += c;
                    s[0] += c * self.axes[0].coord(i);
                    s[1] += c * self.axes[1].coord(j);
                    s[2] += c * self.axes[2].coord(k);
                }
            }
        }
        if m == 0.0 {
            return [f64::NAN; 3];
        }
        s.map(|v| v / m)
    }

    /// Clamps samples below `-CLAMP_FRACTION * max` to zero and records how
    /// many were touched.
    pub fn clamp_ringing(&mut self) {
        let floor = -CLAMP_FRACTION * self.max();
        let mut n = 0;
        for v in &mut self.values {
            if *v < floor {
                *v = 0.0;
                n += 1;
            }
        }
        self.clamped += n;
    }
}

pub(crate) fn trilinear(axes: &[Axis; 3], slab: &[f64], p: [f64; 3]) -> Result<f64> {
    let mut loc = [(0usize, 0.0f64); 3];
    for a in 0..3 {
        loc[a] = axes[a].locate(p[a]).ok_or_else(|| {
            Error::Grid(format!(
                "point {:?} lies outside axis {} [{}, {}]",
                p,
                a,
                axes[a].origin,
                axes[a].end()
            ))
        })?;
    }
    let (ny, nz) = (axes[1].len, axes[2].len);
    let mut acc = 0.0;
    for di in 0..2 {
        let wx = if di == 0 { 1.0 - loc[0].1 } else { loc[0].1 };
        if wx == 0.0 {
            continue;
        }
        for dj in 0..2 {
            let wy = if dj == 0 { 1.0 - loc[1].1 } else { loc[1].1 };
            if wy == 0.0 {
                continue;
            }
            for dk in 0..2 {
                let wz = if dk == 0 { 1.0 - loc[2].1 } else { loc[2].1 };
                if wz == 0.0 {
                    continue;
                }
                let idx = ((loc[0].0 + di) * ny + loc[1].0 + dj) * nz + loc[2].0 + dk;
                acc += wx * wy * wz * slab[idx];
            }
        }
    }
    Ok(acc)
}

pub(crate) fn trapezoid_weights(axis: &Axis) -> Vec<f64> {
    let mut w = vec![axis.spacing; axis.len];
    if axis.len > 1 {
        w[0] *= 0.5;
        w[axis.len - 1] *= 0.5;
    }
    w
}

pub(crate) fn trapezoid_integral(axes: &[Axis; 3], slab: &[f64]) -> f64 {
    let w = axes.map(|a| trapezoid_weights(&a));
    let (ny, nz) = (axes[1].len, axes[2].len);
    let mut total = 0.0;
    for i in 0..axes[0].len {
        for j in 0..ny {
            let wij = w[0][i] * w[1][j];
            let row = &slab[(i * ny + j) * nz..(i * ny + j + 1) * nz];
            total += wij * row.iter().zip(&w[2]).map(|(c, wk)| c * wk).sum::<f64>();
        }
    }
    total
}

/// Concentration time series sampled at fixed points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub points: Vec<[f64; 3]>,
    pub times: Vec<f64>,
    /// `values[p][t]` for point `p`.
    pub values: Vec<Vec<f64>>,
}

impl ProbeSeries {
    pub fn series(&self, point: usize) -> &[f64] {
        &self.values[point]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "y", "z", "c"])?;
        for (ti, t) in self.times.iter().enumerate() {
            for (p, pt) in self.points.iter().enumerate() {
                w.write_record(&[
                    t.to_string(),
                    pt[0].to_string(),
                    pt[1].to_string(),
                    pt[2].to_string(),
                    self.values[p][ti].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("probe csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != ["t", "x", "y", "z", "c"] {
            return Err(Error::Format {
                format: "probe csv",
                message: "expected header `t,x,y,z,c`".into(),
            });
        }
        let mut out = ProbeSeries {
            points: Vec::new(),
            times: Vec::new(),
            values: Vec::new(),
        };
        for rec in rdr.records() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format {
                    format: "probe csv",
                    message: e.to_string(),
                })?;
            if v.len() != 5 {
                return Err(Error::Format {
                    format: "probe csv",
                    message: format!("row has {} fields", v.len()),
                });
            }
            let pt = [v[1], v[2], v[3]];
            let p = match out.points.iter().position(|q| *q == pt) {
                Some(p) => p,
                None => {
                    out.points.push(pt);
                    out.values.push(Vec::new());
                    out.points.len() - 1
                }
            };
            if p == 0 {
                out.times.push(v[0]);
            }
            out.values[p].push(v[4]);
        }
        Ok(out)
    }
}

/// Relative error norms between two series or fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    /// `max |a - b| / max |a|`.
    pub rel_linf: f64,
    /// `||a - b||₂ / ||a||₂`.
    pub rel_l2: f64,
}

impl ErrorNorms {
    pub(crate) fn from_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut dmax, mut amax, mut d2, mut a2) = (0.0f64, 0.0f64, 0.0, 0.0);
        for (a, b) in pairs {
            let d = (a - b).abs();
            dmax = dmax.max(d);
            amax = amax.max(a.abs());
            d2 += d * d;
            a2 += a * a;
        }
        let ratio = |num: f64, den: f64| {
            if num == 0.0 {
                0.0
            } else if den == 0.0 {
                f64::INFINITY
            } else {
                num / den
            }
        };
        Self {
            rel_linf: ratio(dmax, amax),
            rel_l2: ratio(d2.sqrt(), a2.sqrt()),
        }
    }
}

/// Error norms of `b` against the reference `a` over all points and times.
pub fn compare_series(a: &ProbeSeries, b: &ProbeSeries) -> Result<ErrorNorms> {
    if a.points.len() != b.points.len() || a.times.len() != b.times.len() {
        return Err(Error::Grid(format!(
            "probe layouts differ: {}x{} vs {}x{}",
            a.points.len(),
            a.times.len(),
            b.points.len(),
            b.times.len()
        )));
    }
    for (ta, tb) in a.times.iter().zip(&b.times) {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(Error::Grid(format!("probe times differ: {ta} vs {tb}")));
        }
    }
    Ok(ErrorNorms::from_pairs(
        a.values
            .iter()
            .zip(&b.values)
            .flat_map(|(x, y)| x.iter().copied().zip(y.iter().copied())),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_conventions() {
        let p = ChannelParams {
            k_e: 0.6,
            volume_fraction: 0.6,
            ..Default::default()
        };
        assert!((p.decay_rate() - 1.0).abs() < 1e-15);
        let q = ChannelParams {
            degradation_convention: DegradationConvention::PaperLiteral,
            ..p
        };
        assert_eq!(q.decay_rate(), 0.6);
    }

    #[test]
    fn validation() {
        assert!(ChannelParams::default().validate().is_ok());
        let bad = ChannelParams {
            tortuosity: [1.1, 0.9, 1.2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ChannelParams {
            volume_fraction: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trilinear_reproduces_affine_functions() {
        let axes = [Axis::new(-1.0, 0.5, 5), Axis::new(0.0, 1.0, 4), Axis::new(2.0, 0.25, 9)];
        let mut f = ConcentrationField::zeros(axes, vec![0.0], Provenance::Grid);
        for i in 0..5 {
            for j in 0..4 {
                for k in 0..9 {
                    let idx = f.index(i, j, k);
                    f.values[idx] =
                        1.0 + 2.0 * axes[0].coord(i) - axes[1].coord(j) + 0.5 * axes[2].coord(k);
                }
            }
        }
        let p = [0.13, 2.7, 3.1];
        let v = f.interpolate(0, p).unwrap();
        assert!((v - (1.0 + 0.26 - 2.7 + 1.55)).abs() < 1e-12);
        assert!(f.interpolate(0, [5.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn trapezoid_of_uniform_cube() {
        let axes = [Axis::new(-20.0, 1.0, 41), Axis::new(-20.0, 1.0, 41), Axis::new(0.0, 1.0, 41)];
        let slab = vec![1.0; 41 * 41 * 41];
        assert!((trapezoid_integral(&axes, &slab) - 64000.0).abs() < 1e-8);
    }

    #[test]
    fn norms() {
        let a = [1.0, 2.0, -3.0];
        let n = ErrorNorms::from_pairs(a.iter().map(|&x| (x, 1.01 * x)));
        assert!((n.rel_linf - 0.01).abs() < 1e-12);
        assert!((n.rel_l2 - 0.01).abs() < 1e-12);
        let z = ErrorNorms::from_pairs(a.iter().map(|&x| (x, x)));
        assert_eq!(z.rel_linf, 0.0);
    }
}
