//! Ca²⁺-modulated vesicle release.
//!
//! The release rate is a sum of Hill terms evaluated on Ca²⁺ traces from the
//! submembrane space and the L-type channel microdomain. Dividing by the mean
//! vesicle concentration inside a multivesicular body gives the rate of a
//! Poisson release process, which is then sampled per interval.

pub mod poisson;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Ratio between the open-channel microdomain Ca²⁺ level and the
/// submembrane level in the synthetic drive.
pub const LTCC_OPEN_GAIN: f64 = 10.0;

/// Hill parameters of the exocytosis rate law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExocytosisParams {
    /// Hill exponent of the submembrane term.
    pub ell_n: f64,
    /// Half-saturation of the submembrane term, µM.
    pub m_n: f64,
    /// Hill exponent of the channel-microdomain terms.
    pub ell_m: f64,
    /// Half-saturation of the channel-microdomain terms, µM.
    pub m_m: f64,
}

impl Default for ExocytosisParams {
    fn default() -> Self {
        Self {
            ell_n: 4.0,
            m_n: 2.0,
            ell_m: 4.0,
            m_m: 20.0,
        }
    }
}

impl ExocytosisParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ell_n", self.ell_n),
            ("m_n", self.m_n),
            ("ell_m", self.ell_m),
            ("m_m", self.m_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvbParams {
    /// Mean number of vesicles per multivesicular body.
    pub mean_ev_count: f64,
    /// Body diameter, µm.
    pub diameter_um: f64,
}

impl Default for MvbParams {
    fn default() -> Self {
        Self {
            mean_ev_count: 24.0,
            diameter_um: 0.5,
        }
    }
}

/// Sampled Ca²⁺ traces and the channel gating product feeding the rate law.
#[derive(Debug, Clone, PartialEq)]
pub struct CalciumDrive {
    pub times: Vec<f64>,
    pub ca_sub: Vec<f64>,
    pub ca_open: Vec<f64>,
    pub ca_close: Vec<f64>,
    /// Product of the channel gating variables, in [0, 1].
    pub gate: Vec<f64>,
}

/// Release rate series γ(t), µM/s, with the MVB concentration that converts
/// it to an event rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseProfile {
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Mean vesicle concentration inside one MVB, µM.
    pub mvb_concentration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseEventSeries {
    pub interval_start_times: Vec<f64>,
    pub counts: Vec<u64>,
    pub dt: f64,
    pub rng_seed: u64,
}

/// Returns the common step of a strictly increasing, uniformly spaced axis.
pub(crate) fn uniform_step(times: &[f64], what: &str) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::validation(what, "need at least two samples"));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::validation(what, "times must be strictly increasing"));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::validation(
                what,
                format!("non-uniform sampling at index {}: step {} vs {}", i, w[1] - w[0], dt),
            ));
        }
    }
    Ok(dt)
}

impl CalciumDrive {
    pub fn new(
        times: Vec<f64>,
        ca_sub: Vec<f64>,
        ca_open: Vec<f64>,
        ca_close: Vec<f64>,
        gate: Vec<f64>,
    ) -> Result<Self> {
        let drive = Self {
            times,
            ca_sub,
            ca_open,
            ca_close,
            gate,
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> Result<f64> {
        uniform_step(&self.times, "drive.t")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        for (what, s) in [
            ("ca_sub", &self.ca_sub),
            ("ca_open", &self.ca_open),
            ("ca_close", &self.ca_close),
            ("gate", &self.gate),
        ] {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    found: s.len(),
                });
            }
        }
        self.dt()?;
        for (what, s) in [
            ("ca_sub", &self.ca_sub),
            ("ca_open", &self.ca_open),
            ("ca_close", &self.ca_close),
        ] {
            if let Some(i) = s.iter().position(|&c| !(c >= 0.0) || !c.is_finite()) {
                return Err(Error::validation(
                    format!("drive.{what}[{i}]"),
                    format!("concentration must be finite and >= 0, got {}", s[i]),
                ));
            }
        }
        if let Some(i) = self.gate.iter().position(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::validation(
                format!("drive.gate[{i}]"),
                format!("gate must lie in [0, 1], got {}", self.gate[i]),
            ));
        }
        Ok(())
    }

    /// Reads the `t,ca_sub,ca_open,ca_close,gate` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let expected = ["t", "ca_sub", "ca_open", "ca_close", "gate"];
        if header.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(Error::Format {
                format: "drive csv",
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Format {
                    format: "drive csv",
                    message: format!("row {} has {} fields", line + 2, rec.len()),
                });
            }
            for (col, field) in cols.iter_mut().zip(rec.iter()) {
                col.push(field.trim().parse::<f64>().map_err(|e| Error::Format {
                    format: "drive csv",
                    message: format!("row {}: {e}", line + 2),
                })?);
            }
        }
        let [t, s, o, c, g] = cols;
        Self::new(t, s, o, c, g)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "ca_sub", "ca_open", "ca_close", "gate"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.times[i].to_string(),
                self.ca_sub[i].to_string(),
                self.ca_open[i].to_string(),
                self.ca_close[i].to_string(),
                self.gate[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("drive csv", e))?;
        Ok(())
    }
}

impl ReleaseProfile {
    pub fn new(times: Vec<f64>, gamma: Vec<f64>, mvb_concentration: f64) -> Result<Self> {
        if times.len() != gamma.len() {
            return Err(Error::LengthMismatch {
                what: "gamma",
                expected: times.len(),
                found: gamma.len(),
            });
        }
        if !(mvb_concentration > 0.0) {
            return Err(Error::validation(
                "mvb_concentration",
                format!("must be positive, got {mvb_concentration}"),
            ));
        }
        if let Some(i) = gamma.iter().position(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::validation(
                format!("gamma[{i}]"),
                format!("release rate must be finite and >= 0, got {}", gamma[i]),
            ));
        }
        uniform_step(&times, "gamma.t")?;
        Ok(Self {
            times,
            gamma,
            mvb_concentration,
        })
    }

    pub fn dt(&self) -> f64 {
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Linear interpolation of γ; zero outside the sampled window.
    pub fn gamma_at(&self, t: f64) -> f64 {
        let t0 = self.times[0];
        let dt = self.dt();
        let x = (t - t0) / dt;
        let last = (self.times.len() - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return 0.0;
        }
        let x = x.clamp(0.0, last);
        let i = (x.floor() as usize).min(self.times.len() - 2);
        let f = x - i as f64;
        self.gamma[i] * (1.0 - f) + self.gamma[i + 1] * f
    }

    /// Linearly resamples onto `t0, t0 + dt, ...` up to the current horizon.
    pub fn resample(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("resample step must be positive, got {dt}")));
        }
        let t0 = self.times[0];
        let n = ((self.horizon() - t0) / dt + 1e-9).floor() as usize;
        let times: Vec<f64> = (0..=n).map(|i| t0 + i as f64 * dt).collect();
        let gamma = times.iter().map(|&t| self.gamma_at(t)).collect();
        Self::new(times, gamma, self.mvb_concentration)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.times.clone(),
            self.gamma.iter().map(|g| g * factor).collect(),
            self.mvb_concentration,
        )
    }
}

/// Hill kernel `c^ℓ / (c^ℓ + m^ℓ)`.
pub fn hill(c: f64, ell: f64, m: f64) -> Result<f64> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("hill: concentration must be >= 0, got {c}")));
    }
    if !(m > 0.0) || !(ell > 0.0) {
        return Err(Error::Domain(format!(
            "hill: need ell > 0 and m > 0, got ell={ell}, m={m}"
        )));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    // written in terms of m/c so large exponents do not overflow
    let r = (m / c).powf(ell);
    Ok(1.0 / (1.0 + r))
}

/// Per-sample release rate γ = γ_s + γ_LTCC, before amplitude scaling.
pub fn release_rate(drive: &CalciumDrive, p: &ExocytosisParams) -> Result<Vec<f64>> {
    drive.validate()?;
    p.validate()?;
    (0..drive.len())
        .map(|i| {
            let g = drive.gate[i];
            Ok(hill(drive.ca_sub[i], p.ell_n, p.m_n)?
                + g * hill(drive.ca_open[i], p.ell_m, p.m_m)?
                + (1.0 - g) * hill(drive.ca_close[i], p.ell_m, p.m_m)?)
        })
        .collect()
}

/// Mean vesicle concentration inside one MVB, µM: `6 N / (π N_A d³)`.
pub fn mvb_mean_concentration(p: &MvbParams) -> Result<f64> {
    if !(p.mean_ev_count > 0.0) || !(p.diameter_um > 0.0) {
        return Err(Error::Domain(format!(
            "mvb parameters must be positive, got count={} diameter={}um",
            p.mean_ev_count, p.diameter_um
        )));
    }
    let volume_l = std::f64::consts::PI / 6.0 * units::cubed_um_to_liters(p.diameter_um);
    Ok(units::count_in_liters_to_um(p.mean_ev_count, volume_l))
}

/// Builds the scaled release profile for a drive.
pub fn release_profile(
    drive: &CalciumDrive,
    exo: &ExocytosisParams,
    mvb: &MvbParams,
    gamma_scale: f64,
) -> Result<ReleaseProfile> {
    let gamma = release_rate(drive, exo)?
        .into_iter()
        .map(|g| g * gamma_scale)
        .collect();
    ReleaseProfile::new(drive.times.clone(), gamma, mvb_mean_concentration(mvb)?)
}

/// Poisson event rate φ = γ / E[C_MVB], s⁻¹.
pub fn event_rate(profile: &ReleaseProfile) -> Result<Vec<f64>> {
    if !(profile.mvb_concentration > 0.0) {
        return Err(Error::Domain(format!(
            "mvb concentration must be positive, got {}",
            profile.mvb_concentration
        )));
    }
    Ok(profile
        .gamma
        .iter()
        .map(|g| g / profile.mvb_concentration)
        .collect())
}

/// Samples release counts `k_i ~ Poisson(φ_i Δt)` for each interval.
pub fn sample_events(phi: &[f64], dt: f64, seed: u64) -> Result<ReleaseEventSeries> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if let Some(i) = phi.iter().position(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain(format!("event rate at {i} is {}", phi[i])));
    }
    let counts = phi
        .par_iter()
        .enumerate()
        .map(|(i, &rate)| poisson::sample(&mut poisson::substream(seed, i as u64), rate * dt))
        .collect();
    Ok(ReleaseEventSeries {
        interval_start_times: (0..phi.len()).map(|i| i as f64 * dt).collect(),
        counts,
        dt,
        rng_seed: seed,
    })
}

impl ReleaseEventSeries {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "count"])?;
        for (t, k) in self.interval_start_times.iter().zip(&self.counts) {
            w.write_record(&[t.to_string(), k.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("events csv", e))?;
        Ok(())
    }
}

/// Periodic Ca²⁺ traces standing in for an upstream cardiomyocyte model.
///
/// Every beat starts a `sin²` transient of width `pulse_duration` (clipped to
/// the beat period) and height `pulse_amplitude · pulse_duration`. The
/// submembrane and closed-channel traces follow the transient, the open-channel
/// microdomain sees [`LTCC_OPEN_GAIN`] times more, and the gate follows the
/// normalized pulse shape.
pub fn synth_calcium_drive(
    heart_rate_bpm: f64,
    pulse_amplitude: f64,
    pulse_duration: f64,
    horizon: f64,
    dt: f64,
) -> Result<CalciumDrive> {
    for (name, v) in [
        ("heart_rate_bpm", heart_rate_bpm),
        ("pulse_duration", pulse_duration),
        ("horizon", horizon),
        ("dt", dt),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(pulse_amplitude >= 0.0) {
        return Err(Error::Domain(format!(
            "pulse amplitude must be >= 0, got {pulse_amplitude}"
        )));
    }
    let period = units::bpm_to_period(heart_rate_bpm)?;
    if dt >= period {
        return Err(Error::Domain(format!(
            "dt {dt}s does not resolve the beat period {period}s"
        )));
    }
    let width = pulse_duration.min(period);
    let peak = pulse_amplitude * width;
    let n = (horizon / dt + 1e-9).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let shape: Vec<f64> = times
        .iter()
        .map(|&t| {
            let beat = (t / period + 1e-9).floor();
            let phase = (t - beat * period).max(0.0);
            if pulse_amplitude > 0.0 && phase < width {
                (std::f64::consts::PI * phase / width).sin().powi(2)
            } else {
                0.0
            }
        })
        .collect();
    let ca_sub: Vec<f64> = shape.iter().map(|s| peak * s).collect();
    CalciumDrive::new(
        times,
        ca_sub.clone(),
        ca_sub.iter().map(|c| c * LTCC_OPEN_GAIN).collect(),
        ca_sub,
        shape,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_drive(n: usize, sub: f64, open: f64, close: f64, gate: f64) -> CalciumDrive {
        CalciumDrive::new(
            (0..n).map(|i| i as f64 * 0.01).collect(),
            vec![sub; n],
            vec![open; n],
            vec![close; n],
            vec![gate; n],
        )
        .unwrap()
    }

    #[test]
    fn hill_examples() {
        assert_eq!(hill(0.0, 2.0, 1.0).unwrap(), 0.0);
        for ell in [0.5, 1.0, 3.7, 12.0] {
            assert!((hill(2.5, ell, 2.5).unwrap() - 0.5).abs() < 1e-15);
        }
        // high-precision reference: 8/9
        assert!((hill(2.0, 3.0, 1.0).unwrap() - 0.888_888_888_888_888_9).abs() < 1e-15);
    }

    #[test]
    fn hill_domain_errors() {
        assert!(hill(-1.0, 2.0, 1.0).is_err());
        assert!(hill(1.0, 2.0, 0.0).is_err());
        assert!(hill(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn release_rate_examples() {
        let p = ExocytosisParams::default();
        let g = release_rate(&constant_drive(10, 0.0, 0.0, 0.0, 0.3), &p).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));

        let g = release_rate(&constant_drive(10, p.m_n, p.m_m, 7.0, 1.0), &p).unwrap();
        assert!(g.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        let drive = synth_calcium_drive(100.0, 20.0, 0.3, 2.0, 0.01).unwrap();
        let half = CalciumDrive {
            gate: vec![0.5; drive.len()],
            ca_close: drive.ca_open.clone(),
            ..drive
        };
        let g = release_rate(&half, &p).unwrap();
        for i in 0..half.len() {
            let expect = hill(half.ca_sub[i], p.ell_n, p.m_n).unwrap()
                + hill(half.ca_open[i], p.ell_m, p.m_m).unwrap();
            assert!((g[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn release_rate_length_mismatch() {
        let mut d = constant_drive(5, 1.0, 1.0, 1.0, 0.5);
        d.gate.pop();
        assert!(matches!(
            release_rate(&d, &ExocytosisParams::default()),
            Err(Error::LengthMismatch { what: "gate", .. })
        ));
    }

    #[test]
    fn mvb_concentration_examples() {
        let c = mvb_mean_concentration(&MvbParams::default()).unwrap();
        // 50-digit evaluation: 0.60890802358901789888 µM
        assert!((c - 0.608_908_023_589_017_9).abs() < 1e-12);
        let big = mvb_mean_concentration(&MvbParams {
            diameter_um: 1.0,
            ..MvbParams::default()
        })
        .unwrap();
        assert!((c / big - 8.0).abs() < 1e-12);
        assert!(mvb_mean_concentration(&MvbParams {
            mean_ev_count: 0.0,
            ..MvbParams::default()
        })
        .is_err());
    }

    #[test]
    fn event_rate_examples() {
        let t: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let p = ReleaseProfile::new(t.clone(), vec![0.0; 4], 0.5).unwrap();
        assert!(event_rate(&p).unwrap().iter().all(|&x| x == 0.0));
        let p = ReleaseProfile::new(t.clone(), vec![0.5; 4], 0.5).unwrap();
        assert!(event_rate(&p).unwrap().iter().all(|&x| x == 1.0));
        let mvb = mvb_mean_concentration(&MvbParams::default()).unwrap();
        let p = ReleaseProfile::new(t, vec![1.0; 4], mvb).unwrap();
        // 1 / 0.608908... = 1.6422841566544201
        assert!((event_rate(&p).unwrap()[0] - 1.642_284_156_654_420_1).abs() < 1e-12);
    }

    #[test]
    fn sample_events_zero_rate() {
        let ev = sample_events(&[0.0; 100], 0.005, 9).unwrap();
        assert!(ev.counts.iter().all(|&k| k == 0));
        assert!(sample_events(&[1.0], 0.0, 9).is_err());
    }

    #[test]
    fn sample_events_mean_of_four() {
        let n = 100_000;
        let ev = sample_events(&vec![800.0; n], 0.005, 21).unwrap();
        let mean = ev.counts.iter().sum::<u64>() as f64 / n as f64;
        let sigma = 2.0 / (n as f64).sqrt();
        assert!((mean - 4.0).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn sample_events_tail_probability() {
        let n = 1_000_000;
        let ev = sample_events(&vec![1.0; n], 0.005, 77).unwrap();
        let p = 1.0 - (-0.005f64).exp();
        let hits = ev.counts.iter().filter(|&&k| k >= 1).count() as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits - p).abs() < 3.0 * sigma, "{hits} vs {p}");
    }

    #[test]
    fn sample_events_reproducible() {
        let phi: Vec<f64> = (0..5000).map(|i| (i % 97) as f64 * 30.0).collect();
        let a = sample_events(&phi, 0.005, 5).unwrap();
        let b = sample_events(&phi, 0.005, 5).unwrap();
        let c = sample_events(&phi, 0.005, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn synth_drive_examples() {
        let d = synth_calcium_drive(90.0, 0.0, 0.2, 2.0, 0.005).unwrap();
        assert!(d.ca_sub.iter().chain(&d.ca_open).chain(&d.ca_close).chain(&d.gate).all(|&x| x == 0.0));

        assert_eq!(units::bpm_to_period(60.0).unwrap(), 1.0);
        let d = synth_calcium_drive(60.0, 10.0, 0.2, 3.0, 0.01).unwrap();
        let onsets = onset_times(&d);
        for w in onsets.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-9);
        }

        let d = synth_calcium_drive(120.0, 25.0, 0.2, 3.0, 0.005).unwrap();
        assert_eq!(onset_times(&d).len(), 6);

        assert!(synth_calcium_drive(120.0, 25.0, 0.2, 3.0, 0.5).is_err());
    }

    fn onset_times(d: &CalciumDrive) -> Vec<f64> {
        d.gate
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] == 0.0 && w[1] > 0.0)
            .map(|(i, _)| d.times[i])
            .collect()
    }

    #[test]
    fn drive_csv_round_trip() {
        let d = synth_calcium_drive(80.0, 15.0, 0.2, 1.0, 0.005).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,ca_sub,ca_open,ca_close,gate\n"));
        assert_eq!(CalciumDrive::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn drive_csv_rejects_bad_rows() {
        let bad_header = "t,ca,ca_open,ca_close,gate\n0,0,0,0,0\n";
        assert!(CalciumDrive::read_csv(bad_header.as_bytes()).is_err());
        let bad_gate = "t,ca_sub,ca_open,ca_close,gate\n0,0,0,0,0\n0.1,0,0,0,1.5\n";
        assert!(CalciumDrive::read_csv(bad_gate.as_bytes()).is_err());
        let uneven = "t,ca_sub,ca_open,ca_close,gate\n0,0,0,0,0\n0.1,0,0,0,0\n0.3,0,0,0,0\n";
        assert!(CalciumDrive::read_csv(uneven.as_bytes()).is_err());
    }

    #[test]
    fn counts_match_poisson_moments() {
        let n = 100_000usize;
        for (rate, seed) in [(0.5, 1u64), (3.0, 2), (9.5, 3), (12.0, 4), (40.0, 5)] {
            let ev = sample_events(&vec![rate; n], 1.0, seed).unwrap();
            let mean = ev.counts.iter().sum::<u64>() as f64 / n as f64;
            let var = ev.counts.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>()
                / (n - 1) as f64;
            let se_mean = (rate / n as f64).sqrt();
            let se_var = ((rate + 2.0 * rate * rate) / n as f64).sqrt();
            assert!((mean - rate).abs() < 4.0 * se_mean, "rate {rate}: mean {mean}");
            assert!((var - rate).abs() < 4.0 * se_var, "rate {rate}: var {var}");
        }
    }

    proptest! {
        #[test]
        fn gamma_bounded(sub in 0.0f64..100.0, open in 0.0f64..100.0, close in 0.0f64..100.0, gate in 0.0f64..=1.0) {
            let g = release_rate(&constant_drive(2, sub, open, close, gate), &ExocytosisParams::default()).unwrap();
            prop_assert!(g[0] >= 0.0 && g[0] <= 2.0);
        }

        #[test]
        fn hill_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, ell in 0.2f64..8.0, m in 0.1f64..30.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(hill(lo, ell, m).unwrap() <= hill(hi, ell, m).unwrap());
        }

        #[test]
        fn hill_scale_invariant(c in 0.01f64..50.0, ell in 0.2f64..8.0, m in 0.1f64..30.0, k in 0.01f64..100.0) {
            let a = hill(c, ell, m).unwrap();
            let b = hill(c * k, ell, m * k).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
