//! End-to-end runs: release, transport, uptake, artifacts.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::analytic::{AnalyticSolver, SpectralGrid};
use crate::channel::grid::{self, GridRun, GridSolver};
use crate::channel::{compare_series, ConcentrationField, ErrorNorms, ProbeSeries};
use crate::error::{Error, Result};
use crate::receiver::{self, DrivingSeries, ReceiverTrajectory};
use crate::release::{self, CalciumDrive, ReleaseEventSeries, ReleaseProfile};

pub use config::{ScenarioConfig, SolverChoice, OUTPUT_ROOT_ENV};

/// Relative error norms over nodes at least `interior_margin` µm from every
/// face of the sampled box, taking `a` as the reference.
pub fn compare_fields(a: &ConcentrationField, b: &ConcentrationField, interior_margin: f64) -> Result<ErrorNorms> {
    for d in 0..3 {
        if !a.axes[d].same_as(&b.axes[d]) {
            return Err(Error::Grid(format!("fields use different nodes on axis {d}")));
        }
    }
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(Error::Grid("fields are sampled at different times".into()));
    }
    let interior: [Vec<usize>; 3] = std::array::from_fn(|d| {
        let ax = a.axes[d];
        (0..ax.len)
            .filter(|&i| {
                let x = ax.coord(i);
                x - ax.origin >= interior_margin - 1e-9 && ax.end() - x >= interior_margin - 1e-9
            })
            .collect()
    });
    if interior.iter().any(|v| v.is_empty()) {
        return Err(Error::Grid(format!("margin {interior_margin}um leaves no interior nodes")));
    }
    let pairs = (0..a.times.len()).flat_map(|t| {
        let interior = &interior;
        interior[0].iter().flat_map(move |&i| {
            interior[1].iter().flat_map(move |&j| {
                interior[2].iter().map(move |&k| (a.at(t, i, j, k), b.at(t, i, j, k)))
            })
        })
    });
    Ok(ErrorNorms::from_pairs(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSummary {
    pub samples: usize,
    pub dt_s: f64,
    pub mvb_concentration_um: f64,
    pub peak_gamma_um_per_s: f64,
    pub total_events: u64,
    pub peak_event_count: u64,
    pub peak_event_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    pub spectral_points: usize,
    pub lags: usize,
    pub clamped: usize,
    pub peak_probe_um: f64,
    /// Field integral over the box at each snapshot, µM·µm³.
    pub snapshot_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dt_s: f64,
    pub stability_margin: f64,
    pub clamped: usize,
    pub peak_um: f64,
    pub final_mass: f64,
    pub max_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub probes: ErrorNorms,
    pub per_probe: Vec<ErrorNorms>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<ErrorNorms>,
    pub margin_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSummary {
    pub driven_by: String,
    pub final_state: receiver::ReceiverState,
    pub c_lr_int_final_um: f64,
    pub c_cm_int_final_um: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_crossing_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cm_crossing_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seed: u64,
    pub release: ReleaseSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receiver: Option<ReceiverSummary>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per stage; written to `timings.json`, not the report.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

/// In-memory results of a run, before anything is written.
pub struct RunOutputs {
    pub drive: CalciumDrive,
    pub profile: ReleaseProfile,
    pub events: ReleaseEventSeries,
    pub analytic_probes: Option<ProbeSeries>,
    pub analytic_field: Option<ConcentrationField>,
    pub grid: Option<GridRun>,
    pub receiver: Option<ReceiverTrajectory>,
    pub report: RunReport,
}

fn stopwatch<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    out
}

fn build_drive(cfg: &ScenarioConfig) -> Result<CalciumDrive> {
    let r = &cfg.release;
    match r.drive.kind {
        config::DriveKind::Synthetic => release::synth_calcium_drive(
            r.drive.heart_rate_bpm,
            r.drive.pulse_amplitude_um_per_s,
            r.drive.pulse_width_s,
            r.horizon_s,
            r.dt_s,
        ),
        config::DriveKind::File => {
            let path = r.drive.path.as_ref().expect("validated");
            let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            CalciumDrive::read_csv(f)
        }
    }
}

fn build_profile(cfg: &ScenarioConfig, drive: &CalciumDrive) -> Result<ReleaseProfile> {
    let r = &cfg.release;
    let mut profile = release::release_profile(drive, &cfg.exocytosis(), &cfg.mvb(), r.gamma_scale)?;
    if (profile.dt() - r.dt_s).abs() > 1e-9 * r.dt_s {
        profile = profile.resample(r.dt_s)?;
    }
    if profile.times[0].abs() > 1e-12 {
        return Err(Error::validation("release.drive", "drive must start at t = 0"));
    }
    if profile.horizon() + 1e-9 < r.horizon_s {
        return Err(Error::validation(
            "release.drive",
            format!("drive ends at {}s, before the {}s horizon", profile.horizon(), r.horizon_s),
        ));
    }
    let n = (r.horizon_s / r.dt_s + 1e-9).floor() as usize + 1;
    ReleaseProfile::new(
        profile.times[..n].to_vec(),
        profile.gamma[..n].to_vec(),
        profile.mvb_concentration,
    )
}

/// Runs every stage without touching the filesystem.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutputs> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let horizon = cfg.release.horizon_s;
    let dt = cfg.release.dt_s;

    let (drive, profile, events) = stopwatch(&mut timings, "release", || {
        let drive = build_drive(cfg)?;
        let profile = build_profile(cfg, &drive)?;
        let phi = release::event_rate(&profile)?;
        let events = release::sample_events(&phi, dt, cfg.seed)?;
        Ok((drive, profile, events))
    })
    .map_err(|e| e.in_stage("release"))?;

    let params = cfg.channel_params();
    let box_grid = cfg.box_grid()?;
    let mut points = cfg.probes_um.clone();
    if cfg.receiver.enabled {
        points.push(cfg.receiver.cell_um);
    }

    let mut analytic_summary = None;
    let (analytic_probes, analytic_field) = if cfg.channel.solver.analytic() {
        stopwatch(&mut timings, "analytic", || {
            // keep the analytic solution free of the grid-only half-life term
            let mut p = params.clone();
            p.half_life = None;
            let spectral = SpectralGrid::covering(
                &p,
                horizon,
                dt,
                cfg.channel.spectral.points,
                Some(box_grid.bounds()),
            )?;
            let solver = AnalyticSolver::new(&p, &spectral, &profile)?;
            let times = solver.times();
            let probes = if (times.len() as f64) * (solver.lags() as f64) < 5e7 {
                solver.probe(&points, &times)?
            } else {
                solver.probe_frequency_domain(&points)?
            };
            let field = if cfg.snapshot_times_s.is_empty() {
                None
            } else {
                Some(solver.field_on(box_grid.axes()?, &cfg.snapshot_times_s)?)
            };
            analytic_summary = Some(AnalyticSummary {
                spectral_points: spectral.axes[0].len,
                lags: solver.lags(),
                clamped: field.as_ref().map_or(0, |f| f.clamped),
                peak_probe_um: probes.values.iter().flatten().cloned().fold(0.0, f64::max),
                snapshot_mass: field
                    .as_ref()
                    .map(|f| (0..f.times.len()).map(|t| f.integral(t)).collect())
                    .unwrap_or_default(),
            });
            Ok((Some(probes), field))
        })
        .map_err(|e| e.in_stage("analytic channel"))?
    } else {
        (None, None)
    };

    let grid_run = if cfg.channel.solver.grid() {
        Some(
            stopwatch(&mut timings, "grid", || {
                let peak_gamma = profile.gamma.iter().cloned().fold(0.0, f64::max);
                let solver = GridSolver::new(&params, &box_grid, cfg.channel.grid.advection)?
                    .with_source_scale(peak_gamma * horizon / params.volume_fraction);
                solver.run(&profile, &points, &cfg.snapshot_times_s, horizon, dt)
            })
            .map_err(|e| e.in_stage("grid channel"))?,
        )
    } else {
        None
    };

    let n_probes = cfg.probes_um.len();
    let split = |s: &ProbeSeries| -> (ProbeSeries, Option<Vec<f64>>) {
        let mut user = s.clone();
        let cell = if cfg.receiver.enabled {
            user.points.truncate(n_probes);
            user.values.truncate(n_probes);
            Some(s.values[n_probes].clone())
        } else {
            None
        };
        (user, cell)
    };
    let (analytic_probes, analytic_cell) = match &analytic_probes {
        Some(s) => {
            let (u, c) = split(s);
            (Some(u), c)
        }
        None => (None, None),
    };
    let mut grid_run = grid_run;
    let mut grid_cell = None;
    if let Some(run) = grid_run.as_mut() {
        let (u, c) = split(&run.probes);
        run.probes = u;
        grid_cell = c;
    }

    let comparison = match (&analytic_probes, &grid_run) {
        (Some(a), Some(g)) => {
            let per_probe = (0..a.points.len())
                .map(|p| ErrorNorms::from_pairs(a.values[p].iter().cloned().zip(g.probes.values[p].iter().cloned())))
                .collect();
            let field = match &analytic_field {
                Some(f) => Some(compare_fields(f, &g.field, cfg.channel.compare_margin_um)?),
                None => None,
            };
            Some(Comparison {
                probes: compare_series(a, &g.probes)?,
                per_probe,
                field,
                margin_um: cfg.channel.compare_margin_um,
            })
        }
        _ => None,
    };

    let (receiver_traj, receiver_summary) = if cfg.receiver.enabled {
        let (series, source) = match (analytic_cell, grid_cell) {
            (Some(c), _) => (c, "analytic"),
            (None, Some(c)) => (c, "grid"),
            (None, None) => unreachable!("one solver always runs"),
        };
        let traj = stopwatch(&mut timings, "receiver", || {
            let times: Vec<f64> = (0..series.len()).map(|i| i as f64 * dt).collect();
            let c = DrivingSeries::new(&times, series)?;
            receiver::integrate(
                &cfg.ligand_receptor(),
                &cfg.clathrin(),
                &c,
                (0.0, c.end()),
                cfg.receiver.dt_ode_s.unwrap_or(dt),
                cfg.receiver.record_every,
            )
        })
        .map_err(|e| e.in_stage("receiver"))?;
        let last = *traj.last();
        let rc = cfg.receiver.ligand_receptor.cell_radius_um;
        let summary = ReceiverSummary {
            driven_by: source.into(),
            final_state: last,
            c_lr_int_final_um: receiver::count_to_concentration(last.eta_int, rc),
            c_cm_int_final_um: last.c_cm_int,
            lr_crossing_s: traj.crossing(|s| s.eta_b, |s| s.eta_int),
            cm_crossing_s: traj.crossing(|s| s.c_cm_b, |s| s.c_cm_int),
        };
        (Some(traj), Some(summary))
    } else {
        (None, None)
    };

    let peak_idx = events
        .counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i);
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(cfg)?,
        preset: cfg.preset.clone(),
        seed: cfg.seed,
        release: ReleaseSummary {
            samples: profile.times.len(),
            dt_s: dt,
            mvb_concentration_um: profile.mvb_concentration,
            peak_gamma_um_per_s: profile.gamma.iter().cloned().fold(0.0, f64::max),
            total_events: events.counts.iter().sum(),
            peak_event_count: events.counts.get(peak_idx).copied().unwrap_or(0),
            peak_event_time_s: events.interval_start_times.get(peak_idx).copied().unwrap_or(0.0),
        },
        analytic: analytic_summary,
        grid: grid_run.as_ref().map(|g| GridSummary {
            dt_s: box_grid.dt,
            stability_margin: g.diagnostics.first().map_or(f64::NAN, |d| d.stability_margin),
            clamped: g.field.clamped,
            peak_um: g.peak,
            final_mass: g.diagnostics.last().map_or(0.0, |d| d.mass),
            max_mass: g.diagnostics.iter().map(|d| d.mass).fold(0.0, f64::max),
        }),
        comparison,
        receiver: receiver_summary,
        artifacts: Vec::new(),
        timings,
    };
    Ok(RunOutputs {
        drive,
        profile,
        events,
        analytic_probes,
        analytic_field,
        grid: grid_run,
        receiver: receiver_traj,
        report,
    })
}

/// SHA-256 of the canonical TOML form.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn create(dir: &Path, name: &str, written: &mut Vec<String>) -> Result<fs::File> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    written.push(name.to_string());
    fs::File::create(&path).map_err(|e| Error::io(&path, e))
}

fn write_text(dir: &Path, name: &str, text: &str, written: &mut Vec<String>) -> Result<()> {
    use std::io::Write;
    let mut f = create(dir, name, written)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(dir.join(name), e))
}

fn write_release_rate(profile: &ReleaseProfile, file: fs::File) -> Result<()> {
    let phi = release::event_rate(profile)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["t", "gamma", "phi"])?;
    for ((t, g), f) in profile.times.iter().zip(&profile.gamma).zip(&phi) {
        w.write_record(&[t.to_string(), g.to_string(), f.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("release_rate.csv", e))?;
    Ok(())
}

/// Writes every artifact of `out` under `dir` and fills in the artifact list.
pub fn write_outputs(cfg: &ScenarioConfig, out: &mut RunOutputs, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let extra = |prov: &str| {
        vec![
            ("config_sha256", out.report.config_sha256.clone()),
            ("seed", cfg.seed.to_string()),
            ("solver", prov.to_string()),
        ]
    };

    write_text(dir, "config.resolved.toml", &cfg.to_toml()?, &mut written)?;
    out.drive.write_csv(create(dir, "release/drive.csv", &mut written)?)?;
    write_release_rate(&out.profile, create(dir, "release/release_rate.csv", &mut written)?)?;
    out.events.write_csv(create(dir, "release/events.csv", &mut written)?)?;

    if let Some(p) = &out.analytic_probes {
        p.write_csv(create(dir, "analytic/probes.csv", &mut written)?)?;
    }
    if let Some(f) = &out.analytic_field {
        written.push("analytic/field.evf".into());
        written.push("analytic/field.evf.meta".into());
        fs::create_dir_all(dir.join("analytic")).map_err(|e| Error::io(dir, e))?;
        crate::io::write_field(&dir.join("analytic/field.evf"), f, &extra("analytic"))?;
    }
    if let Some(g) = &out.grid {
        g.probes.write_csv(create(dir, "grid/probes.csv", &mut written)?)?;
        grid::write_diagnostics_csv(&g.diagnostics, create(dir, "grid/diagnostics.csv", &mut written)?)?;
        if !g.field.times.is_empty() {
            written.push("grid/field.evf".into());
            written.push("grid/field.evf.meta".into());
            crate::io::write_field(&dir.join("grid/field.evf"), &g.field, &extra("grid"))?;
        }
    }
    if let Some(r) = &out.receiver {
        r.write_csv(create(dir, "receiver.csv", &mut written)?)?;
    }
    written.push("report.json".into());
    written.push("timings.json".into());
    written.sort();
    out.report.artifacts = written.clone();
    let report = serde_json::to_string_pretty(&out.report).expect("report serializes");
    write_text(dir, "report.json", &(report + "\n"), &mut Vec::new())?;
    let timings = serde_json::to_string_pretty(&out.report.timings).expect("timings serialize");
    write_text(dir, "timings.json", &(timings + "\n"), &mut Vec::new())?;
    Ok(())
}

/// Simulates and writes all artifacts to the configured output directory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunReport, PathBuf)> {
    let mut out = simulate(cfg)?;
    let dir = cfg.output_path();
    write_outputs(cfg, &mut out, &dir).map_err(|e| e.in_stage("output"))?;
    Ok((out.report, dir))
}
