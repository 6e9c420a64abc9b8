//! Scenario files.
//!
//! A scenario is a TOML document whose keys carry their units
//! (`k_e_per_s`, `velocity_um_per_s`, ...). Loading starts from the built-in
//! defaults, overlays the named `preset` if any, then overlays the user's
//! tables key by key, so a file only needs the values it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::channel::grid::{AdvectionScheme, BoxGrid};
use crate::channel::{ChannelParams, DegradationConvention};
use crate::error::{Error, Result};
use crate::receiver::{ClathrinParams, LigandReceptorParams};
use crate::release::{ExocytosisParams, MvbParams};

/// Overrides the directory that relative `output_dir` values resolve against.
pub const OUTPUT_ROOT_ENV: &str = "EVSIM_OUTPUT_ROOT";

pub const PRESETS: [&str; 5] = ["scenario_A", "scenario_B", "scenario_C", "fig4", "fig6"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Analytic,
    Grid,
    Both,
}

impl SolverChoice {
    pub fn analytic(self) -> bool {
        matches!(self, Self::Analytic | Self::Both)
    }

    pub fn grid(self) -> bool {
        matches!(self, Self::Grid | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Preset the file was layered on, kept for the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub probes_um: Vec<[f64; 3]>,
    pub snapshot_times_s: Vec<f64>,
    pub release: ReleaseConfig,
    pub channel: ChannelConfig,
    pub receiver: ReceiverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseConfig {
    /// Sampling step of the drive, release rate and probes, s.
    pub dt_s: f64,
    pub horizon_s: f64,
    /// Multiplies γ; the Hill terms alone give at most 2 µM/s.
    pub gamma_scale: f64,
    pub mean_ev_count: f64,
    pub mvb_diameter_um: f64,
    pub exocytosis: ExocytosisConfig,
    pub drive: DriveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExocytosisConfig {
    pub ell_n: f64,
    pub m_n_um: f64,
    pub ell_m: f64,
    pub m_m_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// `synthetic` or `file`.
    pub kind: DriveKind,
    /// CSV with columns `t,ca_sub,ca_open,ca_close,gate`, relative to the
    /// scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub heart_rate_bpm: f64,
    /// Pulse height per second of pulse width, µM/s.
    pub pulse_amplitude_um_per_s: f64,
    pub pulse_width_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveKind {
    Synthetic,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub solver: SolverChoice,
    pub d_um2_per_s: f64,
    pub tortuosity: [f64; 3],
    pub velocity_um_per_s: [f64; 3],
    pub volume_fraction: f64,
    pub k_e_per_s: f64,
    pub degradation_convention: DegradationConvention,
    /// Grid solver only.
    pub half_life_enabled: bool,
    pub half_life_s: f64,
    pub source_center_um: [f64; 3],
    pub source_sigma_um: [f64; 3],
    /// Interior margin for the solver comparison, µm.
    pub compare_margin_um: f64,
    pub grid: GridConfig,
    pub spectral: SpectralConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center_um: [f64; 3],
    pub edge_um: f64,
    pub spacing_um: f64,
    /// Explicit step, s; chosen from the stability limit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    pub advection: AdvectionScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    /// Nodes per axis, rounded up to a power of two.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    pub enabled: bool,
    pub cell_um: [f64; 3],
    /// RK4 step, s; the release step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ode_s: Option<f64>,
    /// Write every n-th RK4 step.
    pub record_every: usize,
    pub ligand_receptor: LigandReceptorConfig,
    pub clathrin: ClathrinConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LigandReceptorConfig {
    pub kappa_a_per_m_s: f64,
    pub kappa_d_per_s: f64,
    pub kappa_int_per_s: f64,
    pub chi: u64,
    pub cell_radius_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClathrinConfig {
    pub a0: f64,
    pub p_tot: f64,
    pub n_tot: f64,
    pub kappa_int_per_s: f64,
    pub kappa_deg_per_s: f64,
    pub raw_count_capacity: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let exo = ExocytosisParams::default();
        let mvb = MvbParams::default();
        let ch = ChannelParams::default();
        let lr = LigandReceptorParams::default();
        let cm = ClathrinParams::default();
        let grid = BoxGrid::default();
        Self {
            preset: None,
            seed: 1,
            output_dir: PathBuf::from("evsim-output"),
            probes_um: vec![[2.0, 0.0, 20.0], [6.0, 0.0, 20.0], [10.0, 0.0, 20.0]],
            snapshot_times_s: vec![1.0, 2.0, 3.0],
            release: ReleaseConfig {
                dt_s: 0.005,
                horizon_s: 3.0,
                gamma_scale: 1.0,
                mean_ev_count: mvb.mean_ev_count,
                mvb_diameter_um: mvb.diameter_um,
                exocytosis: ExocytosisConfig {
                    ell_n: exo.ell_n,
                    m_n_um: exo.m_n,
                    ell_m: exo.ell_m,
                    m_m_um: exo.m_m,
                },
                drive: DriveConfig {
                    kind: DriveKind::Synthetic,
                    path: None,
                    heart_rate_bpm: 120.0,
                    pulse_amplitude_um_per_s: 25.0,
                    pulse_width_s: 0.2,
                },
            },
            channel: ChannelConfig {
                solver: SolverChoice::Analytic,
                d_um2_per_s: ch.diffusion,
                tortuosity: ch.tortuosity,
                velocity_um_per_s: ch.velocity,
                volume_fraction: ch.volume_fraction,
                k_e_per_s: ch.k_e,
                degradation_convention: ch.degradation_convention,
                half_life_enabled: false,
                half_life_s: 120.0,
                source_center_um: ch.source_center,
                source_sigma_um: ch.source_sigma,
                compare_margin_um: 10.0,
                grid: GridConfig {
                    center_um: grid.center,
                    edge_um: grid.edge,
                    spacing_um: grid.spacing,
                    dt_s: None,
                    advection: AdvectionScheme::default(),
                },
                spectral: SpectralConfig { points: 512 },
            },
            receiver: ReceiverConfig {
                enabled: true,
                cell_um: [10.0, 0.0, 20.0],
                dt_ode_s: None,
                record_every: 1,
                ligand_receptor: LigandReceptorConfig {
                    kappa_a_per_m_s: lr.kappa_a,
                    kappa_d_per_s: lr.kappa_d,
                    kappa_int_per_s: lr.kappa_int,
                    chi: lr.chi,
                    cell_radius_um: lr.cell_radius,
                },
                clathrin: ClathrinConfig {
                    a0: cm.a0,
                    p_tot: cm.p_tot,
                    n_tot: cm.n_tot,
                    kappa_int_per_s: cm.kappa_int,
                    kappa_deg_per_s: cm.kappa_deg,
                    raw_count_capacity: cm.raw_count_capacity,
                },
            },
        }
    }
}

/// Keys that are valid but absent from the serialized defaults.
const OPTIONAL_KEYS: [&str; 4] = [
    "preset",
    "release.drive.path",
    "channel.grid.dt_s",
    "receiver.dt_ode_s",
];

fn preset_overlay(name: &str) -> Result<Table> {
    let text = match name {
        "scenario_A" => {
            "[channel]\nsolver = \"both\"\nvelocity_um_per_s = [5.0, 0.0, 0.0]\nk_e_per_s = 0.2\ntortuosity = [1.1, 1.4, 1.7]\n"
        }
        "scenario_B" => {
            "[channel]\nsolver = \"both\"\nvelocity_um_per_s = [5.0, -5.0, 5.0]\nk_e_per_s = 0.5\ntortuosity = [1.1, 1.1, 1.1]\n"
        }
        "scenario_C" => {
            "[channel]\nsolver = \"both\"\nvelocity_um_per_s = [0.0, 0.0, 0.0]\nk_e_per_s = 0.8\ntortuosity = [1.4, 1.4, 1.4]\n"
        }
        "fig4" => {
            "[channel]\nsolver = \"both\"\nvelocity_um_per_s = [5.0, -5.0, 5.0]\nk_e_per_s = 0.5\ntortuosity = [1.1, 1.1, 1.1]\nhalf_life_enabled = false\n"
        }
        "fig6" => {
            "snapshot_times_s = []\n[release]\ndt_s = 0.01\nhorizon_s = 5000.0\n[channel]\nsolver = \"analytic\"\nvelocity_um_per_s = [0.0, 0.0, 0.0]\nk_e_per_s = 0.2\n[receiver]\nenabled = true\nrecord_every = 100\n"
        }
        other => {
            return Err(Error::validation(
                "preset",
                format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
            ))
        }
    };
    Ok(text.parse::<Table>().expect("preset tables are valid TOML"))
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
pub fn deep_merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn unknown_keys(defaults: &Table, user: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match defaults.get(k) {
            Some(Value::Table(d)) => {
                if let Value::Table(u) = v {
                    unknown_keys(d, u, &path, out);
                }
            }
            Some(_) => {}
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => out.push(path),
        }
    }
}

fn default_table() -> Table {
    match Value::try_from(ScenarioConfig::default()).expect("defaults serialize") {
        Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    }
}

impl ScenarioConfig {
    /// Parses a scenario document. Relative drive paths resolve against
    /// `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::validation("<document>", e.to_string()))?;
        let defaults = default_table();
        let mut unknown = Vec::new();
        unknown_keys(&defaults, &user, "", &mut unknown);
        if let Some(first) = unknown.first() {
            return Err(Error::validation(first.clone(), "unknown key"));
        }
        let mut merged = defaults;
        if let Some(p) = user.get("preset") {
            let name = p
                .as_str()
                .ok_or_else(|| Error::validation("preset", "must be a string"))?;
            deep_merge(&mut merged, preset_overlay(name)?);
        }
        deep_merge(&mut merged, user);
        let mut cfg = Self::from_table(merged)?;
        if let (Some(dir), Some(p)) = (base_dir, cfg.release.drive.path.as_mut()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    /// Built-in defaults with a preset applied.
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml_str(&format!("preset = \"{name}\"\n"), None)
    }

    fn from_table(table: Table) -> Result<Self> {
        // deserializing through text keeps toml's key-aware messages
        let text = toml::to_string(&table).map_err(|e| Error::validation("<document>", e.to_string()))?;
        toml::from_str(&text).map_err(|e: toml::de::Error| {
            let path = locate_key(&text, e.span());
            Error::validation(path, e.message().trim().to_string())
        })
    }

    /// Canonical TOML for this configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::validation("<document>", e.to_string()))
    }

    /// Output directory after applying [`OUTPUT_ROOT_ENV`].
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn exocytosis(&self) -> ExocytosisParams {
        let e = &self.release.exocytosis;
        ExocytosisParams {
            ell_n: e.ell_n,
            m_n: e.m_n_um,
            ell_m: e.ell_m,
            m_m: e.m_m_um,
        }
    }

    pub fn mvb(&self) -> MvbParams {
        MvbParams {
            mean_ev_count: self.release.mean_ev_count,
            diameter_um: self.release.mvb_diameter_um,
        }
    }

    pub fn channel_params(&self) -> ChannelParams {
        let c = &self.channel;
        ChannelParams {
            diffusion: c.d_um2_per_s,
            tortuosity: c.tortuosity,
            velocity: c.velocity_um_per_s,
            volume_fraction: c.volume_fraction,
            k_e: c.k_e_per_s,
            half_life: c.half_life_enabled.then_some(c.half_life_s),
            source_center: c.source_center_um,
            source_sigma: c.source_sigma_um,
            degradation_convention: c.degradation_convention,
        }
    }

    pub fn box_grid(&self) -> Result<BoxGrid> {
        let g = &self.channel.grid;
        match g.dt_s {
            Some(dt) => Ok(BoxGrid {
                center: g.center_um,
                edge: g.edge_um,
                spacing: g.spacing_um,
                dt,
            }),
            None => BoxGrid::with_auto_step(
                g.center_um,
                g.edge_um,
                g.spacing_um,
                &self.channel_params(),
                g.advection,
                self.release.dt_s,
            ),
        }
    }

    pub fn ligand_receptor(&self) -> LigandReceptorParams {
        let l = &self.receiver.ligand_receptor;
        LigandReceptorParams {
            kappa_a: l.kappa_a_per_m_s,
            kappa_d: l.kappa_d_per_s,
            kappa_int: l.kappa_int_per_s,
            chi: l.chi,
            cell_radius: l.cell_radius_um,
        }
    }

    pub fn clathrin(&self) -> ClathrinParams {
        let c = &self.receiver.clathrin;
        ClathrinParams {
            a0: c.a0,
            p_tot: c.p_tot,
            n_tot: c.n_tot,
            kappa_int: c.kappa_int_per_s,
            kappa_deg: c.kappa_deg_per_s,
            raw_count_capacity: c.raw_count_capacity,
        }
    }

    /// Checks every invariant, reporting the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(path, format!("must be positive, got {v}")))
            }
        };
        let nonneg = |path: &str, v: f64| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(path, format!("must be >= 0, got {v}")))
            }
        };
        let r = &self.release;
        positive("release.dt_s", r.dt_s)?;
        positive("release.horizon_s", r.horizon_s)?;
        if r.dt_s >= r.horizon_s {
            return Err(Error::validation("release.dt_s", "must be shorter than the horizon"));
        }
        nonneg("release.gamma_scale", r.gamma_scale)?;
        positive("release.mean_ev_count", r.mean_ev_count)?;
        positive("release.mvb_diameter_um", r.mvb_diameter_um)?;
        let e = &r.exocytosis;
        positive("release.exocytosis.ell_n", e.ell_n)?;
        positive("release.exocytosis.m_n_um", e.m_n_um)?;
        positive("release.exocytosis.ell_m", e.ell_m)?;
        positive("release.exocytosis.m_m_um", e.m_m_um)?;
        let d = &r.drive;
        match d.kind {
            DriveKind::Synthetic => {
                positive("release.drive.heart_rate_bpm", d.heart_rate_bpm)?;
                nonneg("release.drive.pulse_amplitude_um_per_s", d.pulse_amplitude_um_per_s)?;
                positive("release.drive.pulse_width_s", d.pulse_width_s)?;
                if r.dt_s >= 60.0 / d.heart_rate_bpm {
                    return Err(Error::validation(
                        "release.dt_s",
                        "must resolve the beat period of the synthetic drive",
                    ));
                }
            }
            DriveKind::File => match &d.path {
                None => return Err(Error::validation("release.drive.path", "required when kind = \"file\"")),
                Some(p) if !p.is_file() => {
                    return Err(Error::validation(
                        "release.drive.path",
                        format!("{} does not exist", p.display()),
                    ))
                }
                _ => {}
            },
        }

        let c = &self.channel;
        positive("channel.d_um2_per_s", c.d_um2_per_s)?;
        for a in 0..3 {
            if !(c.tortuosity[a] >= 1.0) || !c.tortuosity[a].is_finite() {
                return Err(Error::validation(
                    format!("channel.tortuosity[{a}]"),
                    format!("must lie in [1, inf), got {}", c.tortuosity[a]),
                ));
            }
            positive(&format!("channel.source_sigma_um[{a}]"), c.source_sigma_um[a])?;
            if !c.velocity_um_per_s[a].is_finite() {
                return Err(Error::validation(format!("channel.velocity_um_per_s[{a}]"), "must be finite"));
            }
        }
        if !(c.volume_fraction > 0.0 && c.volume_fraction <= 1.0) {
            return Err(Error::validation(
                "channel.volume_fraction",
                format!("must lie in (0, 1], got {}", c.volume_fraction),
            ));
        }
        nonneg("channel.k_e_per_s", c.k_e_per_s)?;
        positive("channel.half_life_s", c.half_life_s)?;
        nonneg("channel.compare_margin_um", c.compare_margin_um)?;
        if c.spectral.points < 16 {
            return Err(Error::validation("channel.spectral.points", "must be at least 16"));
        }
        let g = &c.grid;
        positive("channel.grid.edge_um", g.edge_um)?;
        positive("channel.grid.spacing_um", g.spacing_um)?;
        let grid = self
            .box_grid()
            .and_then(|g| g.nodes_per_axis().map(|_| g))
            .map_err(|e| Error::validation("channel.grid.spacing_um", e.to_string()))?;
        if let Some(dt) = g.dt_s {
            positive("channel.grid.dt_s", dt)?;
            let ratio = r.dt_s / dt;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(Error::validation(
                    "channel.grid.dt_s",
                    format!("must divide release.dt_s = {}", r.dt_s),
                ));
            }
        }
        if c.solver.grid() {
            grid.validate(&self.channel_params(), g.advection)
                .map_err(|e| Error::validation("channel.grid.dt_s", e.to_string()))?;
        }
        let bounds = grid.bounds();
        let inside = |p: &[f64; 3]| (0..3).all(|a| p[a] >= bounds[a][0] && p[a] <= bounds[a][1]);
        for (i, p) in self.probes_um.iter().enumerate() {
            if !inside(p) {
                return Err(Error::validation(format!("probes_um[{i}]"), "outside the domain"));
            }
        }
        for (i, &t) in self.snapshot_times_s.iter().enumerate() {
            let steps = t / r.dt_s;
            if !(0.0..=r.horizon_s * (1.0 + 1e-12)).contains(&t) || (steps - steps.round()).abs() > 1e-6 {
                return Err(Error::validation(
                    format!("snapshot_times_s[{i}]"),
                    format!("{t} must be a multiple of release.dt_s within the horizon"),
                ));
            }
        }

        let rc = &self.receiver;
        if !inside(&rc.cell_um) {
            return Err(Error::validation("receiver.cell_um", "outside the domain"));
        }
        if let Some(dt) = rc.dt_ode_s {
            positive("receiver.dt_ode_s", dt)?;
        }
        let l = &rc.ligand_receptor;
        nonneg("receiver.ligand_receptor.kappa_a_per_m_s", l.kappa_a_per_m_s)?;
        nonneg("receiver.ligand_receptor.kappa_d_per_s", l.kappa_d_per_s)?;
        nonneg("receiver.ligand_receptor.kappa_int_per_s", l.kappa_int_per_s)?;
        if l.chi == 0 {
            return Err(Error::validation("receiver.ligand_receptor.chi", "must be positive"));
        }
        positive("receiver.ligand_receptor.cell_radius_um", l.cell_radius_um)?;
        let m = &rc.clathrin;
        nonneg("receiver.clathrin.a0", m.a0)?;
        positive("receiver.clathrin.p_tot", m.p_tot)?;
        nonneg("receiver.clathrin.n_tot", m.n_tot)?;
        nonneg("receiver.clathrin.kappa_int_per_s", m.kappa_int_per_s)?;
        nonneg("receiver.clathrin.kappa_deg_per_s", m.kappa_deg_per_s)?;

        self.channel_params().validate()?;
        Ok(())
    }
}

/// Dotted key path of the entry containing byte `span`, for diagnostics.
fn locate_key(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else {
        return "<document>".into();
    };
    let mut table = String::new();
    let mut offset = 0;
    let mut key = None;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').to_string();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            if span.start >= offset && span.start < offset + line.len() {
                key = Some(k.trim().to_string());
            }
        }
        if span.start < offset + line.len() {
            break;
        }
        offset += line.len();
    }
    match (table.is_empty(), key) {
        (true, Some(k)) => k,
        (false, Some(k)) => format!("{table}.{k}"),
        (false, None) => table,
        (true, None) => "<document>".into(),
    }
}
