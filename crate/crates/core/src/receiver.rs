//! Vesicle uptake at the target cell.
//!
//! Two mean-field mechanisms driven by the concentration probed at the cell:
//!
//! * ligand-receptor binding to `χ` sites, followed by internalization
//!   (`η_b`, `η_int` are counts);
//! * clathrin-mediated endocytosis with a finite pit capacity (`c_b`,
//!   `c_int` are concentrations, µM).
//!
//! Both are integrated with fixed-step RK4 while the driving concentration
//! is interpolated linearly between its samples.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{self, UM_PER_M};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LigandReceptorParams {
    /// Association rate, M⁻¹s⁻¹.
    pub kappa_a: f64,
    /// Dissociation rate, s⁻¹.
    pub kappa_d: f64,
    /// Internalization rate, s⁻¹.
    pub kappa_int: f64,
    /// Number of binding sites.
    pub chi: u64,
    /// Cell radius, µm.
    pub cell_radius: f64,
}

impl Default for LigandReceptorParams {
    fn default() -> Self {
        Self {
            kappa_a: 1e4,
            kappa_d: 1e-10,
            kappa_int: 0.0027,
            chi: 53_000,
            cell_radius: 82.5,
        }
    }
}

impl LigandReceptorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa_a", self.kappa_a),
            ("kappa_d", self.kappa_d),
            ("kappa_int", self.kappa_int),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.chi == 0 {
            return Err(Error::validation("chi", "must be a positive count"));
        }
        if !(self.cell_radius > 0.0) {
            return Err(Error::validation(
                "cell_radius",
                format!("must be positive, got {}", self.cell_radius),
            ));
        }
        Ok(())
    }

    /// Bound count at equilibrium under a constant concentration `c`, µM.
    pub fn steady_bound(&self, c: f64) -> f64 {
        let on = self.kappa_a * c / UM_PER_M;
        on * self.chi as f64 / (on + self.kappa_d + self.kappa_int)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClathrinParams {
    /// Maximal binding rate a₀; the per-EV rate is `a₀ / p_tot`, applied to C in µM.
    pub a0: f64,
    /// EVs that can be coated per pit.
    pub p_tot: f64,
    /// Number of pits.
    pub n_tot: f64,
    /// Internalization rate, s⁻¹.
    pub kappa_int: f64,
    /// Intracellular degradation rate, s⁻¹.
    pub kappa_deg: f64,
    /// Use `p_tot · n_tot` directly as the capacity instead of converting the
    /// count to a concentration over the cell volume.
    #[serde(default)]
    pub raw_count_capacity: bool,
}

impl Default for ClathrinParams {
    fn default() -> Self {
        Self {
            a0: 6.64e-17,
            p_tot: 200.0,
            n_tot: 180.0,
            kappa_int: 0.0027,
            kappa_deg: 0.0002,
            raw_count_capacity: false,
        }
    }
}

impl ClathrinParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a0", self.a0),
            ("n_tot", self.n_tot),
            ("kappa_int", self.kappa_int),
            ("kappa_deg", self.kappa_deg),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.p_tot > 0.0) {
            return Err(Error::validation("p_tot", format!("must be positive, got {}", self.p_tot)));
        }
        Ok(())
    }

    pub fn binding_rate(&self) -> f64 {
        self.a0 / self.p_tot
    }

    /// Upper bound of `c_b` for a cell of radius `cell_radius` µm.
    pub fn capacity(&self, cell_radius: f64) -> f64 {
        let count = self.p_tot * self.n_tot;
        if self.raw_count_capacity {
            count
        } else {
            count_to_concentration(count, cell_radius)
        }
    }

    /// Bound concentration at equilibrium under a constant `c`, µM.
    pub fn steady_bound(&self, c: f64, cell_radius: f64) -> f64 {
        let ac = self.binding_rate() * c;
        ac * self.capacity(cell_radius) / (ac + self.kappa_int)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ReceiverState {
    pub t: f64,
    pub eta_b: f64,
    /// Free sites, always `χ - η_b`.
    pub eta_bs: f64,
    pub eta_int: f64,
    pub c_cm_b: f64,
    pub c_cm_int: f64,
}

impl ReceiverState {
    pub fn initial(lr: &LigandReceptorParams) -> Self {
        Self {
            eta_bs: lr.chi as f64,
            ..Default::default()
        }
    }
}

/// `(dη_b/dt, dη_int/dt)` for concentration `c` µM at the cell.
pub fn lr_rhs(eta_b: f64, p: &LigandReceptorParams, c: f64) -> (f64, f64) {
    let free = p.chi as f64 - eta_b;
    // κ_a is per molar; the single µM -> M conversion happens here
    let on = p.kappa_a * c / UM_PER_M;
    (on * free - (p.kappa_d + p.kappa_int) * eta_b, p.kappa_int * eta_b)
}

/// `(dc_b/dt, dc_int/dt)` for concentration `c` µM at the cell.
pub fn cm_rhs(c_b: f64, c_int: f64, p: &ClathrinParams, capacity: f64, c: f64) -> (f64, f64) {
    (
        p.binding_rate() * c * (capacity - c_b) - p.kappa_int * c_b,
        p.kappa_int * c_b - p.kappa_deg * c_int,
    )
}

/// Molar concentration, µM, of `eta` particles in a sphere of radius `r_c` µm.
pub fn count_to_concentration(eta: f64, r_c: f64) -> f64 {
    let volume_l = 4.0 / 3.0 * std::f64::consts::PI * units::cubed_um_to_liters(r_c);
    units::count_in_liters_to_um(eta, volume_l)
}

/// Concentration samples at the cell, µM, on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl DrivingSeries {
    pub fn new(times: &[f64], values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "concentration series",
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::Domain("concentration series needs two samples".into()));
        }
        crate::release::uniform_step(times, "concentration.t")?;
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "concentration must be finite and >= 0, got {} at sample {i}",
                values[i]
            )));
        }
        Ok(Self {
            t0: times[0],
            dt: (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64,
            values,
        })
    }

    pub fn constant(level: f64, horizon: f64, dt: f64) -> Result<Self> {
        let n = (horizon / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        Self::new(&times, vec![level; n + 1])
    }

    pub fn end(&self) -> f64 {
        self.t0 + (self.values.len() - 1) as f64 * self.dt
    }

    pub fn at(&self, t: f64) -> f64 {
        let x = ((t - self.t0) / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverTrajectory {
    pub states: Vec<ReceiverState>,
    pub cell_radius: f64,
}

impl ReceiverTrajectory {
    pub fn last(&self) -> &ReceiverState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "eta_b", "eta_int", "c_lr_b", "c_lr_int", "c_cm_b", "c_cm_int"])?;
        for s in &self.states {
            w.write_record(&[
                s.t.to_string(),
                s.eta_b.to_string(),
                s.eta_int.to_string(),
                count_to_concentration(s.eta_b, self.cell_radius).to_string(),
                count_to_concentration(s.eta_int, self.cell_radius).to_string(),
                s.c_cm_b.to_string(),
                s.c_cm_int.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("receiver csv", e))?;
        Ok(())
    }

    /// First recorded time at which `internal` reaches `bound`, after both
    /// became positive.
    pub fn crossing(&self, bound: impl Fn(&ReceiverState) -> f64, internal: impl Fn(&ReceiverState) -> f64) -> Option<f64> {
        self.states
            .windows(2)
            .find(|w| {
                bound(&w[0]) > 0.0 && internal(&w[0]) < bound(&w[0]) && internal(&w[1]) >= bound(&w[1])
            })
            .map(|w| {
                // linear interpolation of the gap between the two samples
                let g0 = bound(&w[0]) - internal(&w[0]);
                let g1 = bound(&w[1]) - internal(&w[1]);
                w[0].t + (w[1].t - w[0].t) * g0 / (g0 - g1)
            })
    }
}

type Vector = [f64; 4];

fn rhs(
    y: &Vector,
    lr: &LigandReceptorParams,
    cm: &ClathrinParams,
    capacity: f64,
    c: f64,
) -> Vector {
    let (db, di) = lr_rhs(y[0], lr, c);
    let (cb, ci) = cm_rhs(y[2], y[3], cm, capacity, c);
    [db, di, cb, ci]
}

fn axpy(y: &Vector, h: f64, k: &Vector) -> Vector {
    std::array::from_fn(|i| y[i] + h * k[i])
}

/// Relative slack allowed on the invariant bounds before a step is rejected.
const INVARIANT_SLACK: f64 = 1e-9;

/// Fixed-step RK4 over `t_span`, recording every `record_every` steps (and
/// the final step).
pub fn integrate(
    lr: &LigandReceptorParams,
    cm: &ClathrinParams,
    c: &DrivingSeries,
    t_span: (f64, f64),
    dt_ode: f64,
    record_every: usize,
) -> Result<ReceiverTrajectory> {
    lr.validate()?;
    cm.validate()?;
    let (t0, t1) = t_span;
    if !(dt_ode > 0.0) || !(t1 > t0) {
        return Err(Error::Domain(format!(
            "need dt_ode > 0 and t1 > t0, got dt_ode={dt_ode}, span=({t0}, {t1})"
        )));
    }
    let tol = 1e-9 * c.dt;
    if t0 < c.t0 - tol || t1 > c.end() + tol {
        return Err(Error::Domain(format!(
            "concentration covers [{}, {}]s but integration needs [{t0}, {t1}]s",
            c.t0,
            c.end()
        )));
    }
    let steps = ((t1 - t0) / dt_ode - 1e-9).ceil() as usize;
    let h = (t1 - t0) / steps as f64;
    let record_every = record_every.max(1);
    let capacity = cm.capacity(lr.cell_radius);
    let chi = lr.chi as f64;

    let mut y: Vector = [0.0; 4];
    let mut states = vec![ReceiverState {
        t: t0,
        ..ReceiverState::initial(lr)
    }];
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        let (ca, cm_mid, cb) = (c.at(t), c.at(t + 0.5 * h), c.at(t + h));
        let k1 = rhs(&y, lr, cm, capacity, ca);
        let k2 = rhs(&axpy(&y, 0.5 * h, &k1), lr, cm, capacity, cm_mid);
        let k3 = rhs(&axpy(&y, 0.5 * h, &k2), lr, cm, capacity, cm_mid);
        let k4 = rhs(&axpy(&y, h, &k3), lr, cm, capacity, cb);
        let next: Vector = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        check_invariants(&y, &next, chi, capacity, cm.kappa_deg, t + h, h)?;
        y = next;
        if (n + 1) % record_every == 0 || n + 1 == steps {
            states.push(ReceiverState {
                t: t + h,
                eta_b: y[0],
                eta_bs: chi - y[0],
                eta_int: y[1],
                c_cm_b: y[2],
                c_cm_int: y[3],
            });
        }
    }
    Ok(ReceiverTrajectory {
        states,
        cell_radius: lr.cell_radius,
    })
}

fn check_invariants(
    prev: &Vector,
    y: &Vector,
    chi: f64,
    capacity: f64,
    kappa_deg: f64,
    t: f64,
    h: f64,
) -> Result<()> {
    let breach = |what: String| {
        Err(Error::numerical(
            "receiver",
            format!("{what} at t={t}s with dt_ode={h}s; reduce dt_ode"),
        ))
    };
    if y.iter().any(|v| !v.is_finite()) {
        return breach("non-finite state".into());
    }
    if y[0] < -INVARIANT_SLACK * chi || y[0] > chi * (1.0 + INVARIANT_SLACK) {
        return breach(format!("eta_b={} left [0, {chi}]", y[0]));
    }
    if y[1] < prev[1] - INVARIANT_SLACK * prev[1].abs().max(1e-300) {
        return breach(format!("eta_int decreased from {} to {}", prev[1], y[1]));
    }
    if y[2] < -INVARIANT_SLACK * capacity || y[2] > capacity * (1.0 + INVARIANT_SLACK) {
        return breach(format!("c_cm_b={} left [0, {capacity}]", y[2]));
    }
    if y[3] < -INVARIANT_SLACK * capacity {
        return breach(format!("c_cm_int={} is negative", y[3]));
    }
    if kappa_deg == 0.0 && y[3] < prev[3] * (1.0 - INVARIANT_SLACK) {
        return breach(format!("c_cm_int decreased from {} to {}", prev[3], y[3]));
    }
    Ok(())
}
