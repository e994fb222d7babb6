//! Tolman–Oppenheimer–Volkoff shooting in both directions.
//!
//! The integration variables are the mass function `m(r)` and the enthalpy
//! `h(r)` (see [`crate::eos`]). With `G = 1` and `k = 1/𝖼²`:
//!
//! ```text
//! dm/dr = 4π r² ρ
//! dh/dr = −k (m + 4π r³ P k) / (r² (1 − 2 m k / r))      (relativistic)
//! du/dr = −m / r²                                          (𝖼 = ∞)
//! ```
//!
//! which is the pressure form `dP/dr = −(ρ + P k)(m + 4πr³Pk)/(r²(1 − 2mk/r))`
//! after dividing by `dP/dh`. The pressure form has `(m, P) = (M, 0)` as an
//! equilibrium because `ρ(0) = 0`, so the inward shot is started from the
//! leading surface series `h ≈ g_s (R − r)` instead.

use crate::eos::{EosError, EosSpec};
use crate::ode::{self, DenseTrajectory, OdeError, SolverOptions, StepControl, Termination};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io;
use thiserror::Error;

mod metric;

pub use metric::{junction_check, metric_coefficients, JunctionGap, JunctionReport, MetricCoeffs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TovError {
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("state outside the domain D: {0}")]
    OutsideDomain(String),
    #[error("boundary data (R = {radius}, M = {mass}) is not admissible")]
    Inadmissible { radius: f64, mass: f64 },
    #[error("outward shot did not reach a vacuum boundary: {exit:?} at r = {r}")]
    NonTermination { exit: ExitReason, r: f64 },
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("{0}")]
    InvalidInput(String),
}

/// Numerical settings and classification gates. Radii are given as
/// fractions of a natural length: `a` for centre shots, `R` for boundary shots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TovSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Centre offset `r0` as a fraction of `a`.
    pub center_offset: f64,
    /// Surface offset `dr` as a fraction of `R`.
    pub surface_offset: f64,
    /// Outward guard radius in units of `a`.
    pub r_max_factor: f64,
    pub r_floor_factor: f64,
    pub m_floor_factor: f64,
    pub p_ceiling_factor: f64,
    pub slope_floor_factor: f64,
    /// Radius (fraction of `R`) at which the central pressure of a regular
    /// inward solution is read off and extrapolated to `r = 0`.
    pub center_probe_factor: f64,
}

impl Default for TovSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            center_offset: 1e-6,
            surface_offset: 1e-6,
            r_max_factor: 1e3,
            r_floor_factor: 1e-6,
            m_floor_factor: 1e-5,
            p_ceiling_factor: 1e6,
            slope_floor_factor: 1e-8,
            center_probe_factor: 1e-2,
        }
    }
}

impl TovSettings {
    fn solver(&self) -> SolverOptions {
        SolverOptions {
            rtol: self.rtol,
            atol: self.atol,
            ..SolverOptions::default()
        }
    }
}

/// `(r, m, h)`; pressure and density follow from the equation of state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TovState {
    pub r: f64,
    pub m: f64,
    pub h: f64,
}

impl TovState {
    /// Builds a state from a density, without the causality check (the TOV
    /// system itself only needs `P(ρ)` to be increasing).
    pub fn from_density(eos: &EosSpec, r: f64, m: f64, rho: f64) -> Self {
        Self {
            r,
            m,
            h: eos.enthalpy_of_w(eos.w_of_rho(rho)),
        }
    }

    pub fn pressure(&self, eos: &EosSpec) -> f64 {
        eos.w_of_enthalpy(self.h).map_or(f64::NAN, |w| eos.p_of_w(w))
    }

    pub fn density(&self, eos: &EosSpec) -> f64 {
        eos.w_of_enthalpy(self.h).map_or(f64::NAN, |w| eos.rho_of_w(w))
    }
}

/// Boundary data at the vacuum surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceData {
    pub radius: f64,
    pub mass: f64,
    /// `|dh/dr|` at the surface.
    pub enthalpy_gradient: f64,
}

impl SurfaceData {
    /// Checks admissibility and fills in the surface enthalpy gradient.
    pub fn new(eos: &EosSpec, radius: f64, mass: f64) -> Result<Self, TovError> {
        let k = eos.light().inv_c2();
        if !(radius > 0.0 && mass > 0.0 && radius.is_finite() && mass.is_finite())
            || 1.0 - 2.0 * mass * k / radius <= 0.0
        {
            return Err(TovError::Inadmissible { radius, mass });
        }
        Ok(Self {
            radius,
            mass,
            enthalpy_gradient: enthalpy_scale(eos) * mass
                / (radius * radius * (1.0 - 2.0 * mass * k / radius)),
        })
    }

    /// `2M/R` in units of `𝖼²`.
    pub fn compactness(&self, eos: &EosSpec) -> f64 {
        2.0 * self.mass * eos.light().inv_c2() / self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outward,
    Inward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    /// Enthalpy reached zero: vacuum boundary.
    Surface,
    /// Outward run passed the guard radius.
    RadiusGuard,
    /// `1 − 2m/r` approached zero.
    Horizon,
    /// Inward run reached the floor radius.
    CenterReached,
    /// Pressure gradient numerator `m + 4πr³P` reached zero.
    GradientVanished,
    /// Pressure grew without bound before the floor radius.
    PressureDivergence,
    /// The integrator gave up for another reason.
    IntegrationFailure,
}

/// The four inward-shooting outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootCase {
    /// `r₋ > 0`, `P → ∞`.
    Case00,
    /// `r₋ > 0`, `P → P₋ < ∞` with `dP/dr → 0`.
    Case01,
    /// `r₋ = 0`, `P → ∞`.
    Case10,
    /// `r₋ = 0`, `P → P_O < ∞`, `m → 0`: regular centre.
    Case11,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub p_ref: f64,
    pub r_floor: f64,
    pub m_floor: f64,
    pub p_ceiling: f64,
    pub slope_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootClassification {
    /// `None` when the run left D through a boundary outside the four cases.
    pub case: Option<ShootCase>,
    pub exit: ExitReason,
    pub r_exit: f64,
    /// Last finite pressure seen; see `pressure_diverges`.
    pub p_exit: f64,
    pub pressure_diverges: bool,
    pub m_exit: f64,
    pub p_center: Option<f64>,
    pub thresholds: Thresholds,
    pub diagnostics: BTreeMap<String, f64>,
}

impl ShootClassification {
    pub fn is_regular(&self) -> bool {
        self.case == Some(ShootCase::Case11)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TovTrajectory {
    pub direction: Direction,
    pub exit: ExitReason,
    /// States at accepted step ends, ordered along the integration.
    pub states: Vec<TovState>,
    pub dense: DenseTrajectory<2>,
    /// Vacuum boundary the metric potential is anchored to.
    pub anchor: Option<SurfaceData>,
    /// Accepted steps at which `ρ + P > 0` or `1 − 2m/r > 0` failed.
    pub domain_violations: usize,
}

impl TovTrajectory {
    /// State at radius `r` from the dense output.
    pub fn state_at(&self, r: f64) -> Option<TovState> {
        self.dense.eval(r).map(|[m, h]| TovState { r, m, h })
    }

    /// CSV with columns `r, m, P, rho, h, F, H`.
    pub fn write_csv<W: io::Write>(&self, eos: &EosSpec, out: W) -> csv::Result<()> {
        let k = eos.light().inv_c2();
        let f_surface = self
            .anchor
            .map(|s| 0.5 * (1.0 - 2.0 * s.mass * k / s.radius).ln())
            .unwrap_or(0.0);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "m", "P", "rho", "h", "F", "H"])?;
        for s in &self.states {
            let (f, hh) = if eos.light().is_relativistic() {
                (f_surface - s.h, -0.5 * (1.0 - 2.0 * s.m * k / s.r).ln())
            } else {
                (0.0, 0.0)
            };
            w.serialize((s.r, s.m, s.pressure(eos), s.density(eos), s.h, f, hh))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `k = 1/𝖼²` multiplies the enthalpy equation in relativistic mode; in the
/// nonrelativistic mode the variable is `u` and the factor is one.
fn enthalpy_scale(eos: &EosSpec) -> f64 {
    if eos.light().is_relativistic() {
        eos.light().inv_c2()
    } else {
        1.0
    }
}

/// Raw right-hand side `[dm/dr, dh/dr]`. `None` outside the region where it
/// is defined (`r ≤ 0`, `1 − 2mk/r ≤ 0`, or beyond the monotone EOS range).
pub(crate) fn rhs(eos: &EosSpec, r: f64, m: f64, h: f64) -> Option<[f64; 2]> {
    if r <= 0.0 {
        return None;
    }
    let k = eos.light().inv_c2();
    let lapse = 1.0 - 2.0 * m * k / r;
    if lapse <= 0.0 {
        return None;
    }
    let w = eos.w_of_enthalpy(h)?;
    if w >= eos.w_monotone() {
        return None;
    }
    let (rho, p) = (eos.rho_of_w(w), eos.p_of_w(w));
    let dm = 4.0 * PI * r * r * rho;
    let dh = -enthalpy_scale(eos) * (m + 4.0 * PI * r * r * r * p * k) / (r * r * lapse);
    (dm.is_finite() && dh.is_finite()).then_some([dm, dh])
}

/// `m + 4πr³P/𝖼²`, the numerator of the pressure gradient.
fn gradient_numerator(eos: &EosSpec, r: f64, m: f64, h: f64) -> f64 {
    let p = eos.w_of_enthalpy(h).map_or(f64::NAN, |w| eos.p_of_w(w));
    m + 4.0 * PI * r * r * r * p * eos.light().inv_c2()
}

/// `dP/dr` from the enthalpy form.
fn pressure_slope(eos: &EosSpec, r: f64, m: f64, h: f64) -> f64 {
    let Some(w) = eos.w_of_enthalpy(h) else {
        return f64::NAN;
    };
    let Some([_, dh]) = rhs(eos, r, m, h) else {
        return f64::NAN;
    };
    let dp_dw = eos.dp_dw(w);
    dp_dw / eos.dh_dw(w) * dh
}

/// Right-hand side of the TOV system at a state, `(dm/dr, dh/dr)`.
pub fn tov_rhs(state: &TovState, eos: &EosSpec) -> Result<(f64, f64), TovError> {
    let k = eos.light().inv_c2();
    if !(state.r > 0.0) {
        return Err(TovError::OutsideDomain(format!("r = {} must be positive", state.r)));
    }
    if 1.0 - 2.0 * state.m * k / state.r <= 0.0 {
        return Err(TovError::OutsideDomain(format!(
            "1 - 2m/r = {} must be positive",
            1.0 - 2.0 * state.m * k / state.r
        )));
    }
    if state.h < 0.0 {
        return Err(TovError::OutsideDomain("negative enthalpy".into()));
    }
    rhs(eos, state.r, state.m, state.h)
        .map(|[dm, dh]| (dm, dh))
        .ok_or_else(|| TovError::OutsideDomain("equation of state not monotone here".into()))
}

/// Regular-centre Taylor start at `r0`:
/// `m = (4π/3)ρ_O r0³`, `P = P_O − (2π/3)(ρ_O + P_O)(ρ_O + 3P_O) r0²`
/// (geometric units), with truncation error `O(r0⁴)`.
pub fn center_start(eos: &EosSpec, p_center: f64, r0: f64) -> Result<TovState, TovError> {
    if !(p_center > 0.0) {
        return Err(TovError::InvalidInput(format!(
            "central pressure must be positive, got {p_center}"
        )));
    }
    if !(r0 > 0.0) {
        return Err(TovError::InvalidInput(format!("r0 must be positive, got {r0}")));
    }
    let rho_c = eos.density_of_pressure(p_center)?;
    Ok(center_series(eos, rho_c, p_center, r0))
}

/// The centre series without the causality check on `P_O`.
pub(crate) fn center_series(eos: &EosSpec, rho_c: f64, p_center: f64, r0: f64) -> TovState {
    let h_c = eos.enthalpy_of_w(eos.w_of_rho(rho_c));
    let k = eos.light().inv_c2();
    // dh = dP / (ρ + P k) times the enthalpy scale
    let h = h_c
        - enthalpy_scale(eos) * (2.0 * PI / 3.0) * (rho_c + 3.0 * p_center * k) * r0 * r0;
    TovState {
        r: r0,
        m: 4.0 * PI / 3.0 * rho_c * r0 * r0 * r0,
        h,
    }
}

/// Inward start at `r = R − dr` from the leading surface series
/// `h ≈ g_s (R − r)`, `m ≈ M`.
pub fn surface_start(eos: &EosSpec, surface: &SurfaceData, dr: f64) -> Result<TovState, TovError> {
    let checked = SurfaceData::new(eos, surface.radius, surface.mass)?;
    if !(dr > 0.0 && dr < surface.radius) {
        return Err(TovError::InvalidInput(format!("surface offset {dr} out of range")));
    }
    Ok(TovState {
        r: surface.radius - dr,
        m: surface.mass,
        h: checked.enthalpy_gradient * dr,
    })
}

/// Membership in D at an accepted step. `mass_slack` absorbs the integration
/// residue of `m` near a regular centre when shooting inward.
fn domain_ok(eos: &EosSpec, r: f64, m: f64, h: f64, mass_slack: f64) -> bool {
    let k = eos.light().inv_c2();
    let Some(w) = eos.w_of_enthalpy(h) else {
        return false;
    };
    let (rho, p) = (eos.rho_of_w(w), eos.p_of_w(w));
    r > 0.0 && rho + p * k > 0.0 && 1.0 - 2.0 * m * k / r > 0.0 && m + mass_slack + 4.0 * PI * r.powi(3) * rho > 0.0
}

/// Centre-to-surface shot for central pressure `P_O`.
pub fn shoot_from_center(
    eos: &EosSpec,
    p_center: f64,
    settings: &TovSettings,
) -> Result<(SurfaceData, TovTrajectory), TovError> {
    let rho_c = eos.density_of_pressure(p_center)?;
    let a = eos.length_scale(rho_c);
    let start = center_start(eos, p_center, settings.center_offset * a)?;
    let m_scale = 4.0 * PI * rho_c * a.powi(3);
    let h_scale = eos.enthalpy_of_pressure(p_center)?;
    let k = eos.light().inv_c2();

    let mut states = vec![start];
    let mut dense = DenseTrajectory::new();
    let mut surface_r = None;
    let mut horizon = false;
    let mut violations = 0;
    let r_max = settings.r_max_factor * a;

    let result = ode::integrate(
        |r, y: &[f64; 2]| rhs(eos, r, y[0], y[1]),
        start.r,
        [start.m, start.h],
        r_max,
        &settings.solver(),
        [settings.atol * m_scale, settings.atol * h_scale],
        |step| {
            dense.push(step.clone());
            if let Some(r) = step.locate(|_, y| y[1], 1e-14 * step.t1.abs()) {
                surface_r = Some(r);
                return StepControl::Stop;
            }
            let [m, h] = step.y1;
            if 1.0 - 2.0 * m * k / step.t1 < 1e-12 {
                horizon = true;
                return StepControl::Stop;
            }
            if !domain_ok(eos, step.t1, m, h, 0.0) {
                violations += 1;
            }
            states.push(TovState { r: step.t1, m, h });
            StepControl::Continue
        },
    );

    let last_r = states.last().map_or(start.r, |s| s.r);
    match result {
        Err(OdeError::StepUnderflow { .. }) | Err(OdeError::NonFinite { .. }) if horizon_near(eos, &states) => {
            return Err(TovError::NonTermination { exit: ExitReason::Horizon, r: last_r });
        }
        Err(e) => return Err(e.into()),
        Ok(Termination::ReachedEnd) => {
            return Err(TovError::NonTermination { exit: ExitReason::RadiusGuard, r: last_r });
        }
        Ok(Termination::Stopped { .. }) => {}
    }
    if horizon {
        return Err(TovError::NonTermination { exit: ExitReason::Horizon, r: last_r });
    }
    let radius = surface_r.expect("stopped at the surface event");
    dense.truncate_at(radius);
    let mass = dense.eval(radius).expect("surface lies on the trajectory")[0];
    let surface = SurfaceData::new(eos, radius, mass)?;
    states.push(TovState { r: radius, m: mass, h: 0.0 });
    Ok((
        surface,
        TovTrajectory {
            direction: Direction::Outward,
            exit: ExitReason::Surface,
            states,
            dense,
            anchor: Some(surface),
            domain_violations: violations,
        },
    ))
}

fn horizon_near(eos: &EosSpec, states: &[TovState]) -> bool {
    let k = eos.light().inv_c2();
    states
        .last()
        .is_some_and(|s| 1.0 - 2.0 * s.m * k / s.r < 1e-6)
}

/// Reference pressure `M²/(4πR⁴)` used to scale the inward gates.
pub fn reference_pressure(surface: &SurfaceData) -> f64 {
    surface.mass * surface.mass / (4.0 * PI * surface.radius.powi(4))
}

struct InwardRun {
    states: Vec<TovState>,
    dense: DenseTrajectory<2>,
    result: Result<Termination, OdeError>,
    gradient_zero: Option<f64>,
    horizon: bool,
    violations: usize,
    ceiling_crossed_at: Option<f64>,
}

fn run_inward(eos: &EosSpec, surface: &SurfaceData, settings: &TovSettings, th: &Thresholds) -> Result<InwardRun, TovError> {
    let start = surface_start(eos, surface, settings.surface_offset * surface.radius)?;
    let k = eos.light().inv_c2();
    let h_scale = surface.enthalpy_gradient * surface.radius;
    let mut run = InwardRun {
        states: vec![start],
        dense: DenseTrajectory::new(),
        result: Ok(Termination::ReachedEnd),
        gradient_zero: None,
        horizon: false,
        violations: 0,
        ceiling_crossed_at: None,
    };
    let pressure = |h: f64| eos.w_of_enthalpy(h).map_or(f64::INFINITY, |w| eos.p_of_w(w));
    run.result = ode::integrate(
        |r, y: &[f64; 2]| rhs(eos, r, y[0], y[1]),
        start.r,
        [start.m, start.h],
        th.r_floor,
        &settings.solver(),
        [settings.atol * surface.mass, settings.atol * h_scale],
        |step| {
            run.dense.push(step.clone());
            // keep going after a crossing: near a regular centre it can be
            // integration residue, settled once the floor is reached
            if run.gradient_zero.is_none() {
                run.gradient_zero =
                    step.locate(|r, y| gradient_numerator(eos, r, y[0], y[1]), 1e-13 * step.t1.abs());
            }
            let [m, h] = step.y1;
            if run.ceiling_crossed_at.is_none() {
                run.ceiling_crossed_at = step.locate(|_, y| pressure(y[1]) - th.p_ceiling, 1e-12 * step.t1.abs());
            }
            if 1.0 - 2.0 * m * k / step.t1 < 1e-12 {
                run.horizon = true;
                return StepControl::Stop;
            }
            if run.gradient_zero.is_none() && !domain_ok(eos, step.t1, m, h, th.m_floor) {
                run.violations += 1;
            }
            run.states.push(TovState { r: step.t1, m, h });
            StepControl::Continue
        },
    );
    Ok(run)
}

/// Surface-to-centre shot from boundary data `(R, M)`, classified into the
/// four cases (or an exit outside them).
pub fn shoot_from_boundary(
    eos: &EosSpec,
    surface: &SurfaceData,
    settings: &TovSettings,
) -> Result<(ShootClassification, TovTrajectory), TovError> {
    let surface = SurfaceData::new(eos, surface.radius, surface.mass)?;
    let radius = surface.radius;
    let k = eos.light().inv_c2();
    let p_ref = reference_pressure(&surface);
    let th = Thresholds {
        p_ref,
        r_floor: settings.r_floor_factor * radius,
        m_floor: settings.m_floor_factor * surface.mass,
        p_ceiling: settings.p_ceiling_factor * p_ref,
        slope_floor: settings.slope_floor_factor * p_ref / radius,
    };
    let InwardRun {
        mut states,
        mut dense,
        result,
        gradient_zero,
        horizon,
        violations,
        ceiling_crossed_at,
    } = run_inward(eos, &surface, settings, &th)?;

    let mut diag = BTreeMap::new();
    if let Some(rc) = ceiling_crossed_at {
        diag.insert("r_ceiling".to_string(), rc);
    }
    let last = *states.last().expect("start state");
    let mut verdict = ShootClassification {
        case: None,
        exit: ExitReason::IntegrationFailure,
        r_exit: last.r,
        p_exit: last.pressure(eos),
        pressure_diverges: false,
        m_exit: last.m,
        p_center: None,
        thresholds: th,
        diagnostics: BTreeMap::new(),
    };

    let floor_state = match result {
        Ok(Termination::ReachedEnd) => dense.eval(th.r_floor).map(|[m, h]| TovState { r: th.r_floor, m, h }),
        _ => None,
    };
    let regular = floor_state.filter(|s| s.m.abs() <= th.m_floor && s.pressure(eos) < th.p_ceiling);

    if let (Some(_), Some(r_cross)) = (regular, gradient_zero) {
        diag.insert("r_residual_crossing".to_string(), r_cross);
    }
    if let Some(fs) = regular {
        let probe = settings.center_probe_factor * radius;
        diag.insert("p_center_probe_radius".to_string(), probe);
        if last.r != th.r_floor {
            states.push(fs);
        }
        verdict.case = Some(ShootCase::Case11);
        verdict.exit = ExitReason::CenterReached;
        verdict.r_exit = th.r_floor;
        verdict.p_exit = fs.pressure(eos);
        verdict.m_exit = fs.m;
        verdict.p_center = Some(central_pressure_estimate(eos, &dense, probe).unwrap_or(verdict.p_exit));
    } else if let Some(r_minus) = gradient_zero {
        dense.truncate_at(r_minus);
        states.retain(|s| s.r > r_minus);
        let [m, h] = dense.eval(r_minus).expect("crossing on trajectory");
        let slope = pressure_slope(eos, r_minus, m, h);
        diag.insert("slope_at_exit".to_string(), slope);
        diag.insert("gradient_numerator".to_string(), gradient_numerator(eos, r_minus, m, h));
        let exit_state = TovState { r: r_minus, m, h };
        states.push(exit_state);
        verdict.exit = ExitReason::GradientVanished;
        verdict.r_exit = r_minus;
        verdict.p_exit = exit_state.pressure(eos);
        verdict.m_exit = m;
        if slope.abs() < th.slope_floor && r_minus > th.r_floor {
            verdict.case = Some(ShootCase::Case01);
        }
    } else {
        match result {
            Ok(Termination::Stopped { .. }) => {
                debug_assert!(horizon);
                verdict.exit = ExitReason::Horizon;
            }
            Ok(Termination::ReachedEnd) => {
                let fs = floor_state.unwrap_or(last);
                let p = fs.pressure(eos);
                if last.r != th.r_floor {
                    states.push(fs);
                }
                verdict.exit = ExitReason::CenterReached;
                verdict.r_exit = th.r_floor;
                verdict.p_exit = p;
                verdict.m_exit = fs.m;
                if fs.m > th.m_floor || p >= th.p_ceiling {
                    verdict.case = Some(ShootCase::Case10);
                    verdict.pressure_diverges = true;
                }
            }
            Err(err) => {
                diag.insert("r_last_accepted".to_string(), last.r);
                if ceiling_crossed_at.is_none() && 1.0 - 2.0 * last.m * k / last.r < 1e-6 {
                    verdict.exit = ExitReason::Horizon;
                } else if ceiling_crossed_at.is_some() {
                    // pressure blew up near the last accepted radius; check whether
                    // that radius survives two tolerance tightenings
                    let mut estimate = last.r;
                    let mut tight = *settings;
                    for i in 1..=2 {
                        tight.rtol *= 0.1;
                        tight.atol *= 0.1;
                        let rerun = run_inward(eos, &surface, &tight, &th)?;
                        estimate = match rerun.result {
                            Ok(Termination::ReachedEnd) => th.r_floor,
                            _ => rerun.states.last().map_or(estimate, |s| s.r),
                        };
                        diag.insert(format!("r_minus_estimate_{i}"), estimate);
                    }
                    verdict.exit = ExitReason::PressureDivergence;
                    verdict.pressure_diverges = true;
                    verdict.case = Some(if estimate > th.r_floor {
                        ShootCase::Case00
                    } else {
                        ShootCase::Case10
                    });
                } else {
                    diag.insert("integration_error_at".to_string(), error_radius(&err));
                }
            }
        }
    }
    verdict.diagnostics = diag;

    Ok((
        verdict.clone(),
        TovTrajectory {
            direction: Direction::Inward,
            exit: verdict.exit,
            states,
            dense,
            anchor: Some(surface),
            domain_violations: violations,
        },
    ))
}

fn error_radius(err: &OdeError) -> f64 {
    match *err {
        OdeError::UndefinedStart { t }
        | OdeError::StepUnderflow { t }
        | OdeError::TooManySteps { t, .. }
        | OdeError::NonFinite { t } => t,
    }
}

/// Reads `h` at a small probe radius and removes the leading `r²` term of
/// the regular-centre series.
fn central_pressure_estimate(eos: &EosSpec, dense: &DenseTrajectory<2>, r_probe: f64) -> Option<f64> {
    let [_, h] = dense.eval(r_probe)?;
    let w = eos.w_of_enthalpy(h)?;
    let (rho, p) = (eos.rho_of_w(w), eos.p_of_w(w));
    let k = eos.light().inv_c2();
    let h_c = h + enthalpy_scale(eos) * (2.0 * PI / 3.0) * (rho + 3.0 * p * k) * r_probe * r_probe;
    eos.w_of_enthalpy(h_c).map(|w| eos.p_of_w(w))
}

#[cfg(test)]
mod tests;
