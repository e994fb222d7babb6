//! Interior metric potentials and the junction with the Schwarzschild exterior.
//!
//! `ds² = −e^{2F}𝖼²dt² + e^{2H}dr² + r²dΩ²` with
//! `e^{−2H} = 1 − 2m/(𝖼²r)` and `F = ½ ln(1 − 2M/(𝖼²R)) − h`.

use super::{enthalpy_scale, rhs, Direction, ExitReason, SurfaceData, TovError, TovTrajectory};
use crate::eos::EosSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCoeffs {
    pub surface: SurfaceData,
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    /// `[e^{2F}, d/dr, d²/dr²]` as `r → R⁻`.
    pub exp2f_interior: [f64; 3],
    pub exp2h_interior: [f64; 3],
    /// Same quantities from the exterior closed form as `r → R⁺`.
    pub exp2f_exterior: [f64; 3],
    pub exp2h_exterior: [f64; 3],
}

/// Derivatives up to second order of `e^{2F}` and `e^{2H}` at `r`, from the
/// field equations evaluated at `(m, h)`.
fn one_sided(eos: &EosSpec, anchor: &SurfaceData, r: f64, m: f64, h: f64) -> Option<([f64; 3], [f64; 3])> {
    let k = eos.light().inv_c2();
    let s = enthalpy_scale(eos);
    let w = eos.w_of_enthalpy(h)?;
    let (rho, p) = (eos.rho_of_w(w), eos.p_of_w(w));
    let [dm, dh] = rhs(eos, r, m, h)?;
    let dw = dh / eos.dh_dw(w);
    let drho = eos.drho_dw(w) * dw;
    let dp = eos.dp_dw(w) * dw;
    let d2m = 4.0 * PI * (2.0 * r * rho + r * r * drho);

    let mu = 1.0 - 2.0 * m * k / r;
    let dmu = -2.0 * k * (dm / r - m / (r * r));
    let d2mu = -2.0 * k * (d2m / r - 2.0 * dm / (r * r) + 2.0 * m / (r * r * r));

    // h' = −s N / (r² μ)
    let num = m + 4.0 * PI * r.powi(3) * p * k;
    let dnum = dm + 12.0 * PI * r * r * p * k + 4.0 * PI * r.powi(3) * dp * k;
    let den = r * r * mu;
    let dden = 2.0 * r * mu + r * r * dmu;
    let d2h = -s * (dnum / den - num * dden / (den * den));

    let ef = (1.0 - 2.0 * anchor.mass * k / anchor.radius) * (-2.0 * h).exp();
    let def = -2.0 * dh * ef;
    let d2ef = (4.0 * dh * dh - 2.0 * d2h) * ef;

    let eh = 1.0 / mu;
    let deh = -dmu / (mu * mu);
    let d2eh = -d2mu / (mu * mu) + 2.0 * dmu * dmu / (mu * mu * mu);
    Some(([ef, def, d2ef], [eh, deh, d2eh]))
}

fn exterior(eos: &EosSpec, surface: &SurfaceData) -> ([f64; 3], [f64; 3]) {
    let k = eos.light().inv_c2();
    let (r, m) = (surface.radius, surface.mass);
    let mu = 1.0 - 2.0 * m * k / r;
    let dmu = 2.0 * m * k / (r * r);
    let d2mu = -4.0 * m * k / (r * r * r);
    (
        [mu, dmu, d2mu],
        [1.0 / mu, -dmu / (mu * mu), -d2mu / (mu * mu) + 2.0 * dmu * dmu / (mu * mu * mu)],
    )
}

/// Metric potentials along a complete centre-to-surface trajectory.
pub fn metric_coefficients(
    eos: &EosSpec,
    trajectory: &TovTrajectory,
    surface: &SurfaceData,
) -> Result<MetricCoeffs, TovError> {
    if trajectory.direction != Direction::Outward || trajectory.exit != ExitReason::Surface {
        return Err(TovError::InvalidInput(
            "metric potentials need a complete centre-to-surface trajectory".into(),
        ));
    }
    if !eos.light().is_relativistic() {
        return Err(TovError::InvalidInput("metric potentials need a finite light speed".into()));
    }
    let k = eos.light().inv_c2();
    let f_surface = 0.5 * (1.0 - 2.0 * surface.mass * k / surface.radius).ln();
    let mut coeffs = MetricCoeffs {
        surface: *surface,
        r: Vec::with_capacity(trajectory.states.len()),
        f: Vec::with_capacity(trajectory.states.len()),
        h: Vec::with_capacity(trajectory.states.len()),
        exp2f_interior: [0.0; 3],
        exp2h_interior: [0.0; 3],
        exp2f_exterior: [0.0; 3],
        exp2h_exterior: [0.0; 3],
    };
    for st in &trajectory.states {
        coeffs.r.push(st.r);
        coeffs.f.push(f_surface - st.h);
        coeffs.h.push(-0.5 * (1.0 - 2.0 * st.m * k / st.r).ln());
    }
    let end = trajectory.states.last().expect("non-empty trajectory");
    let (fi, hi) = one_sided(eos, surface, end.r, end.m, end.h)
        .ok_or_else(|| TovError::OutsideDomain("surface state outside the EOS range".into()))?;
    let (fe, he) = exterior(eos, surface);
    coeffs.exp2f_interior = fi;
    coeffs.exp2h_interior = hi;
    coeffs.exp2f_exterior = fe;
    coeffs.exp2h_exterior = he;
    Ok(coeffs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionGap {
    pub coefficient: String,
    pub order: usize,
    pub interior: f64,
    pub exterior: f64,
    /// `|interior − exterior|·R^order`.
    pub scaled_gap: f64,
    pub tolerance: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionReport {
    pub max_order: usize,
    pub gaps: Vec<JunctionGap>,
    pub passes: bool,
}

/// Roundoff for matched values, discretisation for derivatives.
fn tolerance(order: usize) -> f64 {
    if order == 0 {
        1e-14
    } else {
        1e-5
    }
}

/// One-sided gaps of `e^{2F}` and `e^{2H}` and their derivatives up to
/// `order` (at most 2) at the surface.
pub fn junction_check(coeffs: &MetricCoeffs, order: usize) -> Result<JunctionReport, TovError> {
    if order > 2 {
        return Err(TovError::InvalidInput(format!("junction order {order} exceeds 2")));
    }
    let radius = coeffs.surface.radius;
    let mut gaps = Vec::new();
    for (name, inner, outer) in [
        ("exp2f", coeffs.exp2f_interior, coeffs.exp2f_exterior),
        ("exp2h", coeffs.exp2h_interior, coeffs.exp2h_exterior),
    ] {
        for k in 0..=order {
            let scaled_gap = (inner[k] - outer[k]).abs() * radius.powi(k as i32);
            let tol = tolerance(k);
            gaps.push(JunctionGap {
                coefficient: name.to_string(),
                order: k,
                interior: inner[k],
                exterior: outer[k],
                scaled_gap,
                tolerance: tol,
                passes: scaled_gap < tol,
            });
        }
    }
    Ok(JunctionReport {
        max_order: order,
        passes: gaps.iter().all(|g| g.passes),
        gaps,
    })
}
