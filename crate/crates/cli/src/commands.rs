use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::PI;
use stellar_match::distortion::{self, DistortionSolution, FIRST_ORDER_B_LIMIT};
use stellar_match::eos::EosSpec;
use stellar_match::lane_emden;
use stellar_match::matching::{self, SweepRegion};
use stellar_match::surface_fit::{self, FitError};
use stellar_match::tov::{self, SurfaceData, TovError};

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn eos_check(cfg: &RunConfig) -> Result<Value, CliError> {
    let eos = cfg.eos.build()?;
    let rho_max = eos.rho_max();
    let requested = cfg.eos.check_rho;
    if let Some(r) = requested {
        if !(r > 0.0) {
            return Err(CliError::Schema(format!("[eos] check_rho must be positive, got {r}")));
        }
    }
    let valid = requested.is_none_or(|r| eos.valid_up_to(r));
    let report = json!({
        "gamma": eos.gamma(),
        "gamma_in_assumed_range": eos.gamma_in_assumed_range(),
        "index": eos.index().value(),
        "rho_max": finite_or_null(rho_max),
        "pressure_max": finite_or_null(eos.pressure_max()),
        "enthalpy_max": finite_or_null(eos.enthalpy_max()),
        "bounded": rho_max.is_finite(),
        "requested_rho": requested,
        "valid": valid,
    });
    let mut out = OutputDir::acquire(cfg)?;
    out.json("eos_check", &report)?;
    if valid {
        Ok(report)
    } else {
        Err(CliError::Validity(format!(
            "equation of state violates 0 < dP/dρ < c² below ρ = {}; valid only up to ρ = {rho_max}",
            requested.unwrap_or(f64::NAN)
        )))
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() { json!(v) } else { Value::Null }
}

fn tov_failure(e: TovError) -> CliError {
    match e {
        TovError::Integration(_) => CliError::Io(format!("integrator failure: {e}")),
        other => CliError::Validity(other.to_string()),
    }
}

/// Newtonian polytrope prediction `R = aξ₁`, `M = 4πρ_O a³μ₁`.
fn lane_emden_prediction(eos: &EosSpec, rho_c: f64) -> Option<Value> {
    let le = lane_emden::solve(eos.index().value(), 1e-12).ok()?;
    let a = eos.length_scale(rho_c);
    Some(json!({
        "length_scale": a,
        "xi1": le.xi1(),
        "mu1": le.mu1(),
        "radius": a * le.xi1(),
        "mass": 4.0 * PI * rho_c * a.powi(3) * le.mu1(),
    }))
}

pub fn shoot_center(cfg: &RunConfig) -> Result<Value, CliError> {
    let eos = cfg.eos.build()?;
    let p = cfg
        .shoot
        .p_center
        .ok_or_else(|| CliError::Schema("shoot-center needs [shoot] p_center or --p-center".into()))?;
    let rho_c = eos.density_of_pressure(p).map_err(|e| CliError::Validity(e.to_string()))?;
    let mut out = OutputDir::acquire(cfg)?;
    let mut report = json!({ "p_center": p, "rho_center": rho_c });
    match tov::shoot_from_center(&eos, p, &cfg.tov) {
        Ok((surface, traj)) => {
            let table = csv_bytes(|b| traj.write_csv(&eos, b))?;
            report["trajectory"] = json!(out.table("trajectory_center", &table)?);
            report["exit"] = json!(traj.exit);
            report["radius"] = json!(surface.radius);
            report["mass"] = json!(surface.mass);
            report["compactness"] = json!(surface.compactness(&eos));
            report["steps"] = json!(traj.states.len());
            report["domain_violations"] = json!(traj.domain_violations);
        }
        // the shot itself is the datum: no surface is an outcome, not a failure
        Err(TovError::NonTermination { exit, r }) => {
            report["exit"] = json!(exit);
            report["r_exit"] = json!(r);
        }
        Err(e) => return Err(tov_failure(e)),
    }
    report["lane_emden"] = lane_emden_prediction(&eos, rho_c).unwrap_or(Value::Null);
    out.json("shoot_center", &report)?;
    Ok(report)
}

pub fn shoot_boundary(cfg: &RunConfig) -> Result<Value, CliError> {
    let eos = cfg.eos.build()?;
    let (Some(radius), Some(mass)) = (cfg.shoot.radius, cfg.shoot.mass) else {
        return Err(CliError::Schema("shoot-boundary needs radius and mass ([shoot] or --radius/--mass)".into()));
    };
    let surface = SurfaceData::new(&eos, radius, mass).map_err(tov_failure)?;
    let (class, traj) = tov::shoot_from_boundary(&eos, &surface, &cfg.tov).map_err(tov_failure)?;
    let mut out = OutputDir::acquire(cfg)?;
    let table = csv_bytes(|b| traj.write_csv(&eos, b))?;
    let trajectory = out.table("trajectory_boundary", &table)?;
    out.json("classification", &class)?;
    Ok(json!({
        "radius": radius,
        "mass": mass,
        "case": class.case,
        "exit": class.exit,
        "p_center": class.p_center,
        "trajectory": trajectory,
    }))
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    id: usize,
    points: usize,
    lower: &'a matching::CurveEndpoint,
    upper: &'a matching::CurveEndpoint,
    r_ref: f64,
    m_ref: f64,
}

pub fn match_curves(cfg: &RunConfig) -> Result<Value, CliError> {
    let eos = cfg.eos.build()?;
    let grid = cfg.sweep.grid()?;
    let curves = matching::scan_components(&eos, &grid, &cfg.tov, &cfg.sweep.scan)
        .map_err(|e| CliError::Schema(e.to_string()))?;
    let region = match cfg.sweep.region {
        Some(r) => Some(r),
        None if curves.is_empty() => None,
        None => Some(SweepRegion::around(&curves, cfg.sweep.region_factor).map_err(|e| CliError::Schema(e.to_string()))?),
    };
    let report = match region {
        Some(r) => Some(
            matching::ae_failure_sweep(&eos, &curves, &r, &cfg.sweep.sampler(), &cfg.sweep.settings(), &cfg.tov)
                .map_err(|e| CliError::Schema(e.to_string()))?,
        ),
        None => None,
    };

    let mut out = OutputDir::acquire(cfg)?;
    let table = csv_bytes(|b| matching::write_curves_csv(&curves, b))?;
    out.table("curves", &table)?;
    let records = report.as_ref().map_or(&[][..], |r| &r.records[..]);
    out.jsonl("sweep", records)?;
    let summary = json!({
        "grid": grid,
        "curves": curves.iter().map(|c| CurveSummary {
            id: c.id,
            points: c.points.len(),
            lower: &c.lower,
            upper: &c.upper,
            r_ref: c.r_ref,
            m_ref: c.m_ref,
        }).collect::<Vec<_>>(),
        "region": region,
        "sampler": report.as_ref().map(|r| r.sampler),
        "sweep": report.as_ref().map(|r| &r.summary),
        "note": curves.is_empty().then_some("no central pressure on the grid produced a star; nothing to sweep"),
    });
    out.json("match_summary", &summary)?;
    Ok(summary)
}

fn fit_failure(e: FitError) -> CliError {
    CliError::Validity(e.to_string())
}

pub fn surface(cfg: &RunConfig) -> Result<Value, CliError> {
    let d = &cfg.distortion;
    let n = d.index(&cfg.eos)?;
    let base = lane_emden::solve(n, d.tol).map_err(|e| CliError::Validity(e.to_string()))?;
    let dist = DistortionSolution::new(base).map_err(|e| CliError::Validity(e.to_string()))?;
    let zeta = distortion::zeta_grid(d.zeta_points);

    let beyond: Vec<f64> = d.b.iter().copied().filter(|b| *b > FIRST_ORDER_B_LIMIT).collect();
    if !beyond.is_empty() {
        eprintln!(
            "{}",
            json!({ "warning": format!("b = {beyond:?} exceeds {FIRST_ORDER_B_LIMIT}; the surface expansion is first order in b") })
        );
    }

    let mut out = OutputDir::acquire(cfg)?;
    let radial = csv_bytes(|b| dist.write_radial_csv(b))?;
    out.table("radial", &radial)?;

    let mut fits = Vec::new();
    for (i, &b) in d.b.iter().enumerate() {
        let curve = distortion::surface_curve(&dist, b, &zeta).map_err(|e| CliError::Validity(e.to_string()))?;
        let samples = curve.samples();
        let fit = surface_fit::fit_ellipsoid(&samples).map_err(fit_failure)?;
        let table = csv_bytes(|w| curve.write_csv(w))?;
        let curve_file = out.table(&format!("surface_curve_{i}"), &table)?;
        let table = csv_bytes(|w| fit.write_residual_csv(&samples, w))?;
        let residual_file = out.table(&format!("fit_residual_{i}"), &table)?;
        fits.push(json!({
            "b": b,
            "fit": fit,
            "beyond_first_order": curve.beyond_first_order,
            "curve": curve_file,
            "residuals": residual_file,
        }));
    }
    out.json("fits", &fits)?;

    let scaling = match surface_fit::residual_scaling(&dist, &d.b, &zeta) {
        Ok(r) => json!({
            "report": r,
            "slope_in_1_9_2_1": !r.degenerate && (1.9..=2.1).contains(&r.slope),
        }),
        Err(e @ FitError::BadLadder(_)) => json!({ "report": null, "skipped": e.to_string() }),
        Err(e) => return Err(fit_failure(e)),
    };
    out.json("scaling", &scaling)?;

    let levels = surface_fit::stratification_report(&dist, d.level_b, &d.levels, &zeta).map_err(fit_failure)?;
    let strat = json!({ "b": d.level_b, "levels": levels });
    out.json("stratification", &strat)?;

    let summary = json!({
        "distortion": dist.summary(None),
        "signs": {
            "a2_negative": dist.a2() < 0.0,
            "psi2_surface_positive": dist.psi2(dist.base().xi1())[0] > 0.0,
            "c2_positive": dist.surface_coefficients().2 > 0.0,
        },
        "scaling_slope": scaling.pointer("/report/slope"),
        "scaling_verdict": scaling["slope_in_1_9_2_1"],
        "first_order_advisory": (!beyond.is_empty()).then_some(beyond),
    });
    out.json("surface_summary", &summary)?;
    Ok(summary)
}
