//! Least-squares ellipsoid fits `r = a₀/√(1 + a₁ζ²)` to meridional curves.
//!
//! At first order in `b` the distorted surface is a quadratic in `ζ²`, and so
//! is an ellipsoid with `a₁ = O(b)`. The two part company at `O(b²)`
//! (the ellipsoid carries `3a₁²ζ⁴/8`), so the fit residual scales as `b²`:
//! that scaling is how non-ellipsoidality is measured here.

use crate::distortion::{self, DistortionError, DistortionSolution};
use serde::{Deserialize, Serialize};
use std::io;
use thiserror::Error;

const MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} is invalid (ζ = {zeta}, r = {r})")]
    BadSample { index: usize, zeta: f64, r: f64 },
    #[error("fit did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("b ladder rejected: {0}")]
    BadLadder(String),
    #[error(transparent)]
    Distortion(#[from] DistortionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidFit {
    pub a0: f64,
    pub a1: f64,
    pub rms_residual: f64,
    pub max_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl EllipsoidFit {
    pub fn radius(&self, zeta: f64) -> f64 {
        model(self.a0, self.a1, zeta)
    }

    /// CSV with columns `zeta, r, r_fit, residual`.
    pub fn write_residual_csv<W: io::Write>(&self, samples: &[(f64, f64)], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zeta", "r", "r_fit", "residual"])?;
        for &(z, r) in samples {
            let fit = self.radius(z);
            w.serialize((z, r, fit, r - fit))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn model(a0: f64, a1: f64, zeta: f64) -> f64 {
    a0 / (1.0 + a1 * zeta * zeta).sqrt()
}

fn sum_squares(samples: &[(f64, f64)], a0: f64, a1: f64) -> f64 {
    samples.iter().map(|&(z, r)| (r - model(a0, a1, z)).powi(2)).sum()
}

fn normal_equations(samples: &[(f64, f64)], a0: f64, a1: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
    for &(z, r) in samples {
        let q = 1.0 + a1 * z * z;
        let d0 = 1.0 / q.sqrt();
        let d1 = -0.5 * a0 * z * z / (q * q.sqrt());
        let res = r - a0 * d0;
        jtj[0][0] += d0 * d0;
        jtj[0][1] += d0 * d1;
        jtj[1][1] += d1 * d1;
        jtr[0] += d0 * res;
        jtr[1] += d1 * res;
    }
    jtj[1][0] = jtj[0][1];
    (jtj, jtr)
}

/// Damped Gauss–Newton with the analytic Jacobian
/// `∂/∂a₀ = (1+a₁ζ²)^{−1/2}`, `∂/∂a₁ = −(a₀ζ²/2)(1+a₁ζ²)^{−3/2}`.
pub fn fit_ellipsoid(samples: &[(f64, f64)]) -> Result<EllipsoidFit, FitError> {
    if samples.len() < 3 {
        return Err(FitError::TooFewSamples(samples.len()));
    }
    for (index, &(zeta, r)) in samples.iter().enumerate() {
        if !(r > 0.0 && r.is_finite() && zeta.abs() <= 1.0) {
            return Err(FitError::BadSample { index, zeta, r });
        }
    }
    let z2_max = samples.iter().map(|s| s.0 * s.0).fold(0.0, f64::max);
    let equator = samples
        .iter()
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .expect("non-empty");
    let pole = samples
        .iter()
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .expect("non-empty");
    let mut a0 = equator.1;
    let mut a1 = if pole.0 != 0.0 {
        ((a0 / pole.1).powi(2) - 1.0) / (pole.0 * pole.0)
    } else {
        0.0
    };
    // 1 + a₁ζ² > 0 on the sample range
    let a1_floor = if z2_max > 0.0 { -1.0 / z2_max } else { f64::NEG_INFINITY };
    if a1 <= a1_floor {
        a1 = 0.5 * a1_floor;
    }

    let mut sse = sum_squares(samples, a0, a1);
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (jtj, jtr) = normal_equations(samples, a0, a1);
        // gradient in units where r and a₀ are O(1)
        let count = samples.len() as f64;
        let grad = (jtr[0] / (a0 * count)).hypot(jtr[1] / (a0 * a0 * count));
        if grad < 1e-14 || sse == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let m00 = jtj[0][0] * (1.0 + damping);
            let m11 = jtj[1][1] * (1.0 + damping);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det == 0.0 {
                damping *= 10.0;
                continue;
            }
            let s0 = (m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let s1 = (m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (n0, n1) = (a0 + s0, a1 + s1);
            if n1 <= a1_floor || n0 <= 0.0 {
                damping *= 10.0;
                continue;
            }
            let trial = sum_squares(samples, n0, n1);
            if trial < sse {
                a0 = n0;
                a1 = n1;
                sse = trial;
                damping = (damping * 0.1).max(1e-12);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        // no descent direction left: we sit at the minimum up to roundoff
        if !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence(MAX_ITER));
    }
    // The sum of squares is flat to roundoff before the parameters are;
    // finish with plain Gauss-Newton steps while they keep shrinking.
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let (jtj, jtr) = normal_equations(samples, a0, a1);
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det == 0.0 {
            break;
        }
        let s0 = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let s1 = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let size = (s0 / a0).hypot(s1 / a1.abs().max(1e-3));
        if !(size < last) || a1 + s1 <= a1_floor || a0 + s0 <= 0.0 {
            break;
        }
        a0 += s0;
        a1 += s1;
        last = size;
        if size < 1e-15 {
            break;
        }
    }
    let sse = sum_squares(samples, a0, a1);
    let max_residual = samples
        .iter()
        .map(|&(z, r)| (r - model(a0, a1, z)).abs())
        .fold(0.0, f64::max);
    Ok(EllipsoidFit {
        a0,
        a1,
        rms_residual: (sse / samples.len() as f64).sqrt(),
        max_residual,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub b: Vec<f64>,
    pub rms_residual: Vec<f64>,
    pub fits: Vec<EllipsoidFit>,
    /// Least-squares slope of `log rms` against `log b`.
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub slope_half_width: f64,
    /// All residuals sit at roundoff; the slope carries no information.
    pub degenerate: bool,
}

impl ScalingReport {
    /// `true` when the slope is within `tol` of 2.
    pub fn quadratic(&self, tol: f64) -> bool {
        !self.degenerate && (self.slope - 2.0).abs() <= tol
    }
}

/// Residuals below this multiple of `ε·r` count as roundoff.
const ROUNDOFF_FACTOR: f64 = 64.0;

fn check_ladder(b: &[f64]) -> Result<(), FitError> {
    if b.len() < 4 {
        return Err(FitError::BadLadder(format!("need at least 4 values, got {}", b.len())));
    }
    if b.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FitError::BadLadder("values must be strictly increasing".into()));
    }
    if !(b[0] > 0.0) || b[b.len() - 1] > distortion::FIRST_ORDER_B_LIMIT {
        return Err(FitError::BadLadder(format!(
            "values must lie in (0, {}]",
            distortion::FIRST_ORDER_B_LIMIT
        )));
    }
    if b[b.len() - 1] / b[0] < 100.0 * (1.0 - 1e-12) {
        return Err(FitError::BadLadder("values must span at least two decades".into()));
    }
    Ok(())
}

/// Ordinary least squares `y = intercept + slope·x`; returns
/// `(slope, intercept, standard error of slope)`.
fn regress(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, intercept, se)
}

/// Residual scaling law over a ladder of `b`, fitting the surface curve at
/// each rung. `curve` maps `b` to `(ζ, r)` samples.
pub fn scaling_from_curves<F>(b: &[f64], mut curve: F) -> Result<ScalingReport, FitError>
where
    F: FnMut(f64) -> Result<Vec<(f64, f64)>, FitError>,
{
    check_ladder(b)?;
    let mut fits = Vec::with_capacity(b.len());
    let mut degenerate = true;
    for &bi in b {
        let samples = curve(bi)?;
        let fit = fit_ellipsoid(&samples)?;
        if fit.rms_residual > ROUNDOFF_FACTOR * f64::EPSILON * fit.a0 {
            degenerate = false;
        }
        fits.push(fit);
    }
    let rms: Vec<f64> = fits.iter().map(|f| f.rms_residual).collect();
    let (slope, intercept, se) = if degenerate {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let x: Vec<f64> = b.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = rms.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
        regress(&x, &y)
    };
    Ok(ScalingReport {
        b: b.to_vec(),
        rms_residual: rms,
        fits,
        slope,
        intercept,
        slope_half_width: 2.0 * se,
        degenerate,
    })
}

/// Fits the ellipsoid to `Ξ₁(ζ)` for every `b` and regresses the residuals.
pub fn residual_scaling(dist: &DistortionSolution, b: &[f64], zeta: &[f64]) -> Result<ScalingReport, FitError> {
    scaling_from_curves(b, |bi| Ok(distortion::surface_curve(dist, bi, zeta)?.samples()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub level: f64,
    pub fit: EllipsoidFit,
    /// `rms_residual / a₀`.
    pub normalized_rms: f64,
    /// Normalized rms from refitting exact samples of the fitted ellipsoid.
    pub roundoff_floor: f64,
}

/// Fits an ellipsoid to each level surface `Θ = level`. Residuals are
/// reported per level; nothing is asserted about any single surface.
pub fn stratification_report(
    dist: &DistortionSolution,
    b: f64,
    levels: &[f64],
    zeta: &[f64],
) -> Result<Vec<LevelFit>, FitError> {
    levels
        .iter()
        .map(|&level| {
            let surface = distortion::level_surface(dist, b, level, zeta)?;
            let fit = fit_ellipsoid(&surface.samples())?;
            let exact: Vec<(f64, f64)> = zeta.iter().map(|&z| (z, fit.radius(z))).collect();
            let floor = fit_ellipsoid(&exact)?.rms_residual / fit.a0;
            Ok(LevelFit {
                level,
                fit,
                normalized_rms: fit.rms_residual / fit.a0,
                roundoff_floor: floor.max(f64::EPSILON),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::zeta_grid;
    use crate::lane_emden;
    use proptest::prelude::*;

    fn ellipsoid(a0: f64, a1: f64, count: usize) -> Vec<(f64, f64)> {
        zeta_grid(count).into_iter().map(|z| (z, model(a0, a1, z))).collect()
    }

    #[test]
    fn sphere() {
        let fit = fit_ellipsoid(&ellipsoid(2.0, 0.0, 201)).unwrap();
        assert!((fit.a0 - 2.0).abs() < 1e-15 && fit.a1.abs() < 1e-15);
        assert!(fit.rms_residual < 1e-15 && fit.converged);
    }

    #[test]
    fn exact_model_recovered() {
        let fit = fit_ellipsoid(&ellipsoid(3.0, 0.5, 201)).unwrap();
        assert!((fit.a0 - 3.0).abs() < 1e-12 && (fit.a1 - 0.5).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_ellipsoid(&[(0.0, 1.0), (1.0, 1.0)]), Err(FitError::TooFewSamples(2))));
        assert!(fit_ellipsoid(&[(0.0, 1.0), (0.5, -1.0), (1.0, 1.0)]).is_err());
        assert!(fit_ellipsoid(&[(0.0, 1.0), (0.5, 1.0), (1.5, 1.0)]).is_err());
    }

    #[test]
    fn fit_is_optimal() {
        let samples: Vec<(f64, f64)> = zeta_grid(201)
            .into_iter()
            .map(|z| (z, 3.0 + (0.02 - 0.05 * z * z) - 0.01 * z.powi(4)))
            .collect();
        let fit = fit_ellipsoid(&samples).unwrap();
        let best = sum_squares(&samples, fit.a0, fit.a1);
        for (d0, d1) in [(1e-6, 0.0), (-1e-6, 0.0), (0.0, 1e-6), (0.0, -1e-6)] {
            assert!(sum_squares(&samples, fit.a0 + d0, fit.a1 + d1) >= best);
        }
    }

    #[test]
    fn quadratic_surface_residual_scales_as_b_squared() {
        let dist = DistortionSolution::new(lane_emden::solve(1.0, 1e-12).unwrap()).unwrap();
        let b: Vec<f64> = (0..5).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect();
        let report = residual_scaling(&dist, &b, &zeta_grid(201)).unwrap();
        assert!(!report.degenerate);
        assert!((report.slope - 2.0).abs() < 0.1, "{}", report.slope);
        // residual/b → 0 while residual/b² levels off
        let per_b: Vec<f64> = report.b.iter().zip(&report.rms_residual).map(|(b, r)| r / b).collect();
        assert!(per_b.windows(2).all(|w| w[1] > w[0]));
        let per_b2: Vec<f64> = report.b.iter().zip(&report.rms_residual).map(|(b, r)| r / (b * b)).collect();
        assert!((per_b2[0] / per_b2[per_b2.len() - 1] - 1.0).abs() < 0.1, "{per_b2:?}");
    }

    #[test]
    fn exact_ellipsoids_are_degenerate() {
        let b = [1e-4, 1e-3, 1e-2, 3e-2];
        let report = scaling_from_curves(&b, |bi| Ok(ellipsoid(3.0, bi, 201))).unwrap();
        assert!(report.degenerate);
        assert!(report.rms_residual.iter().all(|&r| r < 1e-14));
        assert!(!report.quadratic(0.1));
    }

    #[test]
    fn ladder_preconditions() {
        let dist = DistortionSolution::new(lane_emden::solve(1.0, 1e-10).unwrap()).unwrap();
        let z = zeta_grid(21);
        assert!(residual_scaling(&dist, &[1e-3, 1e-2, 2e-2], &z).is_err());
        assert!(residual_scaling(&dist, &[1e-3, 2e-3, 5e-3, 1e-2], &z).is_err());
        assert!(residual_scaling(&dist, &[0.0, 1e-3, 1e-2, 2e-2], &z).is_err());
        assert!(residual_scaling(&dist, &[1e-3, 1e-2, 2e-2, 0.1], &z).is_err());
    }

    #[test]
    fn stratification() {
        let dist = DistortionSolution::new(lane_emden::solve(1.0, 1e-12).unwrap()).unwrap();
        let z = zeta_grid(201);
        let levels = [0.2, 0.5, 0.8];
        let still = stratification_report(&dist, 0.0, &levels, &z).unwrap();
        assert!(still.iter().all(|l| l.normalized_rms <= 10.0 * l.roundoff_floor));
        let spun = stratification_report(&dist, 1e-2, &levels, &z).unwrap();
        assert!(spun.iter().any(|l| l.normalized_rms > 10.0 * l.roundoff_floor));
    }

    #[test]
    fn residual_csv() {
        let samples = ellipsoid(1.0, 0.1, 5);
        let fit = fit_ellipsoid(&samples).unwrap();
        let mut buf = Vec::new();
        fit.write_residual_csv(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("zeta,r,r_fit,residual\n"));
        assert_eq!(text.lines().count(), 6);
    }

    proptest! {
        #[test]
        fn scale_covariance(a0 in 0.5f64..5.0, a1 in -0.5f64..2.0, c in 0.0f64..0.05, lambda in 0.1f64..10.0) {
            let samples: Vec<(f64, f64)> = zeta_grid(41)
                .into_iter()
                .map(|z| (z, model(a0, a1, z) + c * z.powi(4)))
                .collect();
            let scaled: Vec<(f64, f64)> = samples.iter().map(|&(z, r)| (z, lambda * r)).collect();
            let f = fit_ellipsoid(&samples).unwrap();
            let g = fit_ellipsoid(&scaled).unwrap();
            prop_assert!((g.a0 - lambda * f.a0).abs() < 1e-9 * lambda * f.a0);
            prop_assert!((g.a1 - f.a1).abs() < 1e-9 * f.a1.abs().max(1.0));
            prop_assert!((g.rms_residual - lambda * f.rms_residual).abs() < 1e-9 * lambda * f.a0);
        }

        #[test]
        fn depends_only_on_zeta_squared(a0 in 0.5f64..5.0, a1 in -0.5f64..2.0, c in 0.0f64..0.05) {
            let half: Vec<(f64, f64)> = zeta_grid(41)
                .into_iter()
                .map(|z| (z, model(a0, a1, z) + c * z.powi(4)))
                .collect();
            let mirrored: Vec<(f64, f64)> = half.iter().map(|&(z, r)| (-z, r)).collect();
            let f = fit_ellipsoid(&half).unwrap();
            let g = fit_ellipsoid(&mirrored).unwrap();
            prop_assert!((f.a0 - g.a0).abs() < 1e-12 * f.a0);
            prop_assert!((f.a1 - g.a1).abs() < 1e-12 * f.a1.abs().max(1.0));
        }
    }
}
