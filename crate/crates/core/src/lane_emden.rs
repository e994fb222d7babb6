//! Lane-Emden equation `θ'' + (2/ξ)θ' + (θ ∨ 0)^n = 0`, `θ(0) = 1`, `θ'(0) = 0`.

use crate::ode::{self, DenseTrajectory, OdeError, SolverOptions, StepControl};
use std::io;
use thiserror::Error;

/// Start of the numerical integration; the Taylor series covers `[0, ξ0]`.
pub const SERIES_START: f64 = 1e-4;

/// Integration is abandoned past this radius (no zero found).
const XI_GUARD: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaneEmdenError {
    #[error("polytropic index must lie in [0, 5), got {0}")]
    InvalidIndex(f64),
    #[error("no finite zero of θ found below ξ = {0}")]
    NoFiniteZero(f64),
    #[error("ξ = {xi} is outside [0, {xi1}]")]
    OutOfRange { xi: f64, xi1: f64 },
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// `(θ ∨ 0)^n`; zero in vacuum, including for `n = 0`.
pub(crate) fn guarded_power(theta: f64, n: f64) -> f64 {
    if theta > 0.0 {
        theta.powf(n)
    } else {
        0.0
    }
}

/// Series start `θ = 1 − ξ²/6 + nξ⁴/120`.
pub(crate) fn series(n: f64, xi: f64) -> [f64; 2] {
    let x2 = xi * xi;
    [1.0 - x2 / 6.0 + n * x2 * x2 / 120.0, -xi / 3.0 + n * x2 * xi / 30.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneEmdenSolution {
    n: f64,
    xi1: f64,
    mu1: f64,
    tol: f64,
    trajectory: DenseTrajectory<2>,
}

/// Solves the Lane-Emden equation and locates its first zero.
///
/// `tol` drives both the integrator tolerance and the width of the bisection
/// bracket around `ξ₁`.
pub fn solve(n: f64, tol: f64) -> Result<LaneEmdenSolution, LaneEmdenError> {
    if !(n.is_finite() && (0.0..5.0).contains(&n)) {
        return Err(LaneEmdenError::InvalidIndex(n));
    }
    let opts = SolverOptions {
        rtol: tol,
        atol: tol * 1e-2,
        ..SolverOptions::default()
    };
    let rhs = |xi: f64, y: &[f64; 2]| Some([y[1], -2.0 * y[1] / xi - guarded_power(y[0], n)]);

    let mut trajectory = DenseTrajectory::new();
    let mut zero = None;
    let bracket = (tol * 1e-2).max(1e-15);
    ode::integrate(
        rhs,
        SERIES_START,
        series(n, SERIES_START),
        XI_GUARD,
        &opts,
        [opts.atol; 2],
        |step| {
            trajectory.push(step.clone());
            match step.locate(|_, y| y[0], bracket) {
                Some(xi) => {
                    zero = Some(xi);
                    StepControl::Stop
                }
                None => StepControl::Continue,
            }
        },
    )?;
    let xi1 = zero.ok_or(LaneEmdenError::NoFiniteZero(XI_GUARD))?;
    trajectory.truncate_at(xi1);
    let dtheta1 = trajectory.eval(xi1).expect("zero lies on the trajectory")[1];
    Ok(LaneEmdenSolution {
        n,
        xi1,
        mu1: -xi1 * xi1 * dtheta1,
        tol,
        trajectory,
    })
}

impl LaneEmdenSolution {
    pub fn n(&self) -> f64 {
        self.n
    }

    /// First zero ξ₁.
    pub fn xi1(&self) -> f64 {
        self.xi1
    }

    /// μ₁ = −ξ₁²θ'(ξ₁).
    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn check(&self, xi: f64) -> Result<(), LaneEmdenError> {
        if xi.is_nan() || xi < 0.0 || xi > self.xi1 {
            return Err(LaneEmdenError::OutOfRange { xi, xi1: self.xi1 });
        }
        Ok(())
    }

    pub fn theta_at(&self, xi: f64) -> Result<f64, LaneEmdenError> {
        self.check(xi)?;
        Ok(self.state_ext(xi)[0])
    }

    pub fn dtheta_at(&self, xi: f64) -> Result<f64, LaneEmdenError> {
        self.check(xi)?;
        Ok(self.state_ext(xi)[1])
    }

    /// `(θ, θ')` on `[0, ∞)`: series near the centre, dense output inside, and
    /// the vacuum continuation `θ = μ₁(1/ξ − 1/ξ₁)` outside.
    pub(crate) fn state_ext(&self, xi: f64) -> [f64; 2] {
        if xi <= SERIES_START {
            series(self.n, xi)
        } else if xi >= self.xi1 {
            [self.mu1 * (1.0 / xi - 1.0 / self.xi1), -self.mu1 / (xi * xi)]
        } else {
            self.trajectory.eval(xi).expect("inside the integrated range")
        }
    }

    /// Step-end grid of the integration, with ξ = 0 prepended.
    pub fn grid(&self) -> Vec<f64> {
        let mut g = vec![0.0];
        g.extend(self.trajectory.steps().iter().map(|s| s.t0));
        g.push(self.xi1);
        g
    }

    /// CSV with columns `xi, theta, dtheta`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "theta", "dtheta"])?;
        for xi in self.grid() {
            let [t, dt] = self.state_ext(xi);
            w.serialize((xi, t, dt))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn index_zero_closed_form() {
        let s = solve(0.0, 1e-12).unwrap();
        assert!((s.xi1() - 6f64.sqrt()).abs() < 1e-10);
        assert!((s.mu1() - 2.0 * 6f64.sqrt()).abs() < 1e-9);
        for xi in [0.5, 1.0, 2.0] {
            assert!((s.theta_at(xi).unwrap() - (1.0 - xi * xi / 6.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn index_one_closed_form() {
        let s = solve(1.0, 1e-12).unwrap();
        assert!((s.xi1() - PI).abs() < 1e-8);
        assert!((s.mu1() - PI).abs() < 1e-8);
        assert!((s.theta_at(PI / 2.0).unwrap() - 2.0 / PI).abs() < 1e-10);
        assert_eq!(s.theta_at(0.0).unwrap(), 1.0);
        assert!(s.theta_at(s.xi1()).unwrap().abs() < 1e-10);
        let x: f64 = 2.0;
        let exact = (x * x.cos() - x.sin()) / (x * x);
        assert!((s.dtheta_at(x).unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn index_three_halves_reference_values() {
        let s = solve(1.5, 1e-12).unwrap();
        assert!((s.xi1() - 3.653_753_736).abs() < 1e-7, "{}", s.xi1());
        assert!((s.mu1() - 2.714_055_120).abs() < 1e-7, "{}", s.mu1());
    }

    #[test]
    fn rejects_bad_indices_and_ranges() {
        assert!(matches!(solve(5.0, 1e-10), Err(LaneEmdenError::InvalidIndex(_))));
        assert!(matches!(solve(-0.5, 1e-10), Err(LaneEmdenError::InvalidIndex(_))));
        let s = solve(1.0, 1e-10).unwrap();
        assert!(s.theta_at(4.0).is_err());
        assert!(s.dtheta_at(-1.0).is_err());
    }

    #[test]
    fn strictly_decreasing_profile() {
        let s = solve(3.0, 1e-11).unwrap();
        let grid = s.grid();
        for w in grid.windows(2) {
            assert!(s.theta_at(w[1]).unwrap() < s.theta_at(w[0]).unwrap());
        }
        assert!(s.mu1() > 0.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = solve(1.0, 1e-10).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("xi,theta,dtheta\n0.0,1.0,"));
        assert_eq!(text.lines().count(), s.grid().len() + 1);
    }
}
