//! First-order rotational distortion of a polytrope.
//!
//! With `𝖻 = Ω²/(4πGρ_O)` the distorted Lane–Emden function is
//! `Θ(ξ, ζ) = θ(ξ) + 𝖻 (h₀(ξ) + A₂ψ₂(ξ)P₂(ζ))`, where
//!
//! ```text
//! h₀'' + (2/ξ)h₀' + nθ^{n−1}h₀ = 1,              h₀ ~ ξ²/6
//! ψ₂'' + (2/ξ)ψ₂' + (nθ^{n−1} − 6/ξ²)ψ₂ = 0,      ψ₂ ~ ξ²
//! ```
//!
//! and `A₂` makes the `P₂` part of the potential decay outside the star.

use crate::lane_emden::{guarded_power, series, LaneEmdenSolution, SERIES_START};
use crate::ode::{self, DenseTrajectory, OdeError, SolverOptions};
use crate::roots::{self, RootError};
use serde::{Deserialize, Serialize};
use std::io;
use thiserror::Error;

/// Validity guide for the first-order expansion.
pub const FIRST_ORDER_B_LIMIT: f64 = 0.05;

/// Levels closer than this to 0 or 1 are rejected by [`level_surface`].
pub const LEVEL_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistortionError {
    #[error("rotation parameter b must be nonnegative, got {0}")]
    NegativeB(f64),
    #[error("ψ₂ normalization must be positive, got {0}")]
    BadNormalization(f64),
    #[error("degenerate exterior matching: 3ψ₂(ξ₁) + ξ₁ψ₂'(ξ₁) = {0}")]
    DegenerateMatching(f64),
    #[error("ξ = {xi} outside [0, {limit}]")]
    OutOfRange { xi: f64, limit: f64 },
    #[error("level {0} is not inside ({LEVEL_MARGIN}, {})", 1.0 - LEVEL_MARGIN)]
    LevelOutsideMargins(f64),
    #[error("no bracket for level {level} at ζ = {zeta}")]
    NoBracket { level: f64, zeta: f64 },
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// `P₂(ζ) = (3ζ² − 1)/2`.
pub fn legendre_p2(zeta: f64) -> f64 {
    0.5 * (3.0 * zeta * zeta - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Monopole,
    Quadrupole,
}

/// A radial function (`h₀` or unit-normalized `ψ₂`) on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    mode: Mode,
    n: f64,
    xi1: f64,
    trajectory: DenseTrajectory<4>,
    // exterior: h₀ = ξ²/6 + α + β/ξ, ψ₂ = αξ² + βξ⁻³
    alpha: f64,
    beta: f64,
}

impl RadialSolution {
    fn solve(base: &LaneEmdenSolution, mode: Mode) -> Result<Self, DistortionError> {
        let n = base.n();
        let tol = base.tolerance();
        let opts = SolverOptions {
            rtol: tol,
            atol: tol * 1e-2,
            ..SolverOptions::default()
        };
        let (source, centrifugal) = match mode {
            Mode::Monopole => (1.0, 0.0),
            Mode::Quadrupole => (0.0, 6.0),
        };
        let rhs = move |xi: f64, y: &[f64; 4]| {
            let coupling = if y[0] > 0.0 { n * guarded_power(y[0], n - 1.0) } else { 0.0 };
            Some([
                y[1],
                -2.0 * y[1] / xi - guarded_power(y[0], n),
                y[3],
                source - 2.0 * y[3] / xi - (coupling - centrifugal / (xi * xi)) * y[2],
            ])
        };
        let x0 = SERIES_START;
        let [t0, dt0] = series(n, x0);
        let [f0, df0] = Self::series_at(mode, n, x0);
        let trajectory = ode::integrate_dense(rhs, x0, [t0, dt0, f0, df0], base.xi1(), &opts, [opts.atol; 4])?;
        let xi1 = base.xi1();
        let [_, _, f1, df1] = trajectory.eval(xi1).expect("integrated up to ξ₁");
        let (alpha, beta) = match mode {
            Mode::Monopole => {
                let beta = -xi1 * xi1 * (df1 - xi1 / 3.0);
                (f1 - xi1 * xi1 / 6.0 - beta / xi1, beta)
            }
            Mode::Quadrupole => {
                let alpha = (3.0 * f1 + xi1 * df1) / (5.0 * xi1 * xi1);
                (alpha, (f1 - alpha * xi1 * xi1) * xi1.powi(3))
            }
        };
        Ok(Self {
            mode,
            n,
            xi1,
            trajectory,
            alpha,
            beta,
        })
    }

    fn series_at(mode: Mode, n: f64, xi: f64) -> [f64; 2] {
        let x2 = xi * xi;
        match mode {
            Mode::Monopole => [x2 / 6.0 - n * x2 * x2 / 120.0, xi / 3.0 - n * x2 * xi / 30.0],
            Mode::Quadrupole => [x2 * (1.0 - n * x2 / 14.0), 2.0 * xi - 4.0 * n * x2 * xi / 14.0],
        }
    }

    /// `(f, f')` at any `ξ ≥ 0`, continued into vacuum past `ξ₁`.
    pub fn eval(&self, xi: f64) -> [f64; 2] {
        if xi <= SERIES_START {
            Self::series_at(self.mode, self.n, xi)
        } else if xi >= self.xi1 {
            match self.mode {
                Mode::Monopole => [
                    xi * xi / 6.0 + self.alpha + self.beta / xi,
                    xi / 3.0 - self.beta / (xi * xi),
                ],
                Mode::Quadrupole => [
                    self.alpha * xi * xi + self.beta / xi.powi(3),
                    2.0 * self.alpha * xi - 3.0 * self.beta / xi.powi(4),
                ],
            }
        } else {
            let [_, _, f, df] = self.trajectory.eval(xi).expect("inside the integrated range");
            [f, df]
        }
    }

    fn grid(&self) -> Vec<f64> {
        let mut g = vec![0.0];
        g.extend(self.trajectory.steps().iter().map(|s| s.t0));
        g.push(self.xi1);
        g
    }
}

/// Solves the monopole equation for `h₀`.
pub fn solve_h0(base: &LaneEmdenSolution) -> Result<RadialSolution, DistortionError> {
    RadialSolution::solve(base, Mode::Monopole)
}

/// Solves the quadrupole equation for `ψ₂` with unit `ξ²` coefficient.
pub fn solve_psi2(base: &LaneEmdenSolution) -> Result<RadialSolution, DistortionError> {
    RadialSolution::solve(base, Mode::Quadrupole)
}

/// `A₂ = −(5/6)ξ₁² / (3ψ₂(ξ₁) + ξ₁ψ₂'(ξ₁))` for a given `ψ₂` scale.
pub fn compute_a2(base: &LaneEmdenSolution, psi2: &RadialSolution, psi2_scale: f64) -> Result<f64, DistortionError> {
    let xi1 = base.xi1();
    let [p, dp] = psi2.eval(xi1);
    let denom = psi2_scale * (3.0 * p + xi1 * dp);
    if denom.abs() < 1e-300 || !denom.is_finite() {
        return Err(DistortionError::DegenerateMatching(denom));
    }
    Ok(-5.0 / 6.0 * xi1 * xi1 / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSolution {
    base: LaneEmdenSolution,
    h0: RadialSolution,
    psi2: RadialSolution,
    psi2_scale: f64,
    a2: f64,
}

impl DistortionSolution {
    pub fn new(base: LaneEmdenSolution) -> Result<Self, DistortionError> {
        Self::with_psi2_scale(base, 1.0)
    }

    /// Uses `λψ₂` in place of the unit-normalized `ψ₂`; `A₂` absorbs `1/λ`.
    pub fn with_psi2_scale(base: LaneEmdenSolution, scale: f64) -> Result<Self, DistortionError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DistortionError::BadNormalization(scale));
        }
        let h0 = solve_h0(&base)?;
        let psi2 = solve_psi2(&base)?;
        let a2 = compute_a2(&base, &psi2, scale)?;
        Ok(Self {
            base,
            h0,
            psi2,
            psi2_scale: scale,
            a2,
        })
    }

    pub fn base(&self) -> &LaneEmdenSolution {
        &self.base
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn psi2_scale(&self) -> f64 {
        self.psi2_scale
    }

    /// `(h₀, h₀')` at `ξ ≥ 0`.
    pub fn h0(&self, xi: f64) -> [f64; 2] {
        self.h0.eval(xi)
    }

    /// `(ψ₂, ψ₂')` at `ξ ≥ 0`, in the chosen normalization.
    pub fn psi2(&self, xi: f64) -> [f64; 2] {
        let [p, dp] = self.psi2.eval(xi);
        [self.psi2_scale * p, self.psi2_scale * dp]
    }

    pub fn h0_solution(&self) -> &RadialSolution {
        &self.h0
    }

    pub fn psi2_solution(&self) -> &RadialSolution {
        &self.psi2
    }

    /// `𝔥(ξ, ζ) = h₀(ξ) + A₂ψ₂(ξ)P₂(ζ)`.
    pub fn distortion(&self, xi: f64, zeta: f64) -> f64 {
        self.h0(xi)[0] + self.a2 * self.psi2(xi)[0] * legendre_p2(zeta)
    }

    /// Quadratic-surface coefficients `(c₀, c₁, c₂)` of
    /// `Ξ₁(ζ) = c₀ + (c₁ − c₂ζ²)𝖻`.
    pub fn surface_coefficients(&self) -> (f64, f64, f64) {
        let xi1 = self.base.xi1();
        let lever = xi1 * xi1 / self.base.mu1();
        let h0 = self.h0(xi1)[0];
        let ap = self.a2 * self.psi2(xi1)[0];
        (xi1, lever * (h0 - 0.5 * ap), -1.5 * lever * ap)
    }

    /// Surface radius `Ξ₁(ζ)` at first order in `b`.
    pub fn surface_radius(&self, zeta: f64, b: f64) -> f64 {
        let xi1 = self.base.xi1();
        xi1 + xi1 * xi1 / self.base.mu1() * self.distortion(xi1, zeta) * b
    }

    /// CSV with columns `xi, h0, psi2`.
    pub fn write_radial_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "h0", "psi2"])?;
        let mut grid = self.h0.grid();
        grid.extend(self.psi2.grid());
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        for xi in grid {
            w.serialize((xi, self.h0(xi)[0], self.psi2(xi)[0]))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Scalars for reports; `scale` is the length `𝖺` when the physical
    /// central density is known.
    pub fn summary(&self, scale: Option<f64>) -> DistortionSummary {
        let (c0, c1, c2) = self.surface_coefficients();
        DistortionSummary {
            n: self.base.n(),
            xi1: self.base.xi1(),
            mu1: self.base.mu1(),
            a2: self.a2,
            psi2_at_surface: self.psi2(self.base.xi1())[0],
            h0_at_surface: self.h0(self.base.xi1())[0],
            c0,
            c1,
            c2,
            length_scale: scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSummary {
    pub n: f64,
    pub xi1: f64,
    pub mu1: f64,
    pub a2: f64,
    pub psi2_at_surface: f64,
    pub h0_at_surface: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub length_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCurve {
    pub b: f64,
    pub zeta: Vec<f64>,
    pub xi_surface: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// `b` exceeds [`FIRST_ORDER_B_LIMIT`].
    pub beyond_first_order: bool,
}

impl SurfaceCurve {
    /// CSV with columns `zeta, xi_surface`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zeta", "xi_surface"])?;
        for (z, x) in self.zeta.iter().zip(&self.xi_surface) {
            w.serialize((z, x))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.zeta.iter().copied().zip(self.xi_surface.iter().copied()).collect()
    }
}

/// `count` points uniformly spaced on `[−1, 1]`.
pub fn zeta_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| -1.0 + 2.0 * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn surface_curve(dist: &DistortionSolution, b: f64, zeta: &[f64]) -> Result<SurfaceCurve, DistortionError> {
    if !(b >= 0.0) {
        return Err(DistortionError::NegativeB(b));
    }
    let (c0, c1, c2) = dist.surface_coefficients();
    Ok(SurfaceCurve {
        b,
        zeta: zeta.to_vec(),
        xi_surface: zeta.iter().map(|&z| dist.surface_radius(z, b)).collect(),
        c0,
        c1,
        c2,
        beyond_first_order: b > FIRST_ORDER_B_LIMIT,
    })
}

/// `Θ(ξ, ζ) = θ(ξ) + b𝔥(ξ, ζ)` for `0 ≤ ξ ≤ Ξ₁(ζ)`.
pub fn theta_distorted(dist: &DistortionSolution, xi: f64, zeta: f64, b: f64) -> Result<f64, DistortionError> {
    if !(b >= 0.0) {
        return Err(DistortionError::NegativeB(b));
    }
    let limit = dist.surface_radius(zeta, b).max(dist.base.xi1());
    if !(0.0..=limit).contains(&xi) {
        return Err(DistortionError::OutOfRange { xi, limit });
    }
    Ok(theta_unchecked(dist, xi, zeta, b))
}

fn theta_unchecked(dist: &DistortionSolution, xi: f64, zeta: f64, b: f64) -> f64 {
    dist.base.state_ext(xi)[0] + b * dist.distortion(xi, zeta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSurface {
    pub level: f64,
    pub zeta: Vec<f64>,
    pub xi: Vec<f64>,
}

impl LevelSurface {
    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.zeta.iter().copied().zip(self.xi.iter().copied()).collect()
    }
}

/// Radii `ξ*(ζ)` with `Θ(ξ*, ζ) = level`.
pub fn level_surface(
    dist: &DistortionSolution,
    b: f64,
    level: f64,
    zeta: &[f64],
) -> Result<LevelSurface, DistortionError> {
    if !(b >= 0.0) {
        return Err(DistortionError::NegativeB(b));
    }
    if !(level > LEVEL_MARGIN && level < 1.0 - LEVEL_MARGIN) {
        return Err(DistortionError::LevelOutsideMargins(level));
    }
    let xtol = 1e-15 * dist.base.xi1();
    let xi = zeta
        .iter()
        .map(|&z| {
            let hi = dist.surface_radius(z, b);
            roots::brent(|x| theta_unchecked(dist, x, z, b) - level, 0.0, hi, xtol, 200).map_err(|e| match e {
                RootError::NoBracket { .. } | RootError::NoConvergence(_) => {
                    DistortionError::NoBracket { level, zeta: z }
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LevelSurface {
        level,
        zeta: zeta.to_vec(),
        xi,
    })
}
