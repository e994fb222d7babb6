//! Barotropic equation of state `P = 𝖠ρ^γ (1 + Λ(𝖠ρ^{γ-1}/𝖼²))` with a
//! truncated power series `Λ(x) = Σ_{k≥1} λ_k x^k`.
//!
//! Internally everything is parametrized by the polytropic temperature
//! `w = 𝖠ρ^{γ-1}` (and `x = w/𝖼²`): density, pressure and the enthalpy
//! integrand are all smooth in `w`, including at the vacuum end `w → 0` where
//! they are singular in `P`. Integrating the enthalpy in `x` is the
//! `P = s^{γ/(γ-1)}` endpoint substitution, up to the `Λ` correction.
//!
//! Enthalpy conventions:
//! * relativistic (`𝖼` finite): `h(P) = ∫₀^P dP'/(𝖼²ρ + P')`, dimensionless;
//! * nonrelativistic: `u(P) = ∫₀^P dP'/ρ`.

use crate::quadrature;
use crate::roots::bisect_predicate;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EosError {
    #[error("invalid equation-of-state parameter: {0}")]
    InvalidParameter(String),
    #[error("argument {name} = {value} is not allowed ({reason})")]
    InvalidArgument {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{name} = {value} lies outside the validity range (limit {limit})")]
    OutsideValidity {
        name: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("causality/stability condition 0 < dP/dρ < c² fails at ρ = {rho}: dP/dρ = {cs2}")]
    Causality { rho: f64, cs2: f64 },
    #[error("inversion of the equation of state failed for {name} = {value}")]
    Inversion { name: &'static str, value: f64 },
}

/// Speed of light in the units of the model. Geometric units (`𝖼 = 1`) are
/// the default; the nonrelativistic mode corresponds to `𝖼 = ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LightSpeed {
    Finite(f64),
    Nonrelativistic,
}

impl LightSpeed {
    /// `1/𝖼²`, zero in the nonrelativistic mode.
    pub fn inv_c2(self) -> f64 {
        match self {
            LightSpeed::Finite(c) => 1.0 / (c * c),
            LightSpeed::Nonrelativistic => 0.0,
        }
    }

    pub fn is_relativistic(self) -> bool {
        matches!(self, LightSpeed::Finite(_))
    }
}

impl Default for LightSpeed {
    fn default() -> Self {
        LightSpeed::Finite(1.0)
    }
}

/// Polytropic index `n = 1/(γ-1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PolytropeIndex(f64);

impl PolytropeIndex {
    pub fn new(n: f64) -> Result<Self, EosError> {
        if !(n.is_finite() && n >= 0.0) {
            return Err(EosError::InvalidParameter(format!(
                "polytropic index must be finite and non-negative, got {n}"
            )));
        }
        Ok(Self(n))
    }

    pub fn from_gamma(gamma: f64) -> Result<Self, EosError> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(EosError::InvalidParameter(format!(
                "gamma must be finite and > 1, got {gamma}"
            )));
        }
        Ok(Self(1.0 / (gamma - 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn gamma(self) -> f64 {
        1.0 + 1.0 / self.0
    }

    /// `n(γ-1) = 1` to 1e-14, used to reject contradictory configurations.
    pub fn consistent_with_gamma(self, gamma: f64) -> bool {
        (self.0 * (gamma - 1.0) - 1.0).abs() <= 1e-14
    }
}

const SCAN_X_MIN: f64 = 1e-12;
const SCAN_X_MAX: f64 = 1e12;
const SCAN_PER_DECADE: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct EosSpec {
    gamma: f64,
    a_coeff: f64,
    light: LightSpeed,
    lambda: Vec<f64>,
    // limit in x = w/c² of the range where 0 < dP/dρ < c² and P > 0
    x_valid: f64,
    // limit in x of the range where P(ρ) is still strictly increasing
    x_monotone: f64,
}

impl EosSpec {
    /// Builds the equation of state and computes its validity range.
    ///
    /// `lambda` holds `λ_1, λ_2, …`; `Λ(0) = 0` holds by construction.
    pub fn new(gamma: f64, a_coeff: f64, light: LightSpeed, lambda: Vec<f64>) -> Result<Self, EosError> {
        PolytropeIndex::from_gamma(gamma)?;
        if !(a_coeff.is_finite() && a_coeff > 0.0) {
            return Err(EosError::InvalidParameter(format!(
                "polytropic constant A must be finite and positive, got {a_coeff}"
            )));
        }
        if let LightSpeed::Finite(c) = light {
            if !(c.is_finite() && c > 0.0) {
                return Err(EosError::InvalidParameter(format!(
                    "speed of light must be finite and positive, got {c}"
                )));
            }
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(EosError::InvalidParameter(
                "Λ coefficients must be finite".into(),
            ));
        }
        let mut eos = Self {
            gamma,
            a_coeff,
            light,
            lambda,
            x_valid: f64::INFINITY,
            x_monotone: f64::INFINITY,
        };
        if light.is_relativistic() {
            eos.x_valid = eos.scan_limit(|e, x| e.admissible_at_x(x));
            eos.x_monotone = eos.scan_limit(|e, x| e.monotone_at_x(x));
        }
        Ok(eos)
    }

    /// Pure polytrope in geometric units (`𝖼 = 1`, `Λ ≡ 0`).
    pub fn polytrope(gamma: f64, a_coeff: f64) -> Result<Self, EosError> {
        Self::new(gamma, a_coeff, LightSpeed::Finite(1.0), Vec::new())
    }

    /// Pure polytrope without relativistic corrections (`𝖼 = ∞`).
    pub fn newtonian(gamma: f64, a_coeff: f64) -> Result<Self, EosError> {
        Self::new(gamma, a_coeff, LightSpeed::Nonrelativistic, Vec::new())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a_coeff(&self) -> f64 {
        self.a_coeff
    }

    pub fn light(&self) -> LightSpeed {
        self.light
    }

    pub fn lambda_coeffs(&self) -> &[f64] {
        &self.lambda
    }

    pub fn index(&self) -> PolytropeIndex {
        PolytropeIndex(1.0 / (self.gamma - 1.0))
    }

    fn n(&self) -> f64 {
        1.0 / (self.gamma - 1.0)
    }

    /// `false` when γ lies outside `(6/5, 2)`; such values are allowed for
    /// exploration but fall outside the assumed regime.
    pub fn gamma_in_assumed_range(&self) -> bool {
        self.gamma > 1.2 && self.gamma < 2.0
    }

    /// Natural length scale `a = √(𝖠γ/(4π(γ-1))) ρ_O^{-(2-γ)/2}` (G = 1).
    pub fn length_scale(&self, rho_center: f64) -> f64 {
        (self.a_coeff * self.gamma / (4.0 * std::f64::consts::PI * (self.gamma - 1.0))).sqrt()
            * rho_center.powf(-(2.0 - self.gamma) / 2.0)
    }

    // ---- Λ series ---------------------------------------------------------

    fn lambda_at(&self, x: f64) -> f64 {
        // Σ λ_k x^k, Horner
        self.lambda.iter().rev().fold(0.0, |acc, &l| (acc + l) * x)
    }

    fn lambda_prime_at(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &l) in self.lambda.iter().enumerate().rev() {
            acc = acc * x + (k as f64 + 1.0) * l;
        }
        acc
    }

    fn admissible_at_x(&self, x: f64) -> bool {
        let one_l = 1.0 + self.lambda_at(x);
        let g = x * (self.gamma * one_l + (self.gamma - 1.0) * x * self.lambda_prime_at(x));
        one_l > 0.0 && g > 0.0 && g < 1.0
    }

    fn monotone_at_x(&self, x: f64) -> bool {
        let one_l = 1.0 + self.lambda_at(x);
        one_l > 0.0
            && (self.n() + 1.0) * one_l + x * self.lambda_prime_at(x) > 0.0
            && 1.0 + x * one_l > 0.0
    }

    fn scan_limit(&self, ok: impl Fn(&Self, f64) -> bool) -> f64 {
        let decades = (SCAN_X_MAX / SCAN_X_MIN).log10();
        let count = (decades as usize) * SCAN_PER_DECADE;
        let mut prev = 0.0;
        for i in 0..=count {
            let x = SCAN_X_MIN * 10f64.powf(decades * i as f64 / count as f64);
            if !ok(self, x) {
                if prev == 0.0 {
                    return 0.0;
                }
                let (lo, _) = bisect_predicate(|x| ok(self, x), prev, x, 1e-15);
                return lo;
            }
            prev = x;
        }
        f64::INFINITY
    }

    // ---- w parametrization -------------------------------------------------

    pub(crate) fn w_of_rho(&self, rho: f64) -> f64 {
        self.a_coeff * rho.powf(self.gamma - 1.0)
    }

    pub(crate) fn rho_of_w(&self, w: f64) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            (w / self.a_coeff).powf(self.n())
        }
    }

    pub(crate) fn p_of_w(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let x = w * self.light.inv_c2();
        self.rho_of_w(w) * w * (1.0 + self.lambda_at(x))
    }

    /// Enthalpy (`h` or `u`, see module docs) as a function of `w`.
    pub(crate) fn enthalpy_of_w(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let n1 = self.n() + 1.0;
        match self.light {
            LightSpeed::Nonrelativistic => n1 * w,
            LightSpeed::Finite(_) => {
                let x = w * self.light.inv_c2();
                if self.lambda.is_empty() {
                    n1 * x.ln_1p()
                } else {
                    let (v, _) = quadrature::integrate(|s| self.dh_dx(s), 0.0, x, 1e-16, 1e-14);
                    v
                }
            }
        }
    }

    // dh/dx (relativistic) in closed form
    fn dh_dx(&self, x: f64) -> f64 {
        let one_l = 1.0 + self.lambda_at(x);
        ((self.n() + 1.0) * one_l + x * self.lambda_prime_at(x)) / (1.0 + x * one_l)
    }

    /// Derivative of the enthalpy with respect to `w`.
    pub(crate) fn dh_dw(&self, w: f64) -> f64 {
        match self.light {
            LightSpeed::Nonrelativistic => self.n() + 1.0,
            LightSpeed::Finite(_) => {
                let ic2 = self.light.inv_c2();
                self.dh_dx(w.max(0.0) * ic2) * ic2
            }
        }
    }

    /// `dP/dw = ρ [(n+1)(1+Λ) + xΛ']`.
    pub(crate) fn dp_dw(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let x = w * self.light.inv_c2();
        self.rho_of_w(w) * ((self.n() + 1.0) * (1.0 + self.lambda_at(x)) + x * self.lambda_prime_at(x))
    }

    /// `dρ/dw = nρ/w`, with its limit at `w = 0`.
    pub(crate) fn drho_dw(&self, w: f64) -> f64 {
        let n = self.n();
        if w > 0.0 {
            return n * self.rho_of_w(w) / w;
        }
        if n > 1.0 {
            0.0
        } else if n == 1.0 {
            1.0 / self.a_coeff
        } else {
            f64::INFINITY
        }
    }

    pub(crate) fn w_of_enthalpy(&self, h: f64) -> Option<f64> {
        if h <= 0.0 {
            return Some(0.0);
        }
        let n1 = self.n() + 1.0;
        match self.light {
            LightSpeed::Nonrelativistic => Some(h / n1),
            LightSpeed::Finite(_) => {
                let c2 = 1.0 / self.light.inv_c2();
                if self.lambda.is_empty() {
                    return Some((h / n1).exp_m1() * c2);
                }
                let x = self.invert_monotone(h, |x| self.enthalpy_of_w(x * c2), |x| self.dh_dx(x), (h / n1).exp_m1())?;
                Some(x * c2)
            }
        }
    }

    /// Safeguarded Newton in `ln x` for an increasing function `f` of `x > 0`
    /// with derivative `df`.
    fn invert_monotone(
        &self,
        target: f64,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
        guess: f64,
    ) -> Option<f64> {
        let mut s = guess.max(1e-300).ln();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, self.x_monotone.ln());
        if s >= hi {
            s = hi - 1.0;
        }
        for _ in 0..200 {
            let x = s.exp();
            let fx = f(x);
            let resid = fx.ln() - target.ln();
            if resid > 0.0 {
                hi = hi.min(s);
            } else {
                lo = lo.max(s);
            }
            let slope = x * df(x) / fx;
            let mut next = s - resid / slope;
            if !next.is_finite() || next <= lo || next >= hi {
                next = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (false, _) => s - 2.0,
                    (_, false) => s + 2.0,
                };
            }
            if (next - s).abs() < 1e-15 * s.abs().max(1.0) {
                return Some(next.exp());
            }
            s = next;
        }
        None
    }

    fn w_of_pressure(&self, p: f64) -> Option<f64> {
        if p <= 0.0 {
            return Some(0.0);
        }
        let n = self.n();
        let guess = (self.a_coeff.powf(n) * p).powf(1.0 / (n + 1.0));
        match self.light {
            LightSpeed::Nonrelativistic => Some(guess),
            LightSpeed::Finite(_) if self.lambda.is_empty() => Some(guess),
            LightSpeed::Finite(_) => {
                let c2 = 1.0 / self.light.inv_c2();
                let x = self.invert_monotone(
                    p,
                    |x| self.p_of_w(x * c2),
                    |x| {
                        let w = x * c2;
                        let one_l = 1.0 + self.lambda_at(x);
                        // dP/dx = c² ρ [(n+1)(1+Λ) + xΛ']
                        c2 * self.rho_of_w(w) * ((n + 1.0) * one_l + x * self.lambda_prime_at(x))
                    },
                    guess / c2,
                )?;
                Some(x * c2)
            }
        }
    }

    // ---- validity -----------------------------------------------------------

    /// Upper end (exclusive) of the validity range in `w`.
    fn w_valid(&self) -> f64 {
        self.x_valid / self.light.inv_c2()
    }

    pub(crate) fn w_monotone(&self) -> f64 {
        self.x_monotone / self.light.inv_c2()
    }

    /// Largest density for which the causality and positivity conditions hold
    /// (`+∞` when unbounded).
    pub fn rho_max(&self) -> f64 {
        self.rho_of_w(self.w_valid())
    }

    pub fn pressure_max(&self) -> f64 {
        let w = self.w_valid();
        if w.is_infinite() {
            f64::INFINITY
        } else {
            self.p_of_w(w)
        }
    }

    pub fn enthalpy_max(&self) -> f64 {
        let w = self.w_valid();
        if w.is_infinite() {
            f64::INFINITY
        } else {
            self.enthalpy_of_w(w)
        }
    }

    /// `true` when every density in `(0, rho)` satisfies the assumed inequalities.
    pub fn valid_up_to(&self, rho: f64) -> bool {
        rho < self.rho_max()
    }

    fn check_nonneg(name: &'static str, value: f64) -> Result<(), EosError> {
        if value.is_nan() || value < 0.0 {
            return Err(EosError::InvalidArgument {
                name,
                value,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }

    // ---- public conversions -------------------------------------------------

    pub fn pressure_of_density(&self, rho: f64) -> Result<f64, EosError> {
        Self::check_nonneg("rho", rho)?;
        let limit = self.rho_max();
        if rho >= limit {
            return Err(EosError::OutsideValidity {
                name: "rho",
                value: rho,
                limit,
            });
        }
        Ok(self.p_of_w(self.w_of_rho(rho)))
    }

    pub fn density_of_pressure(&self, p: f64) -> Result<f64, EosError> {
        Self::check_nonneg("pressure", p)?;
        let limit = self.pressure_max();
        if p >= limit {
            return Err(EosError::OutsideValidity {
                name: "pressure",
                value: p,
                limit,
            });
        }
        let w = self
            .w_of_pressure(p)
            .ok_or(EosError::Inversion { name: "pressure", value: p })?;
        Ok(self.rho_of_w(w))
    }

    pub fn enthalpy_of_pressure(&self, p: f64) -> Result<f64, EosError> {
        Self::check_nonneg("pressure", p)?;
        let limit = self.pressure_max();
        if p >= limit {
            return Err(EosError::OutsideValidity {
                name: "pressure",
                value: p,
                limit,
            });
        }
        let w = self
            .w_of_pressure(p)
            .ok_or(EosError::Inversion { name: "pressure", value: p })?;
        Ok(self.enthalpy_of_w(w))
    }

    fn checked_w_of_enthalpy(&self, h: f64) -> Result<f64, EosError> {
        Self::check_nonneg("enthalpy", h)?;
        let limit = self.enthalpy_max();
        if h >= limit {
            return Err(EosError::OutsideValidity {
                name: "enthalpy",
                value: h,
                limit,
            });
        }
        self.w_of_enthalpy(h)
            .ok_or(EosError::Inversion { name: "enthalpy", value: h })
    }

    pub fn pressure_of_enthalpy(&self, h: f64) -> Result<f64, EosError> {
        Ok(self.p_of_w(self.checked_w_of_enthalpy(h)?))
    }

    pub fn density_of_enthalpy(&self, h: f64) -> Result<f64, EosError> {
        Ok(self.rho_of_w(self.checked_w_of_enthalpy(h)?))
    }

    /// `dP/dρ`, from the analytic derivative of the truncated series.
    pub fn sound_speed_sq(&self, rho: f64) -> Result<f64, EosError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(EosError::InvalidArgument {
                name: "rho",
                value: rho,
                reason: "must be positive",
            });
        }
        let w = self.w_of_rho(rho);
        let x = w * self.light.inv_c2();
        let cs2 = w * (self.gamma * (1.0 + self.lambda_at(x)) + (self.gamma - 1.0) * x * self.lambda_prime_at(x));
        let c2 = 1.0 / self.light.inv_c2();
        if cs2 > 0.0 && cs2 < c2 {
            Ok(cs2)
        } else {
            Err(EosError::Causality { rho, cs2 })
        }
    }
}
