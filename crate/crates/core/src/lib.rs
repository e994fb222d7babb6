//! Matter–vacuum matching for static polytropic stars, and the shape of
//! slowly rotating Newtonian polytropes.
//!
//! * [`eos`]: polytropic equation of state with an analytic correction, and
//!   its enthalpy.
//! * [`tov`]: outward and inward shooting of the Tolman–Oppenheimer–Volkoff
//!   system, the four-case classification of inward runs, metric junction.
//! * [`matching`]: components of successful central pressures, their curves
//!   in the `(R, M)` plane, and the back-shooting sweep.
//! * [`lane_emden`], [`distortion`]: Lane-Emden solutions and their first-order
//!   rotational distortion.
//! * [`surface_fit`]: ellipsoid fits, residual scaling in the rotation strength,
//!   level-surface fits.
//!
//! [`ode`], [`quadrature`] and [`roots`] hold the numerical kernels the rest
//! is built on.
//!
//! ```
//! use stellar_match::eos::EosSpec;
//! use stellar_match::tov::{self, ShootCase, TovSettings};
//!
//! let eos = EosSpec::polytrope(5.0 / 3.0, 1.0).unwrap();
//! let (star, _) = tov::shoot_from_center(&eos, 1e-3, &TovSettings::default()).unwrap();
//! let (class, _) = tov::shoot_from_boundary(&eos, &star, &TovSettings::default()).unwrap();
//! assert_eq!(class.case, Some(ShootCase::Case11));
//! ```

pub mod eos;
pub mod ode;
pub mod quadrature;
pub mod roots;
pub mod lane_emden;
pub mod tov;
pub mod matching;
pub mod distortion;
pub mod surface_fit;

// The book's snippets run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/eos.md")]
    mod eos {}
    #[doc = include_str!("../../../book/src/shooting.md")]
    mod shooting {}
    #[doc = include_str!("../../../book/src/junction.md")]
    mod junction {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/rotation.md")]
    mod rotation {}
    #[doc = include_str!("../../../book/src/ellipsoids.md")]
    mod ellipsoids {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
