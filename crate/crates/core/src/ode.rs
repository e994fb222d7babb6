//! Embedded Runge–Kutta 5(4) integrator (Dormand–Prince) with continuous
//! output and event localization.
//!
//! The integrator is deliberately small: a fixed-size state `[f64; N]`, a
//! right-hand side that may refuse to evaluate (returning `None` when a trial
//! stage leaves the region where it is defined), and a per-step callback that
//! sees every accepted step together with its dense-output polynomial. Events
//! are located by bisection on that polynomial, see [`DenseStep::locate`].

use thiserror::Error;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; `None` selects one from the local scale of the problem.
    pub first_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            first_step: None,
            max_step: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("right-hand side undefined at the initial point t = {t}")]
    UndefinedStart { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    TooManySteps { steps: usize, t: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
}

/// What the per-step callback wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// The requested end point was reached.
    ReachedEnd,
    /// The callback stopped the integration after the step ending at `t`.
    Stopped { t: f64 },
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 4],
}

impl<const N: usize> DenseStep<N> {
    /// Continuous 4th-order interpolant; exact at both step ends.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s1 = 1.0 - s;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.y0[i]
                + s * (self.rcont[0][i]
                    + s1 * (self.rcont[1][i] + s * (self.rcont[2][i] + s1 * self.rcont[3][i])));
        }
        out
    }

    /// Time derivative of the interpolant.
    pub fn eval_derivative(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let mut out = [0.0; N];
        for i in 0..N {
            let (r1, r2, r3, r4) = (
                self.rcont[0][i],
                self.rcont[1][i],
                self.rcont[2][i],
                self.rcont[3][i],
            );
            // y = y0 + r1 s + r2 s(1-s) + r3 s^2(1-s) + r4 s^2(1-s)^2
            let d = r1
                + r2 * (1.0 - 2.0 * s)
                + r3 * (2.0 * s - 3.0 * s * s)
                + r4 * (2.0 * s * (1.0 - s) * (1.0 - 2.0 * s));
            out[i] = d / h;
        }
        out
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t0 <= self.t1 {
            (self.t0, self.t1)
        } else {
            (self.t1, self.t0)
        };
        t >= lo && t <= hi
    }

    /// Locates a sign change of `g(t, y(t))` inside the step by bisection on the
    /// dense output. Returns `None` when `g` has the same strict sign at both
    /// ends. The returned point is the end of the bracket on the far side of
    /// the sign change, tightened until its width is below `tol` (absolute, in t).
    pub fn locate<G>(&self, mut g: G, tol: f64) -> Option<f64>
    where
        G: FnMut(f64, &[f64; N]) -> f64,
    {
        let g0 = g(self.t0, &self.y0);
        let g1 = g(self.t1, &self.y1);
        if g0 == 0.0 {
            return Some(self.t0);
        }
        if g0.signum() == g1.signum() && g1 != 0.0 {
            return None;
        }
        let (mut a, mut b) = (self.t0, self.t1);
        let mut ga = g0;
        for _ in 0..200 {
            if (b - a).abs() <= tol {
                break;
            }
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            let gm = g(mid, &self.eval(mid));
            if gm == 0.0 {
                return Some(mid);
            }
            if gm.signum() == ga.signum() {
                a = mid;
                ga = gm;
            } else {
                b = mid;
            }
        }
        Some(b)
    }
}

/// A sequence of accepted steps, usable as a piecewise interpolant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseTrajectory<const N: usize> {
    steps: Vec<DenseStep<N>>,
}

impl<const N: usize> DenseTrajectory<N> {
    pub fn new() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn push(&mut self, step: DenseStep<N>) {
        self.steps.push(step);
    }

    pub fn steps(&self) -> &[DenseStep<N>] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Drops the tail of the trajectory beyond `t`, replacing the last step
    /// by a truncated copy ending exactly at `t`.
    pub fn truncate_at(&mut self, t: f64) {
        if let Some(idx) = self.find(t) {
            self.steps.truncate(idx + 1);
            let last = self.steps.last_mut().expect("non-empty");
            *last = restrict_step(last, t);
        }
    }

    pub fn t_range(&self) -> Option<(f64, f64)> {
        Some((self.steps.first()?.t0, self.steps.last()?.t1))
    }

    fn find(&self, t: f64) -> Option<usize> {
        let first = self.steps.first()?;
        let forward = first.t1 >= first.t0;
        // steps are contiguous and monotone in t
        let idx = self.steps.partition_point(|s| if forward { s.t1 < t } else { s.t1 > t });
        if idx < self.steps.len() && self.steps[idx].contains(t) {
            Some(idx)
        } else {
            None
        }
    }

    pub fn eval(&self, t: f64) -> Option<[f64; N]> {
        self.find(t).map(|i| self.steps[i].eval(t))
    }

    pub fn eval_derivative(&self, t: f64) -> Option<[f64; N]> {
        self.find(t).map(|i| self.steps[i].eval_derivative(t))
    }
}

// Re-expresses the part of `step` on [t0, t_new] exactly: the quartic
// interpolant restricted to a sub-interval is still a quartic, so we
// resample it at five points and refit the same basis.
fn restrict_step<const N: usize>(original: &DenseStep<N>, t_new: f64) -> DenseStep<N> {
    let (t0, y0) = (original.t0, original.y0);
    let y_new = original.eval(t_new);
    // basis in s on [0,1]: y = y0 + r1 s + r2 s(1-s) + r3 s^2(1-s) + r4 s^2(1-s)^2
    let h = t_new - t0;
    let nodes = [0.25, 0.5, 0.75];
    let mut rcont = [[0.0; N]; 4];
    for i in 0..N {
        let r1 = y_new[i] - y0[i];
        // remaining three coefficients from three interior samples
        let mut m = [[0.0; 3]; 3];
        let mut rhs = [0.0; 3];
        for (k, &s) in nodes.iter().enumerate() {
            let t = t0 + s * h;
            let v = original.eval(t)[i] - y0[i] - r1 * s;
            m[k] = [s * (1.0 - s), s * s * (1.0 - s), s * s * (1.0 - s) * (1.0 - s)];
            rhs[k] = v;
        }
        let sol = solve3(m, rhs);
        rcont[0][i] = r1;
        rcont[1][i] = sol[0];
        rcont[2][i] = sol[1];
        rcont[3][i] = sol[2];
    }
    DenseStep {
        t0,
        t1: t_new,
        y0,
        y1: y_new,
        rcont,
    }
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *o = det(mc) / d;
    }
    out
}

fn error_norm<const N: usize>(
    err: &[f64; N],
    y0: &[f64; N],
    y1: &[f64; N],
    rtol: f64,
    atol: &[f64; N],
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = atol[i] + rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` toward `t_end` (either direction).
///
/// `atol` is per component. `on_step` sees each accepted step and may stop the
/// integration. A `None` from `f` at a trial stage rejects the step and
/// shrinks the step size.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &SolverOptions,
    atol: [f64; N],
    mut on_step: O,
) -> Result<Termination, OdeError>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    O: FnMut(&DenseStep<N>) -> StepControl,
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    if span == 0.0 {
        return Ok(Termination::ReachedEnd);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y).ok_or(OdeError::UndefinedStart { t })?;
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }

    let mut h = match opts.first_step {
        Some(h) => h.abs().min(span),
        None => initial_step(&y, &k1, opts.rtol, &atol, span),
    }
    .min(opts.max_step);
    let h_min = 1e-14 * (t0.abs().max(t_end.abs()).max(span));
    let mut steps = 0usize;
    let mut rejected_last = false;

    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps {
                steps: opts.max_steps,
                t,
            });
        }
        let remaining = (t_end - t) * dir;
        if remaining <= h_min * 0.5 {
            return Ok(Termination::ReachedEnd);
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < h_min {
            return Err(OdeError::StepUnderflow { t });
        }
        let hs = h * dir;

        let stages = (|| {
            let k2 = f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(
                t + C4 * hs,
                &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )?;
            let k5 = f(
                t + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = f(
                t + hs,
                &axpy(
                    &y,
                    hs,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            )?;
            let y1 = axpy(
                &y,
                hs,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let t1 = if last { t_end } else { t + hs };
            let k7 = f(t1, &y1)?;
            Some((k2, k3, k4, k5, k6, k7, y1))
        })();

        let Some((_k2, k3, k4, k5, k6, k7, y1)) = stages else {
            h *= 0.25;
            rejected_last = true;
            continue;
        };
        if y1.iter().chain(k7.iter()).any(|v| !v.is_finite()) {
            h *= 0.25;
            rejected_last = true;
            continue;
        }

        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y1, opts.rtol, &atol);
        steps += 1;

        if en <= 1.0 {
            let t1 = if last { t_end } else { t + hs };
            let mut rcont = [[0.0; N]; 4];
            for i in 0..N {
                let ydiff = y1[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                rcont[0][i] = ydiff;
                rcont[1][i] = bspl;
                rcont[2][i] = ydiff - hs * k7[i] - bspl;
                rcont[3][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            let step = DenseStep {
                t0: t,
                t1,
                y0: y,
                y1,
                rcont,
            };
            let control = on_step(&step);
            t = t1;
            y = y1;
            k1 = k7;
            if control == StepControl::Stop {
                return Ok(Termination::Stopped { t });
            }
            if last {
                return Ok(Termination::ReachedEnd);
            }
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.max_step);
            rejected_last = false;
        } else {
            let fac = (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
            rejected_last = true;
        }
    }
}

fn initial_step<const N: usize>(
    y: &[f64; N],
    dy: &[f64; N],
    rtol: f64,
    atol: &[f64; N],
    span: f64,
) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = atol[i] + rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (dy[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    h.min(0.1 * span).max(1e-12 * span)
}

/// Convenience wrapper that records every accepted step.
pub fn integrate_dense<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &SolverOptions,
    atol: [f64; N],
) -> Result<DenseTrajectory<N>, OdeError>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    let mut traj = DenseTrajectory::new();
    integrate(f, t0, y0, t_end, opts, atol, |s| {
        traj.push(s.clone());
        StepControl::Continue
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = SolverOptions::with_tolerances(1e-11, 1e-13);
        let traj =
            integrate_dense(|_, y: &[f64; 1]| Some([-y[0]]), 0.0, [1.0], 5.0, &opts, [1e-13])
                .unwrap();
        let y = traj.eval(5.0).unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-10);
        // dense output in the middle of a step
        for &t in &[0.3, 1.7, 2.25, 4.99] {
            let v = traj.eval(t).unwrap()[0];
            assert!((v - (-t as f64).exp()).abs() < 1e-9, "t={t}");
            let d = traj.eval_derivative(t).unwrap()[0];
            assert!((d + (-t as f64).exp()).abs() < 1e-7, "t={t} d={d}");
        }
    }

    #[test]
    fn backward_harmonic_oscillator() {
        let opts = SolverOptions::with_tolerances(1e-11, 1e-13);
        let traj = integrate_dense(
            |_, y: &[f64; 2]| Some([y[1], -y[0]]),
            0.0,
            [0.0, 1.0],
            -3.0,
            &opts,
            [1e-13; 2],
        )
        .unwrap();
        let y = traj.eval(-3.0).unwrap();
        assert!((y[0] - (-3.0f64).sin()).abs() < 1e-9);
        assert!((traj.eval(-1.0).unwrap()[1] - 1.0f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn event_location_on_dense_output() {
        let opts = SolverOptions::with_tolerances(1e-12, 1e-14);
        let mut root = None;
        integrate(
            |_, y: &[f64; 2]| Some([y[1], -y[0]]),
            0.0,
            [1.0, 0.0],
            10.0,
            &opts,
            [1e-14; 2],
            |s| {
                if let Some(t) = s.locate(|_, y| y[0], 1e-14) {
                    root = Some(t);
                    StepControl::Stop
                } else {
                    StepControl::Continue
                }
            },
        )
        .unwrap();
        assert!((root.unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    }

    #[test]
    fn undefined_region_shrinks_step() {
        // rhs refuses y > 1.5; solution y = 1 + t stays below until t = 0.5
        let opts = SolverOptions::default();
        let res = integrate_dense(
            |_, y: &[f64; 1]| if y[0] > 1.5 { None } else { Some([1.0]) },
            0.0,
            [1.0],
            0.4,
            &opts,
            [1e-12],
        )
        .unwrap();
        assert!((res.eval(0.4).unwrap()[0] - 1.4).abs() < 1e-12);
        let bad = integrate_dense(|_, _: &[f64; 1]| None, 0.0, [1.0], 1.0, &opts, [1e-12]);
        assert!(matches!(bad, Err(OdeError::UndefinedStart { .. })));
    }

    #[test]
    fn truncation_keeps_values() {
        let opts = SolverOptions::with_tolerances(1e-10, 1e-12);
        let mut traj =
            integrate_dense(|t, _: &[f64; 1]| Some([t.cos()]), 0.0, [0.0], 3.0, &opts, [1e-12])
                .unwrap();
        let before = traj.eval(1.234).unwrap()[0];
        traj.truncate_at(1.3);
        assert_eq!(traj.t_range().unwrap().1, 1.3);
        assert!((traj.eval(1.234).unwrap()[0] - before).abs() < 1e-12);
        assert!(traj.eval(2.0).is_none());
    }
}
