//! Matching curves and the back-shooting sweep.
//!
//! A central pressure `P_O` is a success when the outward shot reaches a
//! vacuum boundary. Runs of consecutive successes on a log grid form the
//! components, and each component maps to a curve `P_O ↦ (R, M)` in the
//! admissible plane. [`ae_failure_sweep`] shoots inward from boundary data
//! drawn around those curves and records how far each sample is from them.

use crate::eos::EosSpec;
use crate::tov::{shoot_from_boundary, shoot_from_center, ExitReason, ShootCase, SurfaceData, TovError, TovSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("invalid pressure grid: {0}")]
    InvalidGrid(String),
    #[error("invalid sweep region: {0}")]
    InvalidRegion(String),
    #[error("no matching curves to measure against")]
    NoCurves,
}

/// Log-spaced central pressures `p_min · 10^{i/per_decade}` up to `p_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureGrid {
    pub p_min: f64,
    pub p_max: f64,
    pub per_decade: usize,
}

impl PressureGrid {
    pub fn new(p_min: f64, p_max: f64, per_decade: usize) -> Result<Self, MatchingError> {
        let grid = Self { p_min, p_max, per_decade };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<(), MatchingError> {
        if !(self.p_min > 0.0 && self.p_max > self.p_min && self.p_max.is_finite()) {
            return Err(MatchingError::InvalidGrid(format!(
                "need 0 < p_min < p_max, got [{}, {}]",
                self.p_min, self.p_max
            )));
        }
        if self.per_decade < 2 {
            return Err(MatchingError::InvalidGrid(format!(
                "need at least 2 points per decade, got {}",
                self.per_decade
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let decades = (self.p_max / self.p_min).log10();
        let steps = (decades * self.per_decade as f64 - 1e-9).ceil().max(1.0) as usize;
        (0..=steps)
            .map(|i| {
                let p = self.p_min * 10f64.powf(decades * i as f64 / steps as f64);
                if i == steps { self.p_max } else { p }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    /// Relative width in `P_O` to which component ends are bisected.
    pub boundary_rtol: f64,
    /// Largest scaled chord between neighbouring curve points.
    pub max_gap: f64,
    /// Largest scaled distance of a fresh midpoint from the chord it splits.
    pub chord_tol: f64,
    pub max_passes: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { boundary_rtol: 1e-4, max_gap: 0.05, chord_tol: 1e-5, max_passes: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingCurvePoint {
    pub p_center: f64,
    pub radius: f64,
    pub mass: f64,
    /// `2Mk/R`, zero when `𝖼 = ∞`.
    pub compactness: f64,
}

/// Why a component stops where it does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEndpoint {
    /// Last successful pressure.
    pub p_center: f64,
    /// First failing pressure past it, `None` at the edge of the scan.
    pub p_failure: Option<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingCurve {
    pub id: usize,
    pub points: Vec<MatchingCurvePoint>,
    pub lower: CurveEndpoint,
    pub upper: CurveEndpoint,
    /// Median `R` and `M` of the points; the distance unit.
    pub r_ref: f64,
    pub m_ref: f64,
}

impl MatchingCurve {
    fn scaled(&self, radius: f64, mass: f64) -> [f64; 2] {
        [radius / self.r_ref, mass / self.m_ref]
    }

    /// Scaled distance from `(R, M)` to the piecewise-linear curve.
    pub fn distance(&self, radius: f64, mass: f64) -> f64 {
        let q = self.scaled(radius, mass);
        let pts: Vec<[f64; 2]> = self.points.iter().map(|p| self.scaled(p.radius, p.mass)).collect();
        if pts.len() == 1 {
            return (q[0] - pts[0][0]).hypot(q[1] - pts[0][1]);
        }
        pts.windows(2)
            .map(|w| segment_distance(q, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Radius and mass linearly interpolated in `log P_O`.
    pub fn interpolate(&self, p_center: f64) -> Option<(f64, f64)> {
        let i = self.points.windows(2).position(|w| w[0].p_center <= p_center && p_center <= w[1].p_center)?;
        let (a, b) = (self.points[i], self.points[i + 1]);
        let t = (p_center / a.p_center).ln() / (b.p_center / a.p_center).ln();
        Some((a.radius + t * (b.radius - a.radius), a.mass + t * (b.mass - a.mass)))
    }
}

fn segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (q[0] - a[0] - t * d[0]).hypot(q[1] - a[1] - t * d[1])
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn failure_label(err: &TovError) -> String {
    match err {
        TovError::Eos(_) => "eos_validity".into(),
        TovError::OutsideDomain(_) => "outside_domain".into(),
        TovError::Inadmissible { .. } => "inadmissible".into(),
        TovError::NonTermination { exit: ExitReason::Horizon, .. } => "horizon".into(),
        TovError::NonTermination { exit: ExitReason::RadiusGuard, .. } => "radius_guard".into(),
        TovError::NonTermination { .. } => "no_surface".into(),
        TovError::Integration(_) => "integration".into(),
        TovError::InvalidInput(_) => "invalid_input".into(),
    }
}

fn shoot(eos: &EosSpec, p: f64, tov: &TovSettings) -> Result<MatchingCurvePoint, String> {
    let k = eos.light().inv_c2();
    shoot_from_center(eos, p, tov)
        .map(|(s, _)| MatchingCurvePoint {
            p_center: p,
            radius: s.radius,
            mass: s.mass,
            compactness: 2.0 * s.mass * k / s.radius,
        })
        .map_err(|e| failure_label(&e))
}

/// Scans the grid and returns one curve per run of successes, ordered by
/// `P_O`. An empty list means no grid pressure produced a star.
pub fn scan_components(
    eos: &EosSpec,
    grid: &PressureGrid,
    tov: &TovSettings,
    scan: &ScanSettings,
) -> Result<Vec<MatchingCurve>, MatchingError> {
    grid.validate()?;
    let ps = grid.points();
    let shots: Vec<_> = ps.par_iter().map(|&p| shoot(eos, p, tov)).collect();

    let mut curves = Vec::new();
    let mut i = 0;
    while i < shots.len() {
        if shots[i].is_err() {
            i += 1;
            continue;
        }
        let start = i;
        while i < shots.len() && shots[i].is_ok() {
            i += 1;
        }
        let end = i - 1;
        let mut points: Vec<MatchingCurvePoint> = shots[start..=end].iter().map(|s| *s.as_ref().unwrap()).collect();

        let lower = if start == 0 {
            CurveEndpoint { p_center: ps[0], p_failure: None, label: "scan_limit".into() }
        } else {
            let (pt, ep) = bisect_edge(eos, tov, scan, ps[start], ps[start - 1], shots[start - 1].clone().unwrap_err());
            points.insert(0, pt);
            ep
        };
        let upper = if end == ps.len() - 1 {
            CurveEndpoint { p_center: ps[end], p_failure: None, label: "scan_limit".into() }
        } else {
            let (pt, ep) = bisect_edge(eos, tov, scan, ps[end], ps[end + 1], shots[end + 1].clone().unwrap_err());
            points.push(pt);
            ep
        };
        points.dedup_by(|a, b| a.p_center == b.p_center);

        let r_ref = median(points.iter().map(|p| p.radius).collect());
        let m_ref = median(points.iter().map(|p| p.mass).collect());
        refine(eos, tov, scan, &mut points, r_ref, m_ref);
        let r_ref = median(points.iter().map(|p| p.radius).collect());
        let m_ref = median(points.iter().map(|p| p.mass).collect());
        curves.push(MatchingCurve { id: curves.len(), points, lower, upper, r_ref, m_ref });
    }
    Ok(curves)
}

/// Bisects in `log P_O` between a success and a failure.
fn bisect_edge(
    eos: &EosSpec,
    tov: &TovSettings,
    scan: &ScanSettings,
    mut good: f64,
    mut bad: f64,
    mut label: String,
) -> (MatchingCurvePoint, CurveEndpoint) {
    let mut point = shoot(eos, good, tov).expect("grid success repeats");
    while (good / bad).ln().abs() > scan.boundary_rtol {
        let mid = (good * bad).sqrt();
        match shoot(eos, mid, tov) {
            Ok(p) => {
                good = mid;
                point = p;
            }
            Err(l) => {
                bad = mid;
                label = l;
            }
        }
    }
    (point, CurveEndpoint { p_center: good, p_failure: Some(bad), label })
}

/// Splits intervals at their log-midpoint until chords are short and
/// straight in scaled coordinates.
fn refine(
    eos: &EosSpec,
    tov: &TovSettings,
    scan: &ScanSettings,
    points: &mut Vec<MatchingCurvePoint>,
    r_ref: f64,
    m_ref: f64,
) {
    let sc = |p: &MatchingCurvePoint| [p.radius / r_ref, p.mass / m_ref];
    let chord = |a: &MatchingCurvePoint, b: &MatchingCurvePoint| {
        let (x, y) = (sc(a), sc(b));
        (x[0] - y[0]).hypot(x[1] - y[1])
    };
    // an interval is open until its midpoint lies on the chord
    let mut open: Vec<bool> = points.windows(2).map(|w| chord(&w[0], &w[1]) > 0.0).collect();
    for _ in 0..scan.max_passes {
        let todo: Vec<usize> = (0..open.len()).filter(|&i| open[i]).collect();
        if todo.is_empty() {
            break;
        }
        let mids: Vec<_> = todo
            .par_iter()
            .map(|&i| shoot(eos, (points[i].p_center * points[i + 1].p_center).sqrt(), tov))
            .collect();
        let mut new_points = Vec::with_capacity(points.len() + todo.len());
        let mut new_open = Vec::with_capacity(open.len() + todo.len());
        let mut next = todo.iter().zip(mids).peekable();
        for i in 0..points.len() {
            new_points.push(points[i]);
            if i == open.len() {
                break;
            }
            match next.peek() {
                Some((&j, _)) if j == i => {
                    let (_, mid) = next.next().unwrap();
                    match mid {
                        Ok(m) => {
                            let (a, b) = (points[i], points[i + 1]);
                            let dev = segment_distance(sc(&m), sc(&a), sc(&b));
                            let split = |x: &MatchingCurvePoint, y: &MatchingCurvePoint| {
                                chord(x, y) > scan.max_gap || dev > scan.chord_tol
                            };
                            new_open.push(split(&a, &m));
                            new_points.push(m);
                            new_open.push(split(&m, &b));
                        }
                        // isolated interior failure: leave the chord as it is
                        Err(_) => new_open.push(false),
                    }
                }
                _ => new_open.push(false),
            }
        }
        *points = new_points;
        open = new_open;
    }
}

/// Nearest curve and its scaled distance.
pub fn distance_to_curves(radius: f64, mass: f64, curves: &[MatchingCurve]) -> Result<(usize, f64), MatchingError> {
    curves
        .iter()
        .map(|c| (c.id, c.distance(radius, mass)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(MatchingError::NoCurves)
}

/// CSV with columns `P_O, R, M, 2M/R` (plus the component id).
pub fn write_curves_csv<W: io::Write>(curves: &[MatchingCurve], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["component", "P_O", "R", "M", "2M/R"])?;
    for c in curves {
        for p in &c.points {
            w.serialize((c.id, p.p_center, p.radius, p.mass, p.compactness))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rectangle in `(R, 2M/R)` from which boundary data is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRegion {
    pub r_min: f64,
    pub r_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl SweepRegion {
    /// Box around all curve points, widened by `factor` on each side and
    /// clipped below the horizon.
    pub fn around(curves: &[MatchingCurve], factor: f64) -> Result<Self, MatchingError> {
        let pts = curves.iter().flat_map(|c| &c.points);
        let (mut r0, mut r1, mut q0, mut q1) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
        for p in pts {
            let q = 2.0 * p.mass / p.radius;
            r0 = r0.min(p.radius);
            r1 = r1.max(p.radius);
            q0 = q0.min(q);
            q1 = q1.max(q);
        }
        if !(r1 > 0.0) {
            return Err(MatchingError::NoCurves);
        }
        Ok(Self { r_min: r0 / factor, r_max: r1 * factor, q_min: q0 / factor, q_max: (q1 * factor).min(0.99) })
    }

    fn validate(&self, eos: &EosSpec) -> Result<(), MatchingError> {
        let k = eos.light().inv_c2();
        let ok = 0.0 < self.r_min
            && self.r_min <= self.r_max
            && self.r_max.is_finite()
            && 0.0 < self.q_min
            && self.q_min <= self.q_max
            && self.q_max * k < 1.0;
        if ok {
            Ok(())
        } else {
            Err(MatchingError::InvalidRegion(format!("{self:?} is empty or leaves 1 − 2M/R > 0")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    /// `nr × nq` cell centres of the region.
    Grid { nr: usize, nq: usize },
    /// Uniform draws from a ChaCha8 stream.
    Random { seed: u64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    /// Near-curve radius in scaled units.
    pub delta: f64,
    /// Random draws closer than this to a curve are redrawn.
    pub exclude_within: f64,
    /// Extra samples taken on the curves by fresh centre shots.
    pub on_curve: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { delta: 1e-4, exclude_within: 0.0, on_curve: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Region,
    OnCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sample: usize,
    pub kind: SampleKind,
    pub radius: f64,
    pub mass: f64,
    pub case: Option<ShootCase>,
    pub exit: Option<ExitReason>,
    pub p_center: Option<f64>,
    /// Scaled distance to the nearest curve, `None` without curves.
    pub distance: Option<f64>,
    pub nearest: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub samples: usize,
    pub on_curve_samples: usize,
    pub curves: usize,
    pub delta: f64,
    pub cases: BTreeMap<String, usize>,
    pub far_samples: usize,
    pub far_case11: usize,
    pub near_samples: usize,
    pub case11_all_near: bool,
    pub on_curve_case11: usize,
    pub errors: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub region: SweepRegion,
    pub sampler: Sampler,
    pub settings: SweepSettings,
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
}

fn case_key(case: Option<ShootCase>) -> &'static str {
    match case {
        Some(ShootCase::Case00) => "case00",
        Some(ShootCase::Case01) => "case01",
        Some(ShootCase::Case10) => "case10",
        Some(ShootCase::Case11) => "case11",
        None => "outside_taxonomy",
    }
}

/// Classifies boundary data drawn from `region` (and, optionally, fresh
/// on-curve data) by inward shooting. Records are ordered by sample index
/// whatever the thread count.
pub fn ae_failure_sweep(
    eos: &EosSpec,
    curves: &[MatchingCurve],
    region: &SweepRegion,
    sampler: &Sampler,
    settings: &SweepSettings,
    tov: &TovSettings,
) -> Result<SweepReport, MatchingError> {
    region.validate(eos)?;
    let nearest = |r: f64, m: f64| distance_to_curves(r, m, curves).ok();
    let mut draws: Vec<(SampleKind, f64, f64)> = Vec::new();
    match *sampler {
        Sampler::Grid { nr, nq } => {
            for i in 0..nr {
                for j in 0..nq {
                    let r = region.r_min + (i as f64 + 0.5) / nr as f64 * (region.r_max - region.r_min);
                    let q = region.q_min + (j as f64 + 0.5) / nq as f64 * (region.q_max - region.q_min);
                    draws.push((SampleKind::Region, r, 0.5 * q * r));
                }
            }
        }
        Sampler::Random { seed, count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while draws.len() < count {
                let r = rng.gen_range(region.r_min..=region.r_max);
                let q = rng.gen_range(region.q_min..=region.q_max);
                let m = 0.5 * q * r;
                if settings.exclude_within > 0.0 && nearest(r, m).is_some_and(|(_, d)| d <= settings.exclude_within) {
                    continue;
                }
                draws.push((SampleKind::Region, r, m));
            }
        }
    }

    // on-curve pressures come from their own stream so region draws do not
    // depend on how many on-curve samples are requested
    let on_curve_seed = match *sampler {
        Sampler::Random { seed, .. } => seed ^ 0x9e37_79b9_7f4a_7c15,
        Sampler::Grid { .. } => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(on_curve_seed);
    let on_curve: Vec<f64> = if curves.is_empty() {
        Vec::new()
    } else {
        (0..settings.on_curve)
            .map(|_| {
                let c = &curves[rng.gen_range(0..curves.len())];
                let (lo, hi) = (c.points[0].p_center.ln(), c.points[c.points.len() - 1].p_center.ln());
                if hi > lo { rng.gen_range(lo..=hi).exp() } else { lo.exp() }
            })
            .collect()
    };

    let offset = draws.len();
    let mut records: Vec<SweepRecord> = draws
        .par_iter()
        .enumerate()
        .map(|(i, &(kind, r, m))| classify(eos, tov, i, kind, r, m, &nearest))
        .collect();
    records.extend(
        on_curve
            .par_iter()
            .enumerate()
            .map(|(i, &p)| match shoot_from_center(eos, p, tov) {
                Ok((s, _)) => classify(eos, tov, offset + i, SampleKind::OnCurve, s.radius, s.mass, &nearest),
                Err(e) => SweepRecord {
                    sample: offset + i,
                    kind: SampleKind::OnCurve,
                    radius: f64::NAN,
                    mass: f64::NAN,
                    case: None,
                    exit: None,
                    p_center: None,
                    distance: None,
                    nearest: None,
                    error: Some(format!("centre shot at P_O = {p}: {e}")),
                },
            })
            .collect::<Vec<_>>(),
    );

    let summary = summarize(&records, curves.len(), settings.delta);
    Ok(SweepReport { region: *region, sampler: *sampler, settings: *settings, records, summary })
}

fn classify(
    eos: &EosSpec,
    tov: &TovSettings,
    sample: usize,
    kind: SampleKind,
    radius: f64,
    mass: f64,
    nearest: &(dyn Fn(f64, f64) -> Option<(usize, f64)> + Sync),
) -> SweepRecord {
    let near = nearest(radius, mass);
    let mut rec = SweepRecord {
        sample,
        kind,
        radius,
        mass,
        case: None,
        exit: None,
        p_center: None,
        distance: near.map(|n| n.1),
        nearest: near.map(|n| n.0),
        error: None,
    };
    let shot = SurfaceData::new(eos, radius, mass).and_then(|s| shoot_from_boundary(eos, &s, tov));
    match shot {
        Ok((c, _)) => {
            rec.case = c.case;
            rec.exit = Some(c.exit);
            rec.p_center = c.p_center;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn summarize(records: &[SweepRecord], curves: usize, delta: f64) -> SweepSummary {
    let mut cases = BTreeMap::new();
    let (mut far, mut far11, mut near, mut on11, mut errors) = (0, 0, 0, 0, 0);
    let mut all_near = true;
    for r in records {
        if r.error.is_some() {
            errors += 1;
        } else {
            *cases.entry(case_key(r.case).to_string()).or_insert(0) += 1;
        }
        let is11 = r.case == Some(ShootCase::Case11);
        let d = r.distance.unwrap_or(f64::INFINITY);
        if r.kind == SampleKind::OnCurve {
            on11 += usize::from(is11);
        } else if d > delta {
            far += 1;
            far11 += usize::from(is11);
        } else {
            near += 1;
        }
        if is11 && !(d < delta) {
            all_near = false;
        }
    }
    let on_curve = records.iter().filter(|r| r.kind == SampleKind::OnCurve).count();
    SweepSummary {
        samples: records.len() - on_curve,
        on_curve_samples: on_curve,
        curves,
        delta,
        cases,
        far_samples: far,
        far_case11: far11,
        near_samples: near,
        case11_all_near: all_near,
        on_curve_case11: on11,
        errors,
        note: (curves == 0).then(|| "no matching curves: every sample is off-curve".to_string()),
    }
}

#[cfg(test)]
mod tests;
