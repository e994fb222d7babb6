use super::*;
use crate::eos::EosSpec;
use std::f64::consts::PI;

fn rel(gamma: f64) -> EosSpec {
    EosSpec::polytrope(gamma, 1.0).unwrap()
}

fn newt(gamma: f64) -> EosSpec {
    EosSpec::newtonian(gamma, 1.0).unwrap()
}

fn scan(eos: &EosSpec, p_min: f64, p_max: f64) -> Vec<MatchingCurve> {
    let grid = PressureGrid::new(p_min, p_max, 2).unwrap();
    scan_components(eos, &grid, &TovSettings::default(), &ScanSettings::default()).unwrap()
}

fn flat_curve() -> MatchingCurve {
    let pts = [(1.0, 2.0, 1.0), (2.0, 2.0, 2.0), (4.0, 2.0, 3.0)];
    let points: Vec<_> = pts
        .iter()
        .map(|&(p, r, m)| MatchingCurvePoint { p_center: p, radius: r, mass: m, compactness: m / r })
        .collect();
    let end = |p| CurveEndpoint { p_center: p, p_failure: None, label: "scan_limit".into() };
    MatchingCurve { id: 0, points, lower: end(1.0), upper: end(4.0), r_ref: 2.0, m_ref: 2.0 }
}

#[test]
fn grid_has_requested_density() {
    let g = PressureGrid::new(1e-6, 1e-2, 2).unwrap();
    let p = g.points();
    assert_eq!(p.len(), 9);
    assert_eq!((p[0], p[8]), (1e-6, 1e-2));
    assert!((p[1] / p[0] - 10f64.sqrt()).abs() < 1e-12);
    assert!(PressureGrid::new(1e-6, 1e-2, 1).is_err());
    assert!(PressureGrid::new(1e-2, 1e-6, 4).is_err());
}

#[test]
fn newtonian_index_one_curve_is_vertical() {
    let curves = scan(&newt(2.0), 1e-6, 1e-2);
    assert_eq!(curves.len(), 1);
    let c = &curves[0];
    assert_eq!((c.lower.label.as_str(), c.upper.label.as_str()), ("scan_limit", "scan_limit"));
    let r = PI / (2.0 * PI).sqrt();
    for p in &c.points {
        assert!((p.radius - r).abs() < 1e-8 * r, "{p:?}");
    }
    assert!(c.points.windows(2).all(|w| w[0].p_center < w[1].p_center && w[0].mass < w[1].mass));
}

#[test]
fn newtonian_five_thirds_radius_scaling() {
    let eos = newt(5.0 / 3.0);
    let curves = scan(&eos, 1e-6, 1e-2);
    assert_eq!(curves.len(), 1);
    let pts = &curves[0].points;
    let k0 = pts[0].radius * eos.density_of_pressure(pts[0].p_center).unwrap().powf(1.0 / 6.0);
    for p in pts {
        let k = p.radius * eos.density_of_pressure(p.p_center).unwrap().powf(1.0 / 6.0);
        assert!((k - k0).abs() < 1e-7 * k0, "{k} vs {k0}");
    }
    assert!(pts.windows(2).all(|w| w[1].radius < w[0].radius));
}

#[test]
fn invalid_everywhere_gives_no_curves() {
    let eos = rel(5.0 / 3.0);
    let p = eos.pressure_max();
    assert!(scan(&eos, 10.0 * p, 100.0 * p).is_empty());
}

#[test]
fn component_ends_straddle_success_and_failure() {
    let eos = rel(5.0 / 3.0);
    let tov = TovSettings::default();
    let curves = scan(&eos, 1e-3, 10.0 * eos.pressure_max());
    assert_eq!(curves.len(), 1);
    let up = &curves[0].upper;
    assert_ne!(up.label, "scan_limit");
    let fail = up.p_failure.unwrap();
    assert!(fail / up.p_center - 1.0 < 1.1e-4);
    assert!(shoot_from_center(&eos, up.p_center * (1.0 - 1e-3), &tov).is_ok());
    assert!(shoot_from_center(&eos, up.p_center * (1.0 + 1e-3), &tov).is_err());
}

#[test]
fn refinement_keeps_chords_straight() {
    let curves = scan(&rel(5.0 / 3.0), 1e-6, 1e-1);
    let c = &curves[0];
    let s = |p: &MatchingCurvePoint| [p.radius / c.r_ref, p.mass / c.m_ref];
    for w in c.points.windows(2) {
        let (a, b) = (s(&w[0]), s(&w[1]));
        assert!((a[0] - b[0]).hypot(a[1] - b[1]) <= ScanSettings::default().max_gap);
    }
    // a fresh point between neighbours sits on the interpolant
    let p = (c.points[3].p_center * c.points[4].p_center).sqrt();
    let (sd, _) = shoot_from_center(&rel(5.0 / 3.0), p, &TovSettings::default()).unwrap();
    assert!(c.distance(sd.radius, sd.mass) < 1e-4);
}

#[test]
fn distance_examples() {
    let c = flat_curve();
    for p in &c.points {
        assert_eq!(c.distance(p.radius, p.mass), 0.0);
    }
    let eps = 1e-3;
    // curve runs along M at fixed R: an offset in M beyond the end, an
    // offset in R along the side
    assert!((c.distance(2.0 * (1.0 + eps), 1.5) - eps).abs() < 1e-15);
    assert!((c.distance(2.0, 3.0 * (1.0 + eps)) - eps * 3.0 / 2.0).abs() < 1e-12);
    assert_eq!(distance_to_curves(2.0, 2.0, &[]), Err(MatchingError::NoCurves));
}

#[test]
fn distance_matches_brute_force() {
    let curves = scan(&rel(5.0 / 3.0), 1e-6, 1e-1);
    let c = &curves[0];
    let total = 10_000;
    let pts: Vec<[f64; 2]> = c.points.iter().map(|p| [p.radius / c.r_ref, p.mass / c.m_ref]).collect();
    let mut arc = vec![0.0];
    for w in pts.windows(2) {
        arc.push(arc.last().unwrap() + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
    }
    let length = *arc.last().unwrap();
    let mut dense = Vec::with_capacity(total);
    let mut j = 0;
    for i in 0..total {
        let s = length * i as f64 / (total - 1) as f64;
        while j + 2 < arc.len() && arc[j + 1] < s {
            j += 1;
        }
        let t = ((s - arc[j]) / (arc[j + 1] - arc[j])).clamp(0.0, 1.0);
        dense.push([pts[j][0] + t * (pts[j + 1][0] - pts[j][0]), pts[j][1] + t * (pts[j + 1][1] - pts[j][1])]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let r = c.r_ref * rng.gen_range(0.5..1.5);
        let m = c.m_ref * rng.gen_range(0.2..2.0);
        let brute = dense
            .iter()
            .map(|d| (r / c.r_ref - d[0]).hypot(m / c.m_ref - d[1]))
            .fold(f64::INFINITY, f64::min);
        let (_, d) = distance_to_curves(r, m, &curves).unwrap();
        // the dense polyline is a subset of the curve and within half a
        // sample spacing of it
        assert!(d <= brute + 1e-15 && brute - d < 1e-6, "{d} vs {brute}");
    }
}

fn sweep(curves: &[MatchingCurve], seed: u64, count: usize, on_curve: usize) -> SweepReport {
    let region = SweepRegion::around(curves, 1.5).unwrap_or(SweepRegion { r_min: 2.0, r_max: 20.0, q_min: 1e-3, q_max: 0.3 });
    let settings = SweepSettings { exclude_within: 1e-2, on_curve, ..SweepSettings::default() };
    ae_failure_sweep(&rel(5.0 / 3.0), curves, &region, &Sampler::Random { seed, count }, &settings, &TovSettings::default())
        .unwrap()
}

#[test]
fn sweep_separates_on_and_off_curve() {
    let curves = scan(&rel(5.0 / 3.0), 1e-6, 1e-1);
    let report = sweep(&curves, 11, 24, 6);
    let s = &report.summary;
    assert_eq!((s.samples, s.on_curve_samples, s.errors), (24, 6, 0));
    assert_eq!(s.far_samples, 24);
    assert_eq!(s.far_case11, 0);
    assert_eq!(s.on_curve_case11, 6);
    assert!(s.case11_all_near);
    assert!(report.records.iter().all(|r| r.kind == SampleKind::OnCurve || r.distance.unwrap() > 1e-2));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let curves = scan(&rel(5.0 / 3.0), 1e-4, 1e-2);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sweep(&curves, 3, 12, 2))
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(
        serde_json::to_string(&sweep(&curves, 4, 12, 2)).unwrap(),
        serde_json::to_string(&a).unwrap()
    );
}

#[test]
fn sweep_without_curves_reports_no_regular_samples() {
    let report = sweep(&[], 5, 6, 3);
    assert_eq!(report.summary.curves, 0);
    assert_eq!(report.summary.on_curve_samples, 0);
    assert_eq!(report.summary.far_case11, 0);
    assert!(report.summary.note.is_some());
    assert!(report.records.iter().all(|r| r.distance.is_none()));
}

#[test]
fn grid_sampler_covers_cell_centres() {
    let curves = scan(&rel(5.0 / 3.0), 1e-4, 1e-2);
    let region = SweepRegion { r_min: 4.0, r_max: 8.0, q_min: 0.01, q_max: 0.05 };
    let report = ae_failure_sweep(
        &rel(5.0 / 3.0),
        &curves,
        &region,
        &Sampler::Grid { nr: 2, nq: 2 },
        &SweepSettings::default(),
        &TovSettings::default(),
    )
    .unwrap();
    let rs: Vec<_> = report.records.iter().map(|r| (r.radius, 2.0 * r.mass / r.radius)).collect();
    assert_eq!(rs.len(), 4);
    assert!((rs[0].0 - 5.0).abs() < 1e-15 && (rs[0].1 - 0.02).abs() < 1e-15);
    assert!((rs[3].0 - 7.0).abs() < 1e-15 && (rs[3].1 - 0.04).abs() < 1e-15);
    let bad = SweepRegion { q_max: 1.5, ..region };
    assert!(ae_failure_sweep(&rel(5.0 / 3.0), &curves, &bad, &Sampler::Grid { nr: 1, nq: 1 }, &SweepSettings::default(), &TovSettings::default()).is_err());
}

#[test]
fn curves_csv_columns() {
    let mut out = Vec::new();
    write_curves_csv(&[flat_curve()], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("component,P_O,R,M,2M/R"));
    assert_eq!(text.lines().count(), 4);
}
