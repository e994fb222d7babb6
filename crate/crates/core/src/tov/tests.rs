use super::*;
use crate::eos::LightSpeed;
use crate::lane_emden;
use crate::quadrature;

fn rel(gamma: f64) -> EosSpec {
    EosSpec::polytrope(gamma, 1.0).unwrap()
}

fn close(a: f64, b: f64, rel_tol: f64) -> bool {
    (a - b).abs() <= rel_tol * b.abs().max(a.abs())
}

#[test]
fn rhs_empty_space() {
    let eos = rel(2.0);
    let s = TovState { r: 1.0, m: 0.0, h: 0.0 };
    assert_eq!(tov_rhs(&s, &eos).unwrap(), (0.0, 0.0));
}

#[test]
fn rhs_direct_substitution() {
    let eos = rel(2.0);
    let s = TovState::from_density(&eos, 1.0, 0.1, 1.0);
    assert!(close(s.pressure(&eos), 1.0, 1e-13));
    let (dm, dh) = tov_rhs(&s, &eos).unwrap();
    assert!(close(dm, 4.0 * PI, 1e-14));
    assert!(close(dh, -(0.1 + 4.0 * PI) / 0.8, 1e-14));
    // pressure form: dP/dr = −(ρ + P)(m + 4πr³P)/(r²(1 − 2m/r))
    let dp = pressure_slope(&eos, 1.0, 0.1, s.h);
    assert!(close(dp, -2.0 * (0.1 + 4.0 * PI) / 0.8, 1e-12));
}

#[test]
fn rhs_nonrelativistic() {
    let eos = EosSpec::newtonian(2.0, 1.0).unwrap();
    let s = TovState::from_density(&eos, 2.0, 1.0, 1.0);
    let (dm, du) = tov_rhs(&s, &eos).unwrap();
    assert!(close(dm, 16.0 * PI, 1e-14));
    assert!(close(du, -0.25, 1e-14));
}

#[test]
fn rhs_rejects_states_outside_domain() {
    let eos = rel(2.0);
    assert!(tov_rhs(&TovState { r: 0.0, m: 0.0, h: 0.1 }, &eos).is_err());
    assert!(tov_rhs(&TovState { r: 1.0, m: 0.6, h: 0.1 }, &eos).is_err());
}

#[test]
fn center_series_leading_terms() {
    let eos = rel(2.0);
    let s = center_series(&eos, 1.0, 1.0, 1e-3);
    let diff = s.pressure(&eos) - (1.0 - 2.0 * PI / 3.0 * 8.0 * 1e-6);
    assert!(diff.abs() < 1e3 * 1e-12, "{diff}");
    assert!(close(s.m / 1e-9, 4.0 * PI / 3.0, 1e-14));

    let newt = EosSpec::newtonian(2.0, 1.0).unwrap();
    let s = center_series(&newt, 1.0, 1.0, 1e-3);
    assert!((s.pressure(&newt) - (1.0 - 2.0 * PI / 3.0 * 1e-6)).abs() < 1e-10);
}

#[test]
fn center_start_checks_causality() {
    // ρ_O = 1 lies beyond ρ_max = 1/2 for γ = 2 at 𝖼 = 1
    assert!(center_start(&rel(2.0), 1.0, 1e-3).is_err());
    assert!(center_start(&rel(2.0), -1.0, 1e-3).is_err());
    assert!(center_start(&rel(2.0), 0.1, 1e-3).is_ok());
}

#[test]
fn center_series_matches_integrator() {
    // integrate from a much smaller offset out to r0 and compare
    let eos = rel(2.0);
    let p_c = 0.1;
    let r0 = 1e-2;
    let near = center_start(&eos, p_c, 1e-6).unwrap();
    let far = center_start(&eos, p_c, r0).unwrap();
    let traj = ode::integrate_dense(
        |r, y: &[f64; 2]| rhs(&eos, r, y[0], y[1]),
        near.r,
        [near.m, near.h],
        r0,
        &SolverOptions::with_tolerances(1e-13, 1e-16),
        [1e-18, 1e-16],
    )
    .unwrap();
    let [m, h] = traj.eval(r0).unwrap();
    // the series truncation error is O(r0⁴)
    assert!((h - far.h).abs() < 10.0 * r0.powi(4), "{}", h - far.h);
    assert!(close(m, far.m, 1e-3));
    let p_int = TovState { r: r0, m, h }.pressure(&eos);
    assert!((p_int - far.pressure(&eos)).abs() < 10.0 * r0.powi(4));
}

#[test]
fn surface_start_examples() {
    let eos = rel(2.0);
    let sd = SurfaceData::new(&eos, 1.0, 0.2).unwrap();
    assert!(close(sd.enthalpy_gradient, 1.0 / 3.0, 1e-15));
    let a = surface_start(&eos, &sd, 1e-6).unwrap();
    let b = surface_start(&eos, &sd, 5e-7).unwrap();
    assert!(close(a.h, 2.0 * b.h, 1e-14));
    assert_eq!(a.m, 0.2);
    let light = SurfaceData::new(&eos, 1.0, 1e-12).unwrap();
    assert!(light.enthalpy_gradient < 1e-11);
    assert!(SurfaceData::new(&eos, 1.0, 0.5).is_err());
    assert!(SurfaceData::new(&eos, 1.0, -0.1).is_err());
}

#[test]
fn newtonian_index_one_closed_form() {
    let eos = EosSpec::newtonian(2.0, 1.0).unwrap();
    let a = (1.0 / (2.0 * PI)).sqrt();
    for p_c in [1e-4, 1.0, 1e3] {
        let (sd, _) = shoot_from_center(&eos, p_c, &TovSettings::default()).unwrap();
        let rho_c = p_c.sqrt();
        assert!(close(sd.radius, a * PI, 1e-8), "{}", sd.radius);
        assert!(close(sd.mass, 4.0 * PI * rho_c * a.powi(3) * PI, 1e-8));
    }
}

#[test]
fn newtonian_matches_lane_emden() {
    let le = lane_emden::solve(1.5, 1e-12).unwrap();
    let eos = EosSpec::newtonian(5.0 / 3.0, 1.0).unwrap();
    let p_c = 1e-3;
    let rho_c = eos.density_of_pressure(p_c).unwrap();
    let a = eos.length_scale(rho_c);
    let (sd, _) = shoot_from_center(&eos, p_c, &TovSettings::default()).unwrap();
    assert!(close(sd.radius / a, le.xi1(), 1e-8));
    assert!(close(sd.mass, 4.0 * PI * rho_c * a.powi(3) * le.mu1(), 1e-8));
}

#[test]
fn weak_field_limit_is_first_order_in_compactness() {
    let settings = TovSettings::default();
    let newt = EosSpec::newtonian(2.0, 1.0).unwrap();
    let shoot = |p: f64| {
        let (a, _) = shoot_from_center(&rel(2.0), p, &settings).unwrap();
        let (b, _) = shoot_from_center(&newt, p, &settings).unwrap();
        (a.radius / b.radius - 1.0, a.mass / b.mass - 1.0, a.compactness(&rel(2.0)))
    };
    let (dr6, dm6, c6) = shoot(1e-6);
    let (dr8, dm8, c8) = shoot(1e-8);
    assert!(dr6.abs() < 5e-3);
    // at P_O = 1e-6 the mass is 0.7% low, about −1.75 × 2M/R
    assert!(dm6 < 0.0 && dm6.abs() < 2.0 * c6);
    assert!(close(dr6 / c6, dr8 / c8, 2e-2), "{} {}", dr6 / c6, dr8 / c8);
    assert!(close(dm6 / c6, dm8 / c8, 2e-2), "{} {}", dm6 / c6, dm8 / c8);
}

#[test]
fn offsets_do_not_matter() {
    let eos = rel(5.0 / 3.0);
    let base = TovSettings::default();
    let (a, _) = shoot_from_center(&eos, 1e-3, &base).unwrap();
    let halved = TovSettings {
        center_offset: base.center_offset / 2.0,
        ..base
    };
    let (b, _) = shoot_from_center(&eos, 1e-3, &halved).unwrap();
    assert!(close(a.radius, b.radius, 1e-8) && close(a.mass, b.mass, 1e-8));

    let (ca, _) = shoot_from_boundary(&eos, &a, &base).unwrap();
    let halved = TovSettings {
        surface_offset: base.surface_offset / 2.0,
        ..base
    };
    let (cb, _) = shoot_from_boundary(&eos, &a, &halved).unwrap();
    let (pa, pb) = (ca.p_center.unwrap(), cb.p_center.unwrap());
    assert!(close(pa, pb, 1e-8), "{pa} {pb}");
}

#[test]
fn mass_is_density_integral() {
    let eos = rel(5.0 / 3.0);
    let (sd, traj) = shoot_from_center(&eos, 1e-2, &TovSettings::default()).unwrap();
    let r0 = traj.states[0].r;
    for frac in [0.3, 0.7, 1.0] {
        let r = frac * sd.radius;
        let (integral, _) = quadrature::integrate(
            |x| {
                let [_, h] = traj.dense.eval(x).unwrap();
                let w = eos.w_of_enthalpy(h).unwrap();
                4.0 * PI * x * x * eos.rho_of_w(w)
            },
            r0,
            r,
            1e-16,
            1e-12,
        );
        let m = traj.state_at(r).unwrap().m;
        assert!(close(m, integral + traj.states[0].m, 1e-8), "{m} {integral}");
    }
}

#[test]
fn pressure_decreases_along_trajectories() {
    let eos = rel(5.0 / 3.0);
    let settings = TovSettings::default();
    let (sd, out) = shoot_from_center(&eos, 1e-2, &settings).unwrap();
    let (_, inward) = shoot_from_boundary(&eos, &sd, &settings).unwrap();
    for traj in [&out, &inward] {
        assert_eq!(traj.domain_violations, 0);
        let slack = 1e-5 * sd.mass;
        for s in &traj.states[..traj.states.len() - 1] {
            // inside the mass-floor band around a regular centre the sign of
            // m is integration noise
            if s.m.abs() <= slack {
                continue;
            }
            assert!(pressure_slope(&eos, s.r, s.m, s.h) < 0.0, "at r = {}", s.r);
        }
        let rs: Vec<f64> = traj.states.iter().map(|s| s.r).collect();
        match traj.direction {
            Direction::Outward => assert!(rs.windows(2).all(|w| w[1] > w[0])),
            Direction::Inward => assert!(rs.windows(2).all(|w| w[1] < w[0])),
        }
    }
}

#[test]
fn round_trip_recovers_central_pressure() {
    let eos = rel(5.0 / 3.0);
    let settings = TovSettings::default();
    for p_c in [1e-5, 1e-3, 1e-1] {
        let (sd, _) = shoot_from_center(&eos, p_c, &settings).unwrap();
        let (c, _) = shoot_from_boundary(&eos, &sd, &settings).unwrap();
        assert_eq!(c.case, Some(ShootCase::Case11), "{c:?}");
        assert!(close(c.p_center.unwrap(), p_c, 1e-6), "{:?} vs {p_c}", c.p_center);
        assert!(c.r_exit <= c.thresholds.r_floor && c.m_exit.abs() <= c.thresholds.m_floor);
    }
}

#[test]
fn off_curve_masses_are_not_regular() {
    let eos = rel(5.0 / 3.0);
    let settings = TovSettings::default();
    let (sd, _) = shoot_from_center(&eos, 1e-2, &settings).unwrap();
    // R ∝ M^{-1/3} along the curve: at fixed R a heavier star is too
    // large for its mass and a lighter one too small
    let heavy = SurfaceData::new(&eos, sd.radius, sd.mass * 1.05).unwrap();
    let (c, _) = shoot_from_boundary(&eos, &heavy, &settings).unwrap();
    assert_eq!(c.case, Some(ShootCase::Case01), "{c:?}");
    assert!(c.r_exit > c.thresholds.r_floor && c.m_exit < 0.0);
    let light = SurfaceData::new(&eos, sd.radius, sd.mass * 0.95).unwrap();
    let (c, _) = shoot_from_boundary(&eos, &light, &settings).unwrap();
    assert!(matches!(c.case, Some(ShootCase::Case00 | ShootCase::Case10)), "{c:?}");
    assert!(c.pressure_diverges);
}

#[test]
fn near_vacuum_data_is_not_regular() {
    let eos = rel(5.0 / 3.0);
    let sd = SurfaceData::new(&eos, 1.0, 1e-10).unwrap();
    let (c, traj) = shoot_from_boundary(&eos, &sd, &TovSettings::default()).unwrap();
    assert_ne!(c.case, Some(ShootCase::Case11));
    assert!(traj.states.iter().all(|s| close(s.m, 1e-10, 1e-3)));
}

#[test]
fn newtonian_index_one_cases() {
    // u = C sin(k(R − r))/r with k = √(2π): regular only for kR = π
    let eos = EosSpec::newtonian(2.0, 1.0).unwrap();
    let settings = TovSettings::default();
    let k = (2.0 * PI).sqrt();
    let case = |radius: f64| {
        let sd = SurfaceData::new(&eos, radius, 0.3).unwrap();
        shoot_from_boundary(&eos, &sd, &settings).unwrap().0
    };
    assert_eq!(case(PI / k).case, Some(ShootCase::Case11));
    assert_eq!(case(1.0).case, Some(ShootCase::Case10));
    let c = case(2.0);
    assert_eq!(c.case, Some(ShootCase::Case01));
    // m vanishes where u is largest: tan(k(R − r)) = −k r
    let r = c.r_exit;
    assert!(((k * (2.0 - r)).tan() + k * r).abs() < 1e-7, "{r}");
}

#[test]
fn trajectory_csv_and_classification_json() {
    let eos = rel(5.0 / 3.0);
    let settings = TovSettings::default();
    let (sd, traj) = shoot_from_center(&eos, 1e-3, &settings).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&eos, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("r,m,P,rho,h,F,H\n"));
    assert_eq!(text.lines().count(), traj.states.len() + 1);

    let (c, _) = shoot_from_boundary(&eos, &sd, &settings).unwrap();
    let json = serde_json::to_value(&c).unwrap();
    assert_eq!(json["case"], "case11");
    for key in ["r_exit", "p_exit", "m_exit", "thresholds", "p_center"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn nonrelativistic_mode_has_no_light_speed() {
    let eos = EosSpec::newtonian(2.0, 1.0).unwrap();
    assert_eq!(eos.light(), LightSpeed::Nonrelativistic);
    let (sd, traj) = shoot_from_center(&eos, 1.0, &TovSettings::default()).unwrap();
    assert!(metric_coefficients(&eos, &traj, &sd).is_err());
}

mod junction {
    use super::*;

    fn star(gamma: f64) -> (EosSpec, SurfaceData, TovTrajectory) {
        let eos = rel(gamma);
        let (sd, traj) = shoot_from_center(&eos, 1e-2, &TovSettings::default()).unwrap();
        (eos, sd, traj)
    }

    #[test]
    fn boundary_values_and_grid_identity() {
        let (eos, sd, traj) = star(5.0 / 3.0);
        let mc = metric_coefficients(&eos, &traj, &sd).unwrap();
        let last = mc.f.len() - 1;
        assert!(close((2.0 * mc.f[last]).exp(), 1.0 - 2.0 * sd.mass / sd.radius, 1e-15));
        for (i, s) in traj.states.iter().enumerate() {
            assert!(((-2.0 * mc.h[i]).exp() - (1.0 - 2.0 * s.m / s.r)).abs() < 1e-10);
        }
    }

    #[test]
    fn vacuum_is_flat() {
        let eos = rel(5.0 / 3.0);
        let sd = SurfaceData {
            radius: 1.0,
            mass: 0.0,
            enthalpy_gradient: 0.0,
        };
        let traj = TovTrajectory {
            direction: Direction::Outward,
            exit: ExitReason::Surface,
            states: vec![
                TovState { r: 0.5, m: 0.0, h: 0.0 },
                TovState { r: 1.0, m: 0.0, h: 0.0 },
            ],
            dense: DenseTrajectory::new(),
            anchor: Some(sd),
            domain_violations: 0,
        };
        let mc = metric_coefficients(&eos, &traj, &sd).unwrap();
        assert!(mc.f.iter().chain(&mc.h).all(|&v| v == 0.0));
    }

    #[test]
    fn five_thirds_star_is_c2() {
        let (eos, sd, traj) = star(5.0 / 3.0);
        let mc = metric_coefficients(&eos, &traj, &sd).unwrap();
        let report = junction_check(&mc, 2).unwrap();
        assert!(report.passes, "{report:?}");
        assert_eq!(report.gaps.len(), 6);
        assert!(junction_check(&mc, 3).is_err());
    }

    #[test]
    fn finite_differences_agree_at_first_order() {
        let (eos, sd, traj) = star(5.0 / 3.0);
        let radius = sd.radius;
        // m near R comes from the (smooth) enthalpy; interpolating m itself
        // does not resolve its (R − r)^{n+2} tail
        let e2h = |r: f64| {
            let (deficit, _) = quadrature::integrate(
                |x| {
                    let h = traj.state_at(x).unwrap().h;
                    4.0 * PI * x * x * eos.rho_of_w(eos.w_of_enthalpy(h).unwrap())
                },
                r,
                radius,
                1e-20,
                1e-13,
            );
            1.0 / (1.0 - 2.0 * (sd.mass - deficit) / r)
        };
        let e2f = |r: f64| {
            let h = traj.state_at(r).unwrap().h;
            (1.0 - 2.0 * sd.mass / radius) * (-2.0 * h).exp()
        };
        // differences taken against the exterior continued inward, so only
        // the (R − r)^{n+1} part of the interior is left to resolve
        let ext_h = |r: f64| 1.0 / (1.0 - 2.0 * sd.mass / r);
        let ext_f = |r: f64| 1.0 - 2.0 * sd.mass / r;
        let d = 1e-5 * radius;
        let fd = |f: &dyn Fn(f64) -> f64, g: &dyn Fn(f64) -> f64| {
            let diff = |r: f64| f(r) - g(r);
            (3.0 * diff(radius) - 4.0 * diff(radius - d) + diff(radius - 2.0 * d)) / (2.0 * d)
        };
        let gap_h = fd(&e2h, &ext_h).abs() * radius;
        let gap_f = fd(&e2f, &ext_f).abs() * radius;
        assert!(gap_h < 1e-6 && gap_f < 1e-6, "{gap_h} {gap_f}");
    }

    #[test]
    fn index_one_is_not_c2() {
        // ρ'(R) ≠ 0 for n = 1, so e^{2H} has a second-derivative jump
        let (eos, sd, traj) = star(2.0);
        let mc = metric_coefficients(&eos, &traj, &sd).unwrap();
        assert!(junction_check(&mc, 1).unwrap().passes);
        let report = junction_check(&mc, 2).unwrap();
        let failing: Vec<_> = report.gaps.iter().filter(|g| !g.passes).collect();
        assert_eq!(failing.len(), 1);
        assert_eq!((failing[0].coefficient.as_str(), failing[0].order), ("exp2h", 2));
    }
}
