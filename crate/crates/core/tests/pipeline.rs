use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::sync::Arc;

use proptest::prelude::*;
use s3flat_core::construct::{helicoidal_params, theorem1_orbit_profile};
use s3flat_core::forms::{hopf_angle_grid, FormSource};
use s3flat_core::mesh::DEFAULT_POLE;
use s3flat_core::s3core::stereographic;
use s3flat_core::*;

#[test]
fn reconstruction_recovers_every_figure_case() {
    for (a, b) in [(2.0, 3.0), (SQRT_2, 3.0), (3f64.sqrt(), SQRT_2)] {
        let beta = 35.0;
        let alpha = helicoidal_params(a, b, beta).unwrap().alpha;
        let prof = theorem1_orbit_profile(a, b, beta, 2.0, 1e-3).unwrap();
        let r = reconstruct(alpha, beta, &prof).unwrap();
        assert!((r.a - a).abs() < 1e-6 && (r.b - b).abs() < 1e-6, "({a},{b}) -> ({},{})", r.a, r.b);
        assert!(r.residuals.iter().all(|(_, x)| *x < 1e-6), "{:?}", r.residuals);
    }
}

#[test]
fn ode_surface_hopf_angle_matches_profile_formula() {
    let (alpha, beta) = (5.0, 35.0);
    let prof = integrate(alpha, beta, FRAC_PI_4, 0.1, 0.5, 1e-3).unwrap();
    let cos = prof.cos_nu_samples();
    let expected = cos.iter().sum::<f64>() / cos.len() as f64;
    let p = helicoidal_patch(alpha, beta, Arc::new(prof)).unwrap();
    let grid = GridSpec::new(-PI / beta, PI / beta, 0.01, 0.49, 9, 9);
    for c in hopf_angle_grid(&p, &grid).unwrap().into_iter().flatten() {
        assert!((c - expected).abs() < 1e-8, "{c} vs {expected}");
    }
}

#[test]
fn ode_mesh_is_finite() {
    let prof = integrate(5.0, 35.0, FRAC_PI_4, 0.1, 0.5, 1e-3).unwrap();
    let p = helicoidal_patch(5.0, 35.0, Arc::new(prof)).unwrap();
    let m = mesh_from_patch(&p, &GridSpec::new(-0.05, 0.05, 0.01, 0.49, 12, 30), DEFAULT_POLE).unwrap();
    assert!(m.is_finite());
    assert_eq!((m.vertices.len(), m.faces.len()), (360, 2 * 11 * 29));
}

#[test]
fn figure_cases_verify() {
    for (a, b) in [(2.0, 3.0), (SQRT_2, 3.0), (3f64.sqrt(), SQRT_2)] {
        for kind in [Kind::Theorem1, Kind::BianchiSpivak, Kind::Helicoidal] {
            let mut inp = VerifyInput::new(kind);
            inp.a = a;
            inp.b = b;
            let r = verify(&inp).unwrap();
            assert!(r.pass, "{kind} ({a},{b}): {:?}", r.failed().map(|c| &c.name).collect::<Vec<_>>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theorem1_coordinates_are_asymptotic_tschebycheff(a in 1.1f64..4.0, b in 1.1f64..4.0, u in -PI..PI, v in -PI..PI) {
        let p = theorem1_patch(a, b, false).unwrap();
        prop_assert!((p.value(u, v).norm() - 1.0).abs() < 1e-14);
        if let Ok(c) = p.forms(u, v) {
            prop_assert!((c.ee - 1.0).abs() < 1e-12 && (c.gg - 1.0).abs() < 1e-12);
            prop_assert!(c.l.abs() < 1e-9 && c.n.abs() < 1e-9);
        }
    }

    #[test]
    fn orbit_rates_leave_y_invariant(a in 1.1f64..4.0, b in 1.1f64..4.0, beta in -40.0f64..40.0) {
        prop_assume!(beta.abs() > 0.5 && (a * b - 1.0).abs() > 1e-3);
        let hp = helicoidal_params(a, b, beta).unwrap();
        let y = theorem1_patch(a, b, false).unwrap();
        let m = hp.motion();
        for (u, v, t) in [(0.3, -1.2, 0.05), (2.0, 0.7, -0.11)] {
            let moved = m.matrix(t) * y.value(u, v);
            let shifted = y.value(u + hp.z(t), v + hp.w(t));
            prop_assert!((moved - shifted).amax() < 1e-12);
        }
    }

    #[test]
    fn flat_profiles_have_constant_hopf_angle(phi0 in 0.3f64..1.2, dphi0 in -0.3f64..0.3) {
        let prof = integrate(5.0, 35.0, phi0, dphi0, 0.3, 1e-3).unwrap();
        let c = prof.cos_nu_samples();
        let spread = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - c.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(spread < 1e-9, "spread {}", spread);
    }

    #[test]
    fn stereographic_round_trip(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
        let q = S3Point::new(w, x, y, z);
        prop_assume!((q.to_vector() - DEFAULT_POLE.to_vector()).norm() > 1e-2);
        let r = Stereographic::new(DEFAULT_POLE).inverse(&stereographic(q, DEFAULT_POLE).unwrap());
        prop_assert!((r.to_vector() - q.to_vector()).norm() < 1e-10);
    }
}
