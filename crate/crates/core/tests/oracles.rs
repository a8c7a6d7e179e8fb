//! High-precision reference values computed with mpmath at 50 digits and
//! frozen here, plus a quadrature oracle for the collision probability.

use cic_core::analytics::{self, Policy, RoadConfig};
use cic_core::optimize;
use cic_core::quad;
use cic_core::rng::stream;
use cic_core::simcore::{equilibrium_gap, VehicleSpec};
use cic_core::kmh;
use rand::Rng;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn equilibrium_gap_reference_values() {
    let veh = VehicleSpec::default();
    assert!((equilibrium_gap(&veh, kmh(50.0)).unwrap() - 21.1546).abs() < 1e-3);
    assert!(rel(equilibrium_gap(&veh, kmh(50.0)).unwrap(), 21.154580700651029887) < 1e-13);
    assert!(rel(equilibrium_gap(&veh, kmh(60.0)).unwrap(), 25.819888974716112568) < 1e-13);
}

#[test]
fn deep_tail_log_probability() {
    // (v, eta, l, sigma_o, log10 p)
    let cases = [
        (kmh(50.0), 1.5, 5.0, 0.05, -76.924771220095805938),
        (kmh(100.0), 2.0, 5.0, 0.02, -901.30587231500020462),
        (kmh(20.0), 4.0, 5.0, 0.03, -581.77495890126436728),
        (kmh(120.0), 3.0, 5.0, 0.01, -5881.8769389710425906),
        (kmh(30.0), 1.0, 4.0, 0.0105, -534.67107818221216648),
        (kmh(80.0), 1.2, 5.0, 0.006, -4780.9406485592741916),
        (kmh(25.0), 3.0, 5.0, 0.06, -106.26141584967856104),
        (kmh(60.0), 1.8, 5.0, 0.04, -171.49232107201079794),
        (kmh(40.0), 2.0, 5.0, 0.0315, -264.82643978387261161),
        (kmh(90.0), 1.1, 5.0, 0.023, -304.23838789348409915),
    ];
    for (v, eta, l, s, want) in cases {
        let got = analytics::log10_collision_probability(&Policy::new(v, eta), l, s);
        assert!(rel(got, want) < 1e-12, "{v} {eta}: {got} vs {want}");
    }
}

#[test]
fn probability_matches_density_quadrature() {
    let mut rng = stream(2024, 0);
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    while accepted < 1000 {
        let v = rng.random_range(2.0..40.0);
        let eta = rng.random_range(0.2..5.0);
        let l = rng.random_range(3.0..8.0);
        let s = rng.random_range(0.01..0.5);
        let p = analytics::collision_probability(&Policy::new(v, eta), l, s);
        if p < 1e-12 {
            continue;
        }
        let (mean, sd) = (v * eta, v * s * eta.sqrt());
        let pdf = |x: f64| (-0.5 * ((x - mean) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let q = quad::integrate(pdf, l.min(mean) - 40.0 * sd, l, 0.0, 1e-13);
        assert!(q.converged);
        worst = worst.max(rel(p, q.value));
        accepted += 1;
    }
    assert!(worst <= 1e-9, "worst relative error {worst:e}");
}

#[test]
fn critical_headway_reference_values() {
    let cases = [
        (20.0, 1e-8, 1.2084641104520708134),
        (50.0, 1e-8, 0.57226977968992922937),
        (50.0, 1e-10, 0.6080134742792351842),
        (100.0, 1e-10, 0.37469671079856284767),
        (80.0, 1e-30, 0.7069491275584138204),
    ];
    for (vk, p_hat, want) in cases {
        let got = optimize::eta_hat(kmh(vk), p_hat, 5.0, 0.05).unwrap();
        assert!(rel(got, want) < 1e-11, "{vk} {p_hat}: {got} vs {want}");
    }
}

#[test]
fn stationary_headway_reference_values() {
    let road = RoadConfig::default();
    let cases = [
        (20.0, 1.2392792512329717111, 0.80025940400725968531),
        (50.0, 0.59176142766638546273, 1.6680665744098665546),
        (100.0, 0.3593243948750032486, 2.7335343285805375413),
    ];
    for (vk, eta_want, s_want) in cases {
        let eta = optimize::eta_star(kmh(vk), &road, 5.0, 0.05).unwrap();
        assert!(rel(eta, eta_want) < 1e-9, "{vk}: {eta} vs {eta_want}");
        let s = 1.0 / optimize::inverse_capacity(kmh(vk), eta, &road, 5.0, 0.05);
        assert!(rel(s, s_want) < 1e-12, "{vk}: {s} vs {s_want}");
    }
}
