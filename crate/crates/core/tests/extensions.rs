use cic_core::analytics::{self, Policy, RoadConfig};
use cic_core::extensions;
use cic_core::kmh;

const L_VEH: f64 = 5.0;

#[test]
fn one_hour_form_agrees_to_first_order() {
    let road = RoadConfig::default();
    let mut checked = 0;
    for i in 0..60 {
        for j in 0..60 {
            let pol = Policy::new(kmh(20.0 + 80.0 * i as f64 / 59.0), 0.3 + 2.0 * j as f64 / 59.0);
            let sigma = 0.2;
            let x = analytics::ln_penalty(&pol, &road, L_VEH, sigma).exp() / pol.eta;
            if x > 0.01 || x == 0.0 {
                continue;
            }
            let s = analytics::cic_value(&pol, &road, L_VEH, sigma);
            let one = extensions::cic_one_hour(&pol, &road, L_VEH, sigma).value;
            // the exact gap is x²; the slack covers cancellation in one − s
            assert!(((one - s) / s).abs() <= x * x * (1.0 + 1e-9) + 8.0 * f64::EPSILON, "{pol:?}: x = {x} gap = {} one = {one} s = {s}", ((one - s) / s).abs());
            checked += 1;
        }
    }
    assert!(checked > 100, "only {checked} grid points in range");
}

#[test]
fn comparison_curves_at_fifty_kmh() {
    let road = RoadConfig::default();
    let v = kmh(50.0);
    for k in 0..=70 {
        let eta = 1.5 + 3.5 * k as f64 / 70.0;
        let r = extensions::throughput_report(&Policy::new(v, eta), &road, L_VEH, 0.05).unwrap();
        assert!(r.flags.is_empty());
        assert!(r.s_two_lane >= r.s_overlap && r.s_overlap >= r.s_baseline && r.s_baseline >= 0.0);
        if eta > 2.5 {
            let sp = 1.0 / eta;
            assert!((r.s_two_lane - r.s_baseline) <= 1e-3 * sp);
        }
    }
}

#[test]
fn heavier_noise_separates_the_curves() {
    let road = RoadConfig::default();
    let r = extensions::throughput_report(&Policy::new(kmh(50.0), 1.0), &road, L_VEH, 0.12).unwrap();
    assert!(r.s_two_lane > r.s_overlap && r.s_overlap > r.s_baseline);
}

/// Best grid headway under a collision cap, for an arbitrary throughput.
fn best_under_cap(v: f64, p_hat: f64, sigma: f64, f: impl Fn(&Policy) -> f64) -> f64 {
    (1..=2000)
        .map(|k| Policy::new(v, 0.005 * k as f64))
        .filter(|p| p.spacing() > L_VEH && analytics::collision_probability(p, L_VEH, sigma) <= p_hat)
        .map(|p| f(&p))
        .fold(0.0, f64::max)
}

#[test]
fn extension_throughputs_keep_speed_monotonicity() {
    let road = RoadConfig { n_lanes: 2, ..RoadConfig::default() };
    let (p_hat, sigma) = (1e-8, 0.05);
    let speeds: Vec<f64> = (0..9).map(|i| kmh(20.0 + 10.0 * i as f64)).collect();
    let overlap: Vec<f64> = speeds
        .iter()
        .map(|&v| best_under_cap(v, p_hat, sigma, |p| extensions::cic_overlap(p, &road, L_VEH, sigma).unwrap().value))
        .collect();
    let two: Vec<f64> = speeds
        .iter()
        .map(|&v| best_under_cap(v, p_hat, sigma, |p| extensions::throughput_two_lane(p, &road, L_VEH, sigma).unwrap().value))
        .collect();
    assert!(overlap.windows(2).all(|w| w[1] > w[0]), "{overlap:?}");
    assert!(two.windows(2).all(|w| w[1] > w[0]), "{two:?}");
}
