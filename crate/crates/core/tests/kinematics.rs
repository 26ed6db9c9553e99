use proptest::prelude::*;
use rcvr_core::kinematics::{annotate, retime, solve_speeds, PhysicsConfig};
use rcvr_core::synth::generate_track;
use rcvr_core::track::{CoasterType, Vec3};

mod support;
use support::{energy_spread, flat_straight_deviation, flat_turn_errors, geometry, physics, vertical_arc, G0};

#[test]
fn flat_straight_constant_speed_reads_one_g_up() {
    let deviation = flat_straight_deviation();
    assert!(deviation < 1e-6, "{deviation}");
}

#[test]
fn flat_turn_centripetal() {
    let (lateral, vertical) = flat_turn_errors(0.01);
    assert!(lateral < 0.02, "lateral relative error {lateral}");
    assert!(vertical < 0.02, "vertical error {vertical}");
}

#[test]
fn flat_turn_error_shrinks_with_dt() {
    let (coarse, _) = flat_turn_errors(0.02);
    let (fine, _) = flat_turn_errors(0.01);
    assert!(fine <= coarse / 2.0, "dt 0.02 → {coarse}, dt 0.01 → {fine}");
}

#[test]
fn bottom_of_vertical_arc() {
    let r = 20.0;
    let cfg = physics(3.0);
    for dt in [0.01, 0.005] {
        let samples = retime(&vertical_arc(r), dt, &cfg).unwrap();
        let track = annotate(&geometry(samples, dt), &cfg).unwrap();
        let (i, bottom) = track
            .points()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.position.y.total_cmp(&b.1.position.y))
            .unwrap();
        assert!(i > 0 && i + 1 < track.len());
        let expected = 1.0 + bottom.speed * bottom.speed / (r * G0);
        let rel = (bottom.gforce.z - expected).abs() / expected;
        assert!(rel < 0.02, "dt {dt}: vertical {} vs {expected}", bottom.gforce.z);
    }
}

#[test]
fn ten_meter_drop_speed() {
    let positions: Vec<Vec3> = (0..=100).map(|i| Vec3::new(i as f64, -0.1 * i as f64, 0.0)).collect();
    let speeds = solve_speeds(&positions, &physics(3.0)).unwrap();
    let expected = (9.0 + 2.0 * G0 * 10.0).sqrt();
    assert!((speeds.last().unwrap() - expected).abs() < 1e-9);
    assert!((expected - 14.32).abs() < 0.01);
}

#[test]
fn generated_tracks_conserve_energy() {
    for t in CoasterType::ALL {
        for seed in 0..3 {
            let track = generate_track(seed, t).unwrap();
            assert!(energy_spread(&track) < 1e-6, "{t:?} seed {seed}");
        }
    }
}

proptest! {
    #[test]
    fn descending_polylines_conserve_energy(
        steps in prop::collection::vec((0.2f64..3.0, 0.0f64..1.0, -1.0f64..1.0), 3..60),
    ) {
        let mut p = Vec3::zeros();
        let mut positions = vec![p];
        for (dx, drop, dz) in steps {
            p += Vec3::new(dx, -drop, dz);
            positions.push(p);
        }
        let cfg = PhysicsConfig::default();
        let samples = retime(&positions, 0.1, &cfg).unwrap();
        prop_assume!(samples.len() >= 3);
        let track = annotate(&geometry(samples, 0.1), &cfg).unwrap();
        prop_assert!(energy_spread(&track) < 1e-6);
    }
}
