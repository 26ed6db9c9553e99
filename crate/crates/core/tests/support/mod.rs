//! Oracles shared by the focused test targets and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcvr_core::features::{FeatureVector, PointSequence, CUSTOM_LEN, POINT_LEN};
use rcvr_core::kinematics::{annotate, Geometry, PhysicsConfig, STANDARD_GRAVITY};
use rcvr_core::net::{gradient, init_model, Example, InputMode, NetInput, NetworkConfig, NetworkModel, Pooling};
use rcvr_core::ratings::{Category, RatingRecord, Stars};
use rcvr_core::track::{CoasterType, Track, Vec3};

pub const G0: f64 = STANDARD_GRAVITY;

pub fn random_input(rng: &mut ChaCha8Rng, steps: usize) -> NetInput {
    let mut custom = [0.0; CUSTOM_LEN];
    custom.iter_mut().for_each(|c| *c = rng.random());
    let rows = (0..steps)
        .map(|_| {
            let mut r = [0.0; POINT_LEN];
            r.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            r
        })
        .collect();
    NetInput {
        custom: Some(FeatureVector(custom)),
        sequence: Some(PointSequence { rows }),
    }
}

pub fn tiny(mode: InputMode, pooling: Pooling) -> NetworkConfig {
    NetworkConfig {
        recurrent_size: 3,
        pooling,
        seed: 11,
        ..NetworkConfig::new(mode, 2, 3)
    }
}

fn central_difference(model: &NetworkModel, examples: &[Example], tensor: usize, i: usize, eps: f64) -> f64 {
    let mut m = model.clone();
    m.parameters.tensors_mut()[tensor][i] += eps;
    let (up, _) = gradient(&m, examples).unwrap();
    m.parameters.tensors_mut()[tensor][i] -= 2.0 * eps;
    let (down, _) = gradient(&m, examples).unwrap();
    (up - down) / (2.0 * eps)
}

/// Worst relative disagreement between backprop and central differences
/// (eps 1e-5) over every parameter of a tiny network on three short sequences.
pub fn max_gradient_error(mode: InputMode, pooling: Pooling, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = init_model(&tiny(mode, pooling)).unwrap();
    let examples: Vec<Example> = (0..3)
        .map(|k| Example {
            input: random_input(&mut rng, 3),
            targets: vec![Stars([1 + k, 5 - k, 3, 2]), Stars([4, 4, 1 + k, 5])],
        })
        .collect();
    let (_, analytic) = gradient(&model, &examples).unwrap();
    let mut worst = 0.0f64;
    for (t, g) in analytic.tensors().iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let n = central_difference(&model, &examples, t, i, 1e-5);
            // the floor keeps parameters with vanishing gradient from dividing by ~0
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn geometry(positions: Vec<Vec3>, dt: f64) -> Geometry {
    Geometry {
        id: "probe".into(),
        coaster_type: CoasterType::Normal,
        dt,
        positions,
    }
}

pub fn physics(v_launch: f64) -> PhysicsConfig {
    PhysicsConfig {
        v_launch,
        ..PhysicsConfig::default()
    }
}

/// Largest deviation from (0, 0, 1) g on a level straight at constant speed.
pub fn flat_straight_deviation() -> f64 {
    let (dt, v) = (0.1, 12.0);
    let positions = (0..50).map(|i| Vec3::new(i as f64 * v * dt, 0.0, 0.0)).collect();
    let track = annotate(&geometry(positions, dt), &physics(v)).unwrap();
    track
        .points()
        .iter()
        .map(|p| (p.gforce - Vec3::new(0.0, 0.0, 1.0)).norm())
        .fold(0.0, f64::max)
}

/// Horizontal circle of radius `r` at height 0, sampled `v*dt` of arc apart.
pub fn flat_turn(r: f64, v: f64, dt: f64, steps: usize) -> Vec<Vec3> {
    let dtheta = v * dt / r;
    (0..steps)
        .map(|i| {
            let a = i as f64 * dtheta;
            Vec3::new(r * a.sin(), 0.0, r * (1.0 - a.cos()))
        })
        .collect()
}

/// (relative lateral error against v²/(r·g), absolute vertical error against 1)
/// at the middle sample of a 30 m turn taken at 15 m/s.
pub fn flat_turn_errors(dt: f64) -> (f64, f64) {
    let (r, v) = (30.0, 15.0);
    let track = annotate(&geometry(flat_turn(r, v, dt, 200), dt), &physics(v)).unwrap();
    let g = track.points()[100].gforce;
    let expected = v * v / (r * G0);
    ((g.y.abs() - expected).abs() / expected, (g.z - 1.0).abs())
}

/// Dense path along the lower half of a vertical circle of radius `r`
/// whose lowest point is at the origin, entered from height `r`.
pub fn vertical_arc(r: f64) -> Vec<Vec3> {
    let n = 20_000;
    (0..=n)
        .map(|i| {
            let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n as f64;
            Vec3::new(r * a.sin(), r * (1.0 - a.cos()), 0.0)
        })
        .collect()
}

/// Spread of v² + 2gh along the track relative to its maximum.
pub fn energy_spread(track: &Track) -> f64 {
    let e: Vec<f64> = track
        .points()
        .iter()
        .map(|p| p.speed * p.speed + 2.0 * G0 * p.position.y)
        .collect();
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / hi.abs()
}

pub fn records(votes: &[[u8; 4]]) -> Vec<RatingRecord> {
    votes
        .iter()
        .enumerate()
        .map(|(i, v)| RatingRecord::new("coaster-000", format!("user-{i:02}"), Stars(*v)))
        .collect()
}

pub fn column(votes: &[[u8; 4]], c: Category) -> Vec<u8> {
    votes.iter().map(|v| v[c.index()]).collect()
}

/// Mean rounded half-up, computed in floating point.
pub fn average_oracle(xs: &[u8]) -> u8 {
    let mean = xs.iter().map(|&x| f64::from(x)).sum::<f64>() / xs.len() as f64;
    (mean + 0.5).floor() as u8
}

/// Most frequent star; ties by distance to the mean, then the lower star.
pub fn most_picked_oracle(xs: &[u8]) -> u8 {
    let mean = xs.iter().map(|&x| f64::from(x)).sum::<f64>() / xs.len() as f64;
    let count = |s: u8| xs.iter().filter(|&&x| x == s).count();
    let mut best = 1u8;
    for s in 2..=5u8 {
        let (cs, cb) = (count(s), count(best));
        let closer = (f64::from(s) - mean).abs() < (f64::from(best) - mean).abs() - 1e-12;
        if cs > cb || (cs == cb && closer) {
            best = s;
        }
    }
    best
}
