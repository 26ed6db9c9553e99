//! Speeds and rider-frame g-forces derived from bare track geometry.
//!
//! Speeds follow a gravity-coasting energy balance with an optional linear
//! loss term; accelerations come from central finite differences. G-forces are
//! proper accelerations (what an onboard accelerometer reads), so a rider at
//! rest on flat track reads +1 g vertical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{CoasterType, Track, TrackPoint, Vec3};

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Below this norm a vector is treated as having no direction.
const DIRECTION_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// m/s²
    pub g0: f64,
    /// Minimum coaster speed, m/s.
    pub v_min: f64,
    /// Speed at the first point, m/s.
    pub v_launch: f64,
    /// Fractional kinetic-energy loss per meter of track.
    pub friction: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            g0: STANDARD_GRAVITY,
            v_min: 1.0,
            v_launch: 3.0,
            friction: 0.0,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.g0 > 0.0
            && self.v_min > 0.0
            && self.v_launch >= self.v_min
            && (0.0..0.01).contains(&self.friction)
            && self.g0.is_finite()
            && self.v_launch.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "physics config out of range: {self:?} (need g0 > 0, v_min > 0, v_launch ≥ v_min, 0 ≤ friction < 0.01)"
            )))
        }
    }

    /// Speed after travelling `arc` meters from the start and dropping to height `h`.
    fn speed_at(&self, h0: f64, h: f64, arc: f64) -> f64 {
        let energy = self.v_launch * self.v_launch + 2.0 * self.g0 * (h0 - h) - 2.0 * self.friction * self.g0 * arc;
        energy.max(0.0).sqrt().max(self.v_min)
    }
}

fn check_distinct(positions: &[Vec3]) -> Result<()> {
    for (i, w) in positions.windows(2).enumerate() {
        if w[0] == w[1] {
            return Err(Error::DegenerateGeometry { index: i + 1 });
        }
    }
    Ok(())
}

/// Cumulative polyline length at every vertex.
pub fn cumulative_arc_length(positions: &[Vec3]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(positions.len());
    out.push(0.0);
    for w in positions.windows(2) {
        acc += (w[1] - w[0]).norm();
        out.push(acc);
    }
    out
}

/// Energy-balance speed at every position.
pub fn solve_speeds(positions: &[Vec3], cfg: &PhysicsConfig) -> Result<Vec<f64>> {
    if positions.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: positions.len(),
        });
    }
    cfg.validate()?;
    check_distinct(positions)?;
    let h0 = positions[0].y;
    let arcs = cumulative_arc_length(positions);
    let mut speeds: Vec<f64> = positions
        .iter()
        .zip(&arcs)
        .map(|(p, &s)| cfg.speed_at(h0, p.y, s))
        .collect();
    speeds[0] = cfg.v_launch;
    Ok(speeds)
}

/// Rider frame (forward, up) at every position.
///
/// Forward is the central difference direction (one-sided at the ends); up is
/// world-up made orthogonal to forward, falling back to world-z when forward is
/// vertical.
pub fn rider_frames(positions: &[Vec3]) -> Result<Vec<(Vec3, Vec3)>> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    check_distinct(positions)?;
    let frames = (0..n)
        .map(|i| {
            let ahead = positions[(i + 1).min(n - 1)];
            let behind = positions[i.saturating_sub(1)];
            let mut dir = ahead - behind;
            if dir.norm() < DIRECTION_EPS {
                // hairpin: fall back to the outgoing step
                dir = if i + 1 < n {
                    positions[i + 1] - positions[i]
                } else {
                    positions[i] - positions[i - 1]
                };
            }
            let forward = dir.normalize();
            (forward, up_for(&forward))
        })
        .collect();
    Ok(frames)
}

fn up_for(forward: &Vec3) -> Vec3 {
    let reject = |axis: Vec3| axis - forward * forward.dot(&axis);
    let up = reject(Vec3::y());
    if up.norm() > DIRECTION_EPS {
        up.normalize()
    } else {
        reject(Vec3::z()).normalize()
    }
}

/// Rider-frame proper acceleration, in g, as (longitudinal, lateral, vertical).
///
/// The normal part of the acceleration is the second central difference of
/// position over `dt`, rescaled so that the finite-difference speed matches
/// the supplied speed. The tangential part is `d(v²/2)/ds` from the supplied
/// speeds. Lateral points to the rider's left.
pub fn compute_gforces(positions: &[Vec3], speeds: &[f64], dt: f64, cfg: &PhysicsConfig) -> Result<Vec<Vec3>> {
    let n = positions.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    if speeds.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} speeds for {} positions",
            speeds.len(),
            n
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invariant(crate::track::invariant::DT_POSITIVE, None));
    }
    cfg.validate()?;
    let frames = rider_frames(positions)?;
    let gravity = Vec3::new(0.0, -cfg.g0, 0.0);

    let mut out = vec![Vec3::zeros(); n];
    for i in 1..n - 1 {
        let (prev, here, next) = (positions[i - 1], positions[i], positions[i + 1]);
        let (forward, up) = frames[i];
        let left = up.cross(&forward);

        let chord = next - prev;
        let second_diff = (next - 2.0 * here + prev) / (dt * dt);
        let normal = second_diff - forward * forward.dot(&second_diff);
        let fd_speed = chord.norm() / (2.0 * dt);
        let normal = if fd_speed > 0.0 {
            normal * (speeds[i] / fd_speed).powi(2)
        } else {
            Vec3::zeros()
        };

        let span = (here - prev).norm() + (next - here).norm();
        let tangential = (speeds[i + 1].powi(2) - speeds[i - 1].powi(2)) / (2.0 * span);

        let proper = forward * tangential + normal - gravity;
        out[i] = Vec3::new(proper.dot(&forward), proper.dot(&left), proper.dot(&up)) / cfg.g0;
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    Ok(out)
}

/// A ride known only by its sampled positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub id: String,
    pub coaster_type: CoasterType,
    pub dt: f64,
    pub positions: Vec<Vec3>,
}

impl From<&Track> for Geometry {
    fn from(track: &Track) -> Self {
        Geometry {
            id: track.id().to_string(),
            coaster_type: track.coaster_type(),
            dt: track.dt(),
            positions: track.positions(),
        }
    }
}

/// Fills speeds, rider frames and g-forces from positions alone.
pub fn annotate(geometry: &Geometry, cfg: &PhysicsConfig) -> Result<Track> {
    let positions = &geometry.positions;
    let speeds = solve_speeds(positions, cfg)?;
    let gforces = compute_gforces(positions, &speeds, geometry.dt, cfg)?;
    let frames = rider_frames(positions)?;
    let points = positions
        .iter()
        .zip(&frames)
        .zip(speeds.iter().zip(&gforces))
        .map(|((&position, &(forward, up)), (&speed, &gforce))| TrackPoint {
            position,
            forward,
            up,
            speed,
            gforce,
        })
        .collect();
    Track::new(geometry.id.clone(), geometry.coaster_type, geometry.dt, points)
}

/// Re-derives every kinematic field of an existing track.
pub fn reannotate(track: &Track, cfg: &PhysicsConfig) -> Result<Track> {
    annotate(&Geometry::from(track), cfg)
}

/// Resamples a densely sampled path at uniform time steps of `dt` under the
/// energy model, so that consecutive samples are `speed * dt` apart.
///
/// The ride ends at the last whole time step that fits on the path.
pub fn retime(path: &[Vec3], dt: f64, cfg: &PhysicsConfig) -> Result<Vec<Vec3>> {
    if path.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: path.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::invariant(crate::track::invariant::DT_POSITIVE, None));
    }
    cfg.validate()?;
    check_distinct(path)?;
    let arcs = cumulative_arc_length(path);
    let total = *arcs.last().unwrap();
    let h0 = path[0].y;

    let locate = |s: f64| -> Vec3 {
        let seg = arcs.partition_point(|&a| a <= s).clamp(1, path.len() - 1);
        let (a0, a1) = (arcs[seg - 1], arcs[seg]);
        let t = ((s - a0) / (a1 - a0)).clamp(0.0, 1.0);
        path[seg - 1] + (path[seg] - path[seg - 1]) * t
    };
    let speed = |s: f64| cfg.speed_at(h0, locate(s).y, s);

    let mut samples = vec![path[0]];
    let mut s = 0.0;
    loop {
        let half = s + 0.5 * dt * speed(s);
        let next = s + dt * speed(half);
        if next > total {
            break;
        }
        samples.push(locate(next));
        s = next;
    }
    if samples.len() < 2 {
        samples.push(*path.last().unwrap());
    }
    Ok(samples)
}
