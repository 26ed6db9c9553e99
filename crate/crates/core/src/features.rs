//! Ride representations fed to the network: a fixed 25-slot summary of the
//! whole ride and a variable-length sequence of per-point 7-vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{relative_positions, Track};

pub const CUSTOM_LEN: usize = 25;
pub const POINT_LEN: usize = 7;

/// Forces smaller than this, in g, count as neither positive nor negative.
pub const FORCE_EPS: f64 = 1e-9;

/// Canonical slot names, in vector order.
pub const SLOT_NAMES: [&str; CUSTOM_LEN] = [
    "max_speed",
    "avg_speed",
    "total_length",
    "max_down_angle",
    "max_up_angle",
    "coaster_type",
    "duration",
    "vertical_max_pos",
    "vertical_max_neg",
    "vertical_avg_pos",
    "vertical_avg_neg",
    "vertical_frac_pos",
    "vertical_frac_neg",
    "lateral_max_pos",
    "lateral_max_neg",
    "lateral_avg_pos",
    "lateral_avg_neg",
    "lateral_frac_pos",
    "lateral_frac_neg",
    "longitudinal_max_pos",
    "longitudinal_max_neg",
    "longitudinal_avg_pos",
    "longitudinal_avg_neg",
    "longitudinal_frac_pos",
    "longitudinal_frac_neg",
];

/// Zero-based slot indices.
pub mod slot {
    pub const MAX_SPEED: usize = 0;
    pub const AVG_SPEED: usize = 1;
    pub const TOTAL_LENGTH: usize = 2;
    pub const MAX_DOWN_ANGLE: usize = 3;
    pub const MAX_UP_ANGLE: usize = 4;
    pub const COASTER_TYPE: usize = 5;
    pub const DURATION: usize = 6;
    pub const VERTICAL: usize = 7;
    pub const LATERAL: usize = 13;
    pub const LONGITUDINAL: usize = 19;

    // offsets within an axis block
    pub const MAX_POS: usize = 0;
    pub const MAX_NEG: usize = 1;
    pub const AVG_POS: usize = 2;
    pub const AVG_NEG: usize = 3;
    pub const FRAC_POS: usize = 4;
    pub const FRAC_NEG: usize = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; CUSTOM_LEN]);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        SLOT_NAMES.iter().position(|&n| n == name).map(|i| self.0[i])
    }
}

/// Per-point rows: relative position (3), speed (1), g-force (3).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSequence {
    pub rows: Vec<[f64; POINT_LEN]>,
}

impl PointSequence {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Default)]
struct AxisStats {
    max_pos: f64,
    max_neg: f64,
    sum_pos: f64,
    sum_neg: f64,
    n_pos: usize,
    n_neg: usize,
}

impl AxisStats {
    fn push(&mut self, g: f64) {
        if g > FORCE_EPS {
            self.max_pos = self.max_pos.max(g);
            self.sum_pos += g;
            self.n_pos += 1;
        } else if g < -FORCE_EPS {
            self.max_neg = self.max_neg.max(-g);
            self.sum_neg += -g;
            self.n_neg += 1;
        }
    }

    fn write(&self, n: usize, out: &mut [f64]) {
        let mean = |sum: f64, k: usize| if k == 0 { 0.0 } else { sum / k as f64 };
        out[slot::MAX_POS] = self.max_pos;
        out[slot::MAX_NEG] = self.max_neg;
        out[slot::AVG_POS] = mean(self.sum_pos, self.n_pos);
        out[slot::AVG_NEG] = mean(self.sum_neg, self.n_neg);
        out[slot::FRAC_POS] = self.n_pos as f64 / n as f64;
        out[slot::FRAC_NEG] = self.n_neg as f64 / n as f64;
    }
}

pub fn extract_custom(track: &Track) -> Result<FeatureVector> {
    let points = track.points();
    let n = points.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let mut v = [0.0; CUSTOM_LEN];

    v[slot::MAX_SPEED] = points.iter().map(|p| p.speed).fold(0.0, f64::max);
    v[slot::AVG_SPEED] = points.iter().map(|p| p.speed).sum::<f64>() / n as f64;
    v[slot::TOTAL_LENGTH] = track.arc_length();

    let (mut down, mut up) = (0.0_f64, 0.0_f64);
    for p in points {
        let pitch = p.forward.y.clamp(-1.0, 1.0).asin().to_degrees();
        down = down.max(-pitch);
        up = up.max(pitch);
    }
    // adding 0.0 turns a negated zero pitch into +0.0
    v[slot::MAX_DOWN_ANGLE] = down + 0.0;
    v[slot::MAX_UP_ANGLE] = up + 0.0;
    v[slot::COASTER_TYPE] = f64::from(track.coaster_type().code());
    v[slot::DURATION] = track.dt() * (n - 1) as f64;

    // rider frame stores (longitudinal, lateral, vertical)
    for (block, component) in [(slot::VERTICAL, 2), (slot::LATERAL, 1), (slot::LONGITUDINAL, 0)] {
        let mut stats = AxisStats::default();
        for p in points {
            stats.push(p.gforce[component]);
        }
        stats.write(n, &mut v[block..block + 6]);
    }
    Ok(FeatureVector(v))
}

pub fn extract_sequence(track: &Track) -> Result<PointSequence> {
    let deltas = relative_positions(track)?;
    let rows = deltas
        .iter()
        .zip(&track.points()[1..])
        .map(|(d, p)| [d.x, d.y, d.z, p.speed, p.gforce.x, p.gforce.y, p.gforce.z])
        .collect();
    Ok(PointSequence { rows })
}

/// Per-dimension min-max scaling to roughly `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    /// Fits on at least two samples of equal dimension.
    pub fn fit<'a, I>(samples: I) -> Result<Normalizer>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = samples.into_iter();
        let first = iter.next().ok_or(Error::EmptyFit)?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        let mut count = 1usize;
        for s in iter {
            if s.len() != min.len() {
                return Err(Error::InvalidConfig(format!(
                    "sample of dimension {} among dimension {}",
                    s.len(),
                    min.len()
                )));
            }
            for ((lo, hi), &x) in min.iter_mut().zip(max.iter_mut()).zip(s) {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
            count += 1;
        }
        if count < 2 {
            return Err(Error::EmptyFit);
        }
        Ok(Normalizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (i, (o, &xi)) in out.iter_mut().zip(x).enumerate() {
            let range = self.max[i] - self.min[i];
            *o = if range > 0.0 { (xi - self.min[i]) / range } else { 0.5 };
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// CSV with a `track_id` column followed by the 25 slot names.
pub fn features_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a FeatureVector)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("track_id").chain(SLOT_NAMES).collect();
    w.write_record(&header).expect("in-memory write");
    for (id, fv) in rows {
        let mut record = vec![id.to_string()];
        record.extend(fv.0.iter().map(|x| crate::numfmt::canonical_f64(*x)));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{annotate, Geometry, PhysicsConfig};
    use crate::track::{CoasterType, Vec3};

    fn flat_track(n: usize, v: f64) -> Track {
        let cfg = PhysicsConfig {
            v_launch: v,
            ..Default::default()
        };
        let geom = Geometry {
            id: "flat".into(),
            coaster_type: CoasterType::Gentle,
            dt: 0.1,
            positions: (0..n).map(|i| Vec3::new(i as f64 * v * 0.1, 0.0, 0.0)).collect(),
        };
        annotate(&geom, &cfg).unwrap()
    }

    #[test]
    fn flat_constant_speed_features() {
        let fv = extract_custom(&flat_track(100, 5.0)).unwrap();
        let mut expected = [0.0; CUSTOM_LEN];
        expected[slot::MAX_SPEED] = 5.0;
        expected[slot::AVG_SPEED] = 5.0;
        expected[slot::TOTAL_LENGTH] = 49.5;
        expected[slot::DURATION] = 9.9;
        expected[slot::VERTICAL + slot::MAX_POS] = 1.0;
        expected[slot::VERTICAL + slot::AVG_POS] = 1.0;
        expected[slot::VERTICAL + slot::FRAC_POS] = 1.0;
        for (i, (got, want)) in fv.0.iter().zip(expected).enumerate() {
            assert!((got - want).abs() < 1e-9, "slot {} = {got}, want {want}", SLOT_NAMES[i]);
        }
        assert!(fv.0[slot::MAX_DOWN_ANGLE].is_sign_positive());
    }

    #[test]
    fn sequence_rows() {
        let pts = flat_track(3, 5.0).points()[..2].to_vec();
        let t = Track::new("two", CoasterType::Gentle, 0.1, pts).unwrap();
        let seq = extract_sequence(&t).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.rows[0][0], 0.5);
        assert_eq!(seq.rows[0][3], 5.0);
    }

    #[test]
    fn normalizer_rules() {
        let a = [0.0, 3.0];
        let b = [10.0, 3.0];
        let norm = Normalizer::fit([&a[..], &b[..]]).unwrap();
        assert_eq!(norm.apply(&[5.0, 3.0]), vec![0.5, 0.5]);
        assert_eq!(norm.apply(&[10.0, -7.0]), vec![1.0, 0.5]);
        assert!(matches!(Normalizer::fit([&a[..]]), Err(Error::EmptyFit)));
        assert!(matches!(
            Normalizer::fit(std::iter::empty::<&[f64]>()),
            Err(Error::EmptyFit)
        ));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let fv = extract_custom(&flat_track(10, 5.0)).unwrap();
        let text = features_csv([("flat", &fv)]);
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("track_id,max_speed,avg_speed"));
        assert_eq!(header.split(',').count(), 26);
        assert!(lines.next().unwrap().starts_with("flat,5.0,5.0,"));
    }
}
