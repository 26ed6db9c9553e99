//! Rollercoaster rides as uniformly time-sampled sequences of data points.
//!
//! A [`Track`] is immutable once built: [`Track::new`] and [`parse_track`]
//! are the only ways in and both run the full invariant check.
//!
//! World frame: x east, y up, z north. Rider frame g-forces are stored as
//! (longitudinal, lateral, vertical) in units of standard gravity.

use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numfmt::{canonical_f64, write_vec3};

pub type Vec3 = Vector3<f64>;

pub const FORMAT_VERSION: i64 = 1;
pub const FILE_EXTENSION: &str = ".rcvr.json";

/// Orthonormality tolerance of the rider frame.
pub const FRAME_TOLERANCE: f64 = 1e-6;
/// Allowed slack when comparing point spacing against `speed * dt`.
pub const SAMPLING_SLACK: f64 = 1.25;

/// Names of the track invariants, as reported in [`Error::InvariantViolation`].
pub mod invariant {
    pub const FINITE: &str = "finite values";
    pub const FORWARD_UNIT: &str = "|forward| = 1";
    pub const UP_UNIT: &str = "|up| = 1";
    pub const FRAME_ORTHOGONAL: &str = "forward ⊥ up";
    pub const SPEED_NONNEGATIVE: &str = "speed ≥ 0";
    pub const DT_POSITIVE: &str = "dt > 0";
    pub const COASTER_TYPE: &str = "coaster_type ∈ {0,1,2}";
    pub const MIN_POINTS: &str = "at least 2 points";
    pub const SAMPLING: &str = "sampling consistency";
    pub const ARC_LENGTH: &str = "total arc length > 0";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoasterType {
    Gentle = 0,
    Normal = 1,
    Extreme = 2,
}

impl CoasterType {
    pub const ALL: [CoasterType; 3] = [CoasterType::Gentle, CoasterType::Normal, CoasterType::Extreme];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(CoasterType::Gentle),
            1 => Some(CoasterType::Normal),
            2 => Some(CoasterType::Extreme),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    /// m/s
    pub speed: f64,
    /// (longitudinal, lateral, vertical), in g.
    pub gforce: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    id: String,
    coaster_type: CoasterType,
    dt: f64,
    points: Vec<TrackPoint>,
}

impl Track {
    pub fn new(id: impl Into<String>, coaster_type: CoasterType, dt: f64, points: Vec<TrackPoint>) -> Result<Self> {
        let track = Track {
            id: id.into(),
            coaster_type,
            dt,
            points,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn coaster_type(&self) -> CoasterType {
        self.coaster_type
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Sum of consecutive position deltas, in meters.
    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Same track under a different identifier.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn validate(&self) -> Result<()> {
        use invariant::*;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invariant(DT_POSITIVE, None));
        }
        if self.points.len() < 2 {
            return Err(Error::invariant(MIN_POINTS, None));
        }
        for (i, p) in self.points.iter().enumerate() {
            let finite = p.position.iter().all(|x| x.is_finite())
                && p.forward.iter().all(|x| x.is_finite())
                && p.up.iter().all(|x| x.is_finite())
                && p.gforce.iter().all(|x| x.is_finite())
                && p.speed.is_finite();
            if !finite {
                return Err(Error::invariant(FINITE, Some(i)));
            }
            if (p.forward.norm() - 1.0).abs() > FRAME_TOLERANCE {
                return Err(Error::invariant(FORWARD_UNIT, Some(i)));
            }
            if (p.up.norm() - 1.0).abs() > FRAME_TOLERANCE {
                return Err(Error::invariant(UP_UNIT, Some(i)));
            }
            if p.forward.dot(&p.up).abs() >= FRAME_TOLERANCE {
                return Err(Error::invariant(FRAME_ORTHOGONAL, Some(i)));
            }
            if p.speed < 0.0 {
                return Err(Error::invariant(SPEED_NONNEGATIVE, Some(i)));
            }
        }
        for (i, w) in self.points.windows(2).enumerate() {
            let step = (w[1].position - w[0].position).norm();
            let reach = w[0].speed.max(w[1].speed) * self.dt * SAMPLING_SLACK;
            if step > reach {
                return Err(Error::invariant(SAMPLING, Some(i + 1)));
            }
        }
        if !(self.arc_length() > 0.0) {
            return Err(Error::invariant(ARC_LENGTH, None));
        }
        Ok(())
    }
}

/// `position[i+1] - position[i]` for every consecutive pair.
pub fn relative_positions(track: &Track) -> Result<Vec<Vec3>> {
    if track.points.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: track.points.len(),
        });
    }
    Ok(track.points.windows(2).map(|w| w[1].position - w[0].position).collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrack {
    format_version: i64,
    id: String,
    coaster_type: i64,
    dt: f64,
    points: Vec<RawPoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    p: [f64; 3],
    f: [f64; 3],
    u: [f64; 3],
    v: f64,
    g: [f64; 3],
}

impl From<RawPoint> for TrackPoint {
    fn from(raw: RawPoint) -> Self {
        TrackPoint {
            position: Vec3::from(raw.p),
            forward: Vec3::from(raw.f),
            up: Vec3::from(raw.u),
            speed: raw.v,
            gforce: Vec3::from(raw.g),
        }
    }
}

/// Parses a `.rcvr.json` track document.
pub fn parse_track(bytes: &[u8]) -> Result<Track> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::MalformedSyntax(e.to_string()))?;
    parse_track_value(value)
}

pub(crate) fn parse_track_value(value: serde_json::Value) -> Result<Track> {
    // Version is checked before the shape so future layouts report the right error.
    match value.get("format_version").map(|v| v.as_i64()) {
        Some(Some(FORMAT_VERSION)) => {}
        Some(Some(other)) => return Err(Error::VersionUnsupported(other)),
        Some(None) => return Err(Error::MalformedSyntax("format_version must be an integer".into())),
        None => return Err(Error::MalformedSyntax("missing format_version".into())),
    }
    let raw: RawTrack = serde_json::from_value(value).map_err(|e| Error::MalformedSyntax(e.to_string()))?;
    debug_assert_eq!(raw.format_version, FORMAT_VERSION);
    let coaster_type =
        CoasterType::from_code(raw.coaster_type).ok_or_else(|| Error::invariant(invariant::COASTER_TYPE, None))?;
    Track::new(
        raw.id,
        coaster_type,
        raw.dt,
        raw.points.into_iter().map(TrackPoint::from).collect(),
    )
}

/// Canonical text form: fixed key order, one point per line, 17 significant digits.
pub fn serialize_track(track: &Track) -> Vec<u8> {
    let mut out = String::with_capacity(64 + track.points.len() * 200);
    out.push_str("{\n");
    out.push_str(&format!("  \"format_version\": {FORMAT_VERSION},\n"));
    out.push_str(&format!(
        "  \"id\": {},\n",
        serde_json::to_string(&track.id).expect("string encodes")
    ));
    out.push_str(&format!("  \"coaster_type\": {},\n", track.coaster_type.code()));
    out.push_str(&format!("  \"dt\": {},\n", canonical_f64(track.dt)));
    out.push_str("  \"points\": [\n");
    for (i, p) in track.points.iter().enumerate() {
        out.push_str("    {\"p\": ");
        write_vec3(&mut out, &p.position.into());
        out.push_str(", \"f\": ");
        write_vec3(&mut out, &p.forward.into());
        out.push_str(", \"u\": ");
        write_vec3(&mut out, &p.up.into());
        out.push_str(", \"v\": ");
        out.push_str(&canonical_f64(p.speed));
        out.push_str(", \"g\": ");
        write_vec3(&mut out, &p.gforce.into());
        out.push('}');
        if i + 1 < track.points.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]\n}\n");
    out.into_bytes()
}

pub fn read_track_file(path: impl AsRef<std::path::Path>) -> Result<Track> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_track(&bytes)
}

pub fn write_track_file(path: impl AsRef<std::path::Path>, track: &Track) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_track(track)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(x: f64, speed: f64) -> TrackPoint {
        TrackPoint {
            position: Vec3::new(x, 0.0, 0.0),
            forward: Vec3::x(),
            up: Vec3::y(),
            speed,
            gforce: Vec3::new(0.0, 0.0, 1.0),
        }
    }

    fn line(n: usize) -> Track {
        let pts = (0..n).map(|i| point(i as f64 * 0.5, 5.0)).collect();
        Track::new("line", CoasterType::Normal, 0.1, pts).unwrap()
    }

    const MINIMAL: &str = r#"{
  "format_version": 1,
  "id": "tiny",
  "coaster_type": 0,
  "dt": 0.1,
  "points": [
    {"p": [0.0, 0.0, 0.0], "f": [1.0, 0.0, 0.0], "u": [0.0, 1.0, 0.0], "v": 5.0, "g": [0.0, 0.0, 1.0]},
    {"p": [0.5, 0.0, 0.0], "f": [1.0, 0.0, 0.0], "u": [0.0, 1.0, 0.0], "v": 5.0, "g": [0.0, 0.0, 1.0]}
  ]
}
"#;

    #[test]
    fn minimal_file_parses() {
        let t = parse_track(MINIMAL.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dt(), 0.1);
        assert_eq!(t.coaster_type(), CoasterType::Gentle);
        let canonical = serialize_track(&t);
        assert_eq!(serialize_track(&parse_track(&canonical).unwrap()), canonical);
        assert_eq!(
            String::from_utf8(canonical).unwrap(),
            MINIMAL.replace("\"dt\": 0.1", "\"dt\": 0.10000000000000001")
        );
    }

    #[test]
    fn negative_speed_names_point() {
        let mut pts: Vec<_> = (0..8).map(|i| point(i as f64 * 0.5, 5.0)).collect();
        pts[5].speed = -1.0;
        let text = serialize_track(&Track {
            id: "bad".into(),
            coaster_type: CoasterType::Normal,
            dt: 0.1,
            points: pts,
        });
        match parse_track(&text) {
            Err(Error::InvariantViolation { invariant, index }) => {
                assert_eq!(invariant, invariant::SPEED_NONNEGATIVE);
                assert_eq!(index, Some(5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_and_version_errors() {
        assert!(matches!(parse_track(b"{not json"), Err(Error::MalformedSyntax(_))));
        let future = MINIMAL.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            parse_track(future.as_bytes()),
            Err(Error::VersionUnsupported(2))
        ));
        let extra = MINIMAL.replace("\"dt\": 0.1,", "\"dt\": 0.1, \"color\": \"red\",");
        assert!(matches!(parse_track(extra.as_bytes()), Err(Error::MalformedSyntax(_))));
        let extra_point_key = MINIMAL.replacen("\"v\": 5.0,", "\"v\": 5.0, \"w\": 1,", 1);
        assert!(matches!(
            parse_track(extra_point_key.as_bytes()),
            Err(Error::MalformedSyntax(_))
        ));
    }

    #[test]
    fn header_invariants() {
        let zero_dt = MINIMAL.replace("\"dt\": 0.1", "\"dt\": 0.0");
        assert_eq!(
            parse_track(zero_dt.as_bytes()).unwrap_err().to_string(),
            Error::invariant(invariant::DT_POSITIVE, None).to_string()
        );
        let bad_type = MINIMAL.replace("\"coaster_type\": 0", "\"coaster_type\": 7");
        assert!(matches!(
            parse_track(bad_type.as_bytes()),
            Err(Error::InvariantViolation { ref invariant, .. }) if invariant == invariant::COASTER_TYPE
        ));
    }

    #[test]
    fn sampling_consistency_is_enforced() {
        let mut pts: Vec<_> = (0..4).map(|i| point(i as f64 * 0.5, 5.0)).collect();
        // 0.5 m per 0.1 s at 5 m/s is exact; 0.7 m exceeds the 1.25 slack
        pts[3].position.x = 1.0 + 0.7;
        let err = Track::new("s", CoasterType::Normal, 0.1, pts).unwrap_err();
        assert_eq!(err.index(), Some(3));
        assert!(err.to_string().contains(invariant::SAMPLING));
    }

    #[test]
    fn stationary_track_has_no_length() {
        let pts = vec![point(0.0, 0.0), point(0.0, 0.0)];
        let err = Track::new("s", CoasterType::Normal, 0.1, pts).unwrap_err();
        assert!(err.to_string().contains(invariant::ARC_LENGTH));
    }

    #[test]
    fn relative_positions_basic() {
        let t = Track::new("two", CoasterType::Normal, 1.0, vec![point(0.0, 1.0), point(1.0, 1.0)]).unwrap();
        assert_eq!(relative_positions(&t).unwrap(), vec![Vec3::new(1.0, 0.0, 0.0)]);

        let t = Track::new(
            "dup",
            CoasterType::Normal,
            1.0,
            vec![point(0.0, 1.0), point(0.0, 1.0), point(1.0, 1.0)],
        )
        .unwrap();
        assert_eq!(relative_positions(&t).unwrap()[0], Vec3::zeros());
    }

    #[test]
    fn serialization_is_deterministic() {
        let t = line(10);
        assert_eq!(serialize_track(&t), serialize_track(&t));
        assert_eq!(parse_track(&serialize_track(&t)).unwrap(), t);
    }
}
