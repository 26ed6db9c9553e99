//! Prediction request and response bodies, shared by `rcvr predict` and the
//! HTTP service so both print the same bytes for the same input.

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use rcvr_core::error::{Error, Result};
use rcvr_core::features::{extract_custom, FeatureVector, SLOT_NAMES};
use rcvr_core::kinematics::{annotate, retime, Geometry, PhysicsConfig};
use rcvr_core::net::{NetworkModel, CLASSES};
use rcvr_core::ratings::Category;
use rcvr_core::track::{parse_track, CoasterType, Track, Vec3};

/// Sampling interval used when a geometry document gives none, seconds.
pub const DEFAULT_DT: f64 = 0.1;
/// Longest g-force profile returned; longer rides are strided down.
pub const MAX_PROFILE_SAMPLES: usize = 1000;

/// A bare path: positions only, physics filled in server-side.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDocument {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_type")]
    pub coaster_type: i64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub points: Vec<[f64; 3]>,
    #[serde(default)]
    pub physics: PhysicsConfig,
}

fn default_id() -> String {
    "geometry".into()
}

fn default_type() -> i64 {
    i64::from(CoasterType::Normal.code())
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl GeometryDocument {
    /// Resamples the path at uniform time steps under the energy model, then
    /// derives speeds and g-forces. The input spacing is irrelevant.
    pub fn annotate(&self) -> Result<Track> {
        let coaster_type = CoasterType::from_code(self.coaster_type)
            .ok_or_else(|| Error::invariant(rcvr_core::track::invariant::COASTER_TYPE, None))?;
        let path: Vec<Vec3> = self.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        if path.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::invariant(rcvr_core::track::invariant::FINITE, None));
        }
        let positions = retime(&path, self.dt, &self.physics)?;
        annotate(
            &Geometry {
                id: self.id.clone(),
                coaster_type,
                dt: self.dt,
                positions,
            },
            &self.physics,
        )
    }
}

/// A track document is recognized by its `format_version` key; anything
/// else is read as a geometry document.
pub fn parse_request(body: &[u8]) -> Result<Track> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| Error::MalformedSyntax(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::MalformedSyntax("request body must be a JSON object".into()))?;
    if obj.contains_key("format_version") {
        parse_track(body)
    } else {
        let doc: GeometryDocument = serde_json::from_value(value).map_err(|e| Error::MalformedSyntax(e.to_string()))?;
        doc.annotate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerCategory<T> {
    pub fun: T,
    pub intensity: T,
    pub nausea: T,
    pub price: T,
}

impl<T: Copy> PerCategory<T> {
    fn from_fn(f: impl Fn(Category) -> T) -> Self {
        PerCategory {
            fun: f(Category::Fun),
            intensity: f(Category::Intensity),
            nausea: f(Category::Nausea),
            price: f(Category::Price),
        }
    }
}

/// Slot name to value, in vector order.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedFeatures(pub FeatureVector);

impl Serialize for NamedFeatures {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(SLOT_NAMES.len()))?;
        for (name, v) in SLOT_NAMES.iter().zip(self.0.values()) {
            map.serialize_entry(name, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GforceProfile {
    /// Seconds from the start of the ride, one per sample.
    pub time: Vec<f64>,
    pub longitudinal: Vec<f64>,
    pub lateral: Vec<f64>,
    pub vertical: Vec<f64>,
}

impl GforceProfile {
    pub fn of(track: &Track) -> Self {
        let n = track.len();
        let stride = n.div_ceil(MAX_PROFILE_SAMPLES).max(1);
        let picked: Vec<usize> = (0..n).step_by(stride).collect();
        let points = track.points();
        GforceProfile {
            time: picked.iter().map(|&i| i as f64 * track.dt()).collect(),
            longitudinal: picked.iter().map(|&i| points[i].gforce.x).collect(),
            lateral: picked.iter().map(|&i| points[i].gforce.y).collect(),
            vertical: picked.iter().map(|&i| points[i].gforce.z).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictResponse {
    pub id: String,
    pub stars: PerCategory<u8>,
    pub probabilities: PerCategory<[f64; CLASSES]>,
    pub features: NamedFeatures,
    pub gforce_profile: GforceProfile,
}

impl PredictResponse {
    /// The exact bytes both front ends emit: compact JSON plus a newline.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("response encodes");
        out.push(b'\n');
        out
    }
}

pub fn predict(model: &NetworkModel, track: &Track) -> Result<PredictResponse> {
    let prediction = model.predict_track(track)?;
    let stars = prediction.stars();
    Ok(PredictResponse {
        id: track.id().to_string(),
        stars: PerCategory::from_fn(|c| stars.get(c)),
        probabilities: PerCategory::from_fn(|c| *prediction.head(c)),
        features: NamedFeatures(extract_custom(track)?),
        gforce_profile: GforceProfile::of(track),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizerSummary {
    pub dimensions: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub format_version: i64,
    pub config: rcvr_core::net::NetworkConfig,
    pub parameters: usize,
    pub trained_iterations: usize,
    pub custom_normalizer: Option<NormalizerSummary>,
    pub sequence_normalizer: Option<NormalizerSummary>,
}

impl ModelSummary {
    pub fn of(model: &NetworkModel) -> Self {
        let summary = |n: &rcvr_core::features::Normalizer| NormalizerSummary {
            dimensions: n.dim(),
            min: n.min.clone(),
            max: n.max.clone(),
        };
        ModelSummary {
            format_version: model.format_version,
            config: model.config.clone(),
            parameters: model.parameters.count(),
            trained_iterations: model.loss_history.len(),
            custom_normalizer: model.normalizers.custom.as_ref().map(summary),
            sequence_normalizer: model.normalizers.sequence.as_ref().map(summary),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_defaults_and_unknown_keys() {
        let doc: GeometryDocument = serde_json::from_str(r#"{"points": [[0,0,0],[30,0,0]]}"#).unwrap();
        assert_eq!((doc.dt, doc.coaster_type, doc.id.as_str()), (DEFAULT_DT, 1, "geometry"));
        let track = doc.annotate().unwrap();
        assert!(track.len() > 10);
        for p in track.points() {
            assert!((p.gforce - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-6);
        }
        let err = parse_request(br#"{"points": [[0,0,0],[1,0,0]], "colour": 1}"#).unwrap_err();
        assert_eq!(err.code(), "MalformedSyntax");
    }

    #[test]
    fn bad_geometry_is_an_invariant_problem() {
        let err = parse_request(br#"{"points": [[0,0,0]]}"#).unwrap_err();
        assert_eq!(err.code(), "TooShort");
        let err = parse_request(br#"{"points": [[0,0,0],[0,0,0],[1,0,0]]}"#).unwrap_err();
        assert_eq!(err.code(), "DegenerateGeometry");
        let err = parse_request(br#"{"points": [[0,0,0],[9,0,0]], "coaster_type": 7}"#).unwrap_err();
        assert_eq!(err.code(), "InvariantViolation");
        let err = parse_request(b"[1,2]").unwrap_err();
        assert_eq!(err.code(), "MalformedSyntax");
    }

    #[test]
    fn features_keep_slot_order() {
        let fv = FeatureVector(std::array::from_fn(|i| i as f64));
        let text = serde_json::to_string(&NamedFeatures(fv)).unwrap();
        assert!(
            text.starts_with(r#"{"max_speed":0.0,"avg_speed":1.0,"total_length":2.0"#),
            "{text}"
        );
    }
}
