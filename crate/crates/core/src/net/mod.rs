//! The rating network: a fixed-vector path for the 25 ride parameters, an Elman
//! recurrence with pooling for the per-point sequence, a stack of sigmoid
//! hidden layers, and four 5-way softmax heads (fun, intensity, nausea, price).
//!
//! Everything here is plain `f64` code with hand-written backpropagation.

mod params;
mod train;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    extract_custom, extract_sequence, FeatureVector, Normalizer, PointSequence, CUSTOM_LEN, POINT_LEN,
};
use crate::ratings::{Category, Stars};
use crate::track::Track;

pub use params::{Dense, Parameters, Recurrent};
pub use train::{gradient, Example, TrainReport};

pub const MODEL_FORMAT_VERSION: i64 = 1;
pub const MODEL_EXTENSION: &str = ".rcvrnet.json";
pub const HEADS: usize = 4;
pub const CLASSES: usize = 5;
pub const OUTPUTS: usize = HEADS * CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    CustomOnly,
    SequenceOnly,
    Combined,
}

impl InputMode {
    pub fn uses_custom(self) -> bool {
        matches!(self, InputMode::CustomOnly | InputMode::Combined)
    }

    pub fn uses_sequence(self) -> bool {
        matches!(self, InputMode::SequenceOnly | InputMode::Combined)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_mode: InputMode,
    pub hidden_layers: usize,
    pub hidden_size: usize,
    /// Width of the recurrent state; ignored by `CustomOnly`.
    pub recurrent_size: usize,
    pub pooling: Pooling,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.5;
pub const DEFAULT_ITERATIONS: usize = 3000;
pub const DEFAULT_RECURRENT_SIZE: usize = 8;

/// Named network shapes mirroring the three evaluated configurations.
pub const PRESETS: [&str; 3] = ["custom-25", "sequence-7", "combined"];

impl NetworkConfig {
    pub fn new(input_mode: InputMode, hidden_layers: usize, hidden_size: usize) -> Self {
        NetworkConfig {
            input_mode,
            hidden_layers,
            hidden_size,
            recurrent_size: DEFAULT_RECURRENT_SIZE,
            pooling: Pooling::Mean,
            learning_rate: DEFAULT_LEARNING_RATE,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
        }
    }

    /// `custom-25` (5×40), `sequence-7` (5×50) or `combined` (5×100).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "custom-25" => Ok(Self::new(InputMode::CustomOnly, 5, 40)),
            "sequence-7" => Ok(Self::new(InputMode::SequenceOnly, 5, 50)),
            "combined" => Ok(Self::new(InputMode::Combined, 5, 100)),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let problem = if self.hidden_layers < 1 {
            Some("hidden_layers must be ≥ 1")
        } else if self.hidden_size < 1 {
            Some("hidden_size must be ≥ 1")
        } else if self.input_mode.uses_sequence() && self.recurrent_size < 1 {
            Some("recurrent_size must be ≥ 1")
        } else if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            Some("learning_rate must be > 0")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::InvalidConfig(p.into())),
            None => Ok(()),
        }
    }

    /// Width of the vector entering the first hidden layer.
    pub fn mlp_input_size(&self) -> usize {
        match self.input_mode {
            InputMode::CustomOnly => CUSTOM_LEN,
            InputMode::SequenceOnly => self.recurrent_size,
            InputMode::Combined => self.recurrent_size + CUSTOM_LEN,
        }
    }

    /// Widths from input to output, e.g. `[25, 40, 40, 40, 40, 40, 20]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.mlp_input_size()];
        sizes.extend(std::iter::repeat_n(self.hidden_size, self.hidden_layers));
        sizes.push(OUTPUTS);
        sizes
    }
}

/// Whatever inputs the model's mode needs; unused parts may be `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetInput {
    pub custom: Option<FeatureVector>,
    pub sequence: Option<PointSequence>,
}

impl NetInput {
    /// Extracts the representations `mode` consumes.
    pub fn from_track(track: &Track, mode: InputMode) -> Result<Self> {
        Ok(NetInput {
            custom: mode.uses_custom().then(|| extract_custom(track)).transpose()?,
            sequence: mode.uses_sequence().then(|| extract_sequence(track)).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Normalizers {
    pub custom: Option<Normalizer>,
    pub sequence: Option<Normalizer>,
}

/// Per-head class probabilities, ordered fun, intensity, nausea, price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probabilities: [[f64; CLASSES]; HEADS],
}

impl Prediction {
    pub fn head(&self, c: Category) -> &[f64; CLASSES] {
        &self.probabilities[c.index()]
    }

    /// Argmax star per head; exact ties go to the lowest star.
    pub fn stars(&self) -> Stars {
        let mut out = [0u8; HEADS];
        for (o, probs) in out.iter_mut().zip(&self.probabilities) {
            *o = argmax_star(probs);
        }
        Stars(out)
    }
}

pub fn argmax_star(probs: &[f64; CLASSES]) -> u8 {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best as u8 + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub format_version: i64,
    pub config: NetworkConfig,
    pub normalizers: Normalizers,
    pub parameters: Parameters,
    /// Full-batch training loss, one entry per completed iteration.
    pub loss_history: Vec<f64>,
}

/// Fresh model with Glorot-uniform weights and zero biases.
pub fn init_model(config: &NetworkConfig) -> Result<NetworkModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let recurrent = config
        .input_mode
        .uses_sequence()
        .then(|| Recurrent::init(config.recurrent_size, &mut rng));
    let sizes = config.layer_sizes();
    let mut dense: Vec<Dense> = sizes.windows(2).map(|w| Dense::init(w[0], w[1], &mut rng)).collect();
    let output = dense.pop().expect("at least one layer");
    Ok(NetworkModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        normalizers: Normalizers::default(),
        parameters: Parameters {
            recurrent,
            hidden: dense,
            output,
        },
        loss_history: Vec::new(),
    })
}

impl NetworkModel {
    /// Fits the input normalizers on `inputs`, which should be the training set.
    ///
    /// A lone custom vector yields a zero-range normalizer (every slot maps to 0.5).
    pub fn fit_normalizers<'a>(&mut self, inputs: impl IntoIterator<Item = &'a NetInput>) -> Result<()> {
        let mode = self.config.input_mode;
        let inputs: Vec<&NetInput> = inputs.into_iter().collect();
        self.normalizers.custom = if mode.uses_custom() {
            let vectors = inputs
                .iter()
                .map(|i| i.custom.as_ref().map(|f| &f.0[..]).ok_or(Error::MissingInput("custom")))
                .collect::<Result<Vec<_>>>()?;
            let vectors = if vectors.len() == 1 {
                vec![vectors[0]; 2]
            } else {
                vectors
            };
            Some(Normalizer::fit(vectors)?)
        } else {
            None
        };
        self.normalizers.sequence = if mode.uses_sequence() {
            let mut rows: Vec<&[f64]> = Vec::new();
            for i in &inputs {
                let seq = i.sequence.as_ref().ok_or(Error::MissingInput("sequence"))?;
                rows.extend(seq.rows.iter().map(|r| &r[..]));
            }
            if rows.len() == 1 {
                rows.push(rows[0]);
            }
            Some(Normalizer::fit(rows)?)
        } else {
            None
        };
        Ok(())
    }

    pub fn forward(&self, input: &NetInput) -> Result<Prediction> {
        let prepared = self.prepare(input)?;
        Ok(self.forward_prepared(&prepared).prediction())
    }

    pub fn predict_stars(&self, input: &NetInput) -> Result<Stars> {
        Ok(self.forward(input)?.stars())
    }

    /// Convenience: extract features from `track` and run the network.
    pub fn predict_track(&self, track: &Track) -> Result<Prediction> {
        self.forward(&NetInput::from_track(track, self.config.input_mode)?)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("model encodes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: NetworkModel = serde_json::from_slice(bytes).map_err(|e| Error::MalformedModel(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::MalformedModel(m.to_string()));
        if self.format_version != MODEL_FORMAT_VERSION {
            return bad("unsupported model format_version");
        }
        self.config
            .validate()
            .map_err(|e| Error::MalformedModel(e.to_string()))?;
        let p = &self.parameters;
        if !p.shapes_consistent() {
            return bad("parameter shapes are inconsistent");
        }
        let sizes = self.config.layer_sizes();
        let actual: Vec<usize> = std::iter::once(p.hidden.first().map_or(p.output.inputs, |d| d.inputs))
            .chain(p.hidden.iter().map(|d| d.outputs))
            .chain(std::iter::once(p.output.outputs))
            .collect();
        if actual != sizes {
            return bad("layer sizes do not match config");
        }
        if self.config.input_mode.uses_sequence()
            != p.recurrent
                .as_ref()
                .is_some_and(|r| r.size == self.config.recurrent_size)
        {
            return bad("recurrent layer does not match config");
        }
        if !p.is_finite() {
            return bad("non-finite parameter");
        }
        let mode = self.config.input_mode;
        let dims_ok = self
            .normalizers
            .custom
            .as_ref()
            .is_none_or(|n| n.dim() == CUSTOM_LEN && mode.uses_custom())
            && self
                .normalizers
                .sequence
                .as_ref()
                .is_none_or(|n| n.dim() == POINT_LEN && mode.uses_sequence());
        if !dims_ok {
            return bad("normalizer does not match input mode");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shapes() {
        let cfg = NetworkConfig::preset("custom-25").unwrap();
        assert_eq!(cfg.layer_sizes(), vec![25, 40, 40, 40, 40, 40, 20]);
        let m = init_model(&cfg).unwrap();
        assert_eq!(m.parameters.hidden.len(), 5);
        assert!(m.parameters.recurrent.is_none());
        let shapes: Vec<(usize, usize)> = m
            .parameters
            .hidden
            .iter()
            .chain(std::iter::once(&m.parameters.output))
            .map(|d| (d.inputs, d.outputs))
            .collect();
        assert_eq!(shapes, vec![(25, 40), (40, 40), (40, 40), (40, 40), (40, 40), (40, 20)]);

        let seq = NetworkConfig::preset("sequence-7").unwrap();
        assert_eq!(seq.layer_sizes()[0], DEFAULT_RECURRENT_SIZE);
        let comb = NetworkConfig::preset("combined").unwrap();
        assert_eq!(comb.layer_sizes()[0], DEFAULT_RECURRENT_SIZE + 25);
        assert!(NetworkConfig::preset("nope").is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = NetworkConfig::preset("combined").unwrap();
        let a = init_model(&cfg).unwrap();
        let b = init_model(&cfg).unwrap();
        assert_eq!(a, b);
        let r = a.parameters.recurrent.as_ref().unwrap();
        assert!(r.bias.iter().all(|&x| x == 0.0));
        for d in a.parameters.hidden.iter().chain([&a.parameters.output]) {
            assert!(d.bias.iter().all(|&x| x == 0.0));
            let glorot = (6.0 / (d.inputs + d.outputs) as f64).sqrt();
            assert!(d.weights.iter().all(|w| w.abs() <= params::SIGMOID_GAIN * glorot));
            // the gain is in use, not just permitted
            assert!(d.weights.iter().any(|w| w.abs() > glorot));
        }
        let other = init_model(&NetworkConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.parameters, other.parameters);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = NetworkConfig::preset("custom-25").unwrap();
        cfg.hidden_layers = 0;
        assert!(matches!(init_model(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = NetworkConfig::preset("sequence-7").unwrap();
        cfg.recurrent_size = 0;
        assert!(init_model(&cfg).is_err());
        let mut cfg = NetworkConfig::preset("custom-25").unwrap();
        cfg.learning_rate = 0.0;
        assert!(init_model(&cfg).is_err());
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax_star(&[0.1, 0.1, 0.1, 0.1, 0.6]), 5);
        assert_eq!(argmax_star(&[0.2; 5]), 1);
        assert_eq!(argmax_star(&[0.1, 0.4, 0.4, 0.05, 0.05]), 2);
    }

    #[test]
    fn corrupt_model_is_rejected() {
        let m = init_model(&NetworkConfig::preset("custom-25").unwrap()).unwrap();
        let text = String::from_utf8(m.to_json()).unwrap();
        assert!(matches!(
            NetworkModel::from_json(b"{\"format_version\": 1}"),
            Err(Error::MalformedModel(_))
        ));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            NetworkModel::from_json(truncated.as_bytes()),
            Err(Error::MalformedModel(_))
        ));
        let mut wrong = m.clone();
        wrong.parameters.output.bias.pop();
        assert!(matches!(
            NetworkModel::from_json(&wrong.to_json()),
            Err(Error::MalformedModel(_))
        ));
        assert_eq!(NetworkModel::from_json(&m.to_json()).unwrap(), m);
    }
}
