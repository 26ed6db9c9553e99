use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::POINT_LEN;

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub(crate) fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Dense {
            inputs,
            outputs,
            weights: glorot(inputs, outputs, inputs * outputs, rng),
            bias: vec![0.0; outputs],
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Dense {
            inputs: self.inputs,
            outputs: self.outputs,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// `out = W x + b`
    #[inline]
    pub(crate) fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + dot(row, x);
        }
    }

    fn shape_ok(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs && self.bias.len() == self.outputs
    }
}

/// Elman cell `h_t = σ(W_in x_t + W_rec h_{t-1} + b)` over 7-wide point rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recurrent {
    pub size: usize,
    /// `size × 7`, row-major.
    pub input_weights: Vec<f64>,
    /// `size × size`, row-major.
    pub state_weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Recurrent {
    pub(crate) fn init(size: usize, rng: &mut impl Rng) -> Self {
        Recurrent {
            size,
            input_weights: glorot(POINT_LEN, size, size * POINT_LEN, rng),
            state_weights: glorot(size, size, size * size, rng),
            bias: vec![0.0; size],
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Recurrent {
            size: self.size,
            input_weights: vec![0.0; self.input_weights.len()],
            state_weights: vec![0.0; self.state_weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn shape_ok(&self) -> bool {
        self.input_weights.len() == self.size * POINT_LEN
            && self.state_weights.len() == self.size * self.size
            && self.bias.len() == self.size
    }
}

/// All trainable tensors of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub recurrent: Option<Recurrent>,
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

impl Parameters {
    pub fn zeros_like(&self) -> Self {
        Parameters {
            recurrent: self.recurrent.as_ref().map(Recurrent::zeros_like),
            hidden: self.hidden.iter().map(Dense::zeros_like).collect(),
            output: self.output.zeros_like(),
        }
    }

    /// Every tensor in a fixed order: recurrent (input, state, bias), then each
    /// dense layer (weights, bias).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(r) = &self.recurrent {
            out.extend([&r.input_weights[..], &r.state_weights[..], &r.bias[..]]);
        }
        for d in self.hidden.iter().chain(std::iter::once(&self.output)) {
            out.extend([&d.weights[..], &d.bias[..]]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(r) = &mut self.recurrent {
            out.push(&mut r.input_weights[..]);
            out.push(&mut r.state_weights[..]);
            out.push(&mut r.bias[..]);
        }
        for d in self.hidden.iter_mut().chain(std::iter::once(&mut self.output)) {
            out.push(&mut d.weights[..]);
            out.push(&mut d.bias[..]);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Parameters) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn shapes_consistent(&self) -> bool {
        self.recurrent.as_ref().is_none_or(Recurrent::shape_ok)
            && self.hidden.iter().all(Dense::shape_ok)
            && self.output.shape_ok()
            && self.hidden.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self.hidden.last().is_none_or(|d| d.outputs == self.output.inputs)
    }
}

/// Glorot uniform scaled for logistic units, which pass at most a quarter of
/// their input slope; unscaled, track-to-track differences fade by about 5x
/// per hidden layer.
pub(crate) const SIGMOID_GAIN: f64 = 4.0;

fn glorot(fan_in: usize, fan_out: usize, len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let limit = SIGMOID_GAIN * (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

#[inline]
/// Four independent partial sums so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ha, ta) = a.split_at(a.len() & !3);
    let (hb, tb) = b.split_at(ha.len());
    for (x, y) in ha.chunks_exact(4).zip(hb.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ta.iter().zip(tb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
