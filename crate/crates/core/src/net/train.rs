use crate::error::{Error, Result};
use crate::features::POINT_LEN;
use crate::ratings::{Category, Stars};

use super::params::{dot, sigmoid, Parameters};
use super::{NetInput, NetworkModel, Pooling, Prediction, CLASSES, HEADS, OUTPUTS};

/// One ride with every star tuple it should be trained toward.
///
/// Several targets on one input are equivalent to repeating the input once per
/// target, without paying for the repeated forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: NetInput,
    pub targets: Vec<Stars>,
}

impl Example {
    pub fn new(input: NetInput, target: Stars) -> Self {
        Example {
            input,
            targets: vec![target],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean training loss evaluated at the start of each iteration, so
    /// `loss_history[0]` is the loss of the untrained parameters.
    pub loss_history: Vec<f64>,
    /// Nausea mean absolute star error on the validation set after each update.
    pub validation_mae: Vec<f64>,
}

/// Normalized inputs, computed once per example.
pub(crate) struct Prepared {
    custom: Option<Vec<f64>>,
    /// `steps × 7`, row-major.
    sequence: Option<Vec<f64>>,
    steps: usize,
}

pub(crate) struct Cache {
    /// `steps × recurrent_size`, the hidden state after each step.
    states: Vec<f64>,
    /// Max pooling: the step that won each state unit.
    pool_winner: Vec<usize>,
    /// Input to the first hidden layer followed by every hidden activation.
    activations: Vec<Vec<f64>>,
    probabilities: [[f64; CLASSES]; HEADS],
}

impl Cache {
    /// Summed cross-entropy of the heads against every target.
    fn loss(&self, targets: &[Stars]) -> f64 {
        let mut loss = 0.0;
        for t in targets {
            for (h, &star) in t.0.iter().enumerate() {
                loss -= self.probabilities[h][usize::from(star - 1)].ln();
            }
        }
        loss
    }

    pub(crate) fn prediction(&self) -> Prediction {
        Prediction {
            probabilities: self.probabilities,
        }
    }
}

impl NetworkModel {
    pub(crate) fn prepare(&self, input: &NetInput) -> Result<Prepared> {
        let mode = self.config.input_mode;
        let custom = if mode.uses_custom() {
            let fv = input.custom.as_ref().ok_or(Error::MissingInput("custom"))?;
            Some(match &self.normalizers.custom {
                Some(n) => n.apply(&fv.0),
                None => fv.0.to_vec(),
            })
        } else {
            None
        };
        let (sequence, steps) = if mode.uses_sequence() {
            let seq = input.sequence.as_ref().ok_or(Error::MissingInput("sequence"))?;
            if seq.is_empty() {
                return Err(Error::EmptySequence);
            }
            let mut flat = vec![0.0; seq.len() * POINT_LEN];
            for (row, out) in seq.rows.iter().zip(flat.chunks_exact_mut(POINT_LEN)) {
                match &self.normalizers.sequence {
                    Some(n) => n.apply_into(row, out),
                    None => out.copy_from_slice(row),
                }
            }
            (Some(flat), seq.len())
        } else {
            (None, 0)
        };
        Ok(Prepared {
            custom,
            sequence,
            steps,
        })
    }

    pub(crate) fn forward_prepared(&self, input: &Prepared) -> Cache {
        let params = &self.parameters;
        let mut states = Vec::new();
        let mut pool_winner = Vec::new();
        let mut first = Vec::with_capacity(self.config.mlp_input_size());

        if let (Some(rec), Some(seq)) = (&params.recurrent, &input.sequence) {
            let r = rec.size;
            states = vec![0.0; input.steps * r];
            let mut pooled = vec![0.0; r];
            if self.config.pooling == Pooling::Max {
                pooled.fill(f64::NEG_INFINITY);
                pool_winner = vec![0; r];
            }
            let zero = vec![0.0; r];
            for t in 0..input.steps {
                let x = &seq[t * POINT_LEN..(t + 1) * POINT_LEN];
                let (done, rest) = states.split_at_mut(t * r);
                let prev = if t == 0 { &zero[..] } else { &done[(t - 1) * r..] };
                let h = &mut rest[..r];
                for j in 0..r {
                    let z = rec.bias[j]
                        + dot(&rec.input_weights[j * POINT_LEN..(j + 1) * POINT_LEN], x)
                        + dot(&rec.state_weights[j * r..(j + 1) * r], prev);
                    h[j] = sigmoid(z);
                }
                match self.config.pooling {
                    Pooling::Mean => pooled.iter_mut().zip(h.iter()).for_each(|(p, v)| *p += v),
                    Pooling::Max => {
                        for j in 0..r {
                            if h[j] > pooled[j] {
                                pooled[j] = h[j];
                                pool_winner[j] = t;
                            }
                        }
                    }
                }
            }
            if self.config.pooling == Pooling::Mean {
                let inv = 1.0 / input.steps as f64;
                pooled.iter_mut().for_each(|p| *p *= inv);
            }
            first.extend(pooled);
        }
        if let Some(custom) = &input.custom {
            first.extend_from_slice(custom);
        }

        let mut activations = Vec::with_capacity(params.hidden.len() + 1);
        activations.push(first);
        for layer in &params.hidden {
            let mut out = vec![0.0; layer.outputs];
            layer.affine(activations.last().unwrap(), &mut out);
            out.iter_mut().for_each(|z| *z = sigmoid(*z));
            activations.push(out);
        }
        let mut logits = [0.0; OUTPUTS];
        params.output.affine(activations.last().unwrap(), &mut logits);

        let mut probabilities = [[0.0; CLASSES]; HEADS];
        for (probs, z) in probabilities.iter_mut().zip(logits.chunks_exact(CLASSES)) {
            let peak = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (p, &zi) in probs.iter_mut().zip(z) {
                *p = (zi - peak).exp();
                total += *p;
            }
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Cache {
            states,
            pool_winner,
            activations,
            probabilities,
        }
    }

    /// Accumulates the gradient of the summed cross-entropy over `targets`
    /// into `grad` and returns that summed loss.
    pub(crate) fn backward(&self, input: &Prepared, cache: &Cache, targets: &[Stars], grad: &mut Parameters) -> f64 {
        let params = &self.parameters;
        let m = targets.len() as f64;

        let loss = cache.loss(targets);
        let mut delta = vec![0.0; OUTPUTS];
        for h in 0..HEADS {
            for k in 0..CLASSES {
                delta[h * CLASSES + k] = m * cache.probabilities[h][k];
            }
        }
        for t in targets {
            for (h, &star) in t.0.iter().enumerate() {
                delta[h * CLASSES + usize::from(star - 1)] -= 1.0;
            }
        }

        // output layer, then the sigmoid stack
        let layers: Vec<_> = params.hidden.iter().chain(std::iter::once(&params.output)).collect();
        let mut grads: Vec<_> = grad
            .hidden
            .iter_mut()
            .chain(std::iter::once(&mut grad.output))
            .collect();
        for l in (0..layers.len()).rev() {
            let layer = layers[l];
            let below = &cache.activations[l];
            let g = &mut grads[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(below).for_each(|(w, a)| *w += d * a);
            }
            let mut d_below = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                d_below.iter_mut().zip(row).for_each(|(acc, w)| *acc += d * w);
            }
            if l > 0 {
                d_below.iter_mut().zip(below).for_each(|(d, a)| *d *= a * (1.0 - a));
            }
            delta = d_below;
        }

        // `delta` now holds dL/d(first layer input); the pooled state leads it
        if let (Some(rec), Some(seq), Some(grec)) = (&params.recurrent, &input.sequence, grad.recurrent.as_mut()) {
            let r = rec.size;
            let steps = input.steps;
            let d_pooled = &delta[..r];
            let mut carry = vec![0.0; r];
            let mut dz = vec![0.0; r];
            let inv = 1.0 / steps as f64;
            for t in (0..steps).rev() {
                let h = &cache.states[t * r..(t + 1) * r];
                for j in 0..r {
                    let from_pool = match self.config.pooling {
                        Pooling::Mean => d_pooled[j] * inv,
                        Pooling::Max => {
                            if cache.pool_winner[j] == t {
                                d_pooled[j]
                            } else {
                                0.0
                            }
                        }
                    };
                    dz[j] = (from_pool + carry[j]) * h[j] * (1.0 - h[j]);
                }
                let x = &seq[t * POINT_LEN..(t + 1) * POINT_LEN];
                for j in 0..r {
                    let d = dz[j];
                    grec.bias[j] += d;
                    grec.input_weights[j * POINT_LEN..(j + 1) * POINT_LEN]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(w, xi)| *w += d * xi);
                }
                carry.fill(0.0);
                if t > 0 {
                    let prev = &cache.states[(t - 1) * r..t * r];
                    for j in 0..r {
                        let d = dz[j];
                        let row = j * r..(j + 1) * r;
                        grec.state_weights[row.clone()]
                            .iter_mut()
                            .zip(prev)
                            .for_each(|(w, p)| *w += d * p);
                        carry
                            .iter_mut()
                            .zip(&rec.state_weights[row])
                            .for_each(|(c, w)| *c += d * w);
                    }
                }
            }
        }
        loss
    }

    /// Mean per-target loss over `examples`.
    pub fn loss(&self, examples: &[Example]) -> Result<f64> {
        Ok(gradient(self, examples)?.0)
    }
}

fn check_targets(examples: &[Example]) -> Result<usize> {
    let mut total = 0;
    for (i, ex) in examples.iter().enumerate() {
        if ex.targets.is_empty() || ex.targets.iter().any(|t| !t.is_valid()) {
            return Err(Error::invariant("targets in 1..=5", Some(i)));
        }
        total += ex.targets.len();
    }
    if total == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(total)
}

/// Mean loss over `total` targets, keeping the forward caches for [`backprop`].
fn evaluate(model: &NetworkModel, prepared: &[(Prepared, &[Stars])], total: usize) -> (f64, Vec<Cache>) {
    let mut loss = 0.0;
    let caches = prepared
        .iter()
        .map(|(input, targets)| {
            let cache = model.forward_prepared(input);
            loss += cache.loss(targets);
            cache
        })
        .collect();
    (loss / total as f64, caches)
}

fn backprop(
    model: &NetworkModel,
    prepared: &[(Prepared, &[Stars])],
    caches: &[Cache],
    total: usize,
    grad: &mut Parameters,
) {
    grad.scale(0.0);
    for ((input, targets), cache) in prepared.iter().zip(caches) {
        model.backward(input, cache, targets, grad);
    }
    grad.scale(1.0 / total as f64);
}

fn accumulate(model: &NetworkModel, prepared: &[(Prepared, &[Stars])], total: usize, grad: &mut Parameters) -> f64 {
    let (loss, caches) = evaluate(model, prepared, total);
    backprop(model, prepared, &caches, total, grad);
    loss
}

/// Mean loss and its exact gradient over `examples` at the current parameters.
pub fn gradient(model: &NetworkModel, examples: &[Example]) -> Result<(f64, Parameters)> {
    let total = check_targets(examples)?;
    let prepared = examples
        .iter()
        .map(|e| Ok((model.prepare(&e.input)?, &e.targets[..])))
        .collect::<Result<Vec<_>>>()?;
    let mut grad = model.parameters.zeros_like();
    let loss = accumulate(model, &prepared, total, &mut grad);
    Ok((loss, grad))
}

/// Nausea mean absolute star error of the current parameters.
fn nausea_mae(model: &NetworkModel, prepared: &[(Prepared, &[Stars])]) -> f64 {
    let nausea = Category::Nausea.index();
    let mut err = 0.0;
    let mut count = 0usize;
    for (input, targets) in prepared {
        let predicted = model.forward_prepared(input).prediction().stars().0[nausea];
        for t in *targets {
            err += f64::from(predicted.abs_diff(t.0[nausea]));
            count += 1;
        }
    }
    err / count.max(1) as f64
}

/// Halvings tried before an iteration gives up on finding a descent step.
pub const MAX_STEP_HALVINGS: usize = 30;

impl NetworkModel {
    /// One gradient step starting at `*step`, halved until the full-batch
    /// loss does not rise. On success `loss` and `grad` describe the new
    /// parameters and `*step` is the accepted size; when no step qualifies
    /// the parameters are left untouched.
    fn descend(
        &mut self,
        prepared: &[(Prepared, &[Stars])],
        total: usize,
        loss: &mut f64,
        grad: &mut Parameters,
        step: &mut f64,
    ) -> bool {
        let start = self.parameters.clone();
        for _ in 0..=MAX_STEP_HALVINGS {
            self.parameters.add_scaled(-*step, grad);
            if self.parameters.is_finite() {
                let (trial, caches) = evaluate(self, prepared, total);
                if trial <= *loss {
                    *loss = trial;
                    backprop(self, prepared, &caches, total, grad);
                    return true;
                }
            }
            self.parameters.clone_from(&start);
            *step *= 0.5;
        }
        false
    }

    /// Full-batch gradient descent for `config.iterations` iterations.
    ///
    /// Normalizers are fitted on `examples` first unless the model already
    /// carries them for every active input path. Each iteration tries twice
    /// the previous accepted step, capped at `learning_rate`, and halves it
    /// until the loss does not rise, so the recorded loss never increases.
    pub fn train(&mut self, examples: &[Example], validation: Option<&[Example]>) -> Result<TrainReport> {
        if examples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let total = check_targets(examples)?;
        let mode = self.config.input_mode;
        let fitted = (!mode.uses_custom() || self.normalizers.custom.is_some())
            && (!mode.uses_sequence() || self.normalizers.sequence.is_some());
        if !fitted {
            self.fit_normalizers(examples.iter().map(|e| &e.input))?;
        }

        let prepared = examples
            .iter()
            .map(|e| Ok((self.prepare(&e.input)?, &e.targets[..])))
            .collect::<Result<Vec<_>>>()?;
        let held_out = match validation {
            Some(v) => {
                check_targets(v)?;
                v.iter()
                    .map(|e| Ok((self.prepare(&e.input)?, &e.targets[..])))
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };

        let mut grad = self.parameters.zeros_like();
        let mut loss = accumulate(self, &prepared, total, &mut grad);
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::DivergenceDetected { iteration: 0 });
        }
        let mut report = TrainReport::default();
        let mut stalled = false;
        let lr = self.config.learning_rate;
        let mut step = lr;
        for _ in 0..self.config.iterations {
            report.loss_history.push(loss);
            self.loss_history.push(loss);
            // once no step helps, every later iteration would repeat the same
            // failed search from the same point
            if !stalled {
                // warm start: a little above the last step that worked
                step = (2.0 * step).min(lr);
                stalled = !self.descend(&prepared, total, &mut loss, &mut grad, &mut step);
                if !grad.is_finite() {
                    return Err(Error::DivergenceDetected {
                        iteration: report.loss_history.len(),
                    });
                }
            }
            if !held_out.is_empty() {
                let err = match (stalled, report.validation_mae.last()) {
                    (true, Some(&last)) => last,
                    _ => nausea_mae(self, &held_out),
                };
                report.validation_mae.push(err);
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, PointSequence, CUSTOM_LEN};
    use crate::net::{init_model, InputMode, NetworkConfig};

    fn input(seed: u64, steps: usize) -> NetInput {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut custom = [0.0; CUSTOM_LEN];
        custom.iter_mut().for_each(|c| *c = next());
        let rows = (0..steps)
            .map(|_| {
                let mut r = [0.0; POINT_LEN];
                r.iter_mut().for_each(|x| *x = next() * 2.0 - 1.0);
                r
            })
            .collect();
        NetInput {
            custom: Some(FeatureVector(custom)),
            sequence: Some(PointSequence { rows }),
        }
    }

    #[test]
    fn missing_inputs_are_reported() {
        let m = init_model(&NetworkConfig::preset("combined").unwrap()).unwrap();
        let mut i = input(1, 4);
        i.custom = None;
        assert!(matches!(m.forward(&i), Err(Error::MissingInput("custom"))));
        let mut i = input(1, 4);
        i.sequence = Some(PointSequence::default());
        assert!(matches!(m.forward(&i), Err(Error::EmptySequence)));
    }

    #[test]
    fn heads_are_distributions() {
        for preset in ["custom-25", "sequence-7", "combined"] {
            let m = init_model(&NetworkConfig::preset(preset).unwrap()).unwrap();
            let p = m.forward(&input(3, 9)).unwrap();
            for head in p.probabilities {
                assert!(head.iter().all(|&x| x >= 0.0));
                assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_training_set() {
        let mut m = init_model(&NetworkConfig::preset("custom-25").unwrap()).unwrap();
        assert!(matches!(m.train(&[], None), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn non_finite_start_is_divergence() {
        let mut cfg = NetworkConfig::new(InputMode::CustomOnly, 1, 4);
        cfg.iterations = 5;
        let mut m = init_model(&cfg).unwrap();
        m.parameters.output.weights[0] = f64::NAN;
        let ex = [
            Example::new(input(1, 2), Stars([1, 1, 1, 1])),
            Example::new(input(2, 2), Stars([5, 5, 5, 5])),
        ];
        assert!(matches!(
            m.train(&ex, None),
            Err(Error::DivergenceDetected { iteration: 0 })
        ));
    }

    #[test]
    fn huge_learning_rate_still_descends() {
        let mut cfg = NetworkConfig::new(InputMode::CustomOnly, 1, 4);
        cfg.learning_rate = 1e6;
        cfg.iterations = 20;
        let mut m = init_model(&cfg).unwrap();
        let ex = [
            Example::new(input(1, 2), Stars([1, 1, 1, 1])),
            Example::new(input(2, 2), Stars([5, 5, 5, 5])),
        ];
        let report = m.train(&ex, Some(&ex)).unwrap();
        assert_eq!(report.loss_history.len(), 20);
        assert_eq!(report.validation_mae.len(), 20);
        assert!(report.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.loss_history[19] < report.loss_history[0]);
    }

    #[test]
    fn multiple_targets_equal_repeated_examples() {
        let cfg = NetworkConfig::new(InputMode::Combined, 2, 3);
        let m = init_model(&cfg).unwrap();
        let a = input(5, 3);
        let grouped = [Example {
            input: a.clone(),
            targets: vec![Stars([1, 2, 3, 4]), Stars([5, 4, 3, 2])],
        }];
        let repeated = [
            Example::new(a.clone(), Stars([1, 2, 3, 4])),
            Example::new(a, Stars([5, 4, 3, 2])),
        ];
        let (l1, g1) = gradient(&m, &grouped).unwrap();
        let (l2, g2) = gradient(&m, &repeated).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (x, y) in g1.tensors().iter().zip(g2.tensors()) {
            for (a, b) in x.iter().zip(y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
