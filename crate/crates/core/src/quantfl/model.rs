use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o];
                match self.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseModel {
    pub layers: Vec<DenseLayer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl DenseModel {
    /// ReLU MLP with a linear output layer; `sizes = [inputs, hidden.., classes]`.
    pub fn mlp<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!("bad layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                DenseLayer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; outputs],
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// `(offset, len)` of each layer in the flat parameter vector
    /// (weights then bias, layer by layer).
    pub fn layer_spans(&self) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let span = (offset, l.parameter_count());
                offset += span.1;
                span
            })
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::LengthMismatch {
                expected: self.parameter_count(),
                got: values.len(),
            });
        }
        let mut rest = values;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.layers
            .iter()
            .fold(x.to_vec(), |acc, l| l.forward(&acc))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean softmax cross-entropy over `indices` of `data`.
    pub fn loss(&self, data: &Dataset, indices: &[usize]) -> f64 {
        let total: f64 = indices
            .iter()
            .map(|&i| {
                let logits = self.logits(data.sample(i));
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
                lse - logits[data.labels[i]]
            })
            .sum();
        total / indices.len() as f64
    }

    /// Gradient of [`loss`](Self::loss) in flat-parameter layout.
    pub fn gradient(&self, data: &Dataset, indices: &[usize]) -> Vec<f64> {
        let spans = self.layer_spans();
        let mut grad = vec![0.0; self.parameter_count()];
        let scale = 1.0 / indices.len() as f64;
        for &i in indices {
            // Forward pass keeping every layer's output.
            let mut acts = vec![data.sample(i).to_vec()];
            for layer in &self.layers {
                let next = layer.forward(acts.last().unwrap());
                acts.push(next);
            }
            let logits = acts.last().unwrap();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
            delta[data.labels[i]] -= 1.0;

            for (li, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[li];
                let output = &acts[li + 1];
                if layer.activation == Activation::Relu {
                    for (dz, out) in delta.iter_mut().zip(output) {
                        if *out <= 0.0 {
                            *dz = 0.0;
                        }
                    }
                }
                let (offset, _) = spans[li];
                let bias_offset = offset + layer.weights.len();
                for o in 0..layer.outputs {
                    let dz = delta[o] * scale;
                    for (k, v) in input.iter().enumerate() {
                        grad[offset + o * layer.inputs + k] += dz * v;
                    }
                    grad[bias_offset + o] += dz;
                }
                if li > 0 {
                    delta = (0..layer.inputs)
                        .map(|k| {
                            (0..layer.outputs)
                                .map(|o| layer.weights[o * layer.inputs + k] * delta[o])
                                .sum()
                        })
                        .collect();
                }
            }
        }
        grad
    }

    pub fn sgd_step(&mut self, data: &Dataset, indices: &[usize], lr: f64) {
        let grad = self.gradient(data, indices);
        let mut flat = self.flat();
        for (w, g) in flat.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
        self.set_flat(&flat).expect("gradient has parameter length");
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

/// Mini-batch SGD with cross-entropy loss over a shuffled shard.
pub fn local_train<R: Rng + ?Sized>(
    model: &DenseModel,
    shard: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<DenseModel> {
    if shard.is_empty() {
        return Err(Error::EmptyDataset("training shard"));
    }
    let mut model = model.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            model.sgd_step(shard, chunk, config.lr);
        }
    }
    Ok(model)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn evaluate(model: &DenseModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let correct = (0..data.len())
        .filter(|&i| model.predict(data.sample(i)) == data.labels[i])
        .count();
    Ok(correct as f64 / data.len() as f64)
}
