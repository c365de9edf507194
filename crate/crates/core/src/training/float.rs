use rand::Rng;

use super::{softmax, Activation, NetworkSpec};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Reference multilayer perceptron in plain `f64`.
///
/// `weights[l]` is `inputs x outputs` row-major, `inputs` including the bias
/// row when the network has a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatNet {
    pub spec: NetworkSpec,
    pub weights: Vec<Vec<f64>>,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Input to each layer (bias appended).
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// Activations; the last entry holds the softmax probabilities.
    pub outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn probabilities(&self) -> &[f64] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }

    pub fn prediction(&self) -> usize {
        argmax(self.probabilities())
    }

    pub fn loss(&self, label: usize) -> f64 {
        -self.probabilities()[label].max(1e-300).ln()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    best
}

impl FloatNet {
    /// Glorot-uniform weights, zero bias, clipped to `spec.w_max`.
    pub fn init(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let stream = SeedStream::new(spec.seed).named("init");
        let weights = (0..spec.layers())
            .map(|l| {
                let (fan_in, fan_out) = (spec.dims[l], spec.dims[l + 1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt().min(spec.w_max);
                let mut rng = stream.at(l as u64).rng();
                let rows = spec.layer_inputs(l);
                (0..rows * fan_out)
                    .map(|k| if k / fan_out >= fan_in { 0.0 } else { rng.random_range(-a..a) })
                    .collect()
            })
            .collect();
        Ok(FloatNet { spec: spec.clone(), weights })
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        Error::check_len(self.spec.dims[0], x.len())?;
        let mut cache = ForwardCache { inputs: vec![], pre: vec![], outputs: vec![] };
        let mut a = x.to_vec();
        for l in 0..self.spec.layers() {
            let input = self.spec.with_bias(&a);
            let z = affine(&self.weights[l], &input, self.spec.dims[l + 1]);
            a = self.activate(l, &z);
            cache.inputs.push(input);
            cache.pre.push(z);
            cache.outputs.push(a.clone());
        }
        Ok(cache)
    }

    fn activate(&self, l: usize, z: &[f64]) -> Vec<f64> {
        if l + 1 == self.spec.layers() {
            softmax(z)
        } else {
            z.iter().map(|v| self.spec.hidden_activation.apply(*v)).collect()
        }
    }

    /// Loss when layer `l`'s pre-activations are replaced by `z`.
    pub fn loss_from(&self, l: usize, z: &[f64], label: usize) -> f64 {
        let mut a = self.activate(l, z);
        for k in l + 1..self.spec.layers() {
            let input = self.spec.with_bias(&a);
            let zk = affine(&self.weights[k], &input, self.spec.dims[k + 1]);
            a = self.activate(k, &zk);
        }
        -a[label].max(1e-300).ln()
    }

    /// `dL/dz` for every layer, cross-entropy on the softmax output.
    pub fn backward(&self, cache: &ForwardCache, label: usize) -> Vec<Vec<f64>> {
        let layers = self.spec.layers();
        let mut deltas = vec![Vec::new(); layers];
        let mut d = output_delta(cache.probabilities(), label);
        for l in (0..layers).rev() {
            if l > 0 {
                let back = affine_t(&self.weights[l], &d, self.spec.dims[l]);
                let prev = hidden_delta(&back, &cache.pre[l - 1], self.spec.hidden_activation);
                deltas[l] = std::mem::replace(&mut d, prev);
            } else {
                deltas[l] = std::mem::take(&mut d);
            }
        }
        deltas
    }

    /// `w_ij -= eta x_i delta_j`.
    pub fn sgd_step(&mut self, cache: &ForwardCache, deltas: &[Vec<f64>]) {
        let eta = self.spec.eta;
        for (l, w) in self.weights.iter_mut().enumerate() {
            let n = deltas[l].len();
            for (i, x) in cache.inputs[l].iter().enumerate() {
                for (j, d) in deltas[l].iter().enumerate() {
                    w[i * n + j] -= eta * x * d;
                }
            }
        }
    }

    pub fn train_step(&mut self, x: &[f64], label: usize) -> Result<(f64, bool)> {
        let cache = self.forward(x)?;
        let deltas = self.backward(&cache, label);
        self.sgd_step(&cache, &deltas);
        Ok((cache.loss(label), cache.prediction() == label))
    }

    pub fn accuracy(&self, data: &super::Dataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for (x, y) in data.inputs.iter().zip(&data.labels) {
            if self.forward(x)?.prediction() == *y {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

pub fn output_delta(probabilities: &[f64], label: usize) -> Vec<f64> {
    let mut d = probabilities.to_vec();
    d[label] -= 1.0;
    d
}

/// Drop the bias row and multiply by the activation slope.
pub fn hidden_delta(back: &[f64], pre: &[f64], act: Activation) -> Vec<f64> {
    pre.iter().zip(back).map(|(z, b)| b * act.derivative(*z)).collect()
}

/// `z_j = sum_i w_ij x_i`.
pub fn affine(w: &[f64], x: &[f64], outputs: usize) -> Vec<f64> {
    let mut z = vec![0.0; outputs];
    for (row, xi) in w.chunks_exact(outputs).zip(x) {
        if *xi == 0.0 {
            continue;
        }
        for (zj, wij) in z.iter_mut().zip(row) {
            *zj += wij * xi;
        }
    }
    z
}

/// `b_i = sum_j w_ij d_j` for the first `rows` rows.
pub fn affine_t(w: &[f64], d: &[f64], rows: usize) -> Vec<f64> {
    w.chunks_exact(d.len())
        .take(rows)
        .map(|row| row.iter().zip(d).map(|(a, b)| a * b).sum())
        .collect()
}
