//! Training and inference of small fully connected networks whose weights
//! live on simulated crossbar tiles.
//!
//! Forward passes are row-driven MVMs, the backward pass reads the same tiles
//! column-driven (transposed), and weights change only through coincident
//! pulse trains. A float network with the same initialization and sample
//! order serves as the reference.

mod analog;
mod dataset;
mod float;

pub use analog::{
    AnalogLayer, AnalogNet, AnalogSettings, Checkpoint, EvalMode, EvalReport, ReferenceMode, StepMetrics,
};
pub use dataset::Dataset;
pub use float::{affine, affine_t, argmax, hidden_delta, output_delta, FloatNet, ForwardCache};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn default_true() -> bool {
    true
}

fn default_w_max() -> f64 {
    1.0
}

/// Layer sizes and SGD settings. The output layer is always softmax; training
/// is per sample (batch size 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub dims: Vec<usize>,
    pub hidden_activation: Activation,
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Append a constant-1 input row to every layer.
    #[serde(default = "default_true")]
    pub bias: bool,
    /// Weight magnitude mapped onto the available conductance swing.
    #[serde(default = "default_w_max")]
    pub w_max: f64,
}

impl NetworkSpec {
    pub fn new(dims: Vec<usize>, eta: f64, epochs: usize, seed: u64) -> Self {
        NetworkSpec { dims, hidden_activation: Activation::Relu, eta, epochs, seed, bias: true, w_max: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::config("network needs at least two non-empty layers"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config("eta must be positive"));
        }
        if !(self.w_max > 0.0) {
            return Err(Error::config("w_max must be positive"));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Physical rows of layer `l`.
    pub fn layer_inputs(&self, l: usize) -> usize {
        self.dims[l] + usize::from(self.bias)
    }

    pub fn with_bias(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if self.bias {
            v.push(1.0);
        }
        v
    }
}

/// Sample visiting order for one epoch.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut SeedStream::new(seed).named("order").at(epoch as u64).rng());
    idx
}

/// Per-epoch totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub pulses: u64,
    pub update_energy: f64,
    pub reprograms: u64,
    pub read_energy: f64,
    pub mvm_count: u64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,train_accuracy,test_accuracy,pulses,update_energy_j,reprograms,read_energy_j,mvm_count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.train_accuracy,
            self.test_accuracy,
            self.pulses,
            self.update_energy,
            self.reprograms,
            self.read_energy,
            self.mvm_count
        )
    }
}

/// One pass over `data` in the seeded order for `epoch`.
pub fn train_epoch_analog(net: &mut AnalogNet, data: &Dataset, epoch: usize) -> Result<EpochMetrics> {
    let mut m = EpochMetrics { epoch, ..Default::default() };
    let stream = SeedStream::new(net.spec.seed).named("step").at(epoch as u64);
    let mut correct = 0usize;
    for (k, &i) in epoch_order(data.len(), net.spec.seed, epoch).iter().enumerate() {
        let s = net.train_step(&data.inputs[i], data.labels[i], stream.at(k as u64))?;
        m.train_loss += s.loss;
        correct += usize::from(s.correct);
        m.pulses += s.update.pulses;
        m.update_energy += s.update.energy;
        m.reprograms += s.reprograms;
        m.read_energy += s.reads.total_energy();
        m.mvm_count += s.reads.mvm_count;
    }
    if !data.is_empty() {
        m.train_loss /= data.len() as f64;
        m.train_accuracy = correct as f64 / data.len() as f64;
    }
    Ok(m)
}

pub fn train_epoch_float(net: &mut FloatNet, data: &Dataset, epoch: usize) -> Result<EpochMetrics> {
    let mut m = EpochMetrics { epoch, ..Default::default() };
    let mut correct = 0usize;
    for &i in &epoch_order(data.len(), net.spec.seed, epoch) {
        let (loss, ok) = net.train_step(&data.inputs[i], data.labels[i])?;
        m.train_loss += loss;
        correct += usize::from(ok);
    }
    if !data.is_empty() {
        m.train_loss /= data.len() as f64;
        m.train_accuracy = correct as f64 / data.len() as f64;
    }
    Ok(m)
}
