use std::path::Path;

use serde::{Deserialize, Serialize};

use super::float::{hidden_delta, output_delta, ForwardCache};
use super::{softmax, Dataset, FloatNet, NetworkSpec};
use crate::bitslice::{self, MvmMode, QuantizedMatrix, SlicePlan, TileDims};
use crate::crossbar::{self, required_adc_bits, Accounting, CrossbarConfig, CrossbarState, ReadOptions};
use crate::device::{symmetry_point, DeviceParams, SymmetryPoint};
use crate::error::{Error, Result};
use crate::programming::{program_tile, ProgramMethod, ProgramReport};
use crate::rng::SeedStream;
use crate::update::{
    apply_update_pair, build_pulse_plan_with, zero_shift_reference, Encoding, PlanOptions, ReferencePair,
    UpdateOptions, UpdateReport, DEFAULT_TRAIN_LENGTH,
};

/// Conductance that represents weight 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Middle of the window.
    #[default]
    Midpoint,
    /// The device's symmetry point, where balanced updates come to rest.
    SymmetryPoint,
}

fn default_length() -> usize {
    DEFAULT_TRAIN_LENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogSettings {
    pub reference: ReferenceMode,
    #[serde(default = "default_length")]
    pub train_length: usize,
    pub encoding: Encoding,
    /// Up-pulses on `G+` or `G-` only (needed for one-sided devices).
    pub differential: bool,
    pub enforce_endurance: bool,
    /// When a pulse update is unsupported, reprogram the layer by
    /// write-verify instead of failing.
    pub fallback_reprogram: bool,
    pub read: ReadOptions,
    /// Wiring and periphery; rows and columns are set per layer.
    pub crossbar: CrossbarConfig,
    /// How initial weights are written.
    pub init: ProgramMethod,
}

impl Default for AnalogSettings {
    fn default() -> Self {
        AnalogSettings {
            reference: ReferenceMode::Midpoint,
            train_length: DEFAULT_TRAIN_LENGTH,
            encoding: Encoding::Stochastic,
            differential: false,
            enforce_endurance: false,
            fallback_reprogram: false,
            read: ReadOptions::IDEAL,
            crossbar: CrossbarConfig::default(),
            init: ProgramMethod::Exact,
        }
    }
}

/// One weight matrix on a pair of tiles: `w = ((G+ - R) - (G- - R)) / g_per_weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogLayer {
    pub plus: CrossbarState,
    pub minus: CrossbarState,
    pub reference: ReferencePair,
    pub g_reference: f64,
    pub g_per_weight: f64,
}

impl AnalogLayer {
    pub fn inputs(&self) -> usize {
        self.plus.rows()
    }

    pub fn outputs(&self) -> usize {
        self.plus.cols()
    }

    /// Logical weights, `inputs x outputs` row-major.
    pub fn weights(&self) -> Vec<f64> {
        zero_shift_reference(&self.plus, &self.minus, &self.reference, self.g_per_weight)
            .expect("pair tiles share geometry")
    }

    fn targets(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let plus = w.iter().map(|w| self.g_reference + w * self.g_per_weight).collect();
        (plus, vec![self.g_reference; w.len()])
    }

    fn program(&mut self, w: &[f64], method: &ProgramMethod, seed: SeedStream, id: usize) -> Result<ProgramReport> {
        let (tp, tm) = self.targets(w);
        let mut r = program_tile(&mut self.plus, &tp, method, seed.at(0), 2 * id)?;
        r.merge(program_tile(&mut self.minus, &tm, method, seed.at(1), 2 * id + 1)?);
        Ok(r)
    }

    fn tile_read(
        tile: &CrossbarState,
        v: &[f64],
        transposed: bool,
        opts: &ReadOptions,
        seed: u64,
        acc: &mut Accounting,
        log: &mut Vec<f64>,
    ) -> Result<Vec<f64>> {
        let (currents, energy) = if transposed {
            (crossbar::mvm_nonideal_transposed(tile, v, opts, seed)?, tile.array_energy_transposed(v))
        } else {
            (crossbar::mvm_nonideal(tile, v, opts, seed)?, tile.array_energy(v))
        };
        let read = crossbar::read_accounting(tile, energy, currents.len());
        log.push(read.total_energy());
        *acc += read;
        Ok(currents)
    }

    /// `sum_i w_ij x_i` (or `sum_j w_ij x_j` transposed) from differential
    /// reads. Inputs are scaled so that `max |x|` drives at `v_read`; signed
    /// inputs take two phases.
    pub fn read(
        &self,
        x: &[f64],
        transposed: bool,
        opts: &ReadOptions,
        seed: SeedStream,
        acc: &mut Accounting,
        log: &mut Vec<f64>,
    ) -> Result<Vec<f64>> {
        let out_len = if transposed { self.inputs() } else { self.outputs() };
        let mut out = vec![0.0; out_len];
        let s = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if s == 0.0 {
            return Ok(out);
        }
        let v_read = self.plus.config.v_read;
        for (phase, sign) in [(0u64, 1.0), (1u64, -1.0)] {
            let v: Vec<f64> = x.iter().map(|xi| if xi * sign > 0.0 { xi.abs() / s * v_read } else { 0.0 }).collect();
            if v.iter().all(|v| *v == 0.0) {
                continue;
            }
            let ip = Self::tile_read(&self.plus, &v, transposed, opts, seed.at(2 * phase).seed(), acc, log)?;
            let im = Self::tile_read(&self.minus, &v, transposed, opts, seed.at(2 * phase + 1).seed(), acc, log)?;
            for ((o, p), m) in out.iter_mut().zip(&ip).zip(&im) {
                *o += sign * (p - m);
            }
        }
        let scale = s / (v_read * self.g_per_weight);
        out.iter_mut().for_each(|o| *o *= scale);
        Ok(out)
    }
}

/// Inference backend for [`AnalogNet::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvalMode {
    /// Continuous analog reads of the trained tiles.
    Analog(ReadOptions),
    /// Quantize the current weights and run them through ideal bit-sliced
    /// tiles with a lossless ADC.
    BitSliced {
        weight_bits: u32,
        input_bits: u32,
        bits_per_cell: u32,
        tile_rows: usize,
        tile_cols: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub accounting: Accounting,
    /// Energy of every MVM (analog) or bit-sliced MVM, in order.
    pub mvm_energies: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepMetrics {
    pub loss: f64,
    pub correct: bool,
    pub update: UpdateReport,
    pub reprograms: u64,
    pub reads: Accounting,
}

/// A network whose layers are crossbar pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogNet {
    pub spec: NetworkSpec,
    pub device: DeviceParams,
    pub settings: AnalogSettings,
    pub layers: Vec<AnalogLayer>,
}

/// Stored beside the tile snapshots of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epochs_done: usize,
    pub seed: u64,
    pub dims: Vec<usize>,
    pub device: String,
}

struct SlicedLayer {
    plan: SlicePlan,
    tiles: Vec<CrossbarState>,
    scale: f64,
}

impl AnalogNet {
    /// Program the float network's initial weights.
    pub fn new(spec: &NetworkSpec, device: &DeviceParams, settings: &AnalogSettings) -> Result<(Self, ProgramReport)> {
        let init = FloatNet::init(spec)?;
        Self::from_weights(spec, device, settings, &init.weights)
    }

    /// Write given weights (one row-major `inputs x outputs` matrix per layer).
    /// Weights beyond `±w_max` saturate at the window edges.
    pub fn from_weights(
        spec: &NetworkSpec,
        device: &DeviceParams,
        settings: &AnalogSettings,
        weights: &[Vec<f64>],
    ) -> Result<(Self, ProgramReport)> {
        let mut net = Self::blank(spec, device, settings)?;
        let report = net.program(weights)?;
        Ok((net, report))
    }

    fn blank(spec: &NetworkSpec, device: &DeviceParams, settings: &AnalogSettings) -> Result<Self> {
        spec.validate()?;
        device.validate()?;
        if settings.train_length == 0 {
            return Err(Error::config("train_length must be at least 1"));
        }
        let g_ref = match settings.reference {
            ReferenceMode::Midpoint => 0.5 * (device.g_min + device.g_max),
            ReferenceMode::SymmetryPoint => match symmetry_point(device) {
                SymmetryPoint::At(g) => g,
                SymmetryPoint::Everywhere => 0.5 * (device.g_min + device.g_max),
                SymmetryPoint::None => {
                    return Err(Error::Unsupported(format!("device '{}' has no symmetry point", device.name)))
                }
            },
        };
        let g_per_weight = (g_ref - device.g_min).min(device.g_max - g_ref) / spec.w_max;
        if !(g_per_weight > 0.0) {
            return Err(Error::config("reference conductance leaves no room for weights"));
        }
        let stream = SeedStream::new(spec.seed).named("device");
        let layers = (0..spec.layers())
            .map(|l| {
                let mut cfg = settings.crossbar.clone();
                cfg.rows = spec.layer_inputs(l);
                cfg.cols = spec.dims[l + 1];
                if !cfg.cols.is_multiple_of(cfg.adc_share) {
                    cfg.adc_share = 1;
                }
                let cells = cfg.rows * cfg.cols;
                Ok(AnalogLayer {
                    plus: CrossbarState::with_variation(cfg.clone(), device.clone(), stream.at(2 * l as u64).seed())?,
                    minus: CrossbarState::with_variation(cfg, device.clone(), stream.at(2 * l as u64 + 1).seed())?,
                    reference: ReferencePair::uniform(cells, g_ref, g_ref),
                    g_reference: g_ref,
                    g_per_weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnalogNet { spec: spec.clone(), device: device.clone(), settings: settings.clone(), layers })
    }

    pub fn program(&mut self, weights: &[Vec<f64>]) -> Result<ProgramReport> {
        Error::check_len(self.layers.len(), weights.len())?;
        let stream = SeedStream::new(self.spec.seed).named("program");
        let method = self.settings.init;
        let mut report = ProgramReport::default();
        for (l, (layer, w)) in self.layers.iter_mut().zip(weights).enumerate() {
            Error::check_len(layer.plus.cells.len(), w.len())?;
            report.merge(layer.program(w, &method, stream.at(l as u64), l)?);
        }
        Ok(report)
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(AnalogLayer::weights).collect()
    }

    /// Pulses each weight unit corresponds to.
    pub fn pulses_per_unit_weight(&self) -> f64 {
        self.layers[0].g_per_weight / self.device.nominal_step()
    }

    fn forward_analog(
        &self,
        x: &[f64],
        opts: &ReadOptions,
        seed: SeedStream,
        acc: &mut Accounting,
        log: &mut Vec<f64>,
    ) -> Result<ForwardCache> {
        Error::check_len(self.spec.dims[0], x.len())?;
        let mut cache = ForwardCache { inputs: vec![], pre: vec![], outputs: vec![] };
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = self.spec.with_bias(&a);
            let z = layer.read(&input, false, opts, seed.at(l as u64), acc, log)?;
            a = if l == last {
                softmax(&z)
            } else {
                z.iter().map(|v| self.spec.hidden_activation.apply(*v)).collect()
            };
            cache.inputs.push(input);
            cache.pre.push(z);
            cache.outputs.push(a.clone());
        }
        Ok(cache)
    }

    /// Forward pass with the training read settings.
    pub fn forward(&self, x: &[f64], seed: SeedStream) -> Result<(ForwardCache, Accounting)> {
        let mut acc = Accounting::default();
        let cache = self.forward_analog(x, &self.settings.read, seed, &mut acc, &mut Vec::new())?;
        Ok((cache, acc))
    }

    /// Error vectors per layer; hidden layers use transposed reads.
    pub fn backward(&self, cache: &ForwardCache, label: usize, seed: SeedStream, acc: &mut Accounting) -> Result<Vec<Vec<f64>>> {
        let n = self.layers.len();
        let mut deltas = vec![Vec::new(); n];
        deltas[n - 1] = output_delta(cache.probabilities(), label);
        for l in (1..n).rev() {
            let back = self.layers[l].read(&deltas[l], true, &self.settings.read, seed.at(l as u64), acc, &mut Vec::new())?;
            deltas[l - 1] = hidden_delta(&back[..self.spec.dims[l]], &cache.pre[l - 1], self.spec.hidden_activation);
        }
        Ok(deltas)
    }

    /// Forward, backward and one pulse update per layer.
    pub fn train_step(&mut self, x: &[f64], label: usize, seed: SeedStream) -> Result<StepMetrics> {
        let mut m = StepMetrics::default();
        let cache = self.forward_analog(x, &self.settings.read.clone(), seed.named("forward"), &mut m.reads, &mut Vec::new())?;
        let deltas = self.backward(&cache, label, seed.named("backward"), &mut m.reads)?;
        m.loss = cache.loss(label);
        m.correct = cache.prediction() == label;
        let plan_opts = PlanOptions {
            pulses_per_unit_weight: self.pulses_per_unit_weight(),
            encoding: self.settings.encoding,
        };
        let upd = UpdateOptions {
            enforce_endurance: self.settings.enforce_endurance,
            differential: self.settings.differential,
        };
        for l in 0..self.layers.len() {
            if deltas[l].iter().all(|d| *d == 0.0) {
                continue;
            }
            let plan = build_pulse_plan_with(
                &cache.inputs[l],
                &deltas[l],
                self.spec.eta,
                self.settings.train_length,
                seed.named("plan").at(l as u64).seed(),
                &plan_opts,
            )?;
            let layer = &mut self.layers[l];
            match apply_update_pair(&mut layer.plus, &mut layer.minus, &plan, &upd, seed.named("pulse").at(l as u64)) {
                Ok(r) => m.update.merge(&r),
                Err(Error::Unsupported(_)) if self.settings.fallback_reprogram => {
                    let mut w = layer.weights();
                    let n = deltas[l].len();
                    for (i, xi) in cache.inputs[l].iter().enumerate() {
                        for (j, dj) in deltas[l].iter().enumerate() {
                            w[i * n + j] -= self.spec.eta * xi * dj;
                        }
                    }
                    let r = layer.program(&w, &ProgramMethod::default(), seed.named("reprogram").at(l as u64), l)?;
                    m.update.pulses += r.pulses;
                    m.update.energy += r.energy;
                    m.update.latency += r.latency;
                    m.reprograms += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(m)
    }

    fn sliced_layers(&self, weight_bits: u32, input_bits: u32, b: u32, tile: TileDims) -> Result<Vec<SlicedLayer>> {
        let stream = SeedStream::new(self.spec.seed).named("sliced");
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let q = QuantizedMatrix::quantize(layer.inputs(), layer.outputs(), &layer.weights(), weight_bits)?;
                let plan = bitslice::plan_slices(q.rows, q.cols, weight_bits, input_bits, b, tile, &self.device)?;
                let mut cfg = self.settings.crossbar.clone();
                cfg.adc_bits = required_adc_bits(tile.rows, 1, b + 1)?;
                let mut tiles = plan.allocate_tiles(&cfg, &self.device, stream.at(l as u64))?;
                bitslice::program_weights(&plan, &q, &mut tiles, &ProgramMethod::Exact, stream.at(l as u64))?;
                Ok(SlicedLayer { plan, tiles, scale: q.scale })
            })
            .collect()
    }

    fn forward_sliced(&self, layers: &[SlicedLayer], x: &[f64], acc: &mut Accounting, log: &mut Vec<f64>) -> Result<ForwardCache> {
        let mut cache = ForwardCache { inputs: vec![], pre: vec![], outputs: vec![] };
        let mut a = x.to_vec();
        let last = layers.len() - 1;
        for (l, sl) in layers.iter().enumerate() {
            let input = self.spec.with_bias(&a);
            let qmax = ((1i64 << (sl.plan.input_bits - 1)) - 1) as f64;
            let s = input.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let z = if s == 0.0 {
                vec![0.0; sl.plan.cols]
            } else {
                let xq: Vec<i64> = input.iter().map(|v| (v / s * qmax).round() as i64).collect();
                let out = bitslice::mvm_bitsliced(&sl.plan, &sl.tiles, &xq, MvmMode::Ideal, SeedStream::new(0))?;
                log.push(out.accounting.total_energy());
                *acc += out.accounting;
                out.y.iter().map(|y| *y as f64 * sl.scale * s / qmax).collect()
            };
            a = if l == last {
                softmax(&z)
            } else {
                z.iter().map(|v| self.spec.hidden_activation.apply(*v)).collect()
            };
            cache.inputs.push(input);
            cache.pre.push(z);
            cache.outputs.push(a.clone());
        }
        Ok(cache)
    }

    /// Classification accuracy plus read energy and latency over `data`.
    pub fn evaluate(&self, data: &Dataset, mode: &EvalMode, seed: u64) -> Result<EvalReport> {
        let mut rep = EvalReport { samples: data.len(), ..Default::default() };
        if data.is_empty() {
            return Ok(rep);
        }
        let stream = SeedStream::new(seed).named("evaluate");
        let sliced = match *mode {
            EvalMode::BitSliced { weight_bits, input_bits, bits_per_cell, tile_rows, tile_cols } => {
                if input_bits < 2 {
                    return Err(Error::config("bit-sliced inference needs at least 2 input bits"));
                }
                Some(self.sliced_layers(weight_bits, input_bits, bits_per_cell, TileDims { rows: tile_rows, cols: tile_cols })?)
            }
            EvalMode::Analog(_) => None,
        };
        for (k, (x, y)) in data.inputs.iter().zip(&data.labels).enumerate() {
            let cache = match (mode, &sliced) {
                (EvalMode::Analog(opts), _) => {
                    self.forward_analog(x, opts, stream.at(k as u64), &mut rep.accounting, &mut rep.mvm_energies)?
                }
                (_, Some(layers)) => self.forward_sliced(layers, x, &mut rep.accounting, &mut rep.mvm_energies)?,
                _ => unreachable!("sliced layers built for bit-sliced mode"),
            };
            if cache.prediction() == *y {
                rep.correct += 1;
            }
        }
        rep.accuracy = rep.correct as f64 / rep.samples as f64;
        Ok(rep)
    }

    /// Advance every device's age (drift).
    pub fn advance_time(&mut self, seconds: f64) -> Result<()> {
        for layer in &mut self.layers {
            layer.plus.advance_time(seconds)?;
            layer.minus.advance_time(seconds)?;
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, dir: &Path, epochs_done: usize) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (l, layer) in self.layers.iter().enumerate() {
            crossbar::save_snapshot(&dir.join(format!("layer{l}_plus.snap")), &layer.plus, self.spec.seed)?;
            crossbar::save_snapshot(&dir.join(format!("layer{l}_minus.snap")), &layer.minus, self.spec.seed)?;
        }
        let ck = Checkpoint {
            epochs_done,
            seed: self.spec.seed,
            dims: self.spec.dims.clone(),
            device: self.device.name.clone(),
        };
        crate::io::write_text(&dir.join("checkpoint.toml"), &crate::io::to_toml(&ck)?)
    }

    /// Rebuild a network from a checkpoint written with the same settings.
    pub fn load_checkpoint(dir: &Path, spec: &NetworkSpec, device: &DeviceParams, settings: &AnalogSettings) -> Result<(Self, usize)> {
        let ck: Checkpoint = crate::io::read_toml(&dir.join("checkpoint.toml"))?;
        if ck.seed != spec.seed || ck.dims != spec.dims || ck.device != device.name {
            return Err(Error::config(format!(
                "checkpoint in {} was written for a different run",
                dir.display()
            )));
        }
        let mut net = Self::blank(spec, device, settings)?;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let cfg = layer.plus.config.clone();
            layer.plus = crossbar::load_snapshot(&dir.join(format!("layer{l}_plus.snap")), &cfg, device)?.0;
            layer.minus = crossbar::load_snapshot(&dir.join(format!("layer{l}_minus.snap")), &cfg, device)?.0;
        }
        Ok((net, ck.epochs_done))
    }
}
