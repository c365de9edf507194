//! Parallel outer-product updates `w <- w - eta * x * delta^T` from coincident
//! pulse trains.
//!
//! Every row `i` fires a train with rate `p_i = c_x |x_i|`, every column a
//! train with rate `q_j = c_d |delta_j|`. A device only moves when its row and
//! column pulses coincide, so the expected number of pulses seen by cell
//! `(i, j)` is `L p_i q_j`. The constants are chosen so that
//! `c_x c_d L = eta * pulses_per_unit_weight`, split so that the largest row
//! and column rates are equal.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarState;
use crate::device::{self, Direction, PulseOptions, ResponseKind, SymmetryPoint};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const DEFAULT_TRAIN_LENGTH: usize = 32;

/// A pulse train of `len` slots, bit-packed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitTrain {
    words: Vec<u64>,
    len: usize,
}

impl BitTrain {
    pub fn zeros(len: usize) -> Self {
        BitTrain { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, t: usize) {
        self.words[t / 64] |= 1 << (t % 64);
    }

    pub fn get(&self, t: usize) -> bool {
        self.words[t / 64] >> (t % 64) & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Number of slots where both trains fire.
    pub fn coincidences(&self, other: &BitTrain) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Independent Bernoulli slots.
    #[default]
    Stochastic,
    /// Row trains fill `n_i` columns of a `B x B` slot grid, column trains fill
    /// `m_j` rows, so cell `(i, j)` sees exactly `n_i m_j` coincidences.
    /// Uses the first `B^2` slots, `B = floor(sqrt(L))`.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Device pulses corresponding to a weight change of 1.
    pub pulses_per_unit_weight: f64,
    pub encoding: Encoding,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { pulses_per_unit_weight: 1.0, encoding: Encoding::Stochastic }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulsePlan {
    pub length: usize,
    pub row_trains: Vec<BitTrain>,
    pub col_trains: Vec<BitTrain>,
    /// Sign of each row train (sign of `x_i`), 0 for a silent row.
    pub row_polarity: Vec<i8>,
    pub col_polarity: Vec<i8>,
    pub row_rates: Vec<f64>,
    pub col_rates: Vec<f64>,
    /// Rates that exceeded 1 and were clipped.
    pub clipped: usize,
    pub encoding: Encoding,
    pub encoding_seed: u64,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

pub fn build_pulse_plan(x: &[f64], delta: &[f64], eta: f64, length: usize, seed: u64) -> Result<PulsePlan> {
    build_pulse_plan_with(x, delta, eta, length, seed, &PlanOptions::default())
}

pub fn build_pulse_plan_with(
    x: &[f64],
    delta: &[f64],
    eta: f64,
    length: usize,
    seed: u64,
    opts: &PlanOptions,
) -> Result<PulsePlan> {
    if length == 0 {
        return Err(Error::config("pulse train length must be at least 1"));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::config("learning rate must be positive"));
    }
    if !(opts.pulses_per_unit_weight > 0.0) {
        return Err(Error::config("pulses per unit weight must be positive"));
    }
    if x.iter().chain(delta).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite update vector".into()));
    }
    let max_x = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_d = delta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let k = eta * opts.pulses_per_unit_weight / length as f64;
    let (cx, cd) = if max_x > 0.0 && max_d > 0.0 {
        ((k * max_d / max_x).sqrt(), (k * max_x / max_d).sqrt())
    } else {
        (0.0, 0.0)
    };
    let mut clipped = 0;
    let mut rate = |v: f64, c: f64| {
        let r = c * v.abs();
        if r > 1.0 {
            clipped += 1;
            1.0
        } else {
            r
        }
    };
    let row_rates: Vec<f64> = x.iter().map(|v| rate(*v, cx)).collect();
    let col_rates: Vec<f64> = delta.iter().map(|v| rate(*v, cd)).collect();
    let stream = SeedStream::new(seed);
    let (row_trains, col_trains) = match opts.encoding {
        Encoding::Stochastic => (
            stochastic_trains(&row_rates, length, stream.named("rows")),
            stochastic_trains(&col_rates, length, stream.named("cols")),
        ),
        Encoding::Deterministic => {
            let b = (length as f64).sqrt().floor() as usize;
            (grid_trains(&row_rates, length, b, true), grid_trains(&col_rates, length, b, false))
        }
    };
    Ok(PulsePlan {
        length,
        row_trains,
        col_trains,
        row_polarity: x.iter().map(|v| sign(*v)).collect(),
        col_polarity: delta.iter().map(|v| sign(*v)).collect(),
        row_rates,
        col_rates,
        clipped,
        encoding: opts.encoding,
        encoding_seed: seed,
    })
}

fn stochastic_trains(rates: &[f64], len: usize, stream: SeedStream) -> Vec<BitTrain> {
    rates
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut train = BitTrain::zeros(len);
            if p >= 1.0 {
                (0..len).for_each(|t| train.set(t));
            } else if p > 0.0 {
                let mut rng = stream.at(i as u64).rng();
                for t in 0..len {
                    if rng.random::<f64>() < p {
                        train.set(t);
                    }
                }
            }
            train
        })
        .collect()
}

fn grid_trains(rates: &[f64], len: usize, b: usize, rows: bool) -> Vec<BitTrain> {
    rates
        .iter()
        .map(|&p| {
            let n = (p * b as f64).round() as usize;
            let mut train = BitTrain::zeros(len);
            for t in 0..b * b {
                let on = if rows { t % b < n } else { t / b < n };
                if on {
                    train.set(t);
                }
            }
            train
        })
        .collect()
}

impl PulsePlan {
    pub fn rows(&self) -> usize {
        self.row_trains.len()
    }

    pub fn cols(&self) -> usize {
        self.col_trains.len()
    }

    pub fn coincidences(&self, i: usize, j: usize) -> u32 {
        self.row_trains[i].coincidences(&self.col_trains[j])
    }

    /// Direction that lowers `w` when `x_i delta_j > 0`.
    pub fn direction(&self, i: usize, j: usize) -> Option<Direction> {
        match self.row_polarity[i] * self.col_polarity[j] {
            1 => Some(Direction::Down),
            -1 => Some(Direction::Up),
            _ => None,
        }
    }

    /// Expected coincidences `L p_i q_j`.
    pub fn expected_coincidences(&self, i: usize, j: usize) -> f64 {
        self.length as f64 * self.row_rates[i] * self.col_rates[j]
    }

    /// The update runs in two phases (products of either sign), each `L` slots.
    pub fn latency_slots(&self) -> u64 {
        2 * self.length as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateOptions {
    pub enforce_endurance: bool,
    /// For one-sided devices: a weight decrease becomes an up-pulse on the
    /// `G-` member of the pair instead of a down-pulse on `G+`.
    pub differential: bool,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        UpdateOptions { enforce_endurance: true, differential: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub pulses: u64,
    pub up_pulses: u64,
    pub down_pulses: u64,
    pub cells_touched: u64,
    pub clipped_rates: u64,
    pub energy: f64,
    pub latency_slots: u64,
    pub latency: f64,
}

impl UpdateReport {
    pub const CSV_HEADER: &'static str =
        "step,pulses,up_pulses,down_pulses,cells_touched,clipped_rates,energy_j,latency_slots,latency_s";

    pub fn merge(&mut self, o: &UpdateReport) {
        self.pulses += o.pulses;
        self.up_pulses += o.up_pulses;
        self.down_pulses += o.down_pulses;
        self.cells_touched += o.cells_touched;
        self.clipped_rates += o.clipped_rates;
        self.energy += o.energy;
        self.latency_slots += o.latency_slots;
        self.latency += o.latency;
    }

    pub fn write_csv_row(&self, out: &mut impl Write, step: u64) -> std::io::Result<()> {
        writeln!(
            out,
            "{step},{},{},{},{},{},{},{},{}",
            self.pulses,
            self.up_pulses,
            self.down_pulses,
            self.cells_touched,
            self.clipped_rates,
            self.energy,
            self.latency_slots,
            self.latency
        )
    }
}

/// Append one report to a CSV run log, writing the header for a new file.
pub fn append_update_log(path: &std::path::Path, step: u64, report: &UpdateReport) -> Result<()> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{}", UpdateReport::CSV_HEADER).map_err(|e| Error::io(path, e))?;
    }
    report.write_csv_row(&mut f, step).map_err(|e| Error::io(path, e))
}

fn check_plan(tile: &CrossbarState, plan: &PulsePlan) -> Result<()> {
    Error::check_len(tile.rows(), plan.rows())?;
    Error::check_len(tile.cols(), plan.cols())
}

fn finish(report: &mut UpdateReport, plan: &PulsePlan, write_energy: f64, write_latency: f64) {
    report.clipped_rates = plan.clipped as u64;
    report.energy = report.pulses as f64 * write_energy;
    report.latency_slots = plan.latency_slots();
    report.latency = report.latency_slots as f64 * write_latency;
}

/// Apply the plan to one tile holding the weights directly (`G+` only).
pub fn apply_update(tile: &mut CrossbarState, plan: &PulsePlan, opts: &UpdateOptions, seed: SeedStream) -> Result<UpdateReport> {
    check_plan(tile, plan)?;
    if tile.device.response_kind == ResponseKind::OneSided {
        return Err(Error::Unsupported(format!(
            "device '{}' cannot depress; use a differential pair update",
            tile.device.name
        )));
    }
    let pulse_opts = PulseOptions { amplitude: 1.0, enforce_endurance: opts.enforce_endurance };
    let mut report = UpdateReport::default();
    let n = tile.cols();
    for i in 0..plan.rows() {
        if plan.row_polarity[i] == 0 || plan.row_trains[i].count() == 0 {
            continue;
        }
        for j in 0..n {
            let Some(dir) = plan.direction(i, j) else { continue };
            let hits = plan.coincidences(i, j);
            if hits == 0 {
                continue;
            }
            let k = i * n + j;
            let mut rng = seed.at(k as u64).rng();
            for _ in 0..hits {
                tile.cells[k] = device::apply_pulse(&tile.cells[k], &tile.device, dir, &mut rng, pulse_opts)?;
            }
            report.pulses += u64::from(hits);
            match dir {
                Direction::Up => report.up_pulses += u64::from(hits),
                Direction::Down => report.down_pulses += u64::from(hits),
            }
            report.cells_touched += 1;
        }
    }
    finish(&mut report, plan, tile.device.write_energy, tile.device.write_latency);
    Ok(report)
}

/// Apply the plan to a differential pair. With `opts.differential`, every
/// pulse is an up-pulse: on `plus` to raise the weight, on `minus` to lower it
/// (works for one-sided devices). Otherwise the pair behaves like
/// [`apply_update`] on `plus`.
pub fn apply_update_pair(
    plus: &mut CrossbarState,
    minus: &mut CrossbarState,
    plan: &PulsePlan,
    opts: &UpdateOptions,
    seed: SeedStream,
) -> Result<UpdateReport> {
    if !opts.differential {
        return apply_update(plus, plan, opts, seed);
    }
    check_plan(plus, plan)?;
    check_plan(minus, plan)?;
    let pulse_opts = PulseOptions { amplitude: 1.0, enforce_endurance: opts.enforce_endurance };
    let mut report = UpdateReport::default();
    let n = plus.cols();
    for i in 0..plan.rows() {
        for j in 0..n {
            let Some(dir) = plan.direction(i, j) else { continue };
            let hits = plan.coincidences(i, j);
            if hits == 0 {
                continue;
            }
            let k = i * n + j;
            let tile = match dir {
                Direction::Up => &mut *plus,
                Direction::Down => &mut *minus,
            };
            let mut rng = seed.at(k as u64).rng();
            for _ in 0..hits {
                tile.cells[k] = device::apply_pulse(&tile.cells[k], &tile.device, Direction::Up, &mut rng, pulse_opts)?;
            }
            report.pulses += u64::from(hits);
            report.up_pulses += u64::from(hits);
            report.cells_touched += 1;
        }
    }
    finish(&mut report, plan, plus.device.write_energy, plus.device.write_latency);
    Ok(report)
}

/// Per-cell reference conductances for both pair members.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePair {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl ReferencePair {
    pub fn uniform(cells: usize, g_plus: f64, g_minus: f64) -> Self {
        ReferencePair { plus: vec![g_plus; cells], minus: vec![g_minus; cells] }
    }

    /// Both references at the device's symmetry point (window midpoint when
    /// every point is symmetric).
    pub fn at_symmetry_point(params: &device::DeviceParams, cells: usize) -> Result<Self> {
        let g = match device::symmetry_point(params) {
            SymmetryPoint::At(g) => g,
            SymmetryPoint::Everywhere => 0.5 * (params.g_min + params.g_max),
            SymmetryPoint::None => {
                return Err(Error::Unsupported(format!("device '{}' has no symmetry point", params.name)))
            }
        };
        Ok(Self::uniform(cells, g, g))
    }

    /// Shift both members by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        ReferencePair {
            plus: self.plus.iter().map(|g| g + c).collect(),
            minus: self.minus.iter().map(|g| g + c).collect(),
        }
    }
}

/// Logical weights `((G+ - Gref+) - (G- - Gref-)) / g_per_weight`, row-major.
pub fn zero_shift_reference(
    plus: &CrossbarState,
    minus: &CrossbarState,
    reference: &ReferencePair,
    g_per_weight: f64,
) -> Result<Vec<f64>> {
    Error::check_len(plus.cells.len(), minus.cells.len())?;
    Error::check_len(plus.cells.len(), reference.plus.len())?;
    Error::check_len(plus.cells.len(), reference.minus.len())?;
    let gp = plus.conductances();
    let gm = minus.conductances();
    Ok((0..gp.len())
        .map(|k| ((gp[k] - reference.plus[k]) - (gm[k] - reference.minus[k])) / g_per_weight)
        .collect())
}
