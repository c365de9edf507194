//! One crossbar tile: conductance grid, wiring and peripheral parameters, and
//! the read operations (ideal Ohm/Kirchhoff MVM, IR-drop-aware MVM, ADC).

mod adc;
pub mod irdrop;
mod pair;
mod snapshot;

pub use adc::{adc_quantize, quantize, required_adc_bits, AdcOutput, AdcRange, AdcRounding};
pub use pair::{read_accounting, DifferentialTile};
pub use snapshot::{load_snapshot, save_snapshot, write_column_currents_csv};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::device::{self, sample_dg_scale, sample_nu_scale, ConductanceState, DeviceParams};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380649e-23;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarConfig {
    pub rows: usize,
    pub cols: usize,
    /// Wire resistance per unit cell, ohms.
    pub r_wire: f64,
    /// Read voltage amplitude, volts.
    pub v_read: f64,
    /// Column integration time, seconds.
    pub t_int: f64,
    /// Kelvin.
    pub temperature: f64,
    pub adc_bits: u32,
    /// Joules per converted sample.
    pub adc_energy: f64,
    /// Columns multiplexed onto one ADC.
    pub adc_share: usize,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        CrossbarConfig {
            rows: 64,
            cols: 64,
            r_wire: 0.1,
            v_read: 0.2,
            t_int: 100e-9,
            temperature: 300.0,
            adc_bits: 8,
            adc_energy: 5e-12,
            adc_share: 8,
        }
    }
}

impl CrossbarConfig {
    pub fn with_dims(rows: usize, cols: usize) -> Self {
        CrossbarConfig {
            rows,
            cols,
            adc_share: 1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config("crossbar needs at least one row and column"));
        }
        if !(self.r_wire >= 0.0) {
            return Err(Error::config("r_wire must be non-negative"));
        }
        if !(self.t_int > 0.0) || !(self.v_read > 0.0) || !(self.temperature >= 0.0) {
            return Err(Error::config("t_int and v_read must be positive"));
        }
        if self.adc_bits == 0 || self.adc_bits > 52 {
            return Err(Error::config("adc_bits must be in 1..=52"));
        }
        if self.adc_share == 0 || !self.cols.is_multiple_of(self.adc_share) {
            return Err(Error::config(format!(
                "adc_share ({}) must divide cols ({})",
                self.adc_share, self.cols
            )));
        }
        Ok(())
    }
}

/// Energy, latency and conversion counters. Adds up across reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub mvm_count: u64,
    /// Joules dissipated in the array: sum of V_i^2 G_ij t_int.
    pub array_energy: f64,
    pub adc_energy: f64,
    pub adc_samples: u64,
    pub adc_saturations: u64,
    /// Integration windows (units of t_int).
    pub integration_windows: u64,
    /// Sequential conversion slots caused by ADC column sharing.
    pub adc_slots: u64,
}

impl Accounting {
    pub fn total_energy(&self) -> f64 {
        self.array_energy + self.adc_energy
    }
}

impl std::ops::AddAssign for Accounting {
    fn add_assign(&mut self, o: Self) {
        self.mvm_count += o.mvm_count;
        self.array_energy += o.array_energy;
        self.adc_energy += o.adc_energy;
        self.adc_samples += o.adc_samples;
        self.adc_saturations += o.adc_saturations;
        self.integration_windows += o.integration_windows;
        self.adc_slots += o.adc_slots;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarState {
    pub config: CrossbarConfig,
    pub device: DeviceParams,
    /// Row-major `rows x cols`.
    pub cells: Vec<ConductanceState>,
}

impl CrossbarState {
    /// A tile of fresh devices at `g_min` with no device-to-device spread.
    pub fn new(config: CrossbarConfig, device: DeviceParams) -> Result<Self> {
        config.validate()?;
        device.validate()?;
        let cells = vec![ConductanceState::fresh(&device); config.rows * config.cols];
        Ok(CrossbarState {
            config,
            device,
            cells,
        })
    }

    /// Fresh tile with per-device increment multipliers drawn once.
    pub fn with_variation(config: CrossbarConfig, device: DeviceParams, seed: u64) -> Result<Self> {
        let mut tile = Self::new(config, device)?;
        let mut rng = rng_from_seed(seed);
        for c in &mut tile.cells {
            c.dg_scale = sample_dg_scale(&tile.device, &mut rng);
            c.nu_scale = sample_nu_scale(&tile.device, &mut rng);
        }
        Ok(tile)
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn cols(&self) -> usize {
        self.config.cols
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.config.cols + j
    }

    pub fn cell(&self, i: usize, j: usize) -> &ConductanceState {
        &self.cells[self.index(i, j)]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut ConductanceState {
        let k = self.index(i, j);
        &mut self.cells[k]
    }

    /// Directly set a conductance (clamped), bypassing pulse programming.
    pub fn set_conductance(&mut self, i: usize, j: usize, g: f64) {
        let g = self.device.clamp(g);
        let c = self.cell_mut(i, j);
        c.g = g;
        c.age = 0.0;
    }

    /// Drift-adjusted conductances, row-major.
    pub fn conductances(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.conductance(&self.device)).collect()
    }

    pub fn advance_time(&mut self, elapsed: f64) -> Result<()> {
        for c in &mut self.cells {
            *c = device::apply_drift(c, &self.device, elapsed)?;
        }
        Ok(())
    }

    /// Full-scale column charge: every device at `g_max`, every input at `v_read`.
    pub fn full_scale_charge(&self) -> f64 {
        self.config.rows as f64 * self.device.g_max * self.config.v_read * self.config.t_int
    }

    fn check_inputs(&self, v_in: &[f64], len: usize) -> Result<()> {
        Error::check_len(len, v_in.len())?;
        let limit = self.config.v_read * (1.0 + 1e-12);
        if let Some(v) = v_in.iter().find(|v| !(v.abs() <= limit)) {
            return Err(Error::config(format!(
                "input {v} V exceeds read voltage {} V",
                self.config.v_read
            )));
        }
        Ok(())
    }

    /// Energy dissipated by one integration window with inputs on the rows.
    pub fn array_energy(&self, v_in: &[f64]) -> f64 {
        let g = self.conductances();
        let n = self.cols();
        let p: f64 = v_in
            .iter()
            .enumerate()
            .map(|(i, v)| v * v * g[i * n..(i + 1) * n].iter().sum::<f64>())
            .sum();
        p * self.config.t_int
    }

    /// Energy of one integration window driven from the columns.
    pub fn array_energy_transposed(&self, v_cols: &[f64]) -> f64 {
        let g = self.conductances();
        let n = self.cols();
        let mut p = 0.0;
        for row in g.chunks_exact(n) {
            for (gij, v) in row.iter().zip(v_cols) {
                p += v * v * gij;
            }
        }
        p * self.config.t_int
    }
}

/// Ideal analog MVM: `I_j = sum_i G_ij V_i`.
pub fn mvm_ideal(state: &CrossbarState, v_in: &[f64]) -> Result<Vec<f64>> {
    state.check_inputs(v_in, state.rows())?;
    Ok(matvec(&state.conductances(), state.rows(), state.cols(), v_in))
}

/// Transposed read: drive the columns, sense the rows.
pub fn mvm_ideal_transposed(state: &CrossbarState, v_cols: &[f64]) -> Result<Vec<f64>> {
    state.check_inputs(v_cols, state.cols())?;
    Ok(matvec_t(&state.conductances(), state.rows(), state.cols(), v_cols))
}

pub(crate) fn matvec(g: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for (o, gij) in out.iter_mut().zip(&g[i * cols..(i + 1) * cols]) {
            *o += gij * vi;
        }
    }
    out
}

pub(crate) fn matvec_t(g: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| {
            g[i * cols..(i + 1) * cols]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IrDropSolver {
    /// Wires are ideal.
    None,
    /// Full nodal solve of the resistive network.
    Exact,
    /// Cumulative-current correction, a fixed number of sweeps.
    Approximate { sweeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadOptions {
    pub ir_drop: IrDropSolver,
    /// Per-device temporal read noise (`read_rel_sigma`).
    pub read_noise: bool,
    /// Johnson noise integrated over `t_int`.
    pub thermal_noise: bool,
    /// Overrides the device's `read_rel_sigma` when set.
    pub read_sigma_override: Option<f64>,
}

impl ReadOptions {
    pub const IDEAL: ReadOptions = ReadOptions {
        ir_drop: IrDropSolver::None,
        read_noise: false,
        thermal_noise: false,
        read_sigma_override: None,
    };

    pub fn nonideal() -> Self {
        ReadOptions {
            ir_drop: IrDropSolver::Exact,
            read_noise: true,
            thermal_noise: true,
            read_sigma_override: None,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.ir_drop == IrDropSolver::None
            && !self.thermal_noise
            && (!self.read_noise || self.read_sigma_override == Some(0.0))
    }
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self::IDEAL
    }
}

fn sampled_conductances(state: &CrossbarState, opts: &ReadOptions, rng: &mut SimRng) -> Vec<f64> {
    let sigma = opts.read_sigma_override.unwrap_or(state.device.read_rel_sigma);
    let g = state.conductances();
    if !opts.read_noise || sigma == 0.0 {
        return g;
    }
    g.into_iter()
        .map(|g| device::read_with_sigma(g, &state.device, sigma, rng))
        .collect()
}

fn add_thermal_noise(currents: &mut [f64], col_conductance: &[f64], config: &CrossbarConfig, rng: &mut impl Rng) {
    for (i, gsum) in currents.iter_mut().zip(col_conductance) {
        let sigma = (K_B * config.temperature * gsum / config.t_int).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        *i += sigma * z;
    }
}

/// MVM with wire resistance and read noise. Returns the column currents at the
/// sensing end.
pub fn mvm_nonideal(
    state: &CrossbarState,
    v_in: &[f64],
    opts: &ReadOptions,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    state.check_inputs(v_in, state.rows())?;
    let mut rng = rng_from_seed(rng_seed);
    let g = sampled_conductances(state, opts, &mut rng);
    let (m, n) = (state.rows(), state.cols());
    let mut out = solve_read(&g, m, n, v_in, state.config.r_wire, opts.ir_drop)?;
    if opts.thermal_noise {
        let col_g: Vec<f64> = (0..n).map(|j| (0..m).map(|i| g[i * n + j]).sum()).collect();
        add_thermal_noise(&mut out, &col_g, &state.config, &mut rng);
    }
    Ok(out)
}

/// Transposed counterpart of [`mvm_nonideal`]; the column wires become the
/// driven lines.
pub fn mvm_nonideal_transposed(
    state: &CrossbarState,
    v_cols: &[f64],
    opts: &ReadOptions,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    state.check_inputs(v_cols, state.cols())?;
    let mut rng = rng_from_seed(rng_seed);
    let g = sampled_conductances(state, opts, &mut rng);
    let (m, n) = (state.rows(), state.cols());
    let mut gt = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            gt[j * m + i] = g[i * n + j];
        }
    }
    let mut out = solve_read(&gt, n, m, v_cols, state.config.r_wire, opts.ir_drop)?;
    if opts.thermal_noise {
        let row_g: Vec<f64> = (0..m).map(|i| g[i * n..(i + 1) * n].iter().sum()).collect();
        add_thermal_noise(&mut out, &row_g, &state.config, &mut rng);
    }
    Ok(out)
}

fn solve_read(g: &[f64], m: usize, n: usize, v: &[f64], r_wire: f64, solver: IrDropSolver) -> Result<Vec<f64>> {
    if r_wire == 0.0 {
        return Ok(matvec(g, m, n, v));
    }
    match solver {
        IrDropSolver::None => Ok(matvec(g, m, n, v)),
        IrDropSolver::Exact => irdrop::solve_exact(g, m, n, v, r_wire),
        IrDropSolver::Approximate { sweeps } => Ok(irdrop::solve_approximate(g, m, n, v, r_wire, sweeps)),
    }
}

/// `V = snr * sqrt(N R_dev k_B T / t_int)`: smallest read voltage that keeps
/// the single-device signal `snr` times above the integrated Johnson noise of
/// an `N`-row column.
pub fn noise_limited_voltage(rows: f64, r_dev: f64, temperature: f64, t_int: f64, snr: f64) -> f64 {
    snr * (rows * r_dev * K_B * temperature / t_int).sqrt()
}

/// Default weight-range-to-noise target.
pub const DEFAULT_SNR_TARGET: f64 = 10.0;

pub fn min_read_voltage(state: &CrossbarState, snr_target: f64) -> Result<f64> {
    if !(snr_target > 0.0) {
        return Err(Error::config("snr_target must be positive"));
    }
    Ok(noise_limited_voltage(
        state.rows() as f64,
        state.device.r_on(),
        state.config.temperature,
        state.config.t_int,
        snr_target,
    ))
}
