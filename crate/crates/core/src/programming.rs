//! Closed-loop write-verify: pulse, read back, compare, repeat up to a cap.

use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarState;
use crate::device::{
    apply_pulse, nominal_increment, read_conductance, reset_to_min, ConductanceState, DeviceParams, Direction,
    PulseOptions, ResponseKind,
};
use crate::error::{Error, Result};
use crate::rng::{SeedStream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WriteVerifyConfig {
    /// Acceptance band, as a fraction of the conductance window.
    pub tolerance: f64,
    pub max_pulses: u32,
    /// Strongest programming pulse, relative to a nominal update pulse
    /// (incremental-step programming).
    pub max_amplitude: f64,
    /// Verify reads see the device's temporal read noise.
    pub noisy_verify: bool,
}

impl Default for WriteVerifyConfig {
    fn default() -> Self {
        WriteVerifyConfig {
            tolerance: 0.01,
            max_pulses: 200,
            max_amplitude: 8.0,
            noisy_verify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProgramMethod {
    WriteVerify(WriteVerifyConfig),
    /// Set conductances directly; for analysis and oracle set-ups.
    Exact,
}

impl Default for ProgramMethod {
    fn default() -> Self {
        ProgramMethod::WriteVerify(WriteVerifyConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellWrite {
    pub state: ConductanceState,
    pub pulses: u32,
    pub reads: u32,
    pub verified: bool,
}

/// Drive one device towards `target`. Pulse amplitude follows the remaining
/// error, capped at `max_amplitude`. One-sided devices reach lower
/// targets through a RESET followed by SET pulses.
pub fn write_verify(
    state: &ConductanceState,
    params: &DeviceParams,
    target: f64,
    cfg: &WriteVerifyConfig,
    rng: &mut SimRng,
) -> Result<CellWrite> {
    let target = params.clamp(target);
    let tol = cfg.tolerance * params.range();
    let mut s = *state;
    let mut pulses = 0;
    let mut reads = 0;
    loop {
        let g_read = if cfg.noisy_verify {
            read_conductance(&s, params, rng)
        } else {
            s.conductance(params)
        };
        reads += 1;
        let err = target - g_read;
        if err.abs() <= tol {
            return Ok(CellWrite { state: s, pulses, reads, verified: true });
        }
        if pulses >= cfg.max_pulses {
            return Ok(CellWrite { state: s, pulses, reads, verified: false });
        }
        pulses += 1;
        if err < 0.0 && params.response_kind == ResponseKind::OneSided {
            s = reset_to_min(&s, params);
            continue;
        }
        let dir = if err > 0.0 { Direction::Up } else { Direction::Down };
        let nominal = nominal_increment(params, g_read, dir);
        let amplitude = if nominal > 0.0 { (err.abs() / nominal).min(cfg.max_amplitude) } else { 1.0 };
        let opts = PulseOptions { amplitude, enforce_endurance: true };
        s = match apply_pulse(&s, params, dir, rng, opts) {
            Ok(next) => next,
            Err(Error::DeviceWorn { .. }) => {
                return Ok(CellWrite { state: s, pulses: pulses - 1, reads, verified: false })
            }
            Err(e) => return Err(e),
        };
    }
}

/// Summary of programming a set of cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub cells: u64,
    pub pulses: u64,
    pub reads: u64,
    pub energy: f64,
    /// Row-by-row: rows are written one after another, cells within a row in
    /// parallel.
    pub latency: f64,
    /// Residual |g - target| after programming, as a fraction of the window.
    pub residual_mean: f64,
    pub residual_max: f64,
    pub residual_rms: f64,
    /// `(tile, row, col)` of cells that missed the band within the cap.
    pub failures: Vec<(usize, usize, usize)>,
}

impl ProgramReport {
    pub fn verified_fraction(&self) -> f64 {
        if self.cells == 0 {
            return 1.0;
        }
        1.0 - self.failures.len() as f64 / self.cells as f64
    }

    pub fn merge(&mut self, other: ProgramReport) {
        let n = (self.cells + other.cells) as f64;
        if n > 0.0 {
            self.residual_mean = (self.residual_mean * self.cells as f64 + other.residual_mean * other.cells as f64) / n;
            self.residual_rms = ((self.residual_rms.powi(2) * self.cells as f64
                + other.residual_rms.powi(2) * other.cells as f64)
                / n)
                .sqrt();
        }
        self.residual_max = self.residual_max.max(other.residual_max);
        self.cells += other.cells;
        self.pulses += other.pulses;
        self.reads += other.reads;
        self.energy += other.energy;
        self.latency += other.latency;
        self.failures.extend(other.failures);
    }
}

/// Program a whole tile to row-major target conductances.
pub fn program_tile(
    tile: &mut CrossbarState,
    targets: &[f64],
    method: &ProgramMethod,
    seed: SeedStream,
    tile_id: usize,
) -> Result<ProgramReport> {
    Error::check_len(tile.cells.len(), targets.len())?;
    let (m, n) = (tile.rows(), tile.cols());
    let range = tile.device.range();
    let mut report = ProgramReport { cells: (m * n) as u64, ..Default::default() };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..m {
        let mut row_pulses = 0;
        for j in 0..n {
            let k = i * n + j;
            let target = tile.device.clamp(targets[k]);
            match method {
                ProgramMethod::Exact => tile.set_conductance(i, j, target),
                ProgramMethod::WriteVerify(cfg) => {
                    let mut rng = seed.at(k as u64).rng();
                    let w = write_verify(&tile.cells[k], &tile.device, target, cfg, &mut rng)?;
                    tile.cells[k] = w.state;
                    report.pulses += u64::from(w.pulses);
                    report.reads += u64::from(w.reads);
                    row_pulses = row_pulses.max(w.pulses);
                    if !w.verified {
                        report.failures.push((tile_id, i, j));
                    }
                }
            }
            let r = (tile.cells[k].conductance(&tile.device) - target).abs() / range;
            sum += r;
            sum_sq += r * r;
            report.residual_max = report.residual_max.max(r);
        }
        report.latency += f64::from(row_pulses) * tile.device.write_latency;
    }
    report.energy = report.pulses as f64 * tile.device.write_energy;
    report.residual_mean = sum / (m * n) as f64;
    report.residual_rms = (sum_sq / (m * n) as f64).sqrt();
    Ok(report)
}
