//! A real-valued matrix on two tiles, `W = (G+ - G-) / g_per_weight`.

use super::{mvm_nonideal, Accounting, CrossbarConfig, CrossbarState, ReadOptions};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::programming::{program_tile, ProgramMethod, ProgramReport};
use crate::rng::SeedStream;

/// `y = A x` for an `outputs x inputs` matrix `A`. Tile row `i` is driven by
/// `x_i`; positive entries sit on `plus`, negative ones on `minus`, the other
/// member of each pair stays at `g_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialTile {
    pub plus: CrossbarState,
    pub minus: CrossbarState,
    pub g_per_weight: f64,
}

impl DifferentialTile {
    /// Tiles sized for `a` (row-major, `outputs x inputs`), with device spread
    /// drawn from `seed`. `|a|` maps its largest entry to the full window.
    pub fn new(outputs: usize, inputs: usize, a: &[f64], template: &CrossbarConfig, device: &DeviceParams, seed: SeedStream) -> Result<Self> {
        Error::check_len(outputs * inputs, a.len())?;
        let mut cfg = template.clone();
        cfg.rows = inputs;
        cfg.cols = outputs;
        if !cfg.cols.is_multiple_of(cfg.adc_share) {
            cfg.adc_share = 1;
        }
        let max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g_per_weight = if max > 0.0 { device.range() / max } else { device.range() };
        Ok(DifferentialTile {
            plus: CrossbarState::with_variation(cfg.clone(), device.clone(), seed.at(0).seed())?,
            minus: CrossbarState::with_variation(cfg, device.clone(), seed.at(1).seed())?,
            g_per_weight,
        })
    }

    pub fn outputs(&self) -> usize {
        self.plus.cols()
    }

    pub fn inputs(&self) -> usize {
        self.plus.rows()
    }

    /// Write `a` (row-major `outputs x inputs`).
    pub fn program(&mut self, a: &[f64], method: &ProgramMethod, seed: SeedStream) -> Result<ProgramReport> {
        let (m, n) = (self.inputs(), self.outputs());
        Error::check_len(m * n, a.len())?;
        let g_min = self.plus.device.g_min;
        let mut tp = vec![g_min; m * n];
        let mut tm = vec![g_min; m * n];
        for o in 0..n {
            for i in 0..m {
                let w = a[o * m + i];
                let g = g_min + w.abs() * self.g_per_weight;
                if w > 0.0 {
                    tp[i * n + o] = g;
                } else if w < 0.0 {
                    tm[i * n + o] = g;
                }
            }
        }
        let mut r = program_tile(&mut self.plus, &tp, method, seed.at(0), 0)?;
        r.merge(program_tile(&mut self.minus, &tm, method, seed.at(1), 1)?);
        Ok(r)
    }

    /// Matrix as stored, row-major `outputs x inputs`.
    pub fn matrix(&self) -> Vec<f64> {
        let (m, n) = (self.inputs(), self.outputs());
        let gp = self.plus.conductances();
        let gm = self.minus.conductances();
        let mut a = vec![0.0; m * n];
        for i in 0..m {
            for o in 0..n {
                a[o * m + i] = (gp[i * n + o] - gm[i * n + o]) / self.g_per_weight;
            }
        }
        a
    }

    /// `y = A x`. Inputs are scaled so `max |x|` reads at `v_read`; negative
    /// entries are applied in a second phase.
    pub fn mvm(&self, x: &[f64], opts: &ReadOptions, seed: SeedStream) -> Result<(Vec<f64>, Accounting)> {
        Error::check_len(self.inputs(), x.len())?;
        let mut acc = Accounting::default();
        let mut y = vec![0.0; self.outputs()];
        let s = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s == 0.0 {
            return Ok((y, acc));
        }
        let v_read = self.plus.config.v_read;
        for (phase, sign) in [(0u64, 1.0), (1u64, -1.0)] {
            let v: Vec<f64> = x.iter().map(|xi| if xi * sign > 0.0 { xi.abs() / s * v_read } else { 0.0 }).collect();
            if v.iter().all(|v| *v == 0.0) {
                continue;
            }
            for (k, (tile, pol)) in [(&self.plus, 1.0), (&self.minus, -1.0)].into_iter().enumerate() {
                let i = mvm_nonideal(tile, &v, opts, seed.at(2 * phase + k as u64).seed())?;
                acc += read_accounting(tile, tile.array_energy(&v), i.len());
                for (yo, io) in y.iter_mut().zip(&i) {
                    *yo += sign * pol * io;
                }
            }
        }
        let scale = s / (v_read * self.g_per_weight);
        y.iter_mut().for_each(|v| *v *= scale);
        Ok((y, acc))
    }
}

/// Counters for one integration window whose `samples` outputs are all
/// converted.
pub fn read_accounting(tile: &CrossbarState, array_energy: f64, samples: usize) -> Accounting {
    Accounting {
        mvm_count: 1,
        array_energy,
        adc_energy: samples as f64 * tile.config.adc_energy,
        adc_samples: samples as u64,
        integration_windows: 1,
        adc_slots: tile.config.adc_share as u64,
        ..Default::default()
    }
}
