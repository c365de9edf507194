//! Signed multi-bit weights on differential conductance pairs, spread across
//! bit slices and tiles; bit-streamed inputs recombined by shift-and-add.
//!
//! Numeric convention: weights and inputs are signed integers in two's
//! complement range (`[-2^(W-1), 2^(W-1) - 1]`), but they are *stored* in
//! sign-magnitude form. The magnitude `|w|` (W bits, so that `-2^(W-1)` fits)
//! is cut into `b`-bit digits; each digit is written to the `G+` cell of the
//! pair when `w > 0` and to the `G-` cell when `w < 0`, the other cell staying
//! at `g_min`. Inputs are streamed in two phases (positive entries, then the
//! magnitudes of negative entries), LSB bit-plane first. Column pairs are
//! subtracted digitally after the ADC, and partial sums from tiles are added
//! digitally.

use serde::{Deserialize, Serialize};

use crate::crossbar::{self, Accounting, AdcRange, AdcRounding, CrossbarConfig, CrossbarState, ReadOptions};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::programming::{program_tile, ProgramMethod, ProgramReport};
use crate::rng::SeedStream;

/// Practical ceiling on bits per cell.
pub const MAX_BITS_PER_CELL: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: u32,
    /// Row-major.
    pub entries: Vec<i64>,
    /// Real weight = entry * scale.
    pub scale: f64,
}

pub fn signed_range(bits: u32) -> (i64, i64) {
    let half = 1i64 << (bits - 1);
    (-half, half - 1)
}

impl QuantizedMatrix {
    pub fn new(rows: usize, cols: usize, bits: u32, entries: Vec<i64>, scale: f64) -> Result<Self> {
        if bits == 0 || bits > 32 {
            return Err(Error::config("weight bits must be in 1..=32"));
        }
        Error::check_len(rows * cols, entries.len())?;
        if !(scale > 0.0) {
            return Err(Error::config("scale must be positive"));
        }
        let (lo, hi) = signed_range(bits);
        if let Some(e) = entries.iter().find(|e| !(lo..=hi).contains(*e)) {
            return Err(Error::config(format!("entry {e} outside {bits}-bit range [{lo}, {hi}]")));
        }
        Ok(QuantizedMatrix { rows, cols, bits, entries, scale })
    }

    /// Symmetric uniform quantization. Integral values that already fit the
    /// range are kept exactly with scale 1.
    pub fn quantize(rows: usize, cols: usize, values: &[f64], bits: u32) -> Result<Self> {
        Error::check_len(rows * cols, values.len())?;
        if bits == 0 || bits > 32 {
            return Err(Error::config("weight bits must be in 1..=32"));
        }
        let (lo, hi) = signed_range(bits);
        let integral = values
            .iter()
            .all(|v| v.fract() == 0.0 && *v >= lo as f64 && *v <= hi as f64);
        if integral {
            return Self::new(rows, cols, bits, values.iter().map(|v| *v as i64).collect(), 1.0);
        }
        let max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = if max > 0.0 && hi > 0 { max / hi as f64 } else { 1.0 };
        let entries = values
            .iter()
            .map(|v| ((v / scale).round() as i64).clamp(lo, hi))
            .collect();
        Self::new(rows, cols, bits, entries, scale)
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.cols + j]
    }

    pub fn negated(&self) -> Result<Self> {
        Self::new(self.rows, self.cols, self.bits, self.entries.iter().map(|e| -e).collect(), self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileDims {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    /// 0 is the most significant slice.
    pub index: usize,
    /// Bit offset of the slice's least significant bit.
    pub shift: u32,
    /// Digit width stored in this slice (the top slice may be narrower).
    pub bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePlan {
    pub weight_bits: u32,
    pub input_bits: u32,
    pub bits_per_cell: u32,
    pub num_slices: usize,
    pub rows: usize,
    pub cols: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub differential: bool,
}

pub fn plan_slices(
    rows: usize,
    cols: usize,
    weight_bits: u32,
    input_bits: u32,
    bits_per_cell: u32,
    tile: TileDims,
    device: &DeviceParams,
) -> Result<SlicePlan> {
    if rows == 0 || cols == 0 || weight_bits == 0 || input_bits == 0 || bits_per_cell == 0 {
        return Err(Error::config("slice plan parameters must be positive"));
    }
    if tile.rows == 0 || tile.cols == 0 {
        return Err(Error::config("tile dimensions must be positive"));
    }
    if weight_bits > 32 || input_bits > 32 {
        return Err(Error::config("at most 32 weight and input bits"));
    }
    let capability = match device.bits_per_cell {
        0 => MAX_BITS_PER_CELL,
        b => b.min(MAX_BITS_PER_CELL),
    };
    if bits_per_cell > capability {
        return Err(Error::config(format!(
            "{bits_per_cell} bits per cell exceeds what '{}' supports ({capability})",
            device.name
        )));
    }
    Ok(SlicePlan {
        weight_bits,
        input_bits,
        bits_per_cell,
        num_slices: weight_bits.div_ceil(bits_per_cell) as usize,
        rows,
        cols,
        tile_rows: tile.rows,
        tile_cols: tile.cols,
        grid_rows: rows.div_ceil(tile.rows),
        grid_cols: cols.div_ceil(tile.cols),
        differential: true,
    })
}

impl SlicePlan {
    /// Slices in significance order, MSB first.
    pub fn slices(&self) -> Vec<Slice> {
        (0..self.num_slices)
            .map(|index| {
                let lsb_rank = (self.num_slices - 1 - index) as u32;
                let shift = lsb_rank * self.bits_per_cell;
                Slice {
                    index,
                    shift,
                    bits: self.bits_per_cell.min(self.weight_bits - shift),
                }
            })
            .collect()
    }

    pub fn tile_count(&self) -> usize {
        self.num_slices * self.grid_rows * self.grid_cols * 2
    }

    /// Row-major tile order within a slice; `G+` then `G-`.
    pub fn tile_index(&self, slice: usize, tile_row: usize, tile_col: usize, polarity: Polarity) -> usize {
        let pol = match polarity {
            Polarity::Plus => 0,
            Polarity::Minus => 1,
        };
        (((slice * self.grid_rows + tile_row) * self.grid_cols) + tile_col) * 2 + pol
    }

    /// Tile holding logical cell `(i, j)` and the cell's local coordinates.
    pub fn locate(&self, slice: usize, i: usize, j: usize, polarity: Polarity) -> (usize, usize, usize) {
        let (tr, tc) = (i / self.tile_rows, j / self.tile_cols);
        (self.tile_index(slice, tr, tc, polarity), i % self.tile_rows, j % self.tile_cols)
    }

    fn block(&self, tile_row: usize, tile_col: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let r0 = tile_row * self.tile_rows;
        let c0 = tile_col * self.tile_cols;
        (r0..(r0 + self.tile_rows).min(self.rows), c0..(c0 + self.tile_cols).min(self.cols))
    }

    /// Fresh tiles for this plan. `template` supplies wiring and ADC settings;
    /// its dimensions are replaced by the plan's tile dimensions.
    pub fn allocate_tiles(&self, template: &CrossbarConfig, device: &DeviceParams, seed: SeedStream) -> Result<Vec<CrossbarState>> {
        let mut cfg = template.clone();
        cfg.rows = self.tile_rows;
        cfg.cols = self.tile_cols;
        if !cfg.cols.is_multiple_of(cfg.adc_share) {
            cfg.adc_share = 1;
        }
        (0..self.tile_count())
            .map(|t| CrossbarState::with_variation(cfg.clone(), device.clone(), seed.at(t as u64).seed()))
            .collect()
    }

    fn level_conductance(&self, device: &DeviceParams, digit: u64) -> f64 {
        let top = ((1u64 << self.bits_per_cell) - 1) as f64;
        device.g_min + digit as f64 / top * device.range()
    }

    fn check_tiles(&self, tiles: &[CrossbarState]) -> Result<()> {
        Error::check_len(self.tile_count(), tiles.len())?;
        for t in tiles {
            if t.rows() != self.tile_rows || t.cols() != self.tile_cols {
                return Err(Error::config(format!(
                    "tile is {}x{}, plan expects {}x{}",
                    t.rows(),
                    t.cols(),
                    self.tile_rows,
                    self.tile_cols
                )));
            }
        }
        Ok(())
    }
}

/// Digit of `|w|` stored in `slice`, on the pair member that carries `w`'s sign.
fn cell_digit(w: i64, slice: &Slice, polarity: Polarity) -> u64 {
    let on_this_side = match polarity {
        Polarity::Plus => w > 0,
        Polarity::Minus => w < 0,
    };
    if !on_this_side {
        return 0;
    }
    (w.unsigned_abs() >> slice.shift) & ((1u64 << slice.bits) - 1)
}

/// Write every weight's slices into the tiles.
pub fn program_weights(
    plan: &SlicePlan,
    weights: &QuantizedMatrix,
    tiles: &mut [CrossbarState],
    method: &ProgramMethod,
    seed: SeedStream,
) -> Result<ProgramReport> {
    plan.check_tiles(tiles)?;
    if weights.rows != plan.rows || weights.cols != plan.cols || weights.bits != plan.weight_bits {
        return Err(Error::config(format!(
            "matrix {}x{} ({} bits) does not match plan {}x{} ({} bits)",
            weights.rows, weights.cols, weights.bits, plan.rows, plan.cols, plan.weight_bits
        )));
    }
    let mut report = ProgramReport::default();
    for slice in plan.slices() {
        for tr in 0..plan.grid_rows {
            for tc in 0..plan.grid_cols {
                let (rr, cr) = plan.block(tr, tc);
                for polarity in [Polarity::Plus, Polarity::Minus] {
                    let t = plan.tile_index(slice.index, tr, tc, polarity);
                    let tile = &mut tiles[t];
                    let mut targets = vec![tile.device.g_min; plan.tile_rows * plan.tile_cols];
                    for i in rr.clone() {
                        for j in cr.clone() {
                            let digit = cell_digit(weights.get(i, j), &slice, polarity);
                            targets[(i - rr.start) * plan.tile_cols + (j - cr.start)] =
                                plan.level_conductance(&tile.device, digit);
                        }
                    }
                    let r = program_tile(tile, &targets, method, seed.at(t as u64), t)?;
                    report.merge(r);
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MvmMode {
    Ideal,
    NonIdeal(ReadOptions),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitSlicedOutput {
    pub y: Vec<i64>,
    pub accounting: Accounting,
}

/// Bit-serial, bit-sliced integer MVM `y_j = sum_i W_ij x_i`.
///
/// Each column is digitized by a unit-step ADC (one code per digit unit, with
/// the `g_min` offset of the driven rows removed), so with enough ADC bits and
/// an ideal read the result is exact.
pub fn mvm_bitsliced(
    plan: &SlicePlan,
    tiles: &[CrossbarState],
    x: &[i64],
    mode: MvmMode,
    seed: SeedStream,
) -> Result<BitSlicedOutput> {
    plan.check_tiles(tiles)?;
    Error::check_len(plan.rows, x.len())?;
    let (lo, hi) = signed_range(plan.input_bits);
    if let Some(v) = x.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::config(format!(
            "input {v} outside {}-bit range [{lo}, {hi}]",
            plan.input_bits
        )));
    }
    // frozen conductances for ideal reads
    let frozen: Vec<Vec<f64>> = match mode {
        MvmMode::Ideal => tiles.iter().map(CrossbarState::conductances).collect(),
        MvmMode::NonIdeal(_) => Vec::new(),
    };
    let slices = plan.slices();
    let mut y = vec![0i64; plan.cols];
    let mut acc = Accounting::default();
    let mut steps = 0u64;
    let mut read_no = 0u64;

    for (phase_sign, take) in [(1i64, Phase::Positive), (-1i64, Phase::Negative)] {
        let mags: Vec<u64> = x.iter().map(|&v| take.magnitude(v)).collect();
        for bit in 0..plan.input_bits {
            let plane: Vec<bool> = mags.iter().map(|m| (m >> bit) & 1 == 1).collect();
            if !plane.iter().any(|b| *b) {
                continue;
            }
            steps += 1;
            for slice in &slices {
                for tr in 0..plan.grid_rows {
                    let (rr, _) = plan.block(tr, 0);
                    let v_active = &plane[rr.clone()];
                    let n_active = v_active.iter().filter(|b| **b).count();
                    if n_active == 0 {
                        continue;
                    }
                    for tc in 0..plan.grid_cols {
                        let (_, cr) = plan.block(tr, tc);
                        for (pol_sign, polarity) in [(1i64, Polarity::Plus), (-1i64, Polarity::Minus)] {
                            let t = plan.tile_index(slice.index, tr, tc, polarity);
                            let tile = &tiles[t];
                            let v_read = tile.config.v_read;
                            let mut v = vec![0.0; plan.tile_rows];
                            for (k, on) in v_active.iter().enumerate() {
                                if *on {
                                    v[k] = v_read;
                                }
                            }
                            let currents = match mode {
                                MvmMode::Ideal => crossbar::matvec(&frozen[t], plan.tile_rows, plan.tile_cols, &v),
                                MvmMode::NonIdeal(opts) => {
                                    read_no += 1;
                                    crossbar::mvm_nonideal(tile, &v, &opts, seed.at(read_no).seed())?
                                }
                            };
                            let unit = plan.level_conductance(&tile.device, 1) - tile.device.g_min;
                            let unit_charge = unit * v_read * tile.config.t_int;
                            let bits = tile.config.adc_bits;
                            let range = AdcRange::Calibrated {
                                full_scale: unit_charge * (1u64 << bits) as f64,
                                offset: n_active as f64 * tile.device.g_min * v_read * tile.config.t_int,
                            };
                            let out = crossbar::quantize(&currents, tile, range, AdcRounding::Nearest, bits);
                            acc += out.accounting;
                            acc.mvm_count += 1;
                            acc.array_energy += tile.array_energy(&v);
                            let weight = phase_sign * pol_sign;
                            for (j, code) in cr.clone().zip(&out.codes) {
                                y[j] += weight * ((*code as i64) << (bit + slice.shift));
                            }
                        }
                    }
                }
            }
        }
    }
    // tiles run in parallel: latency is one window (plus conversions) per step
    let share = tiles.first().map_or(1, |t| t.config.adc_share as u64);
    acc.integration_windows = steps;
    acc.adc_slots = steps * share;
    Ok(BitSlicedOutput { y, accounting: acc })
}

#[derive(Clone, Copy)]
enum Phase {
    Positive,
    Negative,
}

impl Phase {
    fn magnitude(self, v: i64) -> u64 {
        match self {
            Phase::Positive if v > 0 => v as u64,
            Phase::Negative if v < 0 => v.unsigned_abs(),
            _ => 0,
        }
    }
}

/// Reference integer matrix-vector product, `y = W^T x` over rows.
pub fn integer_mvm(weights: &QuantizedMatrix, x: &[i64]) -> Vec<i64> {
    (0..weights.cols)
        .map(|j| (0..weights.rows).map(|i| weights.get(i, j) * x[i]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::preset;

    fn ideal_config(bits: u32) -> CrossbarConfig {
        let mut c = CrossbarConfig::with_dims(1, 1);
        c.adc_bits = bits;
        c
    }

    fn build(plan: &SlicePlan, w: &QuantizedMatrix, adc_bits: u32) -> Vec<CrossbarState> {
        let dev = preset("ideal").unwrap();
        let mut tiles = plan.allocate_tiles(&ideal_config(adc_bits), &dev, SeedStream::new(0)).unwrap();
        program_weights(plan, w, &mut tiles, &ProgramMethod::Exact, SeedStream::new(1)).unwrap();
        tiles
    }

    #[test]
    fn slice_counts() {
        let dev = preset("ideal").unwrap();
        let t = TileDims { rows: 128, cols: 128 };
        assert_eq!(plan_slices(8, 8, 4, 1, 1, t, &dev).unwrap().num_slices, 4);
        assert_eq!(plan_slices(8, 8, 2, 1, 2, t, &dev).unwrap().num_slices, 1);
        let p = plan_slices(300, 300, 4, 1, 2, t, &dev).unwrap();
        assert_eq!((p.grid_rows, p.grid_cols), (3, 3));
        assert!(plan_slices(8, 8, 4, 1, 5, t, &dev).is_err());
        assert!(plan_slices(8, 8, 4, 1, 2, t, &preset("mram").unwrap()).is_err());
    }

    #[test]
    fn slices_are_msb_first_and_cover_the_magnitude() {
        let dev = preset("ideal").unwrap();
        let p = plan_slices(2, 2, 5, 1, 2, TileDims { rows: 2, cols: 2 }, &dev).unwrap();
        let s = p.slices();
        assert_eq!(s.iter().map(|s| s.shift).collect::<Vec<_>>(), vec![4, 2, 0]);
        assert_eq!(s.iter().map(|s| s.bits).collect::<Vec<_>>(), vec![1, 2, 2]);
    }

    #[test]
    fn single_negative_weight() {
        // 0b1010 read as 4-bit two's complement is -6
        let w = QuantizedMatrix::new(1, 1, 4, vec![-6], 1.0).unwrap();
        let dev = preset("ideal").unwrap();
        let plan = plan_slices(1, 1, 4, 2, 1, TileDims { rows: 1, cols: 1 }, &dev).unwrap();
        let tiles = build(&plan, &w, 4);
        let out = mvm_bitsliced(&plan, &tiles, &[1], MvmMode::Ideal, SeedStream::new(0)).unwrap();
        assert_eq!(out.y, vec![-6]);
        let zero = mvm_bitsliced(&plan, &tiles, &[0], MvmMode::Ideal, SeedStream::new(0)).unwrap();
        assert_eq!(zero.y, vec![0]);
        assert_eq!(zero.accounting.mvm_count, 0);
    }

    #[test]
    fn tiled_matrix_matches_oracle() {
        let dev = preset("ideal").unwrap();
        let (m, n) = (11, 7);
        let entries: Vec<i64> = (0..m * n).map(|k| (k as i64 * 5) % 15 - 8).collect();
        let w = QuantizedMatrix::new(m, n, 4, entries, 1.0).unwrap();
        let plan = plan_slices(m, n, 4, 3, 2, TileDims { rows: 4, cols: 3 }, &dev).unwrap();
        assert_eq!((plan.grid_rows, plan.grid_cols), (3, 3));
        let tiles = build(&plan, &w, 8);
        let x: Vec<i64> = (0..m as i64).map(|i| i % 8 - 4).collect();
        let out = mvm_bitsliced(&plan, &tiles, &x, MvmMode::Ideal, SeedStream::new(0)).unwrap();
        assert_eq!(out.y, integer_mvm(&w, &x));
        assert_eq!(out.accounting.adc_saturations, 0);
    }

    #[test]
    fn quantize_keeps_integers_and_scales_reals() {
        let q = QuantizedMatrix::quantize(1, 3, &[1.0, -2.0, 0.0], 3).unwrap();
        assert_eq!((q.entries.clone(), q.scale), (vec![1, -2, 0], 1.0));
        let q = QuantizedMatrix::quantize(1, 2, &[0.5, -0.25], 3).unwrap();
        assert_eq!(q.entries, vec![3, -2]);
        assert!((q.scale - 0.5 / 3.0).abs() < 1e-15);
        assert!(QuantizedMatrix::new(1, 1, 2, vec![2], 1.0).is_err());
    }

    #[test]
    fn inputs_out_of_range_are_rejected() {
        let dev = preset("ideal").unwrap();
        let w = QuantizedMatrix::new(1, 1, 2, vec![1], 1.0).unwrap();
        let plan = plan_slices(1, 1, 2, 2, 1, TileDims { rows: 1, cols: 1 }, &dev).unwrap();
        let tiles = build(&plan, &w, 4);
        assert!(mvm_bitsliced(&plan, &tiles, &[2], MvmMode::Ideal, SeedStream::new(0)).is_err());
        assert!(mvm_bitsliced(&plan, &tiles, &[1, 1], MvmMode::Ideal, SeedStream::new(0)).is_err());
    }
}
