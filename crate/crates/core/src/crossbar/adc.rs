use serde::{Deserialize, Serialize};

use super::{Accounting, CrossbarState};
use crate::error::{Error, Result};

/// Charge range mapped onto the ADC codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AdcRange {
    /// `[0, M g_max v_read t_int]`: every device at `g_max`, every input high.
    WorstCase,
    /// `[offset, offset + full_scale]` in coulombs.
    Calibrated { full_scale: f64, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdcRounding {
    Floor,
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdcOutput {
    pub codes: Vec<u64>,
    pub accounting: Accounting,
}

/// Quantize column currents with the tile's default worst-case range.
pub fn adc_quantize(i_out: &[f64], state: &CrossbarState) -> AdcOutput {
    quantize(i_out, state, AdcRange::WorstCase, AdcRounding::Floor, state.config.adc_bits)
}

/// Integrate each column current over `t_int` and map the charge linearly onto
/// `2^bits` codes. Codes above the top of the range clamp and are counted as
/// saturations; negative charge clamps to code 0.
pub fn quantize(
    i_out: &[f64],
    state: &CrossbarState,
    range: AdcRange,
    rounding: AdcRounding,
    bits: u32,
) -> AdcOutput {
    let cfg = &state.config;
    let (full_scale, offset) = match range {
        AdcRange::WorstCase => (state.full_scale_charge(), 0.0),
        AdcRange::Calibrated { full_scale, offset } => (full_scale, offset),
    };
    let levels = (1u64 << bits) as f64;
    let max_code = (1u64 << bits) - 1;
    let mut saturations = 0;
    let codes = i_out
        .iter()
        .map(|i| {
            let x = (i * cfg.t_int - offset) / full_scale * levels;
            let raw = match rounding {
                AdcRounding::Floor => x.floor(),
                AdcRounding::Nearest => x.round(),
            };
            if raw > max_code as f64 {
                saturations += 1;
                max_code
            } else if raw > 0.0 {
                raw as u64
            } else {
                0
            }
        })
        .collect();
    let samples = i_out.len() as u64;
    AdcOutput {
        codes,
        accounting: Accounting {
            adc_energy: samples as f64 * cfg.adc_energy,
            adc_samples: samples,
            adc_saturations: saturations,
            adc_slots: cfg.adc_share as u64,
            ..Default::default()
        },
    }
}

/// ADC resolution needed to represent an `M`-row MVM with `I`-bit inputs and
/// `W`-bit weights: `log2 M + I + W - 2`, with `ceil(log2 M)` for rows that
/// are not a power of two.
pub fn required_adc_bits(rows: usize, input_bits: u32, weight_bits: u32) -> Result<u32> {
    if rows == 0 || input_bits == 0 || weight_bits == 0 {
        return Err(Error::config("rows, input bits and weight bits must be positive"));
    }
    let log2_rows = usize::BITS - (rows - 1).leading_zeros();
    Ok(log2_rows + input_bits + weight_bits - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::CrossbarConfig;
    use crate::device::preset;

    fn tile(bits: u32) -> CrossbarState {
        let mut cfg = CrossbarConfig::with_dims(16, 4);
        cfg.adc_bits = bits;
        cfg.adc_share = 2;
        CrossbarState::new(cfg, preset("ideal").unwrap()).unwrap()
    }

    #[test]
    fn code_bounds() {
        let t = tile(8);
        let full = t.full_scale_charge() / t.config.t_int;
        let out = adc_quantize(&[0.0, full, 0.5 * full, 2.0 * full], &t);
        assert_eq!(out.codes[0], 0);
        assert_eq!(out.codes[1], 255);
        assert!(out.codes[2].abs_diff(128) <= 1);
        assert_eq!(out.codes[3], 255);
        assert_eq!(out.accounting.adc_samples, 4);
        assert_eq!(out.accounting.adc_slots, 2);
        assert!((out.accounting.adc_energy - 4.0 * t.config.adc_energy).abs() < 1e-24);
        assert!(out.accounting.adc_saturations >= 1);
    }

    #[test]
    fn monotone_in_current() {
        let t = tile(5);
        let full = t.full_scale_charge() / t.config.t_int;
        let currents: Vec<f64> = (0..500).map(|k| full * (k as f64 / 400.0 - 0.1)).collect();
        let codes = adc_quantize(&currents, &t).codes;
        assert!(codes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn required_bits() {
        assert_eq!(required_adc_bits(128, 1, 2).unwrap(), 8);
        assert_eq!(required_adc_bits(1, 1, 1).unwrap(), 0);
        assert_eq!(required_adc_bits(1024, 1, 4).unwrap(), 13);
        assert_eq!(required_adc_bits(100, 1, 1).unwrap(), 7);
        assert!(required_adc_bits(0, 1, 1).is_err());
    }
}
