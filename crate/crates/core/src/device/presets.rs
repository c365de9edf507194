//! Technology presets.
//!
//! Conductance windows, bit capacity and ON/OFF ratios follow the device
//! summary table; write energy, write latency and endurance follow the
//! on-chip memory comparison table. Where a range is tabulated the preset
//! takes its midpoint (geometric for ranges spanning decades) and keeps the
//! range in `metadata`. `g_min` is derived as `g_max / (ON/OFF)`.

use std::path::Path;

use super::{DeviceParams, DriftKind, PresetMetadata, ResponseKind, SECONDS_PER_MONTH};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 5] = ["pcm", "rram", "ecram", "mram", "ideal"];

pub fn preset(name: &str) -> Result<DeviceParams> {
    let p = match name {
        "ideal" => DeviceParams {
            name: "ideal".into(),
            g_min: 0.0,
            // 100 kOhm on-resistance
            g_max: 1e-5,
            bits_per_cell: 0,
            response_kind: ResponseKind::LinearSymmetric,
            alpha_up: 0.0,
            alpha_down: 0.0,
            dg_mean: 1e-8,
            dg_rel_sigma: 0.0,
            spatial_rel_sigma: 0.0,
            read_rel_sigma: 0.0,
            drift_kind: DriftKind::None,
            drift_nu: 0.0,
            drift_nu_rel_sigma: 0.0,
            drift_rate: 0.0,
            write_energy: 1e-15,
            write_latency: 1e-8,
            endurance: u64::MAX,
            metadata: PresetMetadata {
                on_off_range: None,
                notes: "noise-free linear reference device".into(),
            },
        },
        "pcm" => DeviceParams {
            name: "pcm".into(),
            // G high 50 uS, ON/OFF 1e3..1e5
            g_max: 50e-6,
            g_min: 50e-6 / 1e4,
            bits_per_cell: 4,
            response_kind: ResponseKind::OneSided,
            alpha_up: 0.0,
            alpha_down: 0.0,
            dg_mean: 50e-6 / 100.0,
            dg_rel_sigma: 0.1,
            spatial_rel_sigma: 0.05,
            read_rel_sigma: 0.01,
            drift_kind: DriftKind::PowerLaw,
            drift_nu: 0.05,
            drift_nu_rel_sigma: 0.3,
            drift_rate: 0.0,
            write_energy: 6e-9,
            write_latency: 150e-9,
            endurance: 10_000_000,
            metadata: PresetMetadata {
                on_off_range: Some([1e3, 1e5]),
                notes: "one-sided SET, RESET to g_min; amorphous-phase power-law drift".into(),
            },
        },
        "rram" => DeviceParams {
            name: "rram".into(),
            // active devices: G high 60..900 uS; ON/OFF > 1e2
            g_max: 480e-6,
            g_min: 480e-6 / 1e2,
            bits_per_cell: 4,
            response_kind: ResponseKind::AsymmetricSoftBounds,
            alpha_up: 0.04,
            alpha_down: 0.03,
            dg_mean: 480e-6 / 100.0,
            dg_rel_sigma: 0.02,
            spatial_rel_sigma: 0.05,
            read_rel_sigma: 0.005,
            drift_kind: DriftKind::LinearRate,
            drift_rate: 0.007 / SECONDS_PER_MONTH,
            drift_nu: 0.0,
            drift_nu_rel_sigma: 0.0,
            write_energy: 2e-9,
            write_latency: 100e-9,
            endurance: 100_000,
            metadata: PresetMetadata {
                on_off_range: Some([1e2, f64::INFINITY]),
                notes: "bipolar filamentary switching with a symmetry point; 0.7%/month drift".into(),
            },
        },
        "ecram" => DeviceParams {
            name: "ecram".into(),
            // G high ~300 uS, ON/OFF 1e2..1e3
            g_max: 300e-6,
            g_min: 300e-6 / 316.227_766_016_837_94,
            bits_per_cell: 0,
            response_kind: ResponseKind::AsymmetricSoftBounds,
            alpha_up: 0.06,
            alpha_down: 0.04,
            dg_mean: 300e-6 / 100.0,
            dg_rel_sigma: 0.20,
            spatial_rel_sigma: 0.05,
            read_rel_sigma: 0.01,
            drift_kind: DriftKind::None,
            drift_nu: 0.0,
            drift_nu_rel_sigma: 0.0,
            drift_rate: 0.0,
            write_energy: 1e-15,
            // 5 ns .. 1 s, geometric midpoint
            write_latency: 7.07e-5,
            // 40 .. 1e5, geometric midpoint
            endurance: 2_000,
            metadata: PresetMetadata {
                on_off_range: Some([1e2, 1e3]),
                notes: "three-terminal ionic device; analog, asymmetric with a symmetry point".into(),
            },
        },
        "mram" => DeviceParams {
            name: "mram".into(),
            // low-resistance binary junction, ON/OFF < 10
            g_max: 200e-6,
            g_min: 200e-6 / 2.5,
            bits_per_cell: 1,
            response_kind: ResponseKind::LinearSymmetric,
            alpha_up: 0.0,
            alpha_down: 0.0,
            dg_mean: 200e-6 - 200e-6 / 2.5,
            dg_rel_sigma: 0.0,
            spatial_rel_sigma: 0.02,
            read_rel_sigma: 0.005,
            drift_kind: DriftKind::None,
            drift_nu: 0.0,
            drift_nu_rel_sigma: 0.0,
            drift_rate: 0.0,
            write_energy: 1e-9,
            write_latency: 10e-9,
            endurance: 1_000_000_000_000_000,
            metadata: PresetMetadata {
                on_off_range: Some([1.0, 10.0]),
                notes: "binary: one pulse switches the full window".into(),
            },
        },
        other => {
            return Err(Error::config(format!(
                "unknown device preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    debug_assert!(p.validate().is_ok());
    Ok(p)
}

pub fn load_preset_file(path: &Path) -> Result<DeviceParams> {
    let params: DeviceParams = crate::io::read_toml(path)?;
    params.validate()?;
    Ok(params)
}

pub fn save_preset_file(params: &DeviceParams, path: &Path) -> Result<()> {
    crate::io::write_text(path, &crate::io::to_toml(params)?)
}
