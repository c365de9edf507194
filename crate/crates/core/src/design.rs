//! Closed-form co-design bounds for a tiled crossbar accelerator: throughput,
//! device resistance, read voltage, area and energy per operation, plus grid
//! sweeps over them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossbar::{noise_limited_voltage, DEFAULT_SNR_TARGET};
use crate::error::{Error, Result};

/// Largest tolerated `N^2 r_wire / R_dev` (relative wiring drop).
pub const MAX_WIRE_DROP_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignPoint {
    /// Defaults to `array_n^2 * tile_num`.
    pub weights_total: Option<f64>,
    /// MACs per inference; unknown when `None`.
    pub mac_total: Option<f64>,
    pub share_max: f64,
    pub t_int: f64,
    pub temperature: f64,
    /// Defaults to the noise-limited minimum.
    pub v_read: Option<f64>,
    pub r_wire: f64,
    /// Defaults to the wiring-limited minimum.
    pub r_dev: Option<f64>,
    /// Defaults to `2 r_dev`.
    pub r_aver: Option<f64>,
    pub array_n: u64,
    pub tile_num: u64,
    pub pitch: f64,
    pub array_efficiency: f64,
    pub e_adc: f64,
    pub snr_target: f64,
}

impl Default for DesignPoint {
    fn default() -> Self {
        DesignPoint {
            weights_total: None,
            mac_total: None,
            share_max: 1.0,
            t_int: 100e-9,
            temperature: 300.0,
            v_read: None,
            r_wire: 0.1,
            r_dev: None,
            r_aver: None,
            array_n: 1024,
            tile_num: 128,
            pitch: 200e-9,
            array_efficiency: 1.0,
            e_adc: 5e-12,
            snr_target: DEFAULT_SNR_TARGET,
        }
    }
}

impl DesignPoint {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("share_max", self.share_max),
            ("t_int", self.t_int),
            ("temperature", self.temperature),
            ("pitch", self.pitch),
            ("array_efficiency", self.array_efficiency),
            ("snr_target", self.snr_target),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let optional = [
            ("weights_total", self.weights_total),
            ("mac_total", self.mac_total),
            ("v_read", self.v_read),
            ("r_dev", self.r_dev),
            ("r_aver", self.r_aver),
        ];
        for (name, v) in optional {
            if let Some(v) = v.filter(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.r_wire >= 0.0) || !(self.e_adc >= 0.0) {
            return Err(Error::config("r_wire and e_adc must be non-negative"));
        }
        if self.array_efficiency > 1.0 {
            return Err(Error::config("array_efficiency must be at most 1"));
        }
        if self.array_n == 0 {
            return Err(Error::config("array_n must be at least 1"));
        }
        Ok(())
    }

    pub fn weights_total(&self) -> f64 {
        self.weights_total
            .unwrap_or((self.array_n as f64).powi(2) * self.tile_num as f64)
    }

    pub fn r_dev(&self) -> f64 {
        self.r_dev.unwrap_or_else(|| min_device_resistance(self))
    }

    pub fn r_aver(&self) -> f64 {
        self.r_aver.unwrap_or_else(|| 2.0 * self.r_dev())
    }

    pub fn v_read(&self) -> f64 {
        self.v_read.unwrap_or_else(|| min_voltage(self))
    }
}

/// `min(2 MAC / (t_int share), 2 w_tot / t_int)`; the second term alone when
/// the MAC count is unknown.
pub fn ops_per_second_bound(p: &DesignPoint) -> f64 {
    let weight_bound = 2.0 * p.weights_total() / p.t_int;
    match p.mac_total {
        Some(mac) => (2.0 * mac / (p.t_int * p.share_max)).min(weight_bound),
        None => weight_bound,
    }
}

/// `N^2 r_wire / MAX_WIRE_DROP_RATIO`.
pub fn min_device_resistance(p: &DesignPoint) -> f64 {
    (p.array_n as f64).powi(2) * p.r_wire / MAX_WIRE_DROP_RATIO
}

pub fn min_voltage(p: &DesignPoint) -> f64 {
    noise_limited_voltage(p.array_n as f64, p.r_dev(), p.temperature, p.t_int, p.snr_target)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaBound {
    /// `4 p^2 N^2 tiles / efficiency`.
    pub with_efficiency: f64,
    /// Same with efficiency 1.
    pub cells_only: f64,
}

pub fn area_lower_bound(p: &DesignPoint) -> AreaBound {
    let cells_only = 4.0 * p.pitch.powi(2) * (p.array_n as f64).powi(2) * p.tile_num as f64;
    AreaBound { with_efficiency: cells_only / p.array_efficiency, cells_only }
}

/// `2 N^2 / ((V^2 / R_aver) t_int N^2 + E_ADC N)` operations per joule.
pub fn energy_efficiency_bound(p: &DesignPoint) -> f64 {
    let n = p.array_n as f64;
    let v = p.v_read();
    let array = v * v / p.r_aver() * p.t_int * n * n;
    2.0 * n * n / (array + p.e_adc * n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: DesignPoint,
    pub ops_per_second: f64,
    pub min_r_dev: f64,
    pub min_v: f64,
    pub area: AreaBound,
    pub ops_per_joule: f64,
}

pub fn evaluate(point: &DesignPoint) -> Result<SweepRow> {
    point.validate()?;
    Ok(SweepRow {
        point: point.clone(),
        ops_per_second: ops_per_second_bound(point),
        min_r_dev: min_device_resistance(point),
        min_v: min_voltage(point),
        area: area_lower_bound(point),
        ops_per_joule: energy_efficiency_bound(point),
    })
}

/// Lists of values per parameter; the sweep is their cartesian product.
/// Missing parameters take the [`DesignPoint`] default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub weights_total: Option<Vec<f64>>,
    pub mac_total: Option<Vec<f64>>,
    pub share_max: Option<Vec<f64>>,
    pub t_int: Option<Vec<f64>>,
    pub temperature: Option<Vec<f64>>,
    pub v_read: Option<Vec<f64>>,
    pub r_wire: Option<Vec<f64>>,
    pub r_dev: Option<Vec<f64>>,
    pub r_aver: Option<Vec<f64>>,
    pub array_n: Option<Vec<u64>>,
    pub tile_num: Option<Vec<u64>>,
    pub pitch: Option<Vec<f64>>,
    pub array_efficiency: Option<Vec<f64>>,
    pub e_adc: Option<Vec<f64>>,
    pub snr_target: Option<Vec<f64>>,
}

fn expand<T: Clone>(
    points: Vec<DesignPoint>,
    values: &Option<Vec<T>>,
    set: impl Fn(&mut DesignPoint, T),
) -> Vec<DesignPoint> {
    match values {
        None => points,
        Some(vs) => {
            let mut out = Vec::with_capacity(points.len() * vs.len());
            for p in points {
                for v in vs {
                    let mut q = p.clone();
                    set(&mut q, v.clone());
                    out.push(q);
                }
            }
            out
        }
    }
}

impl Grid {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_toml(path)
    }

    fn lists_present(&self) -> usize {
        let lens = [
            self.weights_total.as_ref().map(Vec::len),
            self.mac_total.as_ref().map(Vec::len),
            self.share_max.as_ref().map(Vec::len),
            self.t_int.as_ref().map(Vec::len),
            self.temperature.as_ref().map(Vec::len),
            self.v_read.as_ref().map(Vec::len),
            self.r_wire.as_ref().map(Vec::len),
            self.r_dev.as_ref().map(Vec::len),
            self.r_aver.as_ref().map(Vec::len),
            self.array_n.as_ref().map(Vec::len),
            self.tile_num.as_ref().map(Vec::len),
            self.pitch.as_ref().map(Vec::len),
            self.array_efficiency.as_ref().map(Vec::len),
            self.e_adc.as_ref().map(Vec::len),
            self.snr_target.as_ref().map(Vec::len),
        ];
        if lens.contains(&Some(0)) {
            return 0;
        }
        lens.iter().flatten().count()
    }

    /// Grid points in order, the last-listed parameter varying fastest.
    pub fn points(&self) -> Result<Vec<DesignPoint>> {
        if self.lists_present() == 0 {
            return Err(Error::config("empty sweep grid"));
        }
        let mut pts = vec![DesignPoint::default()];
        pts = expand(pts, &self.weights_total, |p, v| p.weights_total = Some(v));
        pts = expand(pts, &self.mac_total, |p, v| p.mac_total = Some(v));
        pts = expand(pts, &self.share_max, |p, v| p.share_max = v);
        pts = expand(pts, &self.t_int, |p, v| p.t_int = v);
        pts = expand(pts, &self.temperature, |p, v| p.temperature = v);
        pts = expand(pts, &self.v_read, |p, v| p.v_read = Some(v));
        pts = expand(pts, &self.r_wire, |p, v| p.r_wire = v);
        pts = expand(pts, &self.r_dev, |p, v| p.r_dev = Some(v));
        pts = expand(pts, &self.r_aver, |p, v| p.r_aver = Some(v));
        pts = expand(pts, &self.array_n, |p, v| p.array_n = v);
        pts = expand(pts, &self.tile_num, |p, v| p.tile_num = v);
        pts = expand(pts, &self.pitch, |p, v| p.pitch = v);
        pts = expand(pts, &self.array_efficiency, |p, v| p.array_efficiency = v);
        pts = expand(pts, &self.e_adc, |p, v| p.e_adc = v);
        pts = expand(pts, &self.snr_target, |p, v| p.snr_target = v);
        Ok(pts)
    }
}

pub fn sweep(grid: &Grid) -> Result<Vec<SweepRow>> {
    grid.points()?.iter().map(evaluate).collect()
}

pub const SWEEP_CSV_HEADER: &str = "weights_total,mac_total,share_max,t_int,temperature,v_read,r_wire,r_dev,r_aver,array_n,tile_num,pitch,array_efficiency,e_adc,snr_target,ops_per_second,min_r_dev,min_v,area_m2,area_cells_only_m2,ops_per_joule";

/// One row per point; resolved defaults are written out, an unknown MAC
/// count is left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let p = &r.point;
        let mac = p.mac_total.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.weights_total(),
            mac,
            p.share_max,
            p.t_int,
            p.temperature,
            p.v_read(),
            p.r_wire,
            p.r_dev(),
            p.r_aver(),
            p.array_n,
            p.tile_num,
            p.pitch,
            p.array_efficiency,
            p.e_adc,
            p.snr_target,
            r.ops_per_second,
            r.min_r_dev,
            r.min_v,
            r.area.with_efficiency,
            r.area.cells_only,
            r.ops_per_joule
        ));
    }
    out
}
