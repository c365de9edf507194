//! Conductance response, noise and drift models for NVM cross-point devices.
//!
//! Every operation is a pure function from one [`ConductanceState`] to the
//! next, so devices can be evaluated in parallel and the caller decides how
//! writes to a shared array are serialized.

mod presets;

pub use presets::{load_preset_file, preset, save_preset_file, PRESET_NAMES};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

/// Reference time of the power-law drift model, in seconds.
pub const DRIFT_T0: f64 = 1.0;

/// Average Gregorian month in seconds; drift rates are quoted per month.
pub const SECONDS_PER_MONTH: f64 = 2_629_746.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    LinearSymmetric,
    NonlinearSymmetric,
    AsymmetricSoftBounds,
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    None,
    PowerLaw,
    LinearRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

/// Provenance of a preset: the published ranges its values were picked from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PresetMetadata {
    /// Tabulated ON/OFF ratio range, `[low, high]`.
    pub on_off_range: Option<[f64; 2]>,
    #[serde(default)]
    pub notes: String,
}

/// Static parameters of one NVM technology.
///
/// Conductances are in siemens, energies in joules, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub name: String,
    pub g_min: f64,
    pub g_max: f64,
    /// 0 means a continuous (analog) device.
    pub bits_per_cell: u32,
    pub response_kind: ResponseKind,
    /// For `nonlinear_symmetric`, `alpha_up` is the curvature of the
    /// conductance-vs-pulse curve; for soft bounds both are saturation rates.
    pub alpha_up: f64,
    pub alpha_down: f64,
    pub dg_mean: f64,
    pub dg_rel_sigma: f64,
    pub spatial_rel_sigma: f64,
    /// Relative sigma of temporal read noise.
    pub read_rel_sigma: f64,
    pub drift_kind: DriftKind,
    pub drift_nu: f64,
    /// Device-to-device relative spread of `drift_nu`.
    #[serde(default)]
    pub drift_nu_rel_sigma: f64,
    /// Fractional conductance loss per second.
    pub drift_rate: f64,
    pub write_energy: f64,
    pub write_latency: f64,
    pub endurance: u64,
    #[serde(default)]
    pub metadata: PresetMetadata,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("device '{}': {what}", self.name)));
        if !(self.g_min >= 0.0 && self.g_min < self.g_max && self.g_max.is_finite()) {
            return bad("requires 0 <= g_min < g_max");
        }
        let sigmas = [
            self.dg_rel_sigma,
            self.spatial_rel_sigma,
            self.read_rel_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("sigmas must be non-negative");
        }
        if !(self.drift_nu >= 0.0) || !(self.drift_rate >= 0.0) || !(self.drift_nu_rel_sigma >= 0.0) {
            return bad("drift parameters must be non-negative");
        }
        if self.endurance < 1 {
            return bad("endurance must be at least 1");
        }
        if !(self.alpha_up >= 0.0 && self.alpha_down >= 0.0 && self.dg_mean >= 0.0) {
            return bad("update rates must be non-negative");
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.g_max - self.g_min
    }

    pub fn on_off_ratio(&self) -> Option<f64> {
        (self.g_min > 0.0).then(|| self.g_max / self.g_min)
    }

    pub fn r_on(&self) -> f64 {
        1.0 / self.g_max
    }

    pub fn clamp(&self, g: f64) -> f64 {
        g.clamp(self.g_min, self.g_max)
    }

    pub fn is_bidirectional(&self) -> bool {
        self.response_kind != ResponseKind::OneSided
    }

    /// Increment size used to scale weight updates: `dg_mean`, or the step at
    /// the symmetry point for soft-bounds devices.
    pub fn nominal_step(&self) -> f64 {
        match self.response_kind {
            ResponseKind::AsymmetricSoftBounds => match symmetry_point(self) {
                SymmetryPoint::At(g) => self.alpha_up * (self.g_max - g),
                _ => self.dg_mean,
            },
            _ => self.dg_mean,
        }
    }

    /// A linear symmetric device with the same window, noise and step size.
    pub fn symmetric_counterpart(&self) -> DeviceParams {
        DeviceParams {
            name: format!("{}-symmetric", self.name),
            response_kind: ResponseKind::LinearSymmetric,
            dg_mean: self.nominal_step(),
            alpha_up: 0.0,
            alpha_down: 0.0,
            ..self.clone()
        }
    }

    fn curvature(&self) -> f64 {
        self.alpha_up
    }
}

/// Dynamic state of one cross-point device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductanceState {
    /// Conductance as last programmed, before drift.
    pub g: f64,
    pub pulses_seen: u64,
    /// Seconds since the last programming event.
    pub age: f64,
    /// Device-to-device multiplier on the increment size, sampled once.
    pub dg_scale: f64,
    /// Device-to-device multiplier on the drift exponent, sampled once.
    pub nu_scale: f64,
}

impl ConductanceState {
    pub fn new(g: f64) -> Self {
        ConductanceState {
            g,
            pulses_seen: 0,
            age: 0.0,
            dg_scale: 1.0,
            nu_scale: 1.0,
        }
    }

    /// A fresh (fully reset) device.
    pub fn fresh(params: &DeviceParams) -> Self {
        Self::new(params.g_min)
    }

    /// Conductance seen by a read right now, drift included.
    pub fn conductance(&self, params: &DeviceParams) -> f64 {
        let g = match params.drift_kind {
            DriftKind::None => self.g,
            DriftKind::PowerLaw => {
                let t = self.age.max(DRIFT_T0);
                self.g * (t / DRIFT_T0).powf(-params.drift_nu * self.nu_scale)
            }
            DriftKind::LinearRate => self.g * (1.0 - params.drift_rate * self.age).max(0.0),
        };
        params.clamp(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseOptions {
    /// Pulse strength relative to a nominal pulse (amplitude/width modulation).
    pub amplitude: f64,
    pub enforce_endurance: bool,
}

impl Default for PulseOptions {
    fn default() -> Self {
        PulseOptions {
            amplitude: 1.0,
            enforce_endurance: true,
        }
    }
}

fn lognormal_factor(rel_sigma: f64, rng: &mut impl Rng) -> f64 {
    if rel_sigma == 0.0 {
        return 1.0;
    }
    let s2 = (1.0 + rel_sigma * rel_sigma).ln();
    LogNormal::new(-0.5 * s2, s2.sqrt())
        .expect("finite lognormal parameters")
        .sample(rng)
}

// Nonlinear symmetric devices move along a hidden pulse coordinate s in [0, 1];
// conductance is an S-shaped function of s, identical for both directions.
fn nl_u_of_s(beta: f64, s: f64) -> f64 {
    if beta < 1e-9 {
        return s;
    }
    0.5 + 0.5 * (beta * (s - 0.5)).tanh() / (0.5 * beta).tanh()
}

fn nl_s_of_u(beta: f64, u: f64) -> f64 {
    if beta < 1e-9 {
        return u;
    }
    0.5 + ((2.0 * u - 1.0) * (0.5 * beta).tanh()).atanh() / beta
}

/// Signed zero-noise conductance change of one pulse at conductance `g`.
fn raw_increment(params: &DeviceParams, g: f64, direction: Direction, strength: f64) -> f64 {
    match params.response_kind {
        ResponseKind::LinearSymmetric | ResponseKind::OneSided => {
            direction.sign() * params.dg_mean * strength
        }
        ResponseKind::NonlinearSymmetric => {
            let range = params.range();
            let u = (g - params.g_min) / range;
            let s = nl_s_of_u(params.curvature(), u);
            let ds = direction.sign() * strength * params.dg_mean / range;
            let s_new = (s + ds).clamp(0.0, 1.0);
            (nl_u_of_s(params.curvature(), s_new) - u) * range
        }
        ResponseKind::AsymmetricSoftBounds => match direction {
            Direction::Up => params.alpha_up * (params.g_max - g) * strength,
            Direction::Down => -params.alpha_down * (g - params.g_min) * strength,
        },
    }
}

/// Zero-noise magnitude of a nominal pulse at conductance `g`.
pub fn nominal_increment(params: &DeviceParams, g: f64, direction: Direction) -> f64 {
    raw_increment(params, g, direction, 1.0).abs()
}

/// One programming pulse. Drift accumulated since the last write is
/// materialized first; the result is clamped to the conductance window.
pub fn apply_pulse(
    state: &ConductanceState,
    params: &DeviceParams,
    direction: Direction,
    rng: &mut impl Rng,
    opts: PulseOptions,
) -> Result<ConductanceState> {
    if opts.enforce_endurance && state.pulses_seen >= params.endurance {
        return Err(Error::DeviceWorn {
            pulses: state.pulses_seen,
            endurance: params.endurance,
        });
    }
    if params.response_kind == ResponseKind::OneSided && direction == Direction::Down {
        return Err(Error::Unsupported(format!(
            "device '{}' is one-sided; depression requires a full reset",
            params.name
        )));
    }
    let g0 = state.conductance(params);
    let strength = opts.amplitude * state.dg_scale * lognormal_factor(params.dg_rel_sigma, rng);
    let g = params.clamp(g0 + raw_increment(params, g0, direction, strength));
    Ok(ConductanceState {
        g,
        pulses_seen: state.pulses_seen.saturating_add(1),
        age: 0.0,
        ..*state
    })
}

pub fn apply_pulse_seeded(
    state: &ConductanceState,
    params: &DeviceParams,
    direction: Direction,
    rng_seed: u64,
) -> Result<ConductanceState> {
    apply_pulse(
        state,
        params,
        direction,
        &mut rng_from_seed(rng_seed),
        PulseOptions::default(),
    )
}

/// Full RESET to `g_min`; counts as one pulse.
pub fn reset_to_min(state: &ConductanceState, params: &DeviceParams) -> ConductanceState {
    ConductanceState {
        g: params.g_min,
        pulses_seen: state.pulses_seen.saturating_add(1),
        age: 0.0,
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymmetryPoint {
    /// Up and down curves coincide at every conductance.
    Everywhere,
    At(f64),
    None,
}

pub fn symmetry_point(params: &DeviceParams) -> SymmetryPoint {
    match params.response_kind {
        ResponseKind::LinearSymmetric | ResponseKind::NonlinearSymmetric => {
            SymmetryPoint::Everywhere
        }
        ResponseKind::OneSided => SymmetryPoint::None,
        ResponseKind::AsymmetricSoftBounds => {
            let total = params.alpha_up + params.alpha_down;
            if total <= 0.0 {
                return SymmetryPoint::None;
            }
            // alpha_up (g_max - g) = alpha_down (g - g_min)
            SymmetryPoint::At(
                (params.alpha_up * params.g_max + params.alpha_down * params.g_min) / total,
            )
        }
    }
}

/// Effective number of programming steps across the window:
/// `2 (G_max - G_min) / dG`, with dG taken at the symmetry point for
/// asymmetric devices. The factor 2 is applied literally.
pub fn programming_steps(params: &DeviceParams) -> Result<u64> {
    let range = params.range();
    let step = match params.response_kind {
        ResponseKind::OneSided => {
            return Err(Error::Unsupported(format!(
                "device '{}' is one-sided and cannot be trained by incremental updates",
                params.name
            )))
        }
        ResponseKind::LinearSymmetric | ResponseKind::NonlinearSymmetric => params.dg_mean,
        ResponseKind::AsymmetricSoftBounds => {
            if params.alpha_up <= 0.0 || params.alpha_down <= 0.0 {
                return Err(Error::config("asymmetric device needs positive alphas"));
            }
            params.nominal_step()
        }
    };
    if range <= 0.0 {
        return Ok(0);
    }
    if !(step > 0.0) {
        return Err(Error::config("programming step must be positive"));
    }
    Ok((2.0 * range / step).round() as u64)
}

/// Advance the device clock. Drift itself is evaluated lazily from the age
/// by [`ConductanceState::conductance`].
pub fn apply_drift(
    state: &ConductanceState,
    _params: &DeviceParams,
    elapsed: f64,
) -> Result<ConductanceState> {
    if !(elapsed >= 0.0) {
        return Err(Error::config("elapsed time must be non-negative"));
    }
    Ok(ConductanceState {
        age: state.age + elapsed,
        ..*state
    })
}

/// Read with temporal (Gaussian, relative) noise, clamped to the window.
pub fn read_conductance(state: &ConductanceState, params: &DeviceParams, rng: &mut SimRng) -> f64 {
    read_with_sigma(state.conductance(params), params, params.read_rel_sigma, rng)
}

pub(crate) fn read_with_sigma(g: f64, params: &DeviceParams, sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        return g;
    }
    let z: f64 = StandardNormal.sample(rng);
    params.clamp(g * (1.0 + sigma * z))
}

pub fn read_conductance_seeded(state: &ConductanceState, params: &DeviceParams, rng_seed: u64) -> f64 {
    read_conductance(state, params, &mut rng_from_seed(rng_seed))
}

/// Sample a device-to-device increment multiplier.
pub fn sample_dg_scale(params: &DeviceParams, rng: &mut impl Rng) -> f64 {
    lognormal_factor(params.spatial_rel_sigma, rng)
}

pub fn sample_nu_scale(params: &DeviceParams, rng: &mut impl Rng) -> f64 {
    lognormal_factor(params.drift_nu_rel_sigma, rng)
}
