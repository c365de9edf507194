//! A rank-1 outer-product update applied in one parallel step by coincident
//! pulse trains, compared with the exact `-eta * x * delta^T`.

use cimsim::crossbar::{CrossbarConfig, CrossbarState};
use cimsim::device::{preset, Direction};
use cimsim::rng::SeedStream;
use cimsim::update::{apply_update_pair, build_pulse_plan_with, Encoding, PlanOptions, UpdateOptions};

fn main() -> cimsim::Result<()> {
    let (m, n) = (8, 6);
    let x: Vec<f64> = (0..m).map(|i| (i as f64 - 3.5) / 4.0).collect();
    let delta: Vec<f64> = (0..n).map(|j| 0.5 - j as f64 / 5.0).collect();
    let (eta, length) = (0.05, 64);
    let device = preset("ideal")?;
    let gpw = 0.5 * device.range();

    let cfg = CrossbarConfig::with_dims(m, n);
    let mid = 0.5 * (device.g_min + device.g_max);
    for encoding in [Encoding::Stochastic, Encoding::Deterministic] {
        let opts = PlanOptions { pulses_per_unit_weight: gpw / device.nominal_step(), encoding };
        let plan = build_pulse_plan_with(&x, &delta, eta, length, 1, &opts)?;
        println!("{encoding:?}: {} clipped rates, latency {} slots", plan.clipped, plan.latency_slots());
        println!(
            "  cell (0,0): {} coincidences (expected {:.2}), direction {:?}",
            plan.coincidences(0, 0),
            plan.expected_coincidences(0, 0),
            plan.direction(0, 0).unwrap_or(Direction::Up)
        );

        let mut plus = CrossbarState::new(cfg.clone(), device.clone())?;
        let mut minus = CrossbarState::new(cfg.clone(), device.clone())?;
        for k in 0..m * n {
            plus.cells[k].g = mid;
            minus.cells[k].g = mid;
        }
        let report = apply_update_pair(&mut plus, &mut minus, &plan, &UpdateOptions::default(), SeedStream::new(2))?;
        let mut sq = 0.0;
        let mut norm = 0.0;
        for a in 0..m {
            for b in 0..n {
                let k = a * n + b;
                let dw = (plus.cells[k].g - minus.cells[k].g) / gpw;
                let exact = -eta * x[a] * delta[b];
                sq += (dw - exact).powi(2);
                norm += exact.powi(2);
            }
        }
        println!(
            "  {} pulses, {:.3e} J; relative error vs exact update {:.3}",
            report.pulses,
            report.energy,
            (sq / norm).sqrt()
        );
    }
    Ok(())
}
