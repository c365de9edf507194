//! Column-current deficit from wire resistance as arrays grow, and how close
//! the fast sweep-based solver gets to the full nodal solution.

use cimsim::crossbar::{mvm_ideal, mvm_nonideal, CrossbarConfig, CrossbarState, IrDropSolver, ReadOptions};
use cimsim::device::preset;
use cimsim::rng::SeedStream;
use rand::Rng;

fn main() -> cimsim::Result<()> {
    let r_dev = 1e6;
    let mut dev = preset("ideal")?;
    dev.g_max = 2.0 / r_dev;
    println!("{:>4} {:>10} {:>12} {:>14}", "N", "N^2 r/R", "deficit %", "approx err %");
    for n in [16usize, 32, 64, 128] {
        for ratio in [0.01, 0.1] {
            let r_wire = ratio * r_dev / (n * n) as f64;
            let cfg = CrossbarConfig { r_wire, ..CrossbarConfig::with_dims(n, n) };
            let mut tile = CrossbarState::new(cfg, dev.clone())?;
            let mut rng = SeedStream::new(n as u64).rng();
            for k in 0..n * n {
                tile.cells[k].g = rng.random_range(0.0..dev.g_max);
            }
            let v = vec![tile.config.v_read; n];
            let ideal = mvm_ideal(&tile, &v)?;
            let read = |solver| mvm_nonideal(&tile, &v, &ReadOptions { ir_drop: solver, ..ReadOptions::IDEAL }, 0);
            let exact = read(IrDropSolver::Exact)?;
            let approx = read(IrDropSolver::Approximate { sweeps: 3 })?;
            let deficit = ideal.iter().zip(&exact).map(|(a, b)| (a - b) / a).fold(0.0f64, f64::max);
            let peak = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = exact.iter().zip(&approx).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max) / peak;
            println!("{n:>4} {ratio:>10} {:>12.3} {:>14.4}", 100.0 * deficit, 100.0 * err);
        }
    }
    Ok(())
}
