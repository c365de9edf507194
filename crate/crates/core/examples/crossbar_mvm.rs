//! One 64x64 tile: ideal MVM, the same read with wire resistance and noise,
//! ADC codes, and energy accounting.

use cimsim::crossbar::{
    adc_quantize, min_read_voltage, mvm_ideal, mvm_nonideal, CrossbarConfig, CrossbarState, IrDropSolver,
    ReadOptions, DEFAULT_SNR_TARGET,
};
use cimsim::device::preset;
use cimsim::rng::SeedStream;
use rand::Rng;

fn main() -> cimsim::Result<()> {
    let config = CrossbarConfig { r_wire: 0.2, ..CrossbarConfig::default() };
    let mut tile = CrossbarState::with_variation(config, preset("rram")?, 1)?;
    let mut rng = SeedStream::new(1).named("weights").rng();
    let (m, n) = (tile.rows(), tile.cols());
    let (lo, hi) = (tile.device.g_min, tile.device.g_max);
    for i in 0..m {
        for j in 0..n {
            tile.set_conductance(i, j, rng.random_range(lo..hi));
        }
    }
    let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..tile.config.v_read)).collect();

    let ideal = mvm_ideal(&tile, &v)?;
    let opts = ReadOptions { ir_drop: IrDropSolver::Exact, ..ReadOptions::nonideal() };
    let real = mvm_nonideal(&tile, &v, &opts, 42)?;
    let worst = ideal
        .iter()
        .zip(&real)
        .map(|(a, b)| (a - b) / a)
        .fold(0.0f64, f64::max);
    println!("column 0: ideal {:.4e} A, with IR drop and noise {:.4e} A", ideal[0], real[0]);
    println!("largest relative current deficit {:.3}%", 100.0 * worst);

    let adc = adc_quantize(&real, &tile);
    println!("first ADC codes ({} bits): {:?}", tile.config.adc_bits, &adc.codes[..8]);
    let mut acc = adc.accounting;
    acc.array_energy = tile.array_energy(&v);
    println!(
        "energy: array {:.3e} J, ADC {:.3e} J over {} samples, {} conversion slots",
        acc.array_energy, acc.adc_energy, acc.adc_samples, acc.adc_slots
    );
    println!(
        "noise-limited read voltage for this tile: {:.4} V",
        min_read_voltage(&tile, DEFAULT_SNR_TARGET)?
    );
    Ok(())
}
