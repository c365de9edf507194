//! 8-bit signed weights split into 2-bit slices over a grid of 32x32 tiles,
//! fed 8-bit signed inputs one bit at a time. With an ideal read the result
//! equals the integer product; with device noise and IR drop it drifts.

use cimsim::bitslice::{integer_mvm, mvm_bitsliced, plan_slices, program_weights, MvmMode, QuantizedMatrix, TileDims};
use cimsim::crossbar::{required_adc_bits, CrossbarConfig, IrDropSolver, ReadOptions};
use cimsim::device::preset;
use cimsim::programming::ProgramMethod;
use cimsim::rng::SeedStream;
use rand::Rng;

fn main() -> cimsim::Result<()> {
    let (rows, cols, wb, xb, bpc) = (70, 40, 8, 8, 2);
    let mut rng = SeedStream::new(3).rng();
    let entries: Vec<i64> = (0..rows * cols).map(|_| rng.random_range(-127..=127)).collect();
    let x: Vec<i64> = (0..rows).map(|_| rng.random_range(-127..=127)).collect();
    let w = QuantizedMatrix::new(rows, cols, wb, entries, 1.0)?;

    let device = preset("rram")?;
    let tile = TileDims { rows: 32, cols: 32 };
    let plan = plan_slices(rows, cols, wb, xb, bpc, tile, &device)?;
    let adc_bits = required_adc_bits(tile.rows, 1, bpc + 1)?;
    println!(
        "{} slices on a {}x{} tile grid, {} tiles; ADC needs {adc_bits} bits",
        plan.num_slices,
        plan.grid_rows,
        plan.grid_cols,
        plan.tile_count()
    );
    let template = CrossbarConfig { adc_bits, r_wire: 2.0, ..CrossbarConfig::with_dims(tile.rows, tile.cols) };
    let mut tiles = plan.allocate_tiles(&template, &device, SeedStream::new(4))?;
    program_weights(&plan, &w, &mut tiles, &ProgramMethod::Exact, SeedStream::new(5))?;

    let expect = integer_mvm(&w, &x);
    let ideal = mvm_bitsliced(&plan, &tiles, &x, MvmMode::Ideal, SeedStream::new(6))?;
    println!("ideal read matches integer product: {}", ideal.y == expect);
    let acc = &ideal.accounting;
    println!(
        "{} integration windows, {} ADC conversions, {:.3e} J",
        acc.integration_windows,
        acc.adc_samples,
        acc.total_energy()
    );

    let opts = ReadOptions { ir_drop: IrDropSolver::Approximate { sweeps: 3 }, ..ReadOptions::nonideal() };
    let real = mvm_bitsliced(&plan, &tiles, &x, MvmMode::NonIdeal(opts), SeedStream::new(6))?;
    let scale = expect.iter().map(|v| v.abs()).max().unwrap_or(1) as f64;
    let err = real.y.iter().zip(&expect).map(|(a, b)| (a - b).abs()).max().unwrap_or(0) as f64 / scale;
    println!("non-ideal read: worst error {:.2}% of the largest output", 100.0 * err);
    Ok(())
}
