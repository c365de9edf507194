//! Closed-form bounds over a grid of array sizes and tile counts, written as
//! CSV to stdout.

use std::path::Path;

use cimsim::design::{evaluate, sweep, sweep_csv, DesignPoint, Grid};

fn main() -> cimsim::Result<()> {
    let grid = Grid::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("grids/array_size.toml"))?;
    print!("{}", sweep_csv(&sweep(&grid)?));

    let base = evaluate(&DesignPoint::default())?;
    println!();
    println!(
        "default point: {:.2e} op/s, R_dev >= {:.3e} ohm, V >= {:.4} V, area >= {:.3e} m^2, {:.2e} op/J",
        base.ops_per_second, base.min_r_dev, base.min_v, base.area.with_efficiency, base.ops_per_joule
    );
    Ok(())
}
