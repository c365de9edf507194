//! Transfer a signed matrix onto a differential RRAM tile by write-verify at a
//! few tolerances, then compare the read-back matrix with the target.

use cimsim::crossbar::{CrossbarConfig, DifferentialTile};
use cimsim::device::preset;
use cimsim::programming::{ProgramMethod, WriteVerifyConfig};
use cimsim::rng::SeedStream;
use rand::Rng;

fn main() -> cimsim::Result<()> {
    let (outputs, inputs) = (16, 24);
    let mut rng = SeedStream::new(11).rng();
    let a: Vec<f64> = (0..outputs * inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let device = preset("rram")?;
    println!("{:>9} {:>8} {:>11} {:>10} {:>12}", "tolerance", "pulses", "energy J", "verified", "matrix rmse");
    for tolerance in [0.05, 0.02, 0.01, 0.005] {
        let seed = SeedStream::new(12);
        let mut tile =
            DifferentialTile::new(outputs, inputs, &a, &CrossbarConfig::default(), &device, seed.named("device"))?;
        let method = ProgramMethod::WriteVerify(WriteVerifyConfig { tolerance, ..Default::default() });
        let report = tile.program(&a, &method, seed.named("program"))?;
        let got = tile.matrix();
        let rmse = (got.iter().zip(&a).map(|(g, t)| (g - t).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        println!(
            "{tolerance:>9} {:>8} {:>11.3e} {:>10.4} {:>12.4}",
            report.pulses,
            report.energy,
            report.verified_fraction(),
            rmse
        );
    }
    Ok(())
}
