//! Train a 64-32-10 network on the bundled 8x8 digits: float baseline, an
//! ideal analog device, ECRAM and its symmetric counterpart, and ECRAM with
//! the reference at its symmetry point.
//!
//! `cargo run --release --example train_digits [epochs]`

use cimsim::device::{preset, DeviceParams};
use cimsim::training::{
    train_epoch_analog, train_epoch_float, AnalogNet, AnalogSettings, Dataset, EvalMode, FloatNet, NetworkSpec,
    ReferenceMode,
};
use cimsim::crossbar::ReadOptions;

fn run(label: &str, spec: &NetworkSpec, dev: &DeviceParams, settings: &AnalogSettings, train: &Dataset, test: &Dataset) -> cimsim::Result<()> {
    let (mut net, _) = AnalogNet::new(spec, dev, settings)?;
    let mut pulses = 0;
    let mut energy = 0.0;
    for epoch in 0..spec.epochs {
        let m = train_epoch_analog(&mut net, train, epoch)?;
        pulses += m.pulses;
        energy += m.update_energy;
    }
    let acc = net.evaluate(test, &EvalMode::Analog(ReadOptions::IDEAL), spec.seed)?.accuracy;
    println!("{label:<28} test accuracy {acc:.4}  ({pulses} update pulses, {energy:.3e} J)");
    Ok(())
}

fn main() -> cimsim::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let (train, test) = Dataset::digits().split(0.8, 0)?;
    let spec = NetworkSpec::new(vec![64, 32, 10], 0.02, epochs, 1);

    let mut float = FloatNet::init(&spec)?;
    for epoch in 0..epochs {
        train_epoch_float(&mut float, &train, epoch)?;
    }
    println!("{:<28} test accuracy {:.4}", "float", float.accuracy(&test)?);

    let mid = AnalogSettings::default();
    let sym = AnalogSettings { reference: ReferenceMode::SymmetryPoint, ..Default::default() };
    let ecram = preset("ecram")?;
    run("ideal device", &spec, &preset("ideal")?, &mid, &train, &test)?;
    run("ecram", &spec, &ecram, &mid, &train, &test)?;
    run("ecram, symmetric", &spec, &ecram.symmetric_counterpart(), &mid, &train, &test)?;
    run("ecram, symmetry-point ref", &spec, &ecram, &sym, &train, &test)?;
    Ok(())
}
