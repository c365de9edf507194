//! Program a float-trained network onto PCM by write-verify, then let the
//! conductances drift and track test accuracy over a year.

use cimsim::crossbar::ReadOptions;
use cimsim::device::{preset, SECONDS_PER_MONTH};
use cimsim::training::{train_epoch_float, AnalogNet, AnalogSettings, Dataset, EvalMode, FloatNet, NetworkSpec};
use cimsim::programming::ProgramMethod;

fn main() -> cimsim::Result<()> {
    let (train, test) = Dataset::digits().split(0.8, 0)?;
    let mut spec = NetworkSpec::new(vec![64, 32, 10], 0.02, 8, 1);
    let mut float = FloatNet::init(&spec)?;
    for epoch in 0..spec.epochs {
        train_epoch_float(&mut float, &train, epoch)?;
    }
    spec.w_max = float.weights.iter().flatten().fold(0.0f64, |m, w| m.max(w.abs()));
    println!("float test accuracy {:.4}", float.accuracy(&test)?);

    let settings = AnalogSettings { differential: true, init: ProgramMethod::default(), ..Default::default() };
    let (mut net, report) = AnalogNet::from_weights(&spec, &preset("pcm")?, &settings, &float.weights)?;
    println!(
        "programmed {} cells with {} pulses, verified {:.4}",
        report.cells,
        report.pulses,
        report.verified_fraction()
    );
    let mode = EvalMode::Analog(ReadOptions::IDEAL);
    let mut t = 0.0;
    for age in [1.0, 3600.0, 86400.0, SECONDS_PER_MONTH, 12.0 * SECONDS_PER_MONTH] {
        net.advance_time(age - t)?;
        t = age;
        let acc = net.evaluate(&test, &mode, 0)?.accuracy;
        println!("after {age:>10.0} s: test accuracy {acc:.4}");
    }
    Ok(())
}
