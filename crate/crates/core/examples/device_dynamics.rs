//! Pulse response of each device preset: potentiation/depression traces,
//! symmetry point, number of programming steps, and drift of a programmed PCM
//! cell.

use cimsim::device::{
    apply_drift, apply_pulse, preset, programming_steps, symmetry_point, ConductanceState, Direction,
    PulseOptions, SymmetryPoint, PRESET_NAMES, SECONDS_PER_MONTH,
};
use cimsim::rng::SeedStream;

fn main() -> cimsim::Result<()> {
    for name in PRESET_NAMES {
        let p = preset(name)?;
        let sym = match symmetry_point(&p) {
            SymmetryPoint::At(g) => format!("{:.3} of window", (g - p.g_min) / p.range()),
            SymmetryPoint::Everywhere => "everywhere".into(),
            SymmetryPoint::None => "none".into(),
        };
        let steps = programming_steps(&p).map_or_else(|e| e.to_string(), |n| n.to_string());
        println!("{name}: {:?}, steps {steps}, symmetry point {sym}", p.response_kind);

        if !p.is_bidirectional() {
            continue;
        }
        let mut rng = SeedStream::new(7).named(name).rng();
        let opts = PulseOptions { enforce_endurance: false, ..Default::default() };
        let mut s = ConductanceState::fresh(&p);
        let mut trace = Vec::new();
        for k in 0..80 {
            let dir = if k < 40 { Direction::Up } else { Direction::Down };
            s = apply_pulse(&s, &p, dir, &mut rng, opts)?;
            if k % 8 == 7 {
                trace.push(format!("{:.2}", (s.g - p.g_min) / p.range()));
            }
        }
        println!("  40 up then 40 down, normalized G every 8 pulses: {}", trace.join(" "));
    }

    let pcm = preset("pcm")?;
    let mut cell = ConductanceState::new(0.5 * pcm.g_max);
    println!("pcm drift of a cell programmed to {:.1} uS:", cell.g * 1e6);
    let mut t = 0.0;
    for age in [1.0, 60.0, 3600.0, 86400.0, SECONDS_PER_MONTH, 12.0 * SECONDS_PER_MONTH] {
        cell = apply_drift(&cell, &pcm, age - t)?;
        t = age;
        println!("  age {age:>12.0} s: {:.3} uS", cell.conductance(&pcm) * 1e6);
    }
    Ok(())
}
