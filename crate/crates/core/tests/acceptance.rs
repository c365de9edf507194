//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use cimsim::bitslice::{integer_mvm, mvm_bitsliced, plan_slices, program_weights, MvmMode, QuantizedMatrix, TileDims};
use cimsim::crossbar::{
    mvm_ideal, mvm_nonideal, required_adc_bits, CrossbarConfig, CrossbarState, IrDropSolver, ReadOptions,
};
use cimsim::design::{
    energy_efficiency_bound, min_device_resistance, min_voltage, ops_per_second_bound, DesignPoint,
};
use cimsim::device::{
    apply_pulse, nominal_increment, preset, symmetry_point, ConductanceState, DeviceParams, Direction, PulseOptions,
    SymmetryPoint,
};
use cimsim::programming::ProgramMethod;
use cimsim::rng::SeedStream;
use cimsim::training::{
    train_epoch_analog, train_epoch_float, AnalogNet, AnalogSettings, Dataset, EvalMode, FloatNet, NetworkSpec,
};
use cimsim::update::{apply_update, build_pulse_plan_with, PlanOptions, UpdateOptions};
use rand::Rng;

const K_B: f64 = 1.380649e-23;

type Check = fn() -> (bool, String);

fn main() {
    let checks: [(&str, &str, Check); 12] = [
        ("1", "ADC precision", adc_precision),
        ("2", "speed bound", speed_bound),
        ("3", "resistance bound", resistance_bound),
        ("4", "voltage bound", voltage_bound),
        ("5", "energy bound", energy_bound),
        ("6", "bit-slice exactness", bitslice_exactness),
        ("7", "IR-drop oracle agreement", ir_drop_agreement),
        ("8", "device dynamics", device_dynamics),
        ("9", "update expectation", update_expectation),
        ("10", "gradient check", gradient_check),
        ("11", "end-to-end training", end_to_end_training),
        ("12", "reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let (pass, detail) = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {id:>2} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn adc_precision() -> (bool, String) {
    let bits = required_adc_bits(128, 1, 2).unwrap();
    (bits == 8, format!("required_adc_bits(128, 1, 2) = {bits}, want 8"))
}

fn operating_point() -> DesignPoint {
    DesignPoint {
        weights_total: Some(250e6),
        t_int: 100e-9,
        r_wire: 0.1,
        array_n: 2048,
        tile_num: 64,
        ..Default::default()
    }
}

fn speed_bound() -> (bool, String) {
    let ops = ops_per_second_bound(&operating_point());
    (ops == 5.0e15, format!("{ops:e} Op/s, want 5e15 exactly"))
}

fn resistance_bound() -> (bool, String) {
    let r = min_device_resistance(&operating_point());
    // N^2 r_wire / 0.1
    let oracle = 2048.0f64.powi(2) * 0.1 / 0.1;
    let pass = (4.0e6..=5.5e6).contains(&r) && (r - oracle).abs() <= 1e-9 * oracle && (r - 5e6).abs() <= 0.25 * 5e6;
    (pass, format!("{:.4} MOhm, oracle {:.4} MOhm, window [4, 5.5]", r / 1e6, oracle / 1e6))
}

fn voltage_bound() -> (bool, String) {
    let p = DesignPoint { r_dev: Some(5e6), temperature: 300.0, snr_target: 10.0, ..operating_point() };
    let v = min_voltage(&p);
    // V = SNR sqrt(N k T R / t_int)
    let n = 2048.0;
    let oracle = 10.0 * (n * K_B * 300.0 * 5e6 / 100e-9).sqrt();
    let pass = (v - 0.206).abs() <= 0.01 * 0.206 && (v - oracle).abs() <= 1e-9 * oracle;
    (pass, format!("{v:.5} V, oracle {oracle:.5} V, want 0.206 V +- 1%"))
}

fn energy_bound() -> (bool, String) {
    let p = DesignPoint { r_dev: Some(5e6), ..operating_point() };
    let at = |e_adc: f64| energy_efficiency_bound(&DesignPoint { e_adc, ..p.clone() });
    let base = at(5e-12);
    let sweep: Vec<f64> = [0.5e-12, 1e-12, 2e-12, 5e-12, 10e-12, 20e-12, 50e-12].iter().map(|e| at(*e)).collect();
    let monotone = sweep.windows(2).all(|w| w[1] < w[0]);
    (
        base > 1e14 && monotone,
        format!("{base:.3e} Op/J at 5 pJ (want > 1e14), decreasing over 0.5..50 pJ: {monotone}"),
    )
}

fn bitslice_exactness() -> (bool, String) {
    let device = preset("ideal").unwrap();
    let mut rng = SeedStream::new(6).named("bitslice").rng();
    let mut cases = 0;
    let mut mismatches = 0;
    let mut saturations = 0;
    for wb in [1u32, 2, 4] {
        for ib in [1u32, 2, 4] {
            for bpc in [1u32, 2] {
                for _ in 0..1000 {
                    let rows = rng.random_range(1..=32);
                    let cols = rng.random_range(1..=32);
                    let tile = TileDims { rows: rng.random_range(8..=32), cols: rng.random_range(8..=32) };
                    let (wlo, whi) = (-(1i64 << (wb - 1)), (1i64 << (wb - 1)) - 1);
                    let (xlo, xhi) = (-(1i64 << (ib - 1)), (1i64 << (ib - 1)) - 1);
                    let entries = (0..rows * cols).map(|_| rng.random_range(wlo..=whi)).collect();
                    let x: Vec<i64> = (0..rows).map(|_| rng.random_range(xlo..=xhi)).collect();
                    let w = QuantizedMatrix::new(rows, cols, wb, entries, 1.0).unwrap();
                    let plan = plan_slices(rows, cols, wb, ib, bpc, tile, &device).unwrap();
                    let adc_bits = required_adc_bits(tile.rows, 1, bpc + 1).unwrap();
                    let template = CrossbarConfig { adc_bits, ..CrossbarConfig::with_dims(tile.rows, tile.cols) };
                    let mut tiles = plan.allocate_tiles(&template, &device, SeedStream::new(cases)).unwrap();
                    program_weights(&plan, &w, &mut tiles, &ProgramMethod::Exact, SeedStream::new(0)).unwrap();
                    let out = mvm_bitsliced(&plan, &tiles, &x, MvmMode::Ideal, SeedStream::new(0)).unwrap();
                    // oracle: plain integer arithmetic
                    let expect: Vec<i64> = (0..cols)
                        .map(|j| (0..rows).map(|i| w.entries[i * cols + j] * x[i]).sum())
                        .collect();
                    debug_assert_eq!(expect, integer_mvm(&w, &x));
                    mismatches += usize::from(out.y != expect);
                    saturations += out.accounting.adc_saturations;
                    cases += 1;
                }
            }
        }
    }
    (
        mismatches == 0 && saturations == 0,
        format!("{cases} cases over (W, I) in {{1,2,4}}^2, b in {{1,2}}: {mismatches} mismatches, {saturations} ADC saturations"),
    )
}

fn ir_drop_agreement() -> (bool, String) {
    let mut rng = SeedStream::new(7).named("irdrop").rng();
    let mut dev = preset("ideal").unwrap();
    let r_dev = 1e5;
    dev.g_max = 1.0 / r_dev;
    let mut worst: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..200 {
        let m = rng.random_range(16..=64);
        let n = rng.random_range(16..=64);
        let big = m.max(n) as f64;
        let ratio = rng.random_range(0.001..=0.1);
        worst_ratio = worst_ratio.max(ratio);
        let r_wire = ratio * r_dev / (big * big);
        let mut tile = CrossbarState::new(CrossbarConfig { r_wire, ..CrossbarConfig::with_dims(m, n) }, dev.clone()).unwrap();
        for c in tile.cells.iter_mut() {
            c.g = rng.random_range(0.0..dev.g_max);
        }
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.2)).collect();
        let read = |solver| mvm_nonideal(&tile, &v, &ReadOptions { ir_drop: solver, ..ReadOptions::IDEAL }, k);
        let exact = read(IrDropSolver::Exact).unwrap();
        let approx = read(IrDropSolver::Approximate { sweeps: 3 }).unwrap();
        let err = exact
            .iter()
            .zip(&approx)
            .map(|(a, b)| ((a - b) / a).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(err);
    }

    let mut tile = CrossbarState::new(CrossbarConfig { r_wire: 0.0, ..CrossbarConfig::with_dims(40, 24) }, dev.clone()).unwrap();
    for c in tile.cells.iter_mut() {
        c.g = rng.random_range(0.0..dev.g_max);
    }
    let v: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..0.2)).collect();
    let exact = mvm_nonideal(&tile, &v, &ReadOptions { ir_drop: IrDropSolver::Exact, ..ReadOptions::IDEAL }, 0).unwrap();
    // oracle: direct sum of V_i G_ij
    let zero_err = (0..24)
        .map(|j| {
            let want: f64 = (0..40).map(|i| v[i] * tile.cells[i * 24 + j].g).sum();
            ((exact[j] - want) / want).abs()
        })
        .fold(0.0f64, f64::max);
    let ideal_err = exact.iter().zip(mvm_ideal(&tile, &v).unwrap()).map(|(a, b)| ((a - b) / b).abs()).fold(0.0f64, f64::max);
    (
        worst <= 0.02 && zero_err <= 1e-10 && ideal_err <= 1e-10,
        format!(
            "200 arrays (N^2 r/R up to {worst_ratio:.3}): worst element error {:.4}%; r_wire = 0 vs ideal {:.1e}",
            100.0 * worst,
            zero_err.max(ideal_err)
        ),
    )
}

fn quiet(mut p: DeviceParams) -> DeviceParams {
    p.dg_rel_sigma = 0.0;
    p.spatial_rel_sigma = 0.0;
    p.read_rel_sigma = 0.0;
    p
}

fn pulse(s: &ConductanceState, p: &DeviceParams, d: Direction, rng: &mut impl Rng) -> ConductanceState {
    apply_pulse(s, p, d, rng, PulseOptions { enforce_endurance: false, ..Default::default() }).unwrap()
}

fn device_dynamics() -> (bool, String) {
    let mut rng = SeedStream::new(8).named("device").rng();

    // (a) up-then-down identity on symmetric devices
    let mut nl = quiet(preset("ideal").unwrap());
    nl.response_kind = cimsim::device::ResponseKind::NonlinearSymmetric;
    nl.alpha_up = 3.0;
    nl.dg_mean = nl.range() / 200.0;
    let mut worst_a: f64 = 0.0;
    for p in [quiet(preset("ideal").unwrap()), quiet(preset("rram").unwrap().symmetric_counterpart()), nl] {
        let step = p.nominal_step();
        for _ in 0..10_000 {
            let g = rng.random_range(p.g_min + step..p.g_max - step);
            let s = ConductanceState::new(g);
            let back = pulse(&pulse(&s, &p, Direction::Up, &mut rng), &p, Direction::Down, &mut rng);
            worst_a = worst_a.max((back.g - g).abs() / p.range());
        }
    }

    // (b) balanced pulses settle within one increment of the symmetry point
    let mut within = 0;
    let mut total = 0;
    for name in ["rram", "ecram"] {
        let p = quiet(preset(name).unwrap());
        let SymmetryPoint::At(g_sym) = symmetry_point(&p) else { return (false, format!("{name}: no symmetry point")) };
        let step = nominal_increment(&p, g_sym, Direction::Up);
        for seed in 0..100u64 {
            let mut r = SeedStream::new(seed).named(name).rng();
            let mut s = ConductanceState::new(r.random_range(p.g_min..p.g_max));
            let mut order = [Direction::Up, Direction::Down];
            for _ in 0..2000 {
                if r.random::<bool>() {
                    order.swap(0, 1);
                }
                for d in order {
                    s = pulse(&s, &p, d, &mut r);
                }
            }
            within += usize::from((s.g - g_sym).abs() <= step);
            total += 1;
        }
    }

    // (c) drift: log R vs log t slope equals nu
    let pcm = preset("pcm").unwrap();
    let s = ConductanceState::new(0.5 * pcm.g_max);
    let r_at = |t: f64| 1.0 / ConductanceState { age: t, ..s }.conductance(&pcm);
    let mut worst_c: f64 = 0.0;
    for (t1, t2) in [(1.0, 10.0), (10.0, 1e4), (1e3, 1e6), (2.0, 3.0)] {
        let slope = (r_at(t2).ln() - r_at(t1).ln()) / (t2.ln() - t1.ln());
        worst_c = worst_c.max((slope - pcm.drift_nu).abs());
    }

    (
        worst_a <= 1e-12 && within == total && worst_c <= 1e-9,
        format!(
            "(a) worst pair residual {worst_a:.1e} of window; (b) {within}/{total} runs within one increment; (c) slope error {worst_c:.1e}"
        ),
    )
}

fn update_expectation() -> (bool, String) {
    let n = 16;
    let device = preset("ideal").unwrap();
    let mut rng = SeedStream::new(9).named("inputs").rng();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mid = 0.5 * (device.g_min + device.g_max);
    let mut tile = CrossbarState::new(CrossbarConfig::with_dims(n, n), device.clone()).unwrap();
    let opts = PlanOptions { pulses_per_unit_weight: 100.0, ..Default::default() };
    let reps = 500;
    let mut mean = vec![0.0; n * n];
    for rep in 0..reps {
        for c in tile.cells.iter_mut() {
            c.g = mid;
        }
        let plan = build_pulse_plan_with(&x, &d, 0.5, 256, rep, &opts).unwrap();
        apply_update(&mut tile, &plan, &UpdateOptions::default(), SeedStream::new(rep)).unwrap();
        for (m, c) in mean.iter_mut().zip(&tile.cells) {
            *m += (c.g - mid) / reps as f64;
        }
    }
    // least squares of mean dG on x_i d_j
    let z: Vec<f64> = (0..n * n).map(|k| x[k / n] * d[k % n]).collect();
    let r2 = r_squared(&z, &mean);
    let slope = z.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>() / z.iter().map(|a| a * a).sum::<f64>();
    (r2 > 0.99 && slope < 0.0, format!("R^2 = {r2:.5} (want > 0.99), slope {slope:.3e} S per unit x*delta"))
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn gradient_check() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let spec = NetworkSpec {
            hidden_activation: cimsim::training::Activation::Sigmoid,
            ..NetworkSpec::new(vec![6, 4, 3], 0.1, 1, seed)
        };
        let mut net = FloatNet::init(&spec).unwrap();
        let mut rng = SeedStream::new(seed).named("x").rng();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
        let label = rng.random_range(0..3);
        let cache = net.forward(&x).unwrap();
        let deltas = net.backward(&cache, label);
        for l in 0..spec.layers() {
            let outs = deltas[l].len();
            for k in 0..net.weights[l].len() {
                let analytic = cache.inputs[l][k / outs] * deltas[l][k % outs];
                let h = 1e-5;
                let w0 = net.weights[l][k];
                net.weights[l][k] = w0 + h;
                let up = net.forward(&x).unwrap().loss(label);
                net.weights[l][k] = w0 - h;
                let down = net.forward(&x).unwrap().loss(label);
                net.weights[l][k] = w0;
                let fd = (up - down) / (2.0 * h);
                if fd.abs().max(analytic.abs()) < 1e-8 {
                    continue;
                }
                worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()));
            }
        }
    }
    (worst < 1e-4, format!("worst relative error {worst:.2e} over 20 seeds (want < 1e-4)"))
}

fn train_run(spec: &NetworkSpec, dev: &DeviceParams, train: &Dataset) -> AnalogNet {
    let (mut net, _) = AnalogNet::new(spec, dev, &AnalogSettings::default()).unwrap();
    for epoch in 0..spec.epochs {
        train_epoch_analog(&mut net, train, epoch).unwrap();
    }
    net
}

fn end_to_end_training() -> (bool, String) {
    let (train, test) = Dataset::digits().split(0.8, 0).unwrap();
    let spec_for = |seed| NetworkSpec::new(vec![64, 32, 10], 0.02, 8, seed);
    let ideal = preset("ideal").unwrap();
    let ecram = preset("ecram").unwrap();
    let symmetric = ecram.symmetric_counterpart();
    let accuracy = |net: &AnalogNet, read: ReadOptions, seed: u64| net.evaluate(&test, &EvalMode::Analog(read), seed).unwrap().accuracy;

    // (a)
    let spec = spec_for(1);
    let mut float = FloatNet::init(&spec).unwrap();
    for epoch in 0..spec.epochs {
        train_epoch_float(&mut float, &train, epoch).unwrap();
    }
    let float_acc = float.accuracy(&test).unwrap();
    let ideal_acc = accuracy(&train_run(&spec, &ideal, &train), ReadOptions::IDEAL, 0);
    let a = ideal_acc >= 0.9 * float_acc;

    // (b) and (c), seeds in parallel
    let sigmas = [0.0, 0.005, 0.02, 0.1];
    let per_seed: Vec<(bool, Vec<f64>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10u64)
            .map(|seed| {
                let (train, ecram, symmetric, ideal) = (&train, &ecram, &symmetric, &ideal);
                s.spawn(move || {
                    let spec = spec_for(100 + seed);
                    let asym = accuracy(&train_run(&spec, ecram, train), ReadOptions::IDEAL, 0);
                    let sym = accuracy(&train_run(&spec, symmetric, train), ReadOptions::IDEAL, 0);
                    let net = train_run(&spec, ideal, train);
                    let accs = sigmas
                        .iter()
                        .map(|&sigma| {
                            let read = ReadOptions { read_noise: true, read_sigma_override: Some(sigma), ..ReadOptions::IDEAL };
                            accuracy(&net, read, 1000 + seed)
                        })
                        .collect();
                    (asym < sym, accs)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let ordered = per_seed.iter().filter(|(below, _)| *below).count();
    let b = ordered >= 8;

    // expectation over seeds; a rise smaller than two paired standard errors
    // counts as flat
    let seeds = per_seed.len() as f64;
    let means: Vec<f64> = (0..sigmas.len()).map(|k| per_seed.iter().map(|(_, a)| a[k]).sum::<f64>() / seeds).collect();
    let mut c = means[sigmas.len() - 1] < means[0];
    let mut rises = Vec::new();
    for k in 1..sigmas.len() {
        let diffs: Vec<f64> = per_seed.iter().map(|(_, a)| a[k] - a[k - 1]).collect();
        let md = diffs.iter().sum::<f64>() / seeds;
        let var = diffs.iter().map(|d| (d - md).powi(2)).sum::<f64>() / (seeds - 1.0);
        let se = (var / seeds).sqrt();
        rises.push(format!("{md:+.4}/{se:.4}"));
        c &= md <= 2.0 * se;
    }
    (
        a && b && c,
        format!(
            "(a) ideal {ideal_acc:.4} vs float {float_acc:.4}, ratio {:.3} (want >= 0.9); (b) asymmetric below symmetric on {ordered}/10 seeds (want >= 8); (c) mean accuracy at read sigma {sigmas:?}: [{}], steps (mean/SE) [{}]",
            ideal_acc / float_acc,
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", "),
            rises.join(", ")
        ),
    )
}

fn cimsim_cmd(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cimsim"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn reproducibility() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let train_cfg = s(&configs().join("train_smoke.toml"));
    let mvm_cfg = s(&configs().join("mvm.toml"));
    let grid = s(&Path::new(env!("CARGO_MANIFEST_DIR")).join("grids/array_size.toml"));
    let mut ok = true;
    ok &= cimsim_cmd(&["--config", &train_cfg, "--out", &s(&t.join("train1")), "train"]);
    ok &= cimsim_cmd(&["--config", &mvm_cfg, "--out", &s(&t.join("mvm1")), "mvm"]);
    ok &= cimsim_cmd(&["--out", &s(&t.join("bounds1.csv")), "bounds", "sweep", "--grid", &grid]);
    // second runs replay the configs recorded next to each manifest
    ok &= cimsim_cmd(&["--config", &s(&t.join("train1/config.toml")), "--out", &s(&t.join("train2")), "train"]);
    ok &= cimsim_cmd(&["--config", &s(&t.join("mvm1/config.toml")), "--out", &s(&t.join("mvm2")), "mvm"]);
    ok &= cimsim_cmd(&["--out", &s(&t.join("bounds2.csv")), "bounds", "sweep", "--grid", &grid]);
    if !ok {
        return (false, "a cimsim run failed".into());
    }
    let pairs = [
        ("train1/metrics.csv", "train2/metrics.csv"),
        ("mvm1/output.csv", "mvm2/output.csv"),
        ("bounds1.csv", "bounds2.csv"),
    ];
    let mut same = 0;
    for (a, b) in pairs {
        let (a, b) = (std::fs::read(t.join(a)).unwrap(), std::fs::read(t.join(b)).unwrap());
        same += usize::from(!a.is_empty() && a == b);
    }
    (same == pairs.len(), format!("{same}/{} CSV outputs byte-identical on replay (train, mvm, bounds)", pairs.len()))
}
