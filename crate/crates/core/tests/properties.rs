use cimsim::bitslice::{mvm_bitsliced, plan_slices, program_weights, MvmMode, Polarity, QuantizedMatrix, TileDims};
use cimsim::crossbar::{
    adc_quantize, mvm_ideal, mvm_nonideal, required_adc_bits, CrossbarConfig, CrossbarState, DifferentialTile,
    IrDropSolver, ReadOptions,
};
use cimsim::design::{area_lower_bound, energy_efficiency_bound, ops_per_second_bound, DesignPoint};
use cimsim::device::{
    apply_drift, apply_pulse, preset, programming_steps, symmetry_point, ConductanceState, DeviceParams, Direction,
    PulseOptions, SymmetryPoint, PRESET_NAMES,
};
use cimsim::programming::ProgramMethod;
use cimsim::rng::SeedStream;
use cimsim::update::{
    apply_update_pair, build_pulse_plan, build_pulse_plan_with, zero_shift_reference, Encoding, PlanOptions,
    ReferencePair, UpdateOptions,
};
use proptest::prelude::*;
use rand::Rng;

fn free() -> PulseOptions {
    PulseOptions { enforce_endurance: false, ..Default::default() }
}

fn bidirectional() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["rram", "ecram", "mram", "ideal"])
}

fn random_tile(m: usize, n: usize, r_wire: f64, seed: u64) -> CrossbarState {
    let dev = preset("rram").unwrap();
    let mut tile = CrossbarState::new(CrossbarConfig { r_wire, ..CrossbarConfig::with_dims(m, n) }, dev.clone()).unwrap();
    let mut rng = SeedStream::new(seed).rng();
    for c in tile.cells.iter_mut() {
        c.g = rng.random_range(dev.g_min..dev.g_max);
    }
    tile
}

fn bitsliced(w: &QuantizedMatrix, x: &[i64], ib: u32, bpc: u32, tile: TileDims, adc_bits: u32) -> (Vec<i64>, u64) {
    let device = preset("ideal").unwrap();
    let plan = plan_slices(w.rows, w.cols, w.bits, ib, bpc, tile, &device).unwrap();
    let template = CrossbarConfig { adc_bits, ..CrossbarConfig::with_dims(tile.rows, tile.cols) };
    let mut tiles = plan.allocate_tiles(&template, &device, SeedStream::new(0)).unwrap();
    program_weights(&plan, w, &mut tiles, &ProgramMethod::Exact, SeedStream::new(0)).unwrap();
    let out = mvm_bitsliced(&plan, &tiles, x, MvmMode::Ideal, SeedStream::new(0)).unwrap();
    (out.y, out.accounting.adc_saturations)
}

fn matrix_and_input(wb: u32, ib: u32) -> impl Strategy<Value = (QuantizedMatrix, Vec<i64>)> {
    let wmax = (1i64 << (wb - 1)) - 1;
    let xmax = (1i64 << (ib - 1)) - 1;
    (1usize..=24, 1usize..=24).prop_flat_map(move |(m, n)| {
        (
            prop::collection::vec(-wmax - 1..=wmax, m * n),
            prop::collection::vec(-xmax - 1..=xmax, m),
        )
            .prop_map(move |(e, x)| (QuantizedMatrix::new(m, n, wb, e, 1.0).unwrap(), x))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conductance_stays_in_window(name in prop::sample::select(PRESET_NAMES.to_vec()), seed: u64, ups in prop::collection::vec(any::<bool>(), 1..300)) {
        let p = preset(name).unwrap();
        let mut rng = SeedStream::new(seed).rng();
        let mut s = ConductanceState::new(rng.random_range(p.g_min..=p.g_max));
        for up in ups {
            let dir = if up || !p.is_bidirectional() { Direction::Up } else { Direction::Down };
            s = apply_pulse(&s, &p, dir, &mut rng, free()).unwrap();
            s = apply_drift(&s, &p, rng.random_range(0.0..1e5)).unwrap();
            let g = s.conductance(&p);
            prop_assert!(p.g_min <= g && g <= p.g_max);
        }
    }

    #[test]
    fn identical_seeds_give_identical_trajectories(name in bidirectional(), seed: u64) {
        let p = preset(name).unwrap();
        let run = || {
            let mut rng = SeedStream::new(seed).rng();
            let mut s = ConductanceState::new(0.5 * (p.g_min + p.g_max));
            (0..100).map(|k| {
                let dir = if k % 3 == 0 { Direction::Down } else { Direction::Up };
                s = apply_pulse(&s, &p, dir, &mut rng, free()).unwrap();
                s.g
            }).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn programming_steps_fall_as_steps_grow(name in prop::sample::select(vec!["ideal", "mram"]), f in 1.01f64..10.0) {
        let p = preset(name).unwrap();
        let bigger = DeviceParams { dg_mean: p.dg_mean * f, ..p.clone() };
        prop_assert!(programming_steps(&bigger).unwrap() <= programming_steps(&p).unwrap());
    }

    #[test]
    fn ideal_mvm_is_linear(seed: u64, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let tile = random_tile(12, 9, 0.0, seed);
        let mut rng = SeedStream::new(seed).named("v").rng();
        let v1: Vec<f64> = (0..12).map(|_| rng.random_range(-0.03..0.03)).collect();
        let v2: Vec<f64> = (0..12).map(|_| rng.random_range(-0.03..0.03)).collect();
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let (f1, f2, fm) = (mvm_ideal(&tile, &v1).unwrap(), mvm_ideal(&tile, &v2).unwrap(), mvm_ideal(&tile, &mix).unwrap());
        for j in 0..9 {
            let want = a * f1[j] + b * f2[j];
            prop_assert!((fm[j] - want).abs() <= 1e-12 * (1.0 + want.abs()) + 1e-18);
        }
    }

    #[test]
    fn wire_resistance_never_adds_current(seed: u64, m in 2usize..24, n in 2usize..24, r_wire in 0.01f64..20.0) {
        let tile = random_tile(m, n, r_wire, seed);
        let mut rng = SeedStream::new(seed).named("v").rng();
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..tile.config.v_read)).collect();
        let ideal = mvm_ideal(&tile, &v).unwrap();
        for solver in [IrDropSolver::Exact, IrDropSolver::Approximate { sweeps: 3 }] {
            let real = mvm_nonideal(&tile, &v, &ReadOptions { ir_drop: solver, ..ReadOptions::IDEAL }, 0).unwrap();
            for (r, i) in real.iter().zip(&ideal) {
                prop_assert!(*r <= *i * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn adc_codes_rise_with_current(seed: u64, i in 0usize..9, bump in 0.0f64..1e-4) {
        let tile = random_tile(16, 9, 0.0, seed);
        let v = vec![tile.config.v_read * 0.5; 16];
        let base = mvm_ideal(&tile, &v).unwrap();
        let mut more = base.clone();
        more[i] += bump;
        let (a, b) = (adc_quantize(&base, &tile), adc_quantize(&more, &tile));
        prop_assert!(b.codes[i] >= a.codes[i]);
    }

    #[test]
    fn read_energy_is_array_plus_adc_terms(seed: u64) {
        let mut rng = SeedStream::new(seed).rng();
        let (outputs, inputs) = (5, 7);
        let a: Vec<f64> = (0..outputs * inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(0.0..1.0)).collect();
        let dev = preset("rram").unwrap();
        let tile = DifferentialTile::new(outputs, inputs, &a, &CrossbarConfig::default(), &dev, SeedStream::new(seed)).unwrap();
        let (_, acc) = tile.mvm(&x, &ReadOptions::IDEAL, SeedStream::new(0)).unwrap();
        // oracle: sum V_i^2 G_ij t_int over both tiles, plus one conversion per column per tile
        let s = x.iter().fold(0.0f64, |m, v| m.max(*v));
        let cfg = &tile.plus.config;
        let mut array = 0.0;
        for t in [&tile.plus, &tile.minus] {
            for i in 0..inputs {
                let v = x[i] / s * cfg.v_read;
                for j in 0..outputs {
                    array += v * v * t.cell(i, j).g * cfg.t_int;
                }
            }
        }
        let adc = 2.0 * outputs as f64 * cfg.adc_energy;
        prop_assert!((acc.array_energy - array).abs() <= 1e-12 * array);
        prop_assert!((acc.adc_energy - adc).abs() <= 1e-12 * adc);
        prop_assert!((acc.total_energy() - array - adc).abs() <= 1e-12 * (array + adc));
    }

    #[test]
    fn bitslice_matches_integer_product(
        (w, x, ib) in (prop::sample::select(vec![1u32, 2, 4]), prop::sample::select(vec![1u32, 2, 4]))
            .prop_flat_map(|(wb, ib)| (matrix_and_input(wb, ib), Just(ib)))
            .prop_map(|((w, x), ib)| (w, x, ib)),
        bpc in 1u32..=2,
        tr in 4usize..=24,
        tc in 4usize..=24,
    ) {
        let tile = TileDims { rows: tr, cols: tc };
        let (y, sat) = bitsliced(&w, &x, ib, bpc, tile, required_adc_bits(tr, 1, bpc + 1).unwrap());
        let want: Vec<i64> = (0..w.cols).map(|j| (0..w.rows).map(|i| w.entries[i * w.cols + j] * x[i]).sum()).collect();
        prop_assert_eq!(y, want);
        prop_assert_eq!(sat, 0);
    }

    #[test]
    fn two_bit_cells_halve_slices_and_keep_results((w, x) in prop::sample::select(vec![2u32, 4, 8]).prop_flat_map(|wb| matrix_and_input(wb, 4))) {
        let device = preset("ideal").unwrap();
        let tile = TileDims { rows: 16, cols: 16 };
        let one = plan_slices(w.rows, w.cols, w.bits, 4, 1, tile, &device).unwrap();
        let two = plan_slices(w.rows, w.cols, w.bits, 4, 2, tile, &device).unwrap();
        prop_assert_eq!(one.num_slices, 2 * two.num_slices);
        let a = bitsliced(&w, &x, 4, 1, tile, required_adc_bits(16, 1, 2).unwrap()).0;
        let b = bitsliced(&w, &x, 4, 2, tile, required_adc_bits(16, 1, 3).unwrap()).0;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn negated_weights_swap_pair_and_negate_output((w, x) in matrix_and_input(4, 4)) {
        prop_assume!(w.entries.iter().all(|e| *e > -8));
        let device = preset("ideal").unwrap();
        let tile = TileDims { rows: 32, cols: 32 };
        let plan = plan_slices(w.rows, w.cols, 4, 4, 2, tile, &device).unwrap();
        let template = CrossbarConfig { adc_bits: required_adc_bits(32, 1, 3).unwrap(), ..CrossbarConfig::with_dims(32, 32) };
        let neg = w.negated().unwrap();
        let mut pos_tiles = plan.allocate_tiles(&template, &device, SeedStream::new(0)).unwrap();
        let mut neg_tiles = pos_tiles.clone();
        program_weights(&plan, &w, &mut pos_tiles, &ProgramMethod::Exact, SeedStream::new(0)).unwrap();
        program_weights(&plan, &neg, &mut neg_tiles, &ProgramMethod::Exact, SeedStream::new(0)).unwrap();
        for s in 0..plan.num_slices {
            let p = plan.tile_index(s, 0, 0, Polarity::Plus);
            let m = plan.tile_index(s, 0, 0, Polarity::Minus);
            prop_assert_eq!(pos_tiles[p].conductances(), neg_tiles[m].conductances());
            prop_assert_eq!(pos_tiles[m].conductances(), neg_tiles[p].conductances());
        }
        let a = mvm_bitsliced(&plan, &pos_tiles, &x, MvmMode::Ideal, SeedStream::new(0)).unwrap().y;
        let b = mvm_bitsliced(&plan, &neg_tiles, &x, MvmMode::Ideal, SeedStream::new(0)).unwrap().y;
        prop_assert_eq!(a.iter().map(|v| -v).collect::<Vec<_>>(), b);
    }

    #[test]
    fn flipping_delta_flips_expected_update(
        x in prop::collection::vec(-1.0f64..1.0, 1..12),
        d in prop::collection::vec(-1.0f64..1.0, 1..12),
        eta in 0.01f64..2.0,
    ) {
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let a = build_pulse_plan(&x, &d, eta, 64, 1).unwrap();
        let b = build_pulse_plan(&x, &neg, eta, 64, 1).unwrap();
        for i in 0..x.len() {
            for j in 0..d.len() {
                let signed = |p: &cimsim::update::PulsePlan| {
                    p.expected_coincidences(i, j) * p.direction(i, j).map_or(0.0, Direction::sign)
                };
                prop_assert!((signed(&a) + signed(&b)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn update_latency_ignores_array_size(m in 1usize..40, n in 1usize..40, length in 1usize..300) {
        let x = vec![0.3; m];
        let d = vec![-0.2; n];
        let plan = build_pulse_plan(&x, &d, 0.1, length, 0).unwrap();
        let small = build_pulse_plan(&[0.3], &[-0.2], 0.1, length, 0).unwrap();
        prop_assert_eq!(plan.latency_slots(), small.latency_slots());
    }

    #[test]
    fn design_bounds_scale(weights in 1e6f64..1e10, tiles in 1u64..512, e_adc in 1e-13f64..1e-10, v in 0.05f64..0.5) {
        let p = DesignPoint { weights_total: Some(weights), tile_num: tiles, e_adc, v_read: Some(v), ..Default::default() };
        let double = DesignPoint { weights_total: Some(2.0 * weights), ..p.clone() };
        prop_assert!((ops_per_second_bound(&double) / ops_per_second_bound(&p) - 2.0).abs() < 1e-12);
        let more_tiles = DesignPoint { tile_num: 2 * tiles, ..p.clone() };
        prop_assert!((area_lower_bound(&more_tiles).with_efficiency / area_lower_bound(&p).with_efficiency - 2.0).abs() < 1e-12);
        let pricier = DesignPoint { e_adc: 2.0 * e_adc, ..p.clone() };
        let louder = DesignPoint { v_read: Some(2.0 * v), ..p.clone() };
        prop_assert!(energy_efficiency_bound(&pricier) < energy_efficiency_bound(&p));
        prop_assert!(energy_efficiency_bound(&louder) < energy_efficiency_bound(&p));
        prop_assert!(ops_per_second_bound(&p) > 0.0 && area_lower_bound(&p).cells_only > 0.0);
    }
}

#[test]
fn one_adc_bit_fewer_saturates_on_worst_case() {
    let (m, bpc) = (16, 2);
    // every weight at the largest magnitude, every input bit set
    let w = QuantizedMatrix::new(m, 3, 4, vec![7; m * 3], 1.0).unwrap();
    let x = vec![7; m];
    let tile = TileDims { rows: m, cols: 3 };
    let enough = required_adc_bits(m, 1, bpc + 1).unwrap();
    let (y, sat) = bitsliced(&w, &x, 4, bpc, tile, enough);
    assert_eq!(sat, 0);
    assert_eq!(y, vec![7 * 7 * m as i64; 3]);
    let (_, sat) = bitsliced(&w, &x, 4, bpc, tile, enough - 1);
    assert!(sat > 0);
}

#[test]
fn half_rate_trains_coincide_a_quarter_of_the_time() {
    let length = 10_000;
    let opts = PlanOptions { pulses_per_unit_weight: length as f64, encoding: Encoding::Stochastic };
    let plan = build_pulse_plan_with(&[0.5], &[0.5], 1.0, length, 9, &opts).unwrap();
    assert!((plan.row_rates[0] - 0.5).abs() < 1e-12 && (plan.col_rates[0] - 0.5).abs() < 1e-12);
    let frac = plan.coincidences(0, 0) as f64 / length as f64;
    let sigma = (0.25f64 * 0.75 / length as f64).sqrt();
    assert!((frac - 0.25).abs() <= 3.0 * sigma, "{frac}");
}

#[test]
fn random_pulses_pull_toward_symmetry_point() {
    for name in ["rram", "ecram"] {
        let p = preset(name).unwrap();
        let SymmetryPoint::At(g_sym) = symmetry_point(&p) else { panic!("{name}") };
        let mut closer = 0;
        for seed in 0..100u64 {
            let mut rng = SeedStream::new(seed).named(name).rng();
            // start in the outer fifth of the window on either side
            let u: f64 = rng.random_range(0.0..0.2);
            let g0 = if rng.random::<bool>() { p.g_min + u * p.range() } else { p.g_max - u * p.range() };
            let mut s = ConductanceState::new(g0);
            let mut tail = Vec::new();
            for k in 0..10_000 {
                let dir = if rng.random::<bool>() { Direction::Up } else { Direction::Down };
                s = apply_pulse(&s, &p, dir, &mut rng, free()).unwrap();
                if k >= 9_000 {
                    tail.push((s.g - g_sym).abs());
                }
            }
            tail.sort_by(f64::total_cmp);
            closer += usize::from(tail[tail.len() / 2] < (g0 - g_sym).abs());
        }
        assert!(closer >= 95, "{name}: {closer}/100");
    }
}

#[test]
fn balanced_updates_keep_zero_shifted_weights_near_zero() {
    let dev = preset("ecram").unwrap();
    let (m, n) = (4, 4);
    let reference = ReferencePair::at_symmetry_point(&dev, m * n).unwrap();
    let g_sym = reference.plus[0];
    let gpw = (g_sym - dev.g_min).min(dev.g_max - g_sym);
    let cfg = CrossbarConfig::with_dims(m, n);
    let mut plus = CrossbarState::with_variation(cfg.clone(), dev.clone(), 1).unwrap();
    let mut minus = CrossbarState::with_variation(cfg, dev.clone(), 2).unwrap();
    for t in [&mut plus, &mut minus] {
        for c in t.cells.iter_mut() {
            c.g = g_sym;
        }
    }
    assert!(zero_shift_reference(&plus, &minus, &reference, gpw).unwrap().iter().all(|w| *w == 0.0));
    let mut rng = SeedStream::new(3).rng();
    let opts = UpdateOptions { enforce_endurance: false, differential: false };
    let mut mean_w = Vec::new();
    for step in 0..10_000u64 {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plan = build_pulse_plan(&x, &d, 2.0, 16, step).unwrap();
        apply_update_pair(&mut plus, &mut minus, &plan, &opts, SeedStream::new(step)).unwrap();
        if step >= 5_000 {
            let w = zero_shift_reference(&plus, &minus, &reference, gpw).unwrap();
            mean_w.push(w.iter().sum::<f64>() / w.len() as f64);
        }
    }
    let mean = mean_w.iter().sum::<f64>() / mean_w.len() as f64;
    // band: a tenth of the weight range
    assert!(mean.abs() < 0.1, "{mean}");
}
