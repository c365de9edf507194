//! The `cimsim` command line: `mvm`, `bounds sweep`, `train`, `program` and
//! `devices`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error
//! (including unreadable input files).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bitslice::{self, integer_mvm, MvmMode, QuantizedMatrix, TileDims};
use crate::crossbar::{required_adc_bits, Accounting, CrossbarConfig, DifferentialTile, ReadOptions};
use crate::design::{self, Grid};
use crate::device::{load_preset_file, preset, DeviceParams, PRESET_NAMES};
use crate::error::{Error, Result};
use crate::io::{self, FileDigest, Manifest};
use crate::programming::ProgramMethod;
use crate::rng::SeedStream;
use crate::training::{
    train_epoch_analog, AnalogNet, AnalogSettings, Dataset, EpochMetrics, EvalMode, NetworkSpec,
};

#[derive(Debug, Parser)]
#[command(name = "cimsim", version, about = "Compute-in-memory crossbar simulator")]
pub struct Cli {
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output location (directory, or CSV file for `bounds sweep`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// MVM mode (overrides the configuration).
    #[arg(long, global = true, value_enum)]
    pub mode: Option<MvmKind>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multiply a CSV matrix by a CSV vector on simulated tiles.
    Mvm {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        vector: Option<PathBuf>,
        /// Preset name or device TOML file.
        #[arg(long)]
        device: Option<String>,
        /// Compare against a direct floating-point / integer product.
        #[arg(long)]
        check: bool,
    },
    /// Closed-form design bounds.
    Bounds {
        #[command(subcommand)]
        action: BoundsAction,
    },
    /// Train a network on crossbar tiles.
    Train {
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Transfer a weight matrix onto a tile pair by write-verify.
    Program {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        device: Option<String>,
    },
    /// List device presets.
    Devices,
}

#[derive(Debug, Subcommand)]
pub enum BoundsAction {
    /// Evaluate every point of a parameter grid.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MvmKind {
    #[default]
    Ideal,
    Nonideal,
    Bitsliced,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Dimension { .. } | Error::Unsupported(_) => 2,
        Error::DeviceWorn { .. } | Error::Numerical(_) => 1,
    }
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(CliFailure::Error(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(CliFailure::CheckFailed(msg)) => {
            let _ = writeln!(err, "check failed: {msg}");
            1
        }
    }
}

enum CliFailure {
    Error(Error),
    CheckFailed(String),
}

impl From<Error> for CliFailure {
    fn from(e: Error) -> Self {
        CliFailure::Error(e)
    }
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) {
    let _ = writeln!(out, "{}", text.as_ref());
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), CliFailure> {
    match &cli.command {
        Command::Mvm { matrix, vector, device, check } => cmd_mvm(cli, matrix, vector, device, *check, out),
        Command::Bounds { action: BoundsAction::Sweep { grid } } => Ok(cmd_bounds(cli, grid, out)?),
        Command::Train { resume } => Ok(cmd_train(cli, *resume, out)?),
        Command::Program { matrix, device } => Ok(cmd_program(cli, matrix, device, out)?),
        Command::Devices => Ok(cmd_devices(cli, out)?),
    }
}

/// Preset name, or a path to a device TOML file.
pub fn resolve_device(spec: &str, base: &Path) -> Result<DeviceParams> {
    if PRESET_NAMES.contains(&spec) {
        return preset(spec);
    }
    if spec.ends_with(".toml") || spec.contains('/') {
        return load_preset_file(&base.join(spec));
    }
    preset(spec)
}

fn load_config<T: Default + serde::de::DeserializeOwned>(path: Option<&PathBuf>) -> Result<(T, PathBuf)> {
    match path {
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((io::read_toml(p)?, base))
        }
        None => Ok((T::default(), PathBuf::new())),
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BitSliceSettings {
    pub weight_bits: u32,
    pub input_bits: u32,
    pub bits_per_cell: u32,
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Defaults to the lossless per-slice resolution.
    pub adc_bits: Option<u32>,
}

impl Default for BitSliceSettings {
    fn default() -> Self {
        BitSliceSettings { weight_bits: 8, input_bits: 8, bits_per_cell: 2, tile_rows: 128, tile_cols: 128, adc_bits: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvmConfig {
    pub matrix: Option<PathBuf>,
    pub vector: Option<PathBuf>,
    pub mode: MvmKind,
    pub device: String,
    pub seed: u64,
    pub crossbar: CrossbarConfig,
    /// Read model for `nonideal`.
    pub read: ReadOptions,
    pub bitslice: BitSliceSettings,
    pub program: ProgramMethod,
}

impl Default for MvmConfig {
    fn default() -> Self {
        MvmConfig {
            matrix: None,
            vector: None,
            mode: MvmKind::Ideal,
            device: "ideal".into(),
            seed: 0,
            crossbar: CrossbarConfig::default(),
            read: ReadOptions::nonideal(),
            bitslice: BitSliceSettings::default(),
            program: ProgramMethod::Exact,
        }
    }
}

/// Scale a real vector onto signed integers of `bits` bits (kept as-is when
/// already integral and in range). Returns the integers and the scale.
fn quantize_vector(x: &[f64], bits: u32) -> Result<(Vec<i64>, f64)> {
    let q = QuantizedMatrix::quantize(1, x.len(), x, bits)?;
    Ok((q.entries, q.scale))
}

fn cmd_mvm(
    cli: &Cli,
    matrix: &Option<PathBuf>,
    vector: &Option<PathBuf>,
    device: &Option<String>,
    check: bool,
    out: &mut dyn Write,
) -> std::result::Result<(), CliFailure> {
    let (mut cfg, base): (MvmConfig, _) = load_config(cli.config.as_ref())?;
    if let Some(m) = matrix {
        cfg.matrix = Some(m.clone());
    } else if let Some(m) = &cfg.matrix {
        cfg.matrix = Some(resolve(&base, m));
    }
    if let Some(v) = vector {
        cfg.vector = Some(v.clone());
    } else if let Some(v) = &cfg.vector {
        cfg.vector = Some(resolve(&base, v));
    }
    if let Some(d) = device {
        cfg.device = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    let mpath = cfg.matrix.clone().ok_or_else(|| Error::config("no matrix given (--matrix or config `matrix`)"))?;
    let vpath = cfg.vector.clone().ok_or_else(|| Error::config("no vector given (--vector or config `vector`)"))?;
    let a = io::read_matrix_csv(&mpath)?;
    let x = io::read_vector_csv(&vpath)?;
    Error::check_len(a.cols, x.len())?;
    let dev = resolve_device(&cfg.device, &base)?;
    let seed = SeedStream::new(cfg.seed);
    let oracle: Vec<f64> = (0..a.rows).map(|o| (0..a.cols).map(|i| a.data[o * a.cols + i] * x[i]).sum()).collect();

    let (y, acc, check_result): (Vec<f64>, Accounting, Option<std::result::Result<String, String>>) = match cfg.mode {
        MvmKind::Ideal | MvmKind::Nonideal => {
            let mut tile = DifferentialTile::new(a.rows, a.cols, &a.data, &cfg.crossbar, &dev, seed.named("device"))?;
            tile.program(&a.data, &cfg.program, seed.named("program"))?;
            let opts = if cfg.mode == MvmKind::Ideal { ReadOptions::IDEAL } else { cfg.read };
            let (y, acc) = tile.mvm(&x, &opts, seed.named("noise"))?;
            let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let err = y.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            let res = if cfg.mode == MvmKind::Nonideal || err <= 1e-9 {
                Ok(format!("max deviation from direct product {err:e} (relative to max |y|)"))
            } else {
                Err(format!("ideal result deviates by {err:e}"))
            };
            (y, acc, Some(res))
        }
        MvmKind::Bitsliced => {
            let bs = &cfg.bitslice;
            // tile rows are inputs: store A transposed
            let mut at = vec![0.0; a.data.len()];
            for o in 0..a.rows {
                for i in 0..a.cols {
                    at[i * a.rows + o] = a.data[o * a.cols + i];
                }
            }
            let w = QuantizedMatrix::quantize(a.cols, a.rows, &at, bs.weight_bits)?;
            let (xq, xs) = quantize_vector(&x, bs.input_bits)?;
            let tile = TileDims { rows: bs.tile_rows.min(w.rows), cols: bs.tile_cols.min(w.cols) };
            let plan = bitslice::plan_slices(w.rows, w.cols, bs.weight_bits, bs.input_bits, bs.bits_per_cell, tile, &dev)?;
            let mut tmpl = cfg.crossbar.clone();
            tmpl.adc_bits = match bs.adc_bits {
                Some(b) => b,
                None => required_adc_bits(tile.rows, 1, bs.bits_per_cell + 1)?,
            };
            let mut tiles = plan.allocate_tiles(&tmpl, &dev, seed.named("device"))?;
            bitslice::program_weights(&plan, &w, &mut tiles, &cfg.program, seed.named("program"))?;
            let r = bitslice::mvm_bitsliced(&plan, &tiles, &xq, MvmMode::Ideal, seed.named("noise"))?;
            let exact = integer_mvm(&w, &xq);
            let res = if r.y == exact {
                Ok(format!("integer result equals integer product ({} saturations)", r.accounting.adc_saturations))
            } else {
                Err(format!("{} of {} outputs differ from the integer product", r.y.iter().zip(&exact).filter(|(a, b)| a != b).count(), exact.len()))
            };
            let y = r.y.iter().map(|v| *v as f64 * w.scale * xs).collect();
            (y, r.accounting, Some(res))
        }
    };

    let dir = out_dir(cli, "mvm-out");
    let out_csv = dir.join("output.csv");
    io::write_text(&out_csv, &io::vector_csv("y", &y))?;
    let acc_path = dir.join("accounting.toml");
    io::write_text(&acc_path, &io::to_toml(&acc)?)?;
    let mut resolved = cfg.clone();
    resolved.matrix = Some(mpath.clone());
    resolved.vector = Some(vpath.clone());
    let mut manifest = Manifest::new("mvm", cfg.seed, io::to_toml(&resolved)?);
    manifest.inputs = vec![FileDigest::of(&mpath)?, FileDigest::of(&vpath)?];
    manifest.outputs = vec![FileDigest::of(&out_csv)?, FileDigest::of(&acc_path)?];
    manifest.write(&dir.join("manifest.toml"))?;
    io::write_text(&dir.join("config.toml"), &manifest.config)?;
    for v in &y {
        say(out, v.to_string());
    }
    if check {
        match check_result {
            Some(Ok(msg)) => say(out, format!("check: ok, {msg}")),
            Some(Err(msg)) => return Err(CliFailure::CheckFailed(msg)),
            None => {}
        }
    }
    Ok(())
}

fn cmd_bounds(cli: &Cli, grid_path: &Path, out: &mut dyn Write) -> Result<()> {
    let grid = Grid::load(grid_path)?;
    let rows = design::sweep(&grid)?;
    let csv = design::sweep_csv(&rows);
    match &cli.out {
        Some(path) => {
            io::write_text(path, &csv)?;
            let mut m = Manifest::new("bounds sweep", 0, io::to_toml(&grid)?);
            m.inputs = vec![FileDigest::of(grid_path)?];
            m.outputs = vec![FileDigest::of(path)?];
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.toml");
            m.write(&path.with_file_name(name))?;
            say(out, format!("{} points written to {}", rows.len(), path.display()));
        }
        None => {
            let _ = write!(out, "{csv}");
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Labelled CSV; the bundled 8x8 digits when absent.
    pub path: Option<PathBuf>,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: None, train_fraction: 0.8, split_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub device: String,
    /// Replace the device by a linear one with the same step and noise.
    pub symmetric_counterpart: bool,
    pub network: NetworkSpec,
    pub analog: AnalogSettings,
    pub data: DataConfig,
    /// Read model for test-set evaluation after every epoch.
    pub eval_read: ReadOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            device: "ideal".into(),
            symmetric_counterpart: false,
            network: NetworkSpec::new(vec![64, 32, 10], 0.02, 8, 1),
            analog: AnalogSettings::default(),
            data: DataConfig::default(),
            eval_read: ReadOptions::IDEAL,
        }
    }
}

fn write_snapshots(net: &AnalogNet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (l, layer) in net.layers.iter().enumerate() {
        crate::crossbar::save_snapshot(&dir.join(format!("layer{l}_plus.snap")), &layer.plus, net.spec.seed)?;
        crate::crossbar::save_snapshot(&dir.join(format!("layer{l}_minus.snap")), &layer.minus, net.spec.seed)?;
    }
    Ok(())
}

fn cmd_train(cli: &Cli, resume: bool, out: &mut dyn Write) -> Result<()> {
    let (mut cfg, base): (TrainConfig, _) = load_config(cli.config.as_ref())?;
    if let Some(s) = cli.seed {
        cfg.network.seed = s;
    }
    if let Some(p) = &cfg.data.path {
        cfg.data.path = Some(resolve(&base, p));
    }
    let mut dev = resolve_device(&cfg.device, &base)?;
    if cfg.symmetric_counterpart {
        dev = dev.symmetric_counterpart();
    }
    let data = match &cfg.data.path {
        Some(p) => Dataset::from_csv(p)?,
        None => Dataset::digits(),
    };
    if data.features() != cfg.network.dims[0] || data.classes > *cfg.network.dims.last().unwrap_or(&0) {
        return Err(Error::config(format!(
            "network {:?} does not fit data with {} features and {} classes",
            cfg.network.dims,
            data.features(),
            data.classes
        )));
    }
    let (train, test) = data.split(cfg.data.train_fraction, cfg.data.split_seed)?;
    let dir = out_dir(cli, "train-out");
    let ck_dir = dir.join("checkpoint");
    let metrics_path = dir.join("metrics.csv");

    let (mut net, start, mut metrics) = if resume {
        let (net, done) = AnalogNet::load_checkpoint(&ck_dir, &cfg.network, &dev, &cfg.analog)?;
        let text = io::read_text(&metrics_path)?;
        let kept: Vec<&str> = text.lines().take(done + 1).collect();
        (net, done, kept.join("\n") + "\n")
    } else {
        let (net, _) = AnalogNet::new(&cfg.network, &dev, &cfg.analog)?;
        write_snapshots(&net, &dir.join("snapshots/before"))?;
        (net, 0, format!("{}\n", EpochMetrics::CSV_HEADER))
    };
    for epoch in start..cfg.network.epochs {
        let mut m = train_epoch_analog(&mut net, &train, epoch)?;
        m.test_accuracy = net.evaluate(&test, &EvalMode::Analog(cfg.eval_read), cfg.network.seed)?.accuracy;
        metrics.push_str(&m.csv_row());
        metrics.push('\n');
        io::write_text(&metrics_path, &metrics)?;
        net.save_checkpoint(&ck_dir, epoch + 1)?;
        say(out, format!("epoch {epoch}: loss {} test accuracy {}", m.train_loss, m.test_accuracy));
    }
    write_snapshots(&net, &dir.join("snapshots/after"))?;
    let mut m = Manifest::new("train", cfg.network.seed, io::to_toml(&cfg)?);
    if let Some(p) = &cfg.data.path {
        m.inputs.push(FileDigest::of(p)?);
    }
    m.outputs.push(FileDigest::of(&metrics_path)?);
    m.write(&dir.join("manifest.toml"))?;
    io::write_text(&dir.join("config.toml"), &m.config)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgramConfig {
    pub matrix: Option<PathBuf>,
    pub device: String,
    pub seed: u64,
    pub crossbar: CrossbarConfig,
    pub method: ProgramMethod,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        ProgramConfig {
            matrix: None,
            device: "rram".into(),
            seed: 0,
            crossbar: CrossbarConfig::default(),
            method: ProgramMethod::default(),
        }
    }
}

fn cmd_program(cli: &Cli, matrix: &Option<PathBuf>, device: &Option<String>, out: &mut dyn Write) -> Result<()> {
    let (mut cfg, base): (ProgramConfig, _) = load_config(cli.config.as_ref())?;
    cfg.matrix = match (matrix, &cfg.matrix) {
        (Some(m), _) => Some(m.clone()),
        (None, Some(m)) => Some(resolve(&base, m)),
        (None, None) => None,
    };
    if let Some(d) = device {
        cfg.device = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mpath = cfg.matrix.clone().ok_or_else(|| Error::config("no matrix given (--matrix or config `matrix`)"))?;
    let a = io::read_matrix_csv(&mpath)?;
    let dev = resolve_device(&cfg.device, &base)?;
    let seed = SeedStream::new(cfg.seed);
    let mut tile = DifferentialTile::new(a.rows, a.cols, &a.data, &cfg.crossbar, &dev, seed.named("device"))?;
    let report = tile.program(&a.data, &cfg.method, seed.named("program"))?;
    let dir = out_dir(cli, "program-out");
    let plus = dir.join("plus.snap");
    let minus = dir.join("minus.snap");
    crate::crossbar::save_snapshot(&plus, &tile.plus, cfg.seed)?;
    crate::crossbar::save_snapshot(&minus, &tile.minus, cfg.seed)?;
    let rep_path = dir.join("program_report.toml");
    io::write_text(&rep_path, &io::to_toml(&report)?)?;
    let mut m = Manifest::new("program", cfg.seed, io::to_toml(&cfg)?);
    m.inputs = vec![FileDigest::of(&mpath)?];
    m.outputs = vec![FileDigest::of(&plus)?, FileDigest::of(&minus)?, FileDigest::of(&rep_path)?];
    m.write(&dir.join("manifest.toml"))?;
    say(
        out,
        format!(
            "{} cells, {} pulses, {} J, verified {:.4}, worst residual {:.4} of window",
            report.cells,
            report.pulses,
            report.energy,
            report.verified_fraction(),
            report.residual_max
        ),
    );
    Ok(())
}

fn cmd_devices(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    say(out, format!("{:<6} {:>10} {:>10} {:>5} {:<22} {:>9} {:>9} {:>9}", "name", "g_min_S", "g_max_S", "bits", "response", "E_write_J", "t_write_s", "endurance"));
    for name in PRESET_NAMES {
        let p = preset(name)?;
        say(
            out,
            format!(
                "{:<6} {:>10.3e} {:>10.3e} {:>5} {:<22} {:>9.1e} {:>9.1e} {:>9.1e}",
                p.name,
                p.g_min,
                p.g_max,
                p.bits_per_cell,
                format!("{:?}", p.response_kind),
                p.write_energy,
                p.write_latency,
                p.endurance as f64
            ),
        );
        if let Some(dir) = &cli.out {
            crate::device::save_preset_file(&p, &dir.join(format!("{name}.toml")))?;
        }
    }
    Ok(())
}
