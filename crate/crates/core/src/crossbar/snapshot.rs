//! Conductance snapshots: a short text header followed by flat little-endian
//! planes (`g`, `age` as f64; `pulses` as u64; `dg_scale`, `nu_scale` as f64), each
//! row-major `rows x cols`.
//!
//! ```text
//! CIMSIM-SNAPSHOT 1
//! rows 16
//! cols 16
//! device rram
//! seed 42
//! planes g age pulses dg_scale nu_scale
//! end
//! <binary planes>
//! ```

use std::io::Write;
use std::path::Path;

use super::{CrossbarConfig, CrossbarState};
use crate::device::{ConductanceState, DeviceParams};
use crate::error::{Error, Result};

const MAGIC: &str = "CIMSIM-SNAPSHOT 1";
const PLANES: &str = "g age pulses dg_scale nu_scale";
const PLANE_COUNT: usize = 5;

pub fn save_snapshot(path: &Path, state: &CrossbarState, seed: u64) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + state.cells.len() * 32);
    write!(
        buf,
        "{MAGIC}\nrows {}\ncols {}\ndevice {}\nseed {seed}\nplanes {PLANES}\nend\n",
        state.rows(),
        state.cols(),
        state.device.name
    )
    .expect("write to vec");
    for c in &state.cells {
        buf.extend_from_slice(&c.g.to_le_bytes());
    }
    for c in &state.cells {
        buf.extend_from_slice(&c.age.to_le_bytes());
    }
    for c in &state.cells {
        buf.extend_from_slice(&c.pulses_seen.to_le_bytes());
    }
    for c in &state.cells {
        buf.extend_from_slice(&c.dg_scale.to_le_bytes());
    }
    for c in &state.cells {
        buf.extend_from_slice(&c.nu_scale.to_le_bytes());
    }
    crate::io::write_bytes(path, &buf)
}

/// Load a snapshot into a tile with the given wiring and device. The header's
/// dimensions and device name must match. Returns the tile and stored seed.
pub fn load_snapshot(path: &Path, config: &CrossbarConfig, device: &DeviceParams) -> Result<(CrossbarState, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut pos = 0;
    let mut header = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| parse_err(header.len() as u64 + 1, "truncated header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| parse_err(header.len() as u64 + 1, "header is not UTF-8".into()))?;
        pos += end + 1;
        if line == "end" {
            break;
        }
        header.push(line.to_string());
        if header.len() > 32 {
            return Err(parse_err(33, "header too long".into()));
        }
    }
    if header.first().map(String::as_str) != Some(MAGIC) {
        return Err(parse_err(1, format!("expected '{MAGIC}'")));
    }
    let field = |key: &str| -> Result<(u64, &str)> {
        header
            .iter()
            .enumerate()
            .find_map(|(n, l)| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')).map(|v| (n as u64 + 1, v)))
            .ok_or_else(|| parse_err(0, format!("missing '{key}'")))
    };
    let number = |key: &str| -> Result<u64> {
        let (line, v) = field(key)?;
        v.parse().map_err(|_| parse_err(line, format!("bad {key} '{v}'")))
    };
    let rows = number("rows")? as usize;
    let cols = number("cols")? as usize;
    let seed = number("seed")?;
    let (line, dev) = field("device")?;
    if dev != device.name {
        return Err(parse_err(line, format!("snapshot is for device '{dev}', not '{}'", device.name)));
    }
    let (line, planes) = field("planes")?;
    if planes != PLANES {
        return Err(parse_err(line, format!("unsupported planes '{planes}'")));
    }
    if rows != config.rows || cols != config.cols {
        return Err(Error::config(format!(
            "snapshot is {rows}x{cols}, tile is {}x{}",
            config.rows, config.cols
        )));
    }
    let n = rows * cols;
    if bytes.len() - pos != n * 8 * PLANE_COUNT {
        return Err(parse_err(
            header.len() as u64 + 2,
            format!("expected {} data bytes, found {}", n * 8 * PLANE_COUNT, bytes.len() - pos),
        ));
    }
    let word = |plane: usize, k: usize| -> [u8; 8] {
        let at = pos + (plane * n + k) * 8;
        bytes[at..at + 8].try_into().expect("8 bytes")
    };
    let cells = (0..n)
        .map(|k| ConductanceState {
            g: f64::from_le_bytes(word(0, k)),
            age: f64::from_le_bytes(word(1, k)),
            pulses_seen: u64::from_le_bytes(word(2, k)),
            dg_scale: f64::from_le_bytes(word(3, k)),
            nu_scale: f64::from_le_bytes(word(4, k)),
        })
        .collect();
    let mut state = CrossbarState::new(config.clone(), device.clone())?;
    state.cells = cells;
    Ok((state, seed))
}

/// Debug export of per-column currents.
pub fn write_column_currents_csv(path: &Path, currents: &[f64]) -> Result<()> {
    let mut out = String::from("column,current_a\n");
    for (j, i) in currents.iter().enumerate() {
        out.push_str(&format!("{j},{i:e}\n"));
    }
    crate::io::write_text(path, &out)
}
