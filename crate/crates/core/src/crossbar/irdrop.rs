//! Resistive-network read of a crossbar with wire resistance.
//!
//! Topology: row `i` is driven at its left end by `V_i` through one wire
//! segment; each row wire has one segment of `r_wire` per cell and an open
//! far end. Each column wire has one segment per cell and is held at virtual
//! ground at the bottom (sense) end, after the last row. Devices connect row
//! node `(i, j)` to column node `(i, j)`.

use crate::error::{Error, Result};

/// Largest tile solved with the banded direct method; bigger tiles use the
/// cumulative-current iteration run to convergence.
pub const DIRECT_LIMIT: usize = 128;

const ITERATIVE_TOL: f64 = 1e-13;
const ITERATIVE_MAX_SWEEPS: usize = 100_000;

/// Exact column currents. `g` is row-major `m x n`.
pub fn solve_exact(g: &[f64], m: usize, n: usize, v: &[f64], r_wire: f64) -> Result<Vec<f64>> {
    assert!(r_wire > 0.0, "exact solve needs a positive wire resistance");
    if m.max(n) <= DIRECT_LIMIT {
        solve_banded(g, m, n, v, r_wire)
    } else {
        solve_iterative(g, m, n, v, r_wire)
    }
}

/// Node numbering that keeps the half-bandwidth at `2 min(m, n)`.
struct Layout {
    m: usize,
    n: usize,
    row_major: bool,
}

impl Layout {
    fn new(m: usize, n: usize) -> Self {
        Layout { m, n, row_major: n <= m }
    }

    fn row_node(&self, i: usize, j: usize) -> usize {
        if self.row_major {
            2 * (i * self.n + j)
        } else {
            2 * (j * self.m + i)
        }
    }

    fn col_node(&self, i: usize, j: usize) -> usize {
        self.row_node(i, j) + 1
    }

    fn bandwidth(&self) -> usize {
        2 * self.m.min(self.n)
    }

    fn len(&self) -> usize {
        2 * self.m * self.n
    }
}

/// Symmetric banded matrix, lower band stored row by row.
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Banded { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        debug_assert!(r - c <= self.bw);
        &mut self.data[r * (self.bw + 1) + (r - c)]
    }

    #[inline]
    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.bw + 1) + (r - c)]
    }

    fn stamp(&mut self, a: usize, b: usize, g: f64) {
        *self.at(a, a) += g;
        *self.at(b, b) += g;
        *self.at(a, b) -= g;
    }

    /// In-place Cholesky factorization, `A = L L^T`.
    fn factor(&mut self) -> Result<()> {
        let w = self.bw + 1;
        for k in 0..self.n {
            let lo = k.saturating_sub(self.bw);
            for j in lo..k {
                let lo_j = j.saturating_sub(self.bw).max(lo);
                let mut s = self.data[k * w + (k - j)];
                for p in lo_j..j {
                    s -= self.data[k * w + (k - p)] * self.data[j * w + (j - p)];
                }
                self.data[k * w + (k - j)] = s / self.data[j * w];
            }
            let mut d = self.data[k * w];
            for p in lo..k {
                let l = self.data[k * w + (k - p)];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(Error::Numerical(format!(
                    "nodal matrix not positive definite at node {k} of {} (pivot {d:e})",
                    self.n
                )));
            }
            self.data[k * w] = d.sqrt();
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        // L y = b
        for k in 0..self.n {
            let lo = k.saturating_sub(self.bw);
            let mut s = b[k];
            for p in lo..k {
                s -= self.get(k, p) * b[p];
            }
            b[k] = s / self.get(k, k);
        }
        // L^T x = y
        for k in (0..self.n).rev() {
            let hi = (k + self.bw).min(self.n - 1);
            let mut s = b[k];
            for r in k + 1..=hi {
                s -= self.get(r, k) * b[r];
            }
            b[k] = s / self.get(k, k);
        }
    }
}

fn solve_banded(g: &[f64], m: usize, n: usize, v: &[f64], r_wire: f64) -> Result<Vec<f64>> {
    let gw = 1.0 / r_wire;
    let lay = Layout::new(m, n);
    let mut a = Banded::new(lay.len(), lay.bandwidth());
    let mut rhs = vec![0.0; lay.len()];
    for i in 0..m {
        for j in 0..n {
            let r = lay.row_node(i, j);
            let c = lay.col_node(i, j);
            if j == 0 {
                *a.at(r, r) += gw;
                rhs[r] += gw * v[i];
            } else {
                a.stamp(r, lay.row_node(i, j - 1), gw);
            }
            if i + 1 < m {
                a.stamp(c, lay.col_node(i + 1, j), gw);
            } else {
                *a.at(c, c) += gw;
            }
            let gij = g[i * n + j];
            if gij != 0.0 {
                a.stamp(r, c, gij);
            }
        }
    }
    a.factor()?;
    a.solve(&mut rhs);
    Ok((0..n).map(|j| gw * rhs[lay.col_node(m - 1, j)]).collect())
}

/// One sweep: given cell voltages, compute cell currents, then rebuild row and
/// column wire potentials from the cumulative currents each segment carries.
fn sweep(g: &[f64], m: usize, n: usize, v: &[f64], r_wire: f64, cell_v: &mut [f64], cur: &mut [f64]) {
    for (k, c) in cur.iter_mut().enumerate() {
        *c = g[k] * cell_v[k];
    }
    // row wires: segment j feeds cells j..n
    for i in 0..m {
        let row = &cur[i * n..(i + 1) * n];
        let mut downstream: f64 = row.iter().sum();
        let mut node = v[i];
        for j in 0..n {
            node -= r_wire * downstream;
            cell_v[i * n + j] = node;
            downstream -= row[j];
        }
    }
    // column wires: the segment below node i carries cells 0..=i
    for j in 0..n {
        let total: f64 = (0..m).map(|i| cur[i * n + j]).sum();
        let mut above_total = total;
        let mut node = r_wire * total;
        for i in (0..m).rev() {
            cell_v[i * n + j] -= node;
            above_total -= cur[i * n + j];
            node += r_wire * above_total;
        }
    }
}

fn column_currents(g: &[f64], m: usize, n: usize, cell_v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            out[j] += g[i * n + j] * cell_v[i * n + j];
        }
    }
    out
}

fn initial_cell_voltages(m: usize, n: usize, v: &[f64]) -> Vec<f64> {
    let mut cell_v = vec![0.0; m * n];
    for i in 0..m {
        cell_v[i * n..(i + 1) * n].fill(v[i]);
    }
    cell_v
}

/// Approximate read: start from the ideal cell voltages and apply a fixed
/// number of cumulative-current corrections. Cost is `O(m n)` per sweep.
pub fn solve_approximate(g: &[f64], m: usize, n: usize, v: &[f64], r_wire: f64, sweeps: usize) -> Vec<f64> {
    let mut cell_v = initial_cell_voltages(m, n, v);
    let mut cur = vec![0.0; m * n];
    for _ in 0..sweeps {
        sweep(g, m, n, v, r_wire, &mut cell_v, &mut cur);
    }
    column_currents(g, m, n, &cell_v)
}

fn solve_iterative(g: &[f64], m: usize, n: usize, v: &[f64], r_wire: f64) -> Result<Vec<f64>> {
    let mut cell_v = initial_cell_voltages(m, n, v);
    let mut cur = vec![0.0; m * n];
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut last_change = f64::INFINITY;
    for sweep_no in 0..ITERATIVE_MAX_SWEEPS {
        let before = cell_v.clone();
        sweep(g, m, n, v, r_wire, &mut cell_v, &mut cur);
        let change = before
            .iter()
            .zip(&cell_v)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if !change.is_finite() || (sweep_no > 8 && change > last_change * 1.5) {
            return Err(Error::Numerical(format!(
                "IR-drop iteration diverges on {m}x{n} tile after {sweep_no} sweeps \
                 (change {change:e} V); wire loading too high for the iterative solver"
            )));
        }
        if change <= ITERATIVE_TOL * scale {
            return Ok(column_currents(g, m, n, &cell_v));
        }
        last_change = change;
    }
    Err(Error::Numerical(format!(
        "IR-drop iteration did not converge on {m}x{n} tile in {ITERATIVE_MAX_SWEEPS} sweeps (last change {last_change:e} V)"
    )))
}
