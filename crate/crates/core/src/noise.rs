//! Seeded lattice realizations of space-time white noise.
//!
//! Cell (i, j) holds the white-noise mass of [t_i, t_{i+1}) × [x_j, x_{j+1}),
//! a centred Gaussian with variance Δt·Δx. Row i is drawn from the ChaCha8
//! stream `i` of the seed, two cells per Box–Muller pair, so any cell can be
//! regenerated without touching its predecessors.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default ceiling on stored cells (8 bytes each): 1 GiB.
pub const DEFAULT_CELL_BUDGET: usize = 1 << 27;

const MAGIC: &[u8; 4] = b"LHN1";

/// Row-by-row access to noise increments, stored or generated on demand.
pub trait NoiseSource: Sync {
    fn dt(&self) -> f64;
    fn dx(&self) -> f64;
    fn nx(&self) -> usize;
    /// Number of available rows, if bounded.
    fn rows(&self) -> Option<usize>;
    /// Writes row `n` (relative to this source) into `out`.
    fn fill_row(&self, n: usize, out: &mut [f64]);
}

/// A stored (nt × nx) block of increments, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLattice {
    pub dt: f64,
    pub dx: f64,
    pub nt: usize,
    pub nx: usize,
    pub seed: u64,
    /// Absolute index of the first stored row within the seed's stream.
    pub row_offset: usize,
    increments: Vec<f64>,
}

/// Unbounded generator with the same cell layout as `NoiseLattice`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStream {
    pub dt: f64,
    pub dx: f64,
    pub nx: usize,
    pub seed: u64,
    pub row_offset: usize,
    /// Absolute index of cell 0 within each row.
    pub col_offset: usize,
}

fn check_shape(dt: f64, dx: f64, nx: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite() && dx > 0.0 && dx.is_finite()) {
        return Err(Error::InvalidParameter(format!("cell sizes dt = {dt}, dx = {dx} must be positive")));
    }
    if nx == 0 {
        return Err(Error::InvalidParameter("nx must be at least 1".into()));
    }
    Ok(())
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn box_muller(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

/// Standard normals of absolute row `row`, cells `0..out.len()`, times `scale`.
pub fn fill_standard_row(seed: u64, row: usize, scale: f64, out: &mut [f64]) {
    let mut rng = row_rng(seed, row);
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(&mut rng);
        pair[0] = scale * a;
        pair[1] = scale * b;
    }
    if let [last] = chunks.into_remainder() {
        *last = scale * box_muller(&mut rng).0;
    }
}

/// As [`fill_standard_row`] for cells `first..first + out.len()`.
pub fn fill_standard_row_from(seed: u64, row: usize, first: usize, scale: f64, out: &mut [f64]) {
    if first == 0 {
        return fill_standard_row(seed, row, scale, out);
    }
    let mut rng = row_rng(seed, row);
    rng.set_word_pos(4 * (first / 2) as u128);
    let mut k = 0;
    if first % 2 == 1 && !out.is_empty() {
        out[0] = scale * box_muller(&mut rng).1;
        k = 1;
    }
    let mut chunks = out[k..].chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(&mut rng);
        pair[0] = scale * a;
        pair[1] = scale * b;
    }
    if let [last] = chunks.into_remainder() {
        *last = scale * box_muller(&mut rng).0;
    }
}

/// Standard normal of cell (row, j), without generating the rest of the row.
pub fn standard_cell(seed: u64, row: usize, j: usize) -> f64 {
    let mut rng = row_rng(seed, row);
    // each pair consumes two u64, i.e. four 32-bit words
    rng.set_word_pos(4 * (j / 2) as u128);
    let (a, b) = box_muller(&mut rng);
    if j.is_multiple_of(2) {
        a
    } else {
        b
    }
}

impl NoiseStream {
    pub fn new(dt: f64, dx: f64, nx: usize, seed: u64) -> Result<Self> {
        check_shape(dt, dx, nx)?;
        Ok(Self { dt, dx, nx, seed, row_offset: 0, col_offset: 0 })
    }

    pub fn shifted(&self, rows: usize) -> Self {
        Self { row_offset: self.row_offset + rows, ..*self }
    }

    /// Same seed with cell 0 at absolute column `cols`, so lattices of
    /// different widths share noise on their overlap.
    pub fn with_column_offset(&self, cols: usize) -> Self {
        Self { col_offset: cols, ..*self }
    }

    /// Materializes `nt` rows.
    pub fn take(&self, nt: usize, budget: usize) -> Result<NoiseLattice> {
        if self.col_offset != 0 {
            return Err(Error::InvalidParameter("stored lattices start at column 0".into()));
        }
        NoiseLattice::generate(self.dt, self.dx, nt, self.nx, self.seed, self.row_offset, budget)
    }
}

impl NoiseSource for NoiseStream {
    fn dt(&self) -> f64 {
        self.dt
    }
    fn dx(&self) -> f64 {
        self.dx
    }
    fn nx(&self) -> usize {
        self.nx
    }
    fn rows(&self) -> Option<usize> {
        None
    }
    fn fill_row(&self, n: usize, out: &mut [f64]) {
        fill_standard_row_from(self.seed, self.row_offset + n, self.col_offset, (self.dt * self.dx).sqrt(), out);
    }
}

/// Draws an (nt × nx) lattice under the default cell budget.
pub fn sample_noise(dt: f64, dx: f64, nt: usize, nx: usize, seed: u64) -> Result<NoiseLattice> {
    NoiseLattice::generate(dt, dx, nt, nx, seed, 0, DEFAULT_CELL_BUDGET)
}

/// Suffix of `noise` starting at row `offset`.
pub fn shift_noise(noise: &NoiseLattice, offset: usize) -> Result<NoiseLattice> {
    noise.shifted(offset)
}

impl NoiseLattice {
    pub fn generate(dt: f64, dx: f64, nt: usize, nx: usize, seed: u64, row_offset: usize, budget: usize) -> Result<Self> {
        check_shape(dt, dx, nx)?;
        if nt == 0 {
            return Err(Error::InvalidParameter("nt must be at least 1".into()));
        }
        let cells = nt.saturating_mul(nx);
        if cells > budget {
            return Err(Error::AllocationLimit { cells, budget });
        }
        let scale = (dt * dx).sqrt();
        let mut increments = vec![0.0; cells];
        increments
            .par_chunks_mut(nx)
            .enumerate()
            .for_each(|(i, row)| fill_standard_row(seed, row_offset + i, scale, row));
        Ok(Self { dt, dx, nt, nx, seed, row_offset, increments })
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.increments[i * self.nx..(i + 1) * self.nx]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.increments[i * self.nx + j]
    }

    /// Recomputes cell (i, j) from the seed alone.
    pub fn regenerate_cell(&self, i: usize, j: usize) -> f64 {
        (self.dt * self.dx).sqrt() * standard_cell(self.seed, self.row_offset + i, j)
    }

    /// Rows `offset..nt`.
    pub fn shifted(&self, offset: usize) -> Result<Self> {
        if offset >= self.nt {
            return Err(Error::OffsetOutOfRange { offset, nt: self.nt });
        }
        Ok(Self {
            nt: self.nt - offset,
            row_offset: self.row_offset + offset,
            increments: self.increments[offset * self.nx..].to_vec(),
            ..*self
        })
    }

    /// Generator continuing this lattice's stream past its last row.
    pub fn stream(&self) -> NoiseStream {
        NoiseStream { dt: self.dt, dx: self.dx, nx: self.nx, seed: self.seed, row_offset: self.row_offset, col_offset: 0 }
    }

    /// Sum of increments over a block of cells: the white-noise mass of the
    /// corresponding rectangle.
    pub fn rect_sum(&self, rows: Range<usize>, cols: Range<usize>) -> f64 {
        rows.map(|i| self.row(i)[cols.clone()].iter().sum::<f64>()).sum()
    }

    /// Writes the 32-byte header (magic, nt and nx as u32, dt, dx, seed as
    /// u32) and the increments as little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let seed = u32::try_from(self.seed)
            .map_err(|_| Error::InvalidParameter(format!("seed {} does not fit the 32-bit header field", self.seed)))?;
        let (nt, nx) = match (u32::try_from(self.nt), u32::try_from(self.nx)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Err(Error::InvalidParameter("lattice too large for the dump header".into())),
        };
        w.write_all(MAGIC)?;
        w.write_all(&nt.to_le_bytes())?;
        w.write_all(&nx.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.dx.to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.increments.len());
        for v in &self.increments {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Inverse of `write_to`; the stream offset is not recorded and reads back as 0.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 32];
        r.read_exact(&mut head)?;
        if &head[0..4] != MAGIC {
            return Err(Error::Io("not a noise dump (bad magic)".into()));
        }
        let u32_at = |k: usize| u32::from_le_bytes(head[k..k + 4].try_into().unwrap()) as usize;
        let f64_at = |k: usize| f64::from_le_bytes(head[k..k + 8].try_into().unwrap());
        let (nt, nx) = (u32_at(4), u32_at(8));
        let (dt, dx) = (f64_at(12), f64_at(20));
        let seed = u32_at(28) as u64;
        let mut body = vec![0u8; 8 * nt * nx];
        r.read_exact(&mut body)?;
        let increments = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { dt, dx, nt, nx, seed, row_offset: 0, increments })
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl NoiseSource for NoiseLattice {
    fn dt(&self) -> f64 {
        self.dt
    }
    fn dx(&self) -> f64 {
        self.dx
    }
    fn nx(&self) -> usize {
        self.nx
    }
    fn rows(&self) -> Option<usize> {
        Some(self.nt)
    }
    fn fill_row(&self, n: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(n));
    }
}
