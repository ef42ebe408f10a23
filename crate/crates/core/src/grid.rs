use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values on a (t, x) product grid: increasing positive times, uniform x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub t_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    /// Row-major, one row per time node.
    pub values: Vec<f64>,
}

impl SpaceTimeGrid {
    pub fn new(t_nodes: Vec<f64>, x_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t_nodes.is_empty() || x_nodes.is_empty() {
            return Err(Error::GridMismatch("empty grid".into()));
        }
        if !(t_nodes[0] > 0.0) || t_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("time nodes must be positive and increasing".into()));
        }
        if x_nodes.len() > 1 {
            let dx = x_nodes[1] - x_nodes[0];
            let uniform = dx > 0.0 && x_nodes.windows(2).all(|w| ((w[1] - w[0]) - dx).abs() <= 1e-9 * dx);
            if !uniform {
                return Err(Error::GridMismatch("space nodes must be uniform and increasing".into()));
            }
        }
        if values.len() != t_nodes.len() * x_nodes.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                t_nodes.len(),
                x_nodes.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::GridMismatch("non-finite grid value".into()));
        }
        Ok(Self { t_nodes, x_nodes, values })
    }

    /// Grid of `f(t, x)`.
    pub fn tabulate<F: FnMut(f64, f64) -> Result<f64>>(t_nodes: Vec<f64>, x_nodes: Vec<f64>, mut f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(t_nodes.len() * x_nodes.len());
        for &t in &t_nodes {
            for &x in &x_nodes {
                values.push(f(t, x)?);
            }
        }
        Self::new(t_nodes, x_nodes, values)
    }

    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn dx(&self) -> f64 {
        if self.x_nodes.len() > 1 {
            self.x_nodes[1] - self.x_nodes[0]
        } else {
            0.0
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nx() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.nx()..(i + 1) * self.nx()]
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        if close(&self.t_nodes, &other.t_nodes) && close(&self.x_nodes, &other.x_nodes) {
            Ok(())
        } else {
            Err(Error::GridMismatch("grids differ in nodes".into()))
        }
    }

    /// Index of the node nearest to x.
    pub fn nearest_x(&self, x: f64) -> usize {
        let dx = self.dx();
        if dx == 0.0 {
            return 0;
        }
        (((x - self.x_nodes[0]) / dx).round().max(0.0) as usize).min(self.nx() - 1)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
