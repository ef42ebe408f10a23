use serde::{Deserialize, Serialize};

use super::evolve::FieldLattice;
use super::montecarlo::replicate;
use super::plan::LatticePlan;
use super::sigma::SigmaSpec;
use crate::error::Result;
use crate::noise::NoiseStream;

/// Lattice minimum and the number of cells below −ε_num.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityScan {
    pub min_value: f64,
    pub violations: usize,
    pub cells: usize,
    pub eps_num: f64,
}

impl PositivityScan {
    pub fn fraction(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.violations as f64 / self.cells as f64
        }
    }

    fn merge(self, other: Self) -> Self {
        Self {
            min_value: self.min_value.min(other.min_value),
            violations: self.violations + other.violations,
            cells: self.cells + other.cells,
            eps_num: self.eps_num,
        }
    }
}

pub fn positivity_scan(field: &FieldLattice, eps_num: f64) -> PositivityScan {
    scan_values(&field.grid.values, eps_num)
}

fn scan_values(values: &[f64], eps_num: f64) -> PositivityScan {
    PositivityScan {
        min_value: values.iter().copied().fold(f64::INFINITY, f64::min),
        violations: values.iter().filter(|&&v| v < -eps_num).count(),
        cells: values.len(),
        eps_num,
    }
}

impl LatticePlan {
    /// ε_num: ten times the one-step error of the propagator acting on the
    /// heat term, floored at 1e−12 of the largest heat-term value.
    pub fn positivity_tolerance(&self) -> f64 {
        let top = (0..self.nt()).flat_map(|n| self.det_row(n).iter().copied()).fold(0.0f64, f64::max);
        (10.0 * self.propagator_defect()).max(1e-12 * top)
    }

    /// Positivity counts pooled over seeds, without storing fields.
    pub fn positivity_study(&self, sigma: &SigmaSpec, seeds: &[u64], eps_num: f64) -> Result<PositivityScan> {
        let per_seed = replicate(seeds, |seed| {
            let noise = NoiseStream::new(self.dt(), self.dx(), self.nx(), seed)?;
            let mut state = self.initial_state();
            let mut acc = PositivityScan { min_value: f64::INFINITY, violations: 0, cells: 0, eps_num };
            self.advance(sigma, &noise, &mut state, self.nt(), |_, u| acc = acc.merge(scan_values(u, eps_num)))?;
            Ok(acc)
        })?;
        let empty = PositivityScan { min_value: f64::INFINITY, violations: 0, cells: 0, eps_num };
        Ok(per_seed.into_iter().fold(empty, PositivityScan::merge))
    }
}
