use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::LatticePlan;
use super::sigma::SigmaSpec;
use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::quadrature::pairwise_sum;

/// Worker count: `LEVYHEAT_THREADS` if set to a positive integer, else all cores.
pub fn thread_count() -> usize {
    std::env::var("LEVYHEAT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// `f(seed)` for every seed, in parallel, results in seed order.
pub fn replicate<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

/// Sample mean and its standard error, summed pairwise so the result does
/// not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn sample_stats(xs: &[f64]) -> SampleStats {
    let n = xs.len();
    if n == 0 {
        return SampleStats { mean: f64::NAN, std_error: f64::NAN, n };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return SampleStats { mean, std_error: 0.0, n };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    SampleStats { mean, std_error: (var / n as f64).sqrt(), n }
}

/// Field values at `probes` = (row, node) pairs, one vector per seed.
pub fn probe_samples(plan: &LatticePlan, sigma: &SigmaSpec, seeds: &[u64], probes: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
    for &(i, j) in probes {
        if i >= plan.nt() || j >= plan.nx() {
            return Err(Error::GridMismatch(format!("probe ({i}, {j}) outside {}x{} lattice", plan.nt(), plan.nx())));
        }
    }
    let last = probes.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    replicate(seeds, |seed| {
        let noise = NoiseStream::new(plan.dt(), plan.dx(), plan.nx(), seed)?;
        let mut state = plan.initial_state();
        let mut out = vec![0.0; probes.len()];
        plan.advance(sigma, &noise, &mut state, last, |n, u| {
            for (o, &(i, j)) in out.iter_mut().zip(probes) {
                if i == n {
                    *o = u[j];
                }
            }
        })?;
        Ok(out)
    })
}

/// Estimated E|u_t(x)|^k at one point, with optional reference bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub x: f64,
    pub k: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub bound_exist_unique: Option<f64>,
    pub bound_h1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
}

impl MomentTable {
    /// Absolute moments of order `ks` at every probe from per-seed samples.
    pub fn from_samples(plan: &LatticePlan, probes: &[(usize, usize)], samples: &[Vec<f64>], ks: &[f64]) -> Self {
        let mut rows = Vec::with_capacity(probes.len() * ks.len());
        for (p, &(i, j)) in probes.iter().enumerate() {
            for &k in ks {
                let col: Vec<f64> = samples.iter().map(|s| s[p].abs().powf(k)).collect();
                let st = sample_stats(&col);
                rows.push(MomentRow {
                    t: plan.t_nodes()[i],
                    x: plan.x_nodes()[j],
                    k,
                    estimate: st.mean,
                    std_error: st.std_error,
                    bound_exist_unique: None,
                    bound_h1: None,
                });
            }
        }
        Self { rows }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "k", "estimate", "std_error", "bound_exist_unique", "bound_h1"])?;
        let opt = |v: Option<f64>| v.map(|b| format!("{b:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                format!("{}", r.t),
                format!("{}", r.x),
                format!("{}", r.k),
                format!("{:e}", r.estimate),
                format!("{:e}", r.std_error),
                opt(r.bound_exist_unique),
                opt(r.bound_h1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_match_textbook() {
        let s = sample_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn replicate_keeps_seed_order() {
        let seeds: Vec<u64> = (0..100).collect();
        let out = replicate(&seeds, |s| Ok(s * 2)).unwrap();
        assert_eq!(out, seeds.iter().map(|s| s * 2).collect::<Vec<_>>());
    }
}
