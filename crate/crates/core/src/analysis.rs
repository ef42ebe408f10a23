//! Verdicts on the quantitative moment, scaling, tail and sup claims,
//! computed from simulation output and the deterministic oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::measure::FiniteMeasure;
use crate::noise::NoiseStream;
use crate::quadrature::linear_fit;
use crate::solver::{replicate, sample_stats, FieldLattice, GridSpec, LatticePlan, MomentRow, MomentTable, OracleOptions, PamOracle, SampleStats, SigmaSpec};

/// One certified inequality lhs ≤ rhs, allowing three standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub claim_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub std_error: f64,
    pub pass: bool,
    pub metadata: BTreeMap<String, String>,
}

impl BoundVerdict {
    pub fn new(claim_id: impl Into<String>, lhs: f64, rhs: f64, std_error: f64) -> Self {
        let pass = lhs <= rhs + 3.0 * std_error;
        Self { claim_id: claim_id.into(), lhs, rhs, std_error, pass, metadata: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

/// C^k e^{(1+ε)γ(k)t} (1 + p_t(0)(p_t*u₀)(x))^{k/2}.
pub fn exist_unique_rhs(model: &KernelModel, u0: &FiniteMeasure, gamma: f64, k: f64, eps: f64, c: f64, t: f64, x: f64) -> Result<f64> {
    let base = 1.0 + model.p_zero(t)? * u0.heat_convolve(model, t, x)?;
    Ok(c.powf(k) * ((1.0 + eps) * gamma * t).exp() * base.powf(0.5 * k))
}

fn gamma_for(model: &KernelModel, sigma: &SigmaSpec, k: f64) -> Result<f64> {
    if sigma.lip() == 0.0 {
        return Ok(0.0);
    }
    model.gamma_k(k.max(2.0), sigma.lip())
}

/// Smallest C for which every order-k row of `training` satisfies the
/// existence-uniqueness bound with C_ε = C.
pub fn calibrate_c_eps(training: &[MomentRow], model: &KernelModel, u0: &FiniteMeasure, sigma: &SigmaSpec, k: f64, eps: f64) -> Result<f64> {
    let gamma = gamma_for(model, sigma, k)?;
    let mut c: f64 = 0.0;
    let mut used = 0;
    for r in training.iter().filter(|r| r.k == k) {
        let unit = exist_unique_rhs(model, u0, gamma, k, eps, 1.0, r.t, r.x)?;
        c = c.max((r.estimate.max(0.0) / unit).powf(1.0 / k));
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientRange(format!("no order-{k} rows to calibrate on")));
    }
    Ok(c)
}

/// Per-row verdicts of E|u_t(x)|^k ≤ C_ε^k e^{(1+ε)γ(k)t}(1 + p_t(0)(p_t*u₀)(x))^{k/2}.
/// Rows whose right side exceeds the estimate by more than 10⁶ are flagged
/// "vacuous".
pub fn check_exist_unique_bound(
    moments: &MomentTable,
    model: &KernelModel,
    u0: &FiniteMeasure,
    sigma: &SigmaSpec,
    k: f64,
    eps: f64,
    c_eps: f64,
) -> Result<Vec<BoundVerdict>> {
    let gamma = gamma_for(model, sigma, k)?;
    moments
        .rows
        .iter()
        .filter(|r| r.k == k)
        .map(|r| {
            let rhs = exist_unique_rhs(model, u0, gamma, k, eps, c_eps, r.t, r.x)?;
            let v = BoundVerdict::new("exist_unique", r.estimate, rhs, r.std_error)
                .with_meta("t", r.t)
                .with_meta("x", r.x)
                .with_meta("k", r.k)
                .with_meta("c_eps", c_eps);
            Ok(if rhs > 1e6 * r.estimate.abs() { v.with_meta("vacuous", true) } else { v })
        })
        .collect()
}

/// Fills `bound_exist_unique` for orders listed in `c_eps` as (k, C_ε) and, where t lies in the
/// short-time domain g((32Θ[1 ∨ kLip²])⁻¹), `bound_h1` = (2C_k u₀(ℝ)p_t(0)(p_t*u₀)(x))^{k/2}
/// with C_k = 8(1 ∨ kLip²).
pub fn attach_bounds(table: &mut MomentTable, model: &KernelModel, u0: &FiniteMeasure, sigma: &SigmaSpec, eps: f64, c_eps: &[(f64, f64)]) -> Result<()> {
    let theta = model.theta()?.value;
    let lip2 = sigma.lip().powi(2);
    let mut horizons: Vec<(f64, f64, f64)> = Vec::new();
    for r in table.rows.iter_mut() {
        let k = r.k;
        let (gamma, horizon) = match horizons.iter().find(|h| h.0 == k) {
            Some(h) => (h.1, h.2),
            None => {
                let g = gamma_for(model, sigma, k)?;
                let h = model.g_eval(1.0 / (32.0 * theta * (k * lip2).max(1.0)))?;
                horizons.push((k, g, h));
                (g, h)
            }
        };
        r.bound_exist_unique = match c_eps.iter().find(|c| c.0 == k) {
            Some(&(_, c)) => Some(exist_unique_rhs(model, u0, gamma, k, eps, c, r.t, r.x)?),
            None => None,
        };
        r.bound_h1 = if r.t <= horizon {
            let ck = 8.0 * (k * lip2).max(1.0);
            Some((2.0 * ck * u0.total_mass() * model.p_zero(r.t)? * u0.heat_convolve(model, r.t, r.x)?).powf(0.5 * k))
        } else {
            None
        };
    }
    Ok(())
}

/// t^{1/α} sup_x ‖u_t(x)‖_k over a list of times, with the log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallTScan {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_exponent: f64,
}

impl SmallTScan {
    /// max/min of the scaled values.
    pub fn spread(&self) -> f64 {
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// Small-time scan from deterministic moments: the heat term when σ ≡ 0,
/// and the second-moment oracle for linear σ with k = 2. The sup over x is
/// taken on 81 points across ±4 kernel widths around each mass center.
pub fn small_t_scan(model: &KernelModel, u0: &FiniteMeasure, sigma: &SigmaSpec, t_dyadic: &[f64], k: f64) -> Result<SmallTScan> {
    let alpha = model.tail_index();
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("tail index {alpha} outside (1, 2]")));
    }
    if t_dyadic.len() < 2 || t_dyadic.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("need at least two positive times".into()));
    }
    let lambda = if sigma.is_zero() {
        0.0
    } else {
        match sigma.linear_coefficient() {
            Some(l) if k == 2.0 => l,
            _ => return Err(Error::NotApplicable("small-t scan is deterministic only for σ ≡ 0 or k = 2 with linear σ".into())),
        }
    };
    let mut centers: Vec<f64> = u0.atoms().iter().map(|a| a.0).collect();
    centers.extend(u0.gaussians().iter().map(|g| g.mean));
    if centers.is_empty() {
        centers.push(0.0);
    }
    let mut values = Vec::with_capacity(t_dyadic.len());
    for &t in t_dyadic {
        let w = model.width(t);
        let xs: Vec<f64> = centers.iter().flat_map(|&c| (-40..=40).map(move |i| c + w * i as f64 / 10.0)).collect();
        let x_max = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let oracle = if lambda != 0.0 {
            Some(PamOracle::new(model, u0, lambda, t, t, OracleOptions { steps: 256, x_max })?)
        } else {
            None
        };
        let mut sup: f64 = 0.0;
        for &x in &xs {
            let m2 = match &oracle {
                Some(o) => o.eval(t, x)?,
                None => u0.heat_convolve(model, t, x)?.powi(2),
            };
            sup = sup.max(m2.max(0.0).sqrt());
        }
        values.push(t.powf(1.0 / alpha) * sup);
    }
    let lx: Vec<f64> = t_dyadic.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, _, _) = linear_fit(&lx, &ly);
    Ok(SmallTScan { t: t_dyadic.to_vec(), values, fitted_exponent: slope })
}

/// Slope of log E|u_t(x)|^k against x².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub t: f64,
    pub slope: f64,
    /// From the per-point standard errors by the delta method; zero for
    /// exact inputs.
    pub std_error: f64,
}

/// Least-squares fit over `rows` (one time). `support_radius` is the K of
/// a compactly supported u₀; the rows must reach |x| ≥ 2K + 5√t.
pub fn tail_decay_fit(rows: &[MomentRow], support_radius: f64) -> Result<TailFit> {
    if rows.len() < 3 {
        return Err(Error::InsufficientRange("need at least three points".into()));
    }
    let t = rows[0].t;
    if rows.iter().any(|r| (r.t - t).abs() > 1e-12 * t) {
        return Err(Error::InvalidParameter("tail fit rows must share one time".into()));
    }
    let reach = rows.iter().fold(0.0f64, |m, r| m.max(r.x.abs()));
    let need = 2.0 * support_radius + 5.0 * t.sqrt();
    if reach < need {
        return Err(Error::InsufficientRange(format!("max |x| = {reach} < 2K + 5√t = {need}")));
    }
    if rows.iter().any(|r| !(r.estimate > 0.0)) {
        return Err(Error::InvalidParameter("moment estimates must be positive for a log fit".into()));
    }
    let x2: Vec<f64> = rows.iter().map(|r| r.x * r.x).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let (slope, _, _) = linear_fit(&x2, &ly);
    let n = x2.len() as f64;
    let mean = x2.iter().sum::<f64>() / n;
    let sxx: f64 = x2.iter().map(|v| (v - mean).powi(2)).sum();
    let var: f64 = rows.iter().zip(&x2).map(|(r, v)| ((v - mean) / sxx).powi(2) * (r.std_error / r.estimate).powi(2)).sum();
    Ok(TailFit { t, slope, std_error: var.sqrt() })
}

/// E over replicas of max over node pairs in [j, j+1] of
/// |u_t(x) − u_t(x′)|² / |x − x′|^{1−ε}, at lattice row `row`.
pub fn modulus_estimate(fields: &[FieldLattice], row: usize, j: i64, eps: f64) -> Result<SampleStats> {
    if fields.is_empty() {
        return Err(Error::InvalidParameter("no replicas".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} outside (0, 1)")));
    }
    let grid = &fields[0].grid;
    if row >= grid.nt() {
        return Err(Error::GridMismatch(format!("row {row} outside {} rows", grid.nt())));
    }
    let (lo, hi) = (j as f64, j as f64 + 1.0);
    let idx: Vec<usize> = (0..grid.nx()).filter(|&i| grid.x_nodes[i] >= lo && grid.x_nodes[i] <= hi).collect();
    if idx.len() < 2 {
        return Err(Error::InsufficientRange(format!("fewer than two nodes in [{lo}, {hi}]")));
    }
    let mut stats = Vec::with_capacity(fields.len());
    for f in fields {
        f.grid.same_shape(grid)?;
        let u = f.grid.row(row);
        let mut best: f64 = 0.0;
        for (a, &p) in idx.iter().enumerate() {
            for &q in &idx[a + 1..] {
                let d = (grid.x_nodes[q] - grid.x_nodes[p]).abs();
                best = best.max((u[q] - u[p]).powi(2) / d.powf(1.0 - eps));
            }
        }
        stats.push(best);
    }
    Ok(sample_stats(&stats))
}

/// Median over seeds of sup_{|x| ≤ L} u_t(x) for one truncation width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupScanRow {
    pub half_width: f64,
    pub median_sup: f64,
    pub dx: f64,
}

/// Sup scan over truncation widths on a common (Δt, Δx) lattice. Noise is
/// indexed by absolute position, so every width sees the same realization
/// on its overlap with the widest lattice; each L/Δx must be an integer.
pub fn nochaos_sup_scan(
    model: &KernelModel,
    u0: &FiniteMeasure,
    sigma: &SigmaSpec,
    dt: f64,
    dx: f64,
    t: f64,
    l_list: &[f64],
    seeds: &[u64],
) -> Result<Vec<SupScanRow>> {
    if u0.support_radius().is_infinite() {
        return Err(Error::InvalidParameter("sup scan needs compactly supported initial data".into()));
    }
    if seeds.is_empty() || l_list.is_empty() {
        return Err(Error::InvalidParameter("need seeds and widths".into()));
    }
    let l_max = l_list.iter().copied().fold(0.0, f64::max);
    let cols = |l: f64| -> Result<usize> {
        let c = l / dx;
        if (c - c.round()).abs() > 1e-9 * c.max(1.0) {
            return Err(Error::GridMismatch(format!("L = {l} is not a multiple of dx = {dx}")));
        }
        Ok(c.round() as usize)
    };
    let total = cols(l_max)?;
    let mut out = Vec::with_capacity(l_list.len());
    for &l in l_list {
        let grid = GridSpec::new(dt, dx, l, t)?;
        let plan = LatticePlan::new(model, u0, &grid)?;
        let offset = total - cols(l)?;
        let last = plan.nt() - 1;
        let sups = replicate(seeds, |seed| {
            let noise = NoiseStream::new(plan.dt(), plan.dx(), plan.nx(), seed)?.with_column_offset(offset);
            let mut state = plan.initial_state();
            let mut sup = f64::NEG_INFINITY;
            plan.advance(sigma, &noise, &mut state, plan.nt(), |n, u| {
                if n == last {
                    sup = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                }
            })?;
            Ok(sup)
        })?;
        out.push(SupScanRow { half_width: l, median_sup: median(&sups), dx: plan.dx() });
    }
    Ok(out)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Growth rate of log E|u_t(x)|^k in t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovFit {
    pub rate: f64,
    pub std_error: f64,
    /// (1+ε)γ(k).
    pub upper: f64,
}

impl LyapunovFit {
    pub fn rate_lower(&self) -> f64 {
        self.rate - 3.0 * self.std_error
    }

    pub fn rate_upper(&self) -> f64 {
        self.rate + 3.0 * self.std_error
    }
}

/// Least-squares rate over the order-k rows at one x. Needs σ with a
/// positive lower Lipschitz constant and a fit spanning one e-fold.
pub fn lyapunov_fit(moments: &MomentTable, model: &KernelModel, sigma: &SigmaSpec, k: f64, eps: f64) -> Result<LyapunovFit> {
    if sigma.lower_lip() <= 0.0 {
        return Err(Error::NotApplicable("growth rate needs inf |σ(x)/x| > 0".into()));
    }
    let rows: Vec<&MomentRow> = moments.rows.iter().filter(|r| r.k == k && r.estimate > 0.0).collect();
    if rows.len() < 3 {
        return Err(Error::InsufficientRange("need at least three times".into()));
    }
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let (rate, _, se) = linear_fit(&t, &ly);
    let span = t.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t.iter().copied().fold(f64::INFINITY, f64::min);
    if rate * span < 1.0 {
        return Err(Error::InsufficientRange(format!("fit spans {:.3} e-folds", rate * span)));
    }
    let upper = (1.0 + eps) * model.gamma_k(k, sigma.lip())?;
    Ok(LyapunovFit { rate, std_error: se, upper })
}
