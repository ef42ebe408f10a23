use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::measure::FiniteMeasure;
use crate::quadrature::{self, GaussLegendre};
use crate::stencil::{Stencil, StencilPair};

fn default_truncation_tol() -> f64 {
    1e-8
}

/// Space-time lattice: nodes x_j = −L + jΔx (j < 2L/Δx) and output times
/// t_n = nΔt, n = 1..=t_end/Δt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub dx: f64,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub t_end: f64,
    /// Largest admissible mass of p_{t_end} * u₀ outside [−L, L].
    #[serde(default = "default_truncation_tol")]
    pub truncation_tol: f64,
}

impl GridSpec {
    pub fn new(dt: f64, dx: f64, half_width: f64, t_end: f64) -> Result<Self> {
        let g = Self { dt, dx, half_width, t_end, truncation_tol: default_truncation_tol() };
        g.validate()?;
        Ok(g)
    }

    /// `nx` spatial and `nt` temporal cells.
    pub fn with_counts(nx: usize, nt: usize, half_width: f64, t_end: f64) -> Result<Self> {
        if nx < 2 || nt == 0 {
            return Err(Error::InvalidParameter(format!("grid needs nx >= 2 and nt >= 1, got {nx}x{nt}")));
        }
        Self::new(t_end / nt as f64, 2.0 * half_width / nx as f64, half_width, t_end)
    }

    pub fn with_truncation_tol(mut self, tol: f64) -> Self {
        self.truncation_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dt", self.dt), ("dx", self.dx), ("L", self.half_width), ("t_end", self.t_end)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("grid {name} = {v} must be positive")));
            }
        }
        if !(self.truncation_tol >= 0.0) {
            return Err(Error::InvalidParameter("truncation_tol must be nonnegative".into()));
        }
        if self.nx() < 2 || self.nt() == 0 {
            return Err(Error::InvalidParameter(format!("grid resolves to {}x{} cells", self.nx(), self.nt())));
        }
        Ok(())
    }

    pub fn nt(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn nx(&self) -> usize {
        (2.0 * self.half_width / self.dx).round() as usize
    }

    /// Effective Δt = t_end / nt.
    pub fn step(&self) -> f64 {
        self.t_end / self.nt() as f64
    }

    /// Effective Δx = 2L / nx.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.nx() as f64
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.nx()).map(|j| -self.half_width + j as f64 * h).collect()
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        let h = self.step();
        (1..=self.nt()).map(|n| n as f64 * h).collect()
    }
}

/// Everything about a lattice run that does not depend on σ or the noise:
/// the exact deterministic term, per-cell levels, and the three stencils.
///
/// The noise term is carried in two copies. `v` is propagated and sees only
/// the resolved band |ξ| ≤ π/Δx of each fresh increment; the output `w`
/// shares `P * v` but adds the increment through a kernel whose spectrum is
/// the aliased sum over all frequencies, so the one-step variance is exact
/// while unresolved energy is not pushed forward.
#[derive(Debug, Clone)]
pub struct LatticePlan {
    model: KernelModel,
    u0: FiniteMeasure,
    grid: GridSpec,
    time_shift: f64,
    nt: usize,
    nx: usize,
    dt: f64,
    dx: f64,
    x: Vec<f64>,
    t: Vec<f64>,
    det: Vec<f64>,
    level: Vec<f64>,
    prop: Stencil,
    noise_kernels: StencilPair,
    truncation_outside: f64,
    refinement_ratio: f64,
    propagator_defect: f64,
}

impl LatticePlan {
    pub fn new(model: &KernelModel, u0: &FiniteMeasure, grid: &GridSpec) -> Result<Self> {
        Self::with_time_shift(model, u0, grid, 0.0)
    }

    /// Plan for the initial datum p_shift * u₀, whose evolution has
    /// deterministic part p_{t+shift} * u₀.
    pub fn with_time_shift(model: &KernelModel, u0: &FiniteMeasure, grid: &GridSpec, shift: f64) -> Result<Self> {
        grid.validate()?;
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("time shift {shift} must be nonnegative")));
        }
        if model.tail_index() <= 1.0 + 1e-9 {
            return Err(Error::DivergentResolvent(format!(
                "tail index {} <= 1: the stochastic convolution has infinite variance",
                model.tail_index()
            )));
        }
        let (nt, nx, dt, dx) = (grid.nt(), grid.nx(), grid.step(), grid.spacing());
        let outside = u0.mass_outside(model, grid.t_end + shift, grid.half_width)?;
        if outside > grid.truncation_tol {
            return Err(Error::TruncationTooSmall { half_width: grid.half_width, outside, tol: grid.truncation_tol });
        }
        let x = grid.x_nodes();
        let t = grid.t_nodes();

        let rows: Vec<Vec<f64>> = t.par_iter().map(|&tn| u0.heat_convolve_row(model, tn + shift, &x)).collect::<Result<_>>()?;
        let det = rows.concat();
        let levels: Vec<Vec<f64>> = (0..nt)
            .into_par_iter()
            .map(|n| level_row(model, u0, &x, n as f64 * dt + shift, dt, dx, n == 0 && shift == 0.0))
            .collect::<Result<_>>()?;
        let level = levels.concat();

        let prop = propagator(model, dt, dx, nx)?;
        let (band, full) = noise_kernels(model, dt, dx, nx);
        let noise_kernels = StencilPair::new(Stencil::new(&band, nx, 1e-14), Stencil::new(&full, nx, 1e-14));

        let mut plan = Self {
            model: model.clone(),
            u0: u0.clone(),
            grid: *grid,
            time_shift: shift,
            nt,
            nx,
            dt,
            dx,
            x,
            t,
            det,
            level,
            prop,
            noise_kernels,
            truncation_outside: outside,
            refinement_ratio: model.p_zero(dt)? * dx,
            propagator_defect: 0.0,
        };
        plan.propagator_defect = plan.measure_propagator_defect();
        Ok(plan)
    }

    /// max |P * D_n − D_{n+1}| over rows whose kernel width spans ≥ 3 cells.
    fn measure_propagator_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut buf = vec![0.0; self.nx];
        for n in 0..self.nt.saturating_sub(1) {
            if self.model.width(self.t[n] + self.time_shift) < 3.0 * self.dx {
                continue;
            }
            buf.iter_mut().for_each(|b| *b = 0.0);
            self.prop.apply_add(self.det_row(n), &mut buf);
            for (a, b) in buf.iter().zip(self.det_row(n + 1)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn model(&self) -> &KernelModel {
        &self.model
    }

    pub fn initial(&self) -> &FiniteMeasure {
        &self.u0
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn time_shift(&self) -> f64 {
        self.time_shift
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x
    }

    /// Output times t_1, …, t_nt.
    pub fn t_nodes(&self) -> &[f64] {
        &self.t
    }

    /// Index of the lattice node nearest to x.
    pub fn x_index(&self, x: f64) -> usize {
        (((x + self.grid.half_width) / self.dx).round().max(0.0) as usize).min(self.nx - 1)
    }

    /// Row index of the output time nearest to t.
    pub fn t_index(&self, t: f64) -> usize {
        ((t / self.dt).round().max(1.0) as usize).min(self.nt) - 1
    }

    /// (p_{t_{n+1}} * u₀)(x_j) for all j.
    pub fn det_row(&self, n: usize) -> &[f64] {
        &self.det[n * self.nx..(n + 1) * self.nx]
    }

    /// Root mean square of the deterministic term over time cell n.
    pub fn level_row(&self, n: usize) -> &[f64] {
        &self.level[n * self.nx..(n + 1) * self.nx]
    }

    pub(crate) fn propagator(&self) -> &Stencil {
        &self.prop
    }

    /// (band-only, aliased) one-step noise kernels.
    pub(crate) fn noise_kernels(&self) -> &StencilPair {
        &self.noise_kernels
    }

    pub fn truncation_outside(&self) -> f64 {
        self.truncation_outside
    }

    /// p_Δt(0)·Δx.
    pub fn refinement_ratio(&self) -> f64 {
        self.refinement_ratio
    }

    /// Error of the sampled propagator on the deterministic term, over rows
    /// it resolves.
    pub fn propagator_defect(&self) -> f64 {
        self.propagator_defect
    }

    /// Per-step variance factor Δt·Δx·Σ G_m² of the output kernel.
    pub fn step_variance(&self) -> f64 {
        let taps = self.noise_kernels.second().taps();
        let s: f64 = taps[0] * taps[0] + 2.0 * taps[1..].iter().map(|g| g * g).sum::<f64>();
        self.dt * self.dx * s
    }
}

/// Normalized sampled density: P_m = Δx·p_Δt(mΔx)/S, S = Σ_k e^{−ΔtΨ(2πk/Δx)},
/// so that Σ_m P_m = 1 exactly.
fn propagator(model: &KernelModel, dt: f64, dx: f64, nx: usize) -> Result<Stencil> {
    let norm = periodized(dx, 0.0, |eta| (-dt * model.psi(eta)).exp());
    let raw: Vec<f64> = (0..nx).map(|m| Ok(dx * model.density(dt, m as f64 * dx)? / norm)).collect::<Result<_>>()?;
    Ok(Stencil::new(&raw, nx, 1e-16))
}

/// Q(η) = (1 − e^{−2ΔtΨ})/(2ΔtΨ): the time average of e^{−2sΨ} over one step.
fn step_symbol(model: &KernelModel, dt: f64, eta: f64) -> f64 {
    let a = 2.0 * dt * model.psi(eta);
    if a < 1e-12 {
        1.0 - 0.5 * a
    } else {
        -(-a).exp_m1() / a
    }
}

const ALIAS_TERMS: usize = 64;

/// Σ_k Q(ξ + 2πk/Δx), the last terms replaced by their power-law integral.
fn aliased_symbol(model: &KernelModel, dt: f64, dx: f64, xi: f64) -> f64 {
    let omega = 2.0 * PI / dx;
    let a = model.tail_index();
    let mut s = step_symbol(model, dt, xi);
    for k in 1..=ALIAS_TERMS {
        let kf = k as f64;
        s += step_symbol(model, dt, kf * omega + xi) + step_symbol(model, dt, kf * omega - xi);
    }
    for sign in [1.0, -1.0] {
        let eta = (ALIAS_TERMS as f64 + 0.5) * omega + sign * xi;
        s += eta / (omega * (a - 1.0) * 2.0 * dt * model.psi(eta));
    }
    s
}

/// Σ_k f(ξ + 2πk/Δx) for a rapidly decaying f.
fn periodized(dx: f64, xi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let omega = 2.0 * PI / dx;
    let mut s = f(xi);
    for k in 1..100_000 {
        let kf = k as f64;
        let term = f(xi + kf * omega) + f(xi - kf * omega);
        s += term;
        if term < 1e-18 * s {
            break;
        }
    }
    s
}

/// Band symbol chosen so that one propagation step of the band increment
/// has the aliased continuum variance: |P̂ Ĝ|² = Σ_k Q e^{−2ΔtΨ} at ξ + 2πk/Δx.
/// Smooth and periodic, so the taps decay faster than any power.
fn band_symbol(model: &KernelModel, dt: f64, dx: f64, xi: f64, norm: f64) -> f64 {
    let var = periodized(dx, xi, |eta| step_symbol(model, dt, eta) * (-2.0 * dt * model.psi(eta)).exp());
    let p_hat = periodized(dx, xi, |eta| (-dt * model.psi(eta)).exp()) / norm;
    var.sqrt() / p_hat
}

/// One-sided taps G_m = (1/π)∫₀^{π/Δx} K(ξ) cos(mξΔx) dξ for the band-only
/// and the aliased one-step kernels.
fn noise_kernels(model: &KernelModel, dt: f64, dx: f64, nx: usize) -> (Vec<f64>, Vec<f64>) {
    let norm = periodized(dx, 0.0, |eta| (-dt * model.psi(eta)).exp());
    let edges = quadrature::graded_edges(PI / dx, nx.max(64), 6);
    let rule = GaussLegendre::cached(16);
    let mut nodes = Vec::with_capacity((edges.len() - 1) * 16);
    for w in edges.windows(2) {
        rule.push_panel(w[0], w[1], &mut nodes);
    }
    let band: Vec<(f64, f64)> = nodes.iter().map(|&(xi, w)| (xi, w * band_symbol(model, dt, dx, xi, norm) / PI)).collect();
    let full: Vec<(f64, f64)> = nodes.iter().map(|&(xi, w)| (xi, w * aliased_symbol(model, dt, dx, xi).sqrt() / PI)).collect();
    let taps = |rule: &[(f64, f64)]| -> Vec<f64> {
        (0..nx)
            .into_par_iter()
            .map(|m| {
                let h = m as f64 * dx;
                rule.iter().map(|(xi, w)| w * (xi * h).cos()).sum()
            })
            .collect()
    };
    (taps(&band), taps(&full))
}

/// sqrt of the space-time average of (p_s * u₀)² over
/// [t0, t0 + dt] × [x_j − Δx/2, x_j + Δx/2], for every node.
fn level_row(model: &KernelModel, u0: &FiniteMeasure, x: &[f64], t0: f64, dt: f64, dx: f64, singular: bool) -> Result<Vec<f64>> {
    let mut times: Vec<(f64, f64)> = Vec::new();
    if singular {
        // s = Δt·w⁴ removes the s^{-1/2} blow-up of the atom cells
        let rule = GaussLegendre::cached(8);
        let mut ws = Vec::new();
        for k in 0..4 {
            rule.push_panel(k as f64 / 4.0, (k + 1) as f64 / 4.0, &mut ws);
        }
        times.extend(ws.into_iter().map(|(w, wt)| (dt * w.powi(4), wt * 4.0 * w.powi(3))));
    } else {
        let order = if model.width(t0) < 3.0 * dx { 4 } else { 2 };
        let mut ts = Vec::new();
        GaussLegendre::cached(order).push_panel(t0, t0 + dt, &mut ts);
        times.extend(ts.into_iter().map(|(s, wt)| (s, wt / dt)));
    }
    let cont = u0.continuous_part();
    let atoms = u0.atoms();
    let coarse = GaussLegendre::cached(3);
    let fine = GaussLegendre::cached(8);
    let mut acc = vec![0.0; x.len()];
    let mut pts = Vec::new();
    for &(s, ws) in &times {
        let width = model.width(s);
        let atomic = |y: f64| -> Result<f64> {
            let mut v = 0.0;
            for &(ya, m) in atoms {
                v += m * model.density(s, y - ya)?;
            }
            Ok(v)
        };
        for (j, &xj) in x.iter().enumerate() {
            let (lo, hi) = (xj - 0.5 * dx, xj + 0.5 * dx);
            pts.clear();
            let near: Vec<f64> = atoms.iter().map(|a| a.0).filter(|ya| (xj - ya).abs() < 0.5 * dx + 12.0 * width).collect();
            if near.is_empty() {
                coarse.push_panel(lo, hi, &mut pts);
            } else {
                let mut edges = vec![lo, hi];
                for ya in near {
                    let mut r = 0.0;
                    while r < dx {
                        for e in [ya - r, ya + r] {
                            if e > lo && e < hi {
                                edges.push(e);
                            }
                        }
                        r = if r < 4.0 * width { r + 0.5 * width } else { 2.0 * r };
                    }
                }
                edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
                edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * dx);
                for e in edges.windows(2) {
                    fine.push_panel(e[0], e[1], &mut pts);
                }
            }
            let (mut a1, mut a2) = (0.0, 0.0);
            for &(y, wy) in &pts {
                let a = atomic(y)?;
                a1 += wy * a;
                a2 += wy * a * a;
            }
            a1 /= dx;
            a2 /= dx;
            let c = match &cont {
                Some(c) => c.heat_convolve(model, s, xj)?,
                None => 0.0,
            };
            acc[j] += ws * (a2 + 2.0 * c * a1 + c * c);
        }
    }
    Ok(acc.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian_plan(nx: usize, nt: usize) -> LatticePlan {
        let model = KernelModel::brownian(1.0).unwrap();
        let grid = GridSpec::with_counts(nx, nt, 6.0, 0.5).unwrap();
        LatticePlan::new(&model, &FiniteMeasure::delta0(), &grid).unwrap()
    }

    #[test]
    fn propagator_is_a_probability() {
        let plan = brownian_plan(256, 512);
        assert!((plan.propagator().sum() - 1.0).abs() < 1e-13);
        assert!(plan.propagator().taps().iter().all(|&p| p >= 0.0));
        assert!((plan.refinement_ratio() - 0.598).abs() < 1e-3);
    }

    #[test]
    fn output_kernel_carries_exact_step_variance() {
        // Δt·Δx·ΣG² = Δt·(1/2π)∫Q = (1/2π)∫(1 − e^{−ξ²Δt})/ξ² dξ = √(Δt/π)
        let plan = brownian_plan(256, 512);
        let want = (plan.dt() / PI).sqrt();
        assert!((plan.step_variance() / want - 1.0).abs() < 1e-6, "{} vs {want}", plan.step_variance());
    }

    #[test]
    fn level_is_cell_rms_of_heat_term() {
        let plan = brownian_plan(256, 512);
        // far from the atom the cell average is close to the point value
        let n = 300;
        let j = plan.x_index(1.0);
        let d = plan.det_row(n)[j];
        assert!((plan.level_row(n)[j] / d - 1.0).abs() < 0.02);
        // atom cell, first time cell: ∫₀^Δt (1/Δx)∫_cell p_s² dy ds/Δt
        let j0 = plan.x_index(0.0);
        // ∫_cell p_s² dy = erf(Δx/(2√s))/√(4πs)
        let dx = plan.dx();
        let inner = |s: f64| statrs::function::erf::erf(0.5 * dx / s.sqrt()) / (4.0 * PI * s).sqrt() / dx;
        let want = quadrature::singular_start(plan.dt(), 2.0, 16, 16, inner) / plan.dt();
        let got = plan.level_row(0)[j0].powi(2);
        assert!((got / want - 1.0).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn truncation_is_checked() {
        let model = KernelModel::stable(1.5, 1.0).unwrap();
        let grid = GridSpec::with_counts(64, 16, 2.0, 0.5).unwrap();
        assert!(matches!(
            LatticePlan::new(&model, &FiniteMeasure::delta0(), &grid),
            Err(Error::TruncationTooSmall { .. })
        ));
    }
}
