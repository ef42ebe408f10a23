//! Deterministic second moment of the linear equation σ(u) = λu:
//! f_t(x) = |(p_t * u₀)(x)|² + λ²∫₀ᵗ∫ p²_{t−s}(x − y) f_s(y) dy ds.
//!
//! In Fourier variables the correction h = f − |p * u₀|² satisfies, for each
//! frequency ξ separately, the scalar Volterra equation
//! ĥ_t = λ²∫₀ᵗ B_{t−s}(Â_s + ĥ_s) ds with B_r(ξ) = (1/2π)∫e^{−rS(η)}dη,
//! S(η) = Ψ(η) + Ψ(ξ − η), and Â the transform of |p_s * u₀|². Both kernels
//! are singular at zero lag, so the equation is marched with product
//! integration: lag moments of B and Â are computed exactly in time and by
//! quadrature in η.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::kernel::KernelModel;
use crate::measure::FiniteMeasure;
use crate::quadrature::{self, GaussLegendre};

/// Discretization of the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Time steps on [0, t_max].
    pub steps: usize,
    /// Largest |x| at which the field will be evaluated.
    pub x_max: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { steps: 1024, x_max: 8.0 }
    }
}

/// ĥ on a uniform time mesh and a frequency rule, ready for inversion.
#[derive(Debug, Clone)]
pub struct PamOracle {
    model: KernelModel,
    u0: FiniteMeasure,
    t_max: f64,
    h: f64,
    /// (ξ, weight/π) pairs.
    xi: Vec<(f64, f64)>,
    /// psi[k][i] = ĥ_{t_i}(ξ_k), i = 0..=steps.
    psi: Vec<Vec<Complex64>>,
}

struct EtaNode {
    weight: f64,
    s: f64,
    w: Complex64,
}

impl PamOracle {
    /// Marches to `t_max`; `t_min` sets the frequency cutoff, so the result
    /// is accurate for t ∈ [t_min, t_max].
    pub fn new(model: &KernelModel, u0: &FiniteMeasure, lambda: f64, t_min: f64, t_max: f64, opts: OracleOptions) -> Result<Self> {
        if !(t_min > 0.0 && t_max >= t_min && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < t_min <= t_max, got [{t_min}, {t_max}]")));
        }
        if opts.steps < 2 || !(opts.x_max >= 0.0) {
            return Err(Error::InvalidParameter("oracle needs at least two steps and x_max >= 0".into()));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        if model.tail_index() <= 1.0 + 1e-9 {
            return Err(Error::DivergentResolvent(format!("tail index {} <= 1", model.tail_index())));
        }
        let n = opts.steps;
        let h = t_max / n as f64;
        let cutoff = model.psi_inverse(64.0 / t_min);
        let uniform = ((cutoff * opts.x_max / PI).ceil() as usize + 8).max(16);
        let edges = quadrature::graded_edges(cutoff, uniform, 4);
        let rule = GaussLegendre::cached(16);
        let mut xi = Vec::new();
        for e in edges.windows(2) {
            rule.push_panel(e[0], e[1], &mut xi);
        }
        for node in xi.iter_mut() {
            node.1 /= PI;
        }
        let lam2 = lambda * lambda;
        let psi = xi
            .par_iter()
            .map(|&(x, _)| march(model, u0, lam2, h, n, x))
            .collect::<Vec<_>>();
        Ok(Self { model: model.clone(), u0: u0.clone(), t_max, h, xi, psi })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// ĥ_t(ξ_k), linear in t between mesh points.
    fn correction_at(&self, k: usize, t: f64) -> Complex64 {
        let pos = t / self.h;
        let i = (pos.floor() as usize).min(self.psi[k].len() - 2);
        let frac = pos - i as f64;
        self.psi[k][i] * (1.0 - frac) + self.psi[k][i + 1] * frac
    }

    /// f_t(x) − |(p_t * u₀)(x)|².
    pub fn correction(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.t_max * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!("t = {t} outside (0, {}]", self.t_max)));
        }
        let t = t.min(self.t_max);
        let mut acc = 0.0;
        for (k, &(xi, w)) in self.xi.iter().enumerate() {
            acc += w * (self.correction_at(k, t) * Complex64::from_polar(1.0, -xi * x)).re;
        }
        Ok(acc)
    }

    /// f_t(x) = E|u_t(x)|².
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        let d = self.u0.heat_convolve(&self.model, t, x)?;
        Ok(d * d + self.correction(t, x)?)
    }
}

/// E|u_t(x)|² for σ(u) = λu on the product of `t_grid` and `x_grid`.
pub fn pam_second_moment_oracle(
    model: &KernelModel,
    u0: &FiniteMeasure,
    lambda: f64,
    t_grid: &[f64],
    x_grid: &[f64],
) -> Result<SpaceTimeGrid> {
    if t_grid.is_empty() || x_grid.is_empty() {
        return Err(Error::GridMismatch("empty oracle grid".into()));
    }
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    if !(t_min > 0.0) {
        return Err(Error::GridMismatch("oracle times must be positive".into()));
    }
    let x_max = x_grid.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let oracle = PamOracle::new(model, u0, lambda, t_min, t_max, OracleOptions { x_max, ..Default::default() })?;
    SpaceTimeGrid::tabulate(t_grid.to_vec(), x_grid.to_vec(), |t, x| oracle.eval(t, x))
}

/// (1/h)∫₀ʰ σ e^{−σS} dσ as a multiple of h, in terms of x = hS.
fn first_moment(x: f64) -> f64 {
    if x < 1e-3 {
        0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (x * x)
    }
}

/// (1 − e^{−x})/x.
fn zeroth_moment(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Nodes for (1/2π)∫_ℝ g(S(η)) w(η) dη folded onto η = ξ/2 + ζ, ζ ≥ 0.
fn eta_rule(model: &KernelModel, u0: &FiniteMeasure, h: f64, t_max: f64, xi: f64) -> Vec<EtaNode> {
    let z_lo = 0.05 * model.psi_inverse(1.0 / t_max);
    let z_hi = model.psi_inverse(50.0 / h).max(2.0 * z_lo);
    let mut edges = vec![0.0, z_lo];
    let mut z = z_lo;
    while z < z_hi {
        z = (z * std::f64::consts::SQRT_2).min(z_hi);
        edges.push(z);
    }
    let kink = 0.5 * xi;
    if kink > 0.0 && kink < z_hi {
        edges.push(kink);
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    }
    // oscillation of û₀ from mass away from the origin
    let reach = u0
        .atoms()
        .iter()
        .map(|a| a.0.abs())
        .chain(u0.gaussians().iter().map(|g| g.mean.abs()))
        .chain(u0.density().map(|d| d.grid[0].abs().max(d.grid[d.grid.len() - 1].abs())))
        .fold(0.0f64, f64::max);
    let rule = GaussLegendre::cached(12);
    let mut pts = Vec::new();
    for e in edges.windows(2) {
        let pieces = ((e[1] - e[0]) * reach / 2.0).ceil().max(1.0) as usize;
        let step = (e[1] - e[0]) / pieces as f64;
        for p in 0..pieces {
            rule.push_panel(e[0] + p as f64 * step, e[0] + (p + 1) as f64 * step, &mut pts);
        }
    }
    // ζ = z_hi·v^{−m} flattens the 1/S tail
    let m = 1.0 / (model.tail_index() - 1.0);
    let tail = GaussLegendre::cached(16);
    let mut vs = Vec::new();
    for k in 0..4 {
        tail.push_panel(k as f64 / 4.0, (k + 1) as f64 / 4.0, &mut vs);
    }
    for (v, wv) in vs {
        pts.push((z_hi * v.powf(-m), wv * z_hi * m * v.powf(-m - 1.0)));
    }
    pts.into_iter()
        .map(|(zeta, wz)| {
            let a = kink + zeta;
            let b = kink - zeta;
            let s = model.psi(a) + model.psi(b);
            let w = u0.fourier(a) * u0.fourier(b);
            EtaNode { weight: wz / PI, s, w }
        })
        .collect()
}

/// ĥ_{t_i}(ξ) for i = 0..=n by product integration.
fn march(model: &KernelModel, u0: &FiniteMeasure, lam2: f64, h: f64, n: usize, xi: f64) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    if lam2 == 0.0 {
        return vec![zero; n + 1];
    }
    let nodes = eta_rule(model, u0, h, n as f64 * h, xi);
    // lag moments: k0[l] = ∫_{lh}^{(l+1)h} B, k1[l] its first moment/h,
    // kp[l] = B(lh); w* the same for Â
    let mut k0 = vec![0.0; n + 1];
    let mut k1 = vec![0.0; n + 1];
    let mut kp = vec![0.0; n + 1];
    let mut w0 = vec![zero; n + 1];
    let mut w1 = vec![zero; n + 1];
    let mut wp = vec![zero; n + 2];
    for node in &nodes {
        let x = h * node.s;
        let q = (-x).exp();
        let e0 = node.weight * h * zeroth_moment(x);
        let e1 = node.weight * h * first_moment(x);
        let mut c = 1.0;
        for l in 0..=n {
            k0[l] += c * e0;
            k1[l] += c * e1;
            kp[l] += c * node.weight;
            w0[l] += node.w * (c * e0);
            w1[l] += node.w * (c * e1);
            wp[l] += node.w * (c * node.weight);
            c *= q;
            if c < 1e-300 {
                break;
            }
        }
    }
    let mut psi = vec![zero; n + 1];
    let diag = 1.0 - lam2 * (k0[0] - k1[0]);
    for i in 1..=n {
        let mut f = zero;
        if i == 1 {
            // both kernels singular on the single cell: exact in time
            for a in &nodes {
                for b in &nodes {
                    let (lo, d) = if a.s < b.s { (a.s, b.s - a.s) } else { (b.s, a.s - b.s) };
                    let g = (-h * lo).exp() * h * zeroth_moment(h * d);
                    f += b.w * (a.weight * b.weight * g);
                }
            }
        } else {
            for j in 0..i {
                let l = i - j;
                if 2 * j < i {
                    f += (w0[j] - w1[j]) * kp[l] + w1[j] * kp[l - 1];
                } else {
                    f += wp[j + 1] * (k0[l - 1] - k1[l - 1]) + wp[j] * k1[l - 1];
                }
            }
        }
        // ĥ jumps at t = 0 (ĥ_0 = 0 but ĥ_{0+} ≠ 0), so the first cell holds
        // ĥ_{t_1} constant instead of interpolating from zero
        if i == 1 {
            psi[1] = f * lam2 / (1.0 - lam2 * k0[0]);
            continue;
        }
        let mut hist = psi[i - 1] * k1[0] + psi[1] * k0[i - 1];
        for l in 2..i {
            hist += psi[i - l + 1] * (k0[l - 1] - k1[l - 1]) + psi[i - l] * k1[l - 1];
        }
        psi[i] = (f + hist) * lam2 / diag;
    }
    psi
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brownian κ = 1, δ₀: f_t(x) = p_t(x)²·H(t), H = Σ cₙ t^{n/2},
    /// c_{n+1} = λ²B((n+1)/2, 1/2)/(2√π)·cₙ.
    fn series(lambda: f64, t: f64) -> f64 {
        let mut c = 1.0;
        let mut sum = 1.0;
        for n in 0..200 {
            let a = 0.5 * (n as f64 + 1.0);
            let beta = (statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(0.5)
                - statrs::function::gamma::ln_gamma(a + 0.5))
            .exp();
            c *= lambda * lambda * beta / (2.0 * PI.sqrt());
            sum += c * t.powf(0.5 * (n as f64 + 1.0));
        }
        sum
    }

    #[test]
    fn brownian_delta_matches_series() {
        let model = KernelModel::brownian(1.0).unwrap();
        let u0 = FiniteMeasure::delta0();
        let oracle = PamOracle::new(&model, &u0, 1.0, 0.1, 0.5, OracleOptions { steps: 512, x_max: 1.0 }).unwrap();
        for &(t, x) in &[(0.5, 0.0), (0.5, 0.7), (0.25, 0.3), (0.1, 0.0)] {
            let p = model.density(t, x).unwrap();
            let want = p * p * series(1.0, t);
            let got = oracle.eval(t, x).unwrap();
            assert!((got / want - 1.0).abs() < 5e-5, "t={t} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn zero_lambda_is_squared_heat_term() {
        let model = KernelModel::stable(1.5, 1.0).unwrap();
        let u0 = FiniteMeasure::make_positive_definite_example(1.0).unwrap();
        let g = pam_second_moment_oracle(&model, &u0, 0.0, &[0.1, 0.2], &[-1.0, 0.0, 1.0]).unwrap();
        for (i, &t) in g.t_nodes.iter().enumerate() {
            for (j, &x) in g.x_nodes.iter().enumerate() {
                let d = u0.heat_convolve(&model, t, x).unwrap();
                assert_eq!(g.get(i, j), d * d);
            }
        }
    }
}
