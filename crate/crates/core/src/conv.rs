//! Space-time convolution (f ⊛ g)_t(x) = ∫₀ᵗ ds ∫ dy f_{t−s}(x−y) g_s(y) and
//! numerical certification of the convolution inequalities built on it.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::kernel::KernelModel;
use crate::measure::FiniteMeasure;
use crate::quadrature::{self, GaussLegendre};

/// Discrete f ⊛ g on a common grid.
///
/// Spatial sums use the trapezoid rule on the shared uniform x-grid, which
/// must contain 0 so that displacements land on nodes. In time the rule is
/// the trapezoid over the symmetrized node set {t_m} ∪ {t_i − t_m}; rows are
/// interpolated linearly in t and held constant below the first node. A
/// mesh graded towards t = 0 keeps the endpoint cells small.
pub fn st_convolve(f: &SpaceTimeGrid, g: &SpaceTimeGrid) -> Result<SpaceTimeGrid> {
    f.same_shape(g)?;
    if f.values.iter().chain(&g.values).any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("space-time convolution expects nonnegative inputs".into()));
    }
    let (nt, nx) = (f.nt(), f.nx());
    let dx = if nx > 1 { f.dx() } else { 1.0 };
    let c = -f.x_nodes[0] / dx;
    let center = c.round();
    if (c - center).abs() > 1e-6 || center < 0.0 || center as usize >= nx {
        return Err(Error::GridMismatch("x-grid must contain the origin".into()));
    }
    let center = center as usize;
    let n = (2 * nx).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectra = |grid: &SpaceTimeGrid, trapezoid: bool| -> Vec<Vec<Complex64>> {
        (0..nt)
            .map(|i| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for (j, v) in grid.row(i).iter().enumerate() {
                    let w = if trapezoid && nx > 1 && (j == 0 || j == nx - 1) { 0.5 } else { 1.0 };
                    buf[j].re = v * w;
                }
                fwd.process(&mut buf);
                buf
            })
            .collect()
    };
    let fs = spectra(f, false);
    let gs = spectra(g, true);
    let t = &f.t_nodes;
    // (row, weight) pairs for linear interpolation in time
    let interp = |tau: f64| -> [(usize, f64); 2] {
        if tau <= t[0] {
            return [(0, 1.0), (0, 0.0)];
        }
        if tau >= t[nt - 1] {
            return [(nt - 1, 1.0), (nt - 1, 0.0)];
        }
        let k = t.partition_point(|&v| v <= tau) - 1;
        let th = (tau - t[k]) / (t[k + 1] - t[k]);
        [(k, 1.0 - th), (k + 1, th)]
    };
    let rows: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|i| {
            let ti = t[i];
            let mut s: Vec<f64> = t[..i].iter().flat_map(|&v| [v, ti - v]).filter(|&v| v > 0.0 && v < ti).collect();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * ti);
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            if !s.is_empty() {
                // trapezoid on interior nodes, end cells by their nearest node
                let m = s.len();
                for (q, &sq) in s.iter().enumerate() {
                    let left = if q == 0 { sq } else { 0.5 * (sq - s[q - 1]) };
                    let right = if q + 1 == m { ti - sq } else { 0.5 * (s[q + 1] - sq) };
                    let w = (left + right) * dx;
                    for &(fa, wa) in &interp(ti - sq) {
                        if wa == 0.0 {
                            continue;
                        }
                        for &(gb, wb) in &interp(sq) {
                            if wb == 0.0 {
                                continue;
                            }
                            let c = w * wa * wb;
                            for ((z, a), b) in acc.iter_mut().zip(&fs[fa]).zip(&gs[gb]) {
                                *z += c * a * b;
                            }
                        }
                    }
                }
            }
            inv.process(&mut acc);
            let scale = 1.0 / n as f64;
            (0..nx).map(|j| (acc[(center + j) % n].re * scale).max(0.0)).collect()
        })
        .collect();
    SpaceTimeGrid::new(t.clone(), f.x_nodes.clone(), rows.concat())
}

/// The three members of the chain
/// p_t(0)∫₀ᵗp_r(0)dr ≤ ∫₀ᵗp_{t−s}(0)p_s(0)ds ≤ 2Θ p_t(0)∫₀ᵗp_r(0)dr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpTriple {
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
}

impl PpTriple {
    /// Ordering within relative tolerance `tol`.
    pub fn ordered(&self, tol: f64) -> bool {
        self.lower <= self.mid * (1.0 + tol) && self.mid <= self.upper * (1.0 + tol)
    }
}

pub fn check_lemma_pp(model: &KernelModel, t: f64) -> Result<PpTriple> {
    let theta = model.theta()?.value;
    check_lemma_pp_with_theta(model, theta, t)
}

/// As [`check_lemma_pp`] with Θ supplied, for scans over many t.
pub fn check_lemma_pp_with_theta(model: &KernelModel, theta: f64, t: f64) -> Result<PpTriple> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let p0 = model.p_zero(t)?;
    let int = model.integrated_p0(t)?;
    let q = model.grading_exponent();
    let mut err = None;
    let mid = quadrature::singular_both(t, q, 8, 16, |s, rest| {
        match (model.p_zero(rest), model.p_zero(s)) {
            (Ok(a), Ok(b)) => a * b,
            (Err(e), _) | (_, Err(e)) => {
                err.get_or_insert(e);
                0.0
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let lower = p0 * int;
    Ok(PpTriple { lower, mid, upper: 2.0 * theta * lower })
}

const PROFILE_NODES: usize = 480;

/// log of the width-one profile of an n-fold p² convolution, sampled at
/// ζ = sinh(u) on a uniform u-grid.
#[derive(Debug, Clone)]
struct Profile {
    du: f64,
    log_values: Vec<f64>,
    gaussian: bool,
}

impl Profile {
    fn eval(&self, zeta: f64) -> f64 {
        let u = zeta.abs().asinh();
        let n = self.log_values.len();
        let pos = u / self.du;
        if pos >= (n - 1) as f64 {
            if self.gaussian {
                return 0.0;
            }
            // power-law continuation in ζ
            let (z1, z0) = ((self.du * (n - 1) as f64).sinh(), (self.du * (n - 2) as f64).sinh());
            let slope = (self.log_values[n - 1] - self.log_values[n - 2]) / (z1.ln() - z0.ln());
            return (self.log_values[n - 1] + slope * (zeta.abs().ln() - z1.ln())).exp();
        }
        let k = (pos as usize).min(n - 2);
        let s = pos - k as f64;
        let y = |i: isize| {
            let i = i.clamp(0, n as isize - 1) as usize;
            self.log_values[i]
        };
        // Catmull–Rom, mirrored at u = 0 (the profile is even)
        let ki = k as isize;
        let (p0, p1, p2, p3) = (if k == 0 { y(1) } else { y(ki - 1) }, y(ki), y(ki + 1), y(ki + 2));
        let v = p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)));
        v.exp()
    }
}

/// Iterated convolutions K_n = p² ⊛ ··· ⊛ p² (n factors) for a self-similar
/// kernel, and their convolution with (p_• * u₀)².
///
/// Self-similarity gives K_n(r, z) = (r/r₁)^{n−1} ℓ(r)^{−(n+1)} Φ_n(z/ℓ(r)),
/// with ℓ the kernel width and r₁ the time at which ℓ = 1, so each K_n is
/// stored as a one-dimensional profile Φ_n built by quadrature from Φ_{n−1}.
#[derive(Debug, Clone)]
pub struct NestedConvolution {
    model: KernelModel,
    r1: f64,
    profiles: Vec<Profile>,
}

impl NestedConvolution {
    /// Profiles for K_1, ..., K_{n_max}.
    pub fn new(model: &KernelModel, n_max: usize) -> Result<Self> {
        if model.self_similar().is_none() {
            return Err(Error::NotApplicable("nested convolution profiles need a self-similar kernel".into()));
        }
        if n_max == 0 || n_max > 5 {
            return Err(Error::InvalidParameter(format!("nesting depth {n_max} outside 1..=5")));
        }
        let gaussian = model.tail_index() >= 2.0;
        let zmax: f64 = if gaussian { 30.0 } else { 1e4 };
        let du = zmax.asinh() / (PROFILE_NODES - 1) as f64;
        let r1 = 1.0 / model.psi(1.0);
        let mut me = Self { model: model.clone(), r1, profiles: Vec::with_capacity(n_max) };
        let zetas: Vec<f64> = (0..PROFILE_NODES).map(|i| (du * i as f64).sinh()).collect();
        let first: Vec<f64> = zetas.iter().map(|&z| Ok(me.model.density(r1, z)?.powi(2).ln())).collect::<Result<_>>()?;
        me.profiles.push(Profile { du, log_values: first, gaussian });
        for m in 1..n_max {
            let vals: Vec<f64> = zetas
                .par_iter()
                .map(|&z| me.convolve_point(m, r1, z, &|s, y| Ok(me.model.density(s, y)?.powi(2)), &[0.0]))
                .collect::<Result<_>>()?;
            if vals.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::QuadratureUnderresolved(format!("profile of K_{} lost positivity", m + 1)));
            }
            me.profiles.push(Profile { du, log_values: vals.iter().map(|v| v.ln()).collect(), gaussian });
        }
        Ok(me)
    }

    pub fn depth(&self) -> usize {
        self.profiles.len()
    }

    /// K_n(r, z).
    pub fn kernel(&self, n: usize, r: f64, z: f64) -> Result<f64> {
        if n == 0 || n > self.profiles.len() {
            return Err(Error::InvalidParameter(format!("K_{n} not tabulated")));
        }
        if r <= 0.0 {
            return Ok(0.0);
        }
        if n == 1 {
            return Ok(self.model.density(r, z)?.powi(2));
        }
        let l = self.model.width(r);
        Ok((r / self.r1).powi(n as i32 - 1) * l.powi(-(n as i32 + 1)) * self.profiles[n - 1].eval(z / l))
    }

    /// (K_n ⊛ g)_t(x) for a nonnegative g given pointwise; `centers` are
    /// the locations where g_s concentrates as s → 0.
    fn convolve_point<G>(&self, n: usize, t: f64, x: f64, g: &G, centers: &[f64]) -> Result<f64>
    where
        G: Fn(f64, f64) -> Result<f64> + Sync,
    {
        let q = self.model.grading_exponent();
        let gaussian = self.model.tail_index() >= 2.0;
        let reach = if gaussian { 40.0 } else { 1e4 };
        let rule = GaussLegendre::cached(8);
        let mut err = None;
        let mut nodes = Vec::new();
        let v = quadrature::singular_both(t, q, 8, 8, |s, rest| {
            let (a, b) = (self.model.width(rest), self.model.width(s));
            let mut edges = Vec::with_capacity(64);
            let mut push_around = |c: f64, h: f64| {
                edges.push(c);
                let mut d = 0.25 * h;
                while d < reach * h {
                    edges.push(c - d);
                    edges.push(c + d);
                    d *= 2.0;
                }
            };
            push_around(x, a);
            for &c in centers {
                push_around(c, b);
            }
            edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
            edges.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * (1.0 + q.abs()));
            nodes.clear();
            for w in edges.windows(2) {
                rule.push_panel(w[0], w[1], &mut nodes);
            }
            let mut acc = 0.0;
            for &(y, w) in &nodes {
                match (self.kernel(n, rest, x - y), g(s, y)) {
                    (Ok(k), Ok(gv)) => acc += w * k * gv,
                    (Err(e), _) | (_, Err(e)) => {
                        err.get_or_insert(e);
                    }
                }
            }
            acc
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// (K_n ⊛ (p_• * u₀)²)_t(x).
    pub fn with_initial(&self, u0: &FiniteMeasure, n: usize, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        let mut centers: Vec<f64> = u0.atoms().iter().map(|a| a.0).collect();
        centers.extend(u0.gaussians().iter().map(|b| b.mean));
        if u0.density().is_some() || centers.is_empty() {
            centers.push(0.0);
        }
        let atomic = u0.is_atomic();
        let g = |s: f64, y: f64| -> Result<f64> {
            let d = if atomic {
                let mut acc = 0.0;
                for &(a, m) in u0.atoms() {
                    acc += m * self.model.density(s, y - a)?;
                }
                acc
            } else {
                u0.heat_convolve(&self.model, s, y)?
            };
            Ok(d * d)
        };
        self.convolve_point(n, t, x, &g, &centers)
    }
}

/// Lemma-type bound for n-fold p² convolution against (p_•*u₀)²:
/// returns (lhs, rhs) with rhs = u₀(ℝ)(2Θ∫₀ᵗp_s(0)ds)ⁿ p_t(0)(p_t*u₀)(x).
pub fn check_lemma_star2(model: &KernelModel, u0: &FiniteMeasure, n: usize, t: f64, x: f64) -> Result<(f64, f64)> {
    if n == 0 || n > 4 {
        return Err(Error::InvalidParameter(format!("n = {n} outside 1..=4")));
    }
    let nested = NestedConvolution::new(model, n)?;
    let theta = model.theta()?.value;
    star2_pair(&nested, theta, u0, n, t, x)
}

/// [`check_lemma_star2`] with precomputed profiles and Θ.
pub fn star2_pair(nested: &NestedConvolution, theta: f64, u0: &FiniteMeasure, n: usize, t: f64, x: f64) -> Result<(f64, f64)> {
    let model = &nested.model;
    let lhs = nested.with_initial(u0, n, t, x)?;
    let factor = 2.0 * theta * model.integrated_p0(t)?;
    let rhs = u0.total_mass() * factor.powi(n as i32) * model.p_zero(t)? * u0.heat_convolve(model, t, x)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn heat(t: f64, x: f64) -> f64 {
        (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
    }

    #[test]
    fn brownian_pp_triple_is_scale_free() {
        let m = KernelModel::brownian(1.0).unwrap();
        for t in [1.0, 4.0, 0.01] {
            let p = check_lemma_pp_with_theta(&m, 2f64.sqrt(), t).unwrap();
            assert!((p.lower - 1.0 / PI).abs() < 1e-9, "{p:?}");
            assert!((p.mid - 0.5).abs() < 1e-9, "{p:?}");
            assert!((p.upper - 2.0 * 2f64.sqrt() / PI).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn double_and_triple_brownian_convolutions() {
        // p_r² = p_{r/2}/(2√(πr)), so K_2 = p_{t/2}/4 and K_3 = √(t/π) p_{t/2}/4
        let m = KernelModel::brownian(1.0).unwrap();
        let nc = NestedConvolution::new(&m, 3).unwrap();
        let u0 = FiniteMeasure::delta0();
        for (t, x) in [(0.1, 0.0), (0.1, 0.3), (1.0, 1.5)] {
            let k2 = nc.with_initial(&u0, 1, t, x).unwrap();
            let exact2 = heat(0.5 * t, x) / 4.0;
            assert!((k2 / exact2 - 1.0).abs() < 1e-6, "{t} {x}: {k2} vs {exact2}");
            let k3 = nc.with_initial(&u0, 2, t, x).unwrap();
            let exact3 = (t / PI).sqrt() * heat(0.5 * t, x) / 4.0;
            assert!((k3 / exact3 - 1.0).abs() < 1e-5, "{t} {x}: {k3} vs {exact3}");
        }
    }

    #[test]
    fn star2_ratio_for_brownian_delta() {
        // n = 1 ratio is π e^{−x²/2t}/8
        let m = KernelModel::brownian(1.0).unwrap();
        let (l, r) = check_lemma_star2(&m, &FiniteMeasure::delta0(), 1, 0.1, 0.2).unwrap();
        assert!((l / r - PI / 8.0 * (-0.2f64).exp()).abs() < 1e-5, "{}", l / r);
    }

    #[test]
    fn grid_convolution_collapses_to_pp_mid() {
        let m = KernelModel::brownian(1.0).unwrap();
        let t_nodes: Vec<f64> = (1..=200).map(|k| (k as f64 / 200.0).powi(3)).collect();
        let x_nodes: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.05).collect();
        // f_r(z) = p_r(0)φ(z) with ∫φ = 1, g_s = p_s(0): the x-integral collapses
        let f = SpaceTimeGrid::tabulate(t_nodes.clone(), x_nodes.clone(), |r, z| Ok(m.p_zero(r)? * heat(1.0, z))).unwrap();
        let g = SpaceTimeGrid::tabulate(t_nodes, x_nodes, |s, _| m.p_zero(s)).unwrap();
        let h = st_convolve(&f, &g).unwrap();
        let j = h.nearest_x(0.0);
        for i in [100, 150, 199] {
            assert!((h.get(i, j) - 0.5).abs() < 0.01, "row {i}: {}", h.get(i, j));
        }
    }

    #[test]
    fn zero_inputs_give_zero() {
        let t: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1).collect();
        let x: Vec<f64> = (-5..=5).map(|k| k as f64 * 0.2).collect();
        let z = SpaceTimeGrid::tabulate(t, x, |_, _| Ok(0.0)).unwrap();
        assert!(st_convolve(&z, &z).unwrap().values.iter().all(|v| *v == 0.0));
    }
}
