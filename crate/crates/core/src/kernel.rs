//! Symmetric Lévy generators: characteristic exponent, transition density by
//! Fourier inversion, and the kernel functionals that control moment growth
//! (Θ, Υ, γ(k), 𝔤 and the Picard horizons 𝔗ₖ).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, GaussLegendre};

/// Number of geometric refinements of the first Fourier panel when Ψ is not
/// smooth at the origin.
const ORIGIN_GRADING: usize = 48;

/// Truncation and resolution of the ξ-integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Largest admissible truncation Ξ of the frequency integral.
    pub cutoff_xi: f64,
    /// Gauss–Legendre points per panel.
    pub nodes: usize,
    /// Tail tolerance: the truncation Ξ(t) solves exp(−tΨ(Ξ)) = tol/10.
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { cutoff_xi: 1e12, nodes: 16, tol: 1e-13 }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.cutoff_xi > 0.0) || self.nodes == 0 || !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!("bad quadrature spec {self:?}")));
        }
        Ok(())
    }
}

/// Generator family, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Ψ(ξ) = κξ²/2.
    Brownian { kappa: f64 },
    /// Ψ(ξ) = κ|ξ|^α with α ∈ (1, 2].
    Stable { alpha: f64, kappa: f64 },
    /// Ψ sampled at nondecreasing |ξ|, linearly interpolated and extended
    /// beyond the last sample as a power law.
    TabulatedPsi { xi: Vec<f64>, psi: Vec<f64> },
}

/// Wire form of a kernel: the generator plus optional quadrature overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
}

#[derive(Debug, Clone)]
struct Tabulated {
    xi: Vec<f64>,
    psi: Vec<f64>,
    head_exp: f64,
    tail_coef: f64,
    tail_exp: f64,
}

impl Tabulated {
    fn eval(&self, xi: f64) -> f64 {
        let a = xi.abs();
        let n = self.xi.len();
        if a >= self.xi[n - 1] {
            return self.tail_coef * a.powf(self.tail_exp);
        }
        if a <= self.xi[0] {
            if self.xi[0] == 0.0 {
                return 0.0;
            }
            return self.psi[0] * (a / self.xi[0]).powf(self.head_exp);
        }
        let k = self.xi.partition_point(|&v| v <= a) - 1;
        let (x0, x1) = (self.xi[k], self.xi[k + 1]);
        let (y0, y1) = (self.psi[k], self.psi[k + 1]);
        y0 + (y1 - y0) * (a - x0) / (x1 - x0)
    }

    fn inverse(&self, c: f64) -> f64 {
        let n = self.xi.len();
        if c >= self.psi[n - 1] {
            return (c / self.tail_coef).powf(1.0 / self.tail_exp);
        }
        quadrature::bisect_increasing(0.0, self.xi[n - 1], c, 1e-15, |x| self.eval(x))
    }
}

#[derive(Debug, Clone)]
enum Exponent {
    Brownian { kappa: f64 },
    Stable { alpha: f64, kappa: f64 },
    Tabulated(Arc<Tabulated>),
}

/// A symmetric Lévy generator together with its quadrature settings.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct KernelModel {
    kind: KernelKind,
    exponent: Exponent,
    quad: QuadratureSpec,
}

impl KernelModel {
    pub fn new(kind: KernelKind, quad: QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let exponent = match &kind {
            KernelKind::Brownian { kappa } => {
                positive("kappa", *kappa)?;
                Exponent::Brownian { kappa: *kappa }
            }
            KernelKind::Stable { alpha, kappa } => {
                positive("kappa", *kappa)?;
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha <= 2.0) {
                    return Err(Error::InvalidParameter(format!("stable index {alpha} outside (0, 2]")));
                }
                if *alpha <= 1.0 {
                    return Err(Error::DivergentResolvent(format!(
                        "stable index {alpha} <= 1 makes the resolvent integral infinite"
                    )));
                }
                Exponent::Stable { alpha: *alpha, kappa: *kappa }
            }
            KernelKind::TabulatedPsi { xi, psi } => Exponent::Tabulated(Arc::new(build_tabulated(xi, psi)?)),
        };
        Ok(Self { kind, exponent, quad })
    }

    pub fn from_spec(spec: &KernelSpec) -> Result<Self> {
        Self::new(spec.kind.clone(), spec.quadrature.unwrap_or_default())
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec { kind: self.kind.clone(), quadrature: Some(self.quad) }
    }

    pub fn brownian(kappa: f64) -> Result<Self> {
        Self::new(KernelKind::Brownian { kappa }, QuadratureSpec::default())
    }

    pub fn stable(alpha: f64, kappa: f64) -> Result<Self> {
        Self::new(KernelKind::Stable { alpha, kappa }, QuadratureSpec::default())
    }

    pub fn tabulated(xi: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        Self::new(KernelKind::TabulatedPsi { xi, psi }, QuadratureSpec::default())
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub fn label(&self) -> String {
        match &self.kind {
            KernelKind::Brownian { kappa } => format!("brownian(kappa={kappa})"),
            KernelKind::Stable { alpha, kappa } => format!("stable(alpha={alpha},kappa={kappa})"),
            KernelKind::TabulatedPsi { xi, .. } => format!("tabulated({} points)", xi.len()),
        }
    }

    /// Characteristic exponent Ψ(ξ).
    pub fn psi(&self, xi: f64) -> f64 {
        match &self.exponent {
            Exponent::Brownian { kappa } => 0.5 * kappa * xi * xi,
            Exponent::Stable { alpha, kappa } => kappa * xi.abs().powf(*alpha),
            Exponent::Tabulated(t) => t.eval(xi),
        }
    }

    /// Power-law growth index of Ψ at infinity.
    pub fn tail_index(&self) -> f64 {
        match &self.exponent {
            Exponent::Brownian { .. } => 2.0,
            Exponent::Stable { alpha, .. } => *alpha,
            Exponent::Tabulated(t) => t.tail_exp,
        }
    }

    /// Self-similarity index when p_t(x) = (ct)^{-1/α} P((ct)^{-1/α} x).
    pub fn self_similar(&self) -> Option<(f64, f64)> {
        match &self.exponent {
            Exponent::Brownian { kappa } => Some((2.0, 0.5 * kappa)),
            Exponent::Stable { alpha, kappa } => Some((*alpha, *kappa)),
            Exponent::Tabulated(_) => None,
        }
    }

    /// Smallest ξ ≥ 0 with Ψ(ξ) = c.
    pub fn psi_inverse(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        match &self.exponent {
            Exponent::Brownian { kappa } => (2.0 * c / kappa).sqrt(),
            Exponent::Stable { alpha, kappa } => (c / kappa).powf(1.0 / alpha),
            Exponent::Tabulated(t) => t.inverse(c),
        }
    }

    /// Spatial scale of p_t.
    pub fn width(&self, t: f64) -> f64 {
        1.0 / self.psi_inverse(1.0 / t)
    }

    fn smooth_at_origin(&self) -> bool {
        matches!(self.exponent, Exponent::Brownian { .. })
            || matches!(self.exponent, Exponent::Stable { alpha, .. } if alpha == 2.0)
    }

    /// Frequency truncation Ξ(t).
    pub fn xi_cutoff(&self, t: f64) -> Result<f64> {
        let level = (10.0 / self.quad.tol).ln() / t;
        let xi = self.psi_inverse(level);
        if !(xi.is_finite()) || xi > self.quad.cutoff_xi {
            return Err(Error::QuadratureUnderresolved(format!(
                "exp(-tΨ(Ξ)) = {:e} exceeds tol {:e} at t = {t:e} (Ξ = {:e})",
                (-t * self.psi(self.quad.cutoff_xi)).exp(),
                self.quad.tol,
                self.quad.cutoff_xi
            )));
        }
        Ok(xi)
    }

    /// Quadrature nodes ξ and weights (including e^{−tΨ(ξ)}/π) for the
    /// cosine form of the inversion integral, resolving oscillations of
    /// frequency up to `xmax`.
    fn fourier_rule(&self, t: f64, xmax: f64) -> Result<Vec<(f64, f64)>> {
        let cutoff = self.xi_cutoff(t)?;
        let uniform = (xmax.abs() * cutoff / PI).ceil() as usize + 4;
        if uniform > 4_000_000 {
            return Err(Error::QuadratureUnderresolved(format!(
                "{uniform} panels needed for x = {xmax}, t = {t:e}"
            )));
        }
        let grade = if self.smooth_at_origin() { 0 } else { ORIGIN_GRADING };
        let mut edges = quadrature::graded_edges(cutoff, uniform, grade);
        if let Exponent::Tabulated(tab) = &self.exponent {
            edges.extend(tab.xi.iter().copied().filter(|&x| x > 0.0 && x < cutoff));
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
        }
        let rule = GaussLegendre::cached(self.quad.nodes);
        let mut out = Vec::with_capacity((edges.len() - 1) * rule.order());
        for w in edges.windows(2) {
            rule.push_panel(w[0], w[1], &mut out);
        }
        for (xi, w) in out.iter_mut() {
            *w *= (-t * self.psi(*xi)).exp() / PI;
        }
        Ok(out)
    }

    /// Transition density p_t(x) by Fourier inversion.
    pub fn p_eval(&self, t: f64, x: f64) -> Result<f64> {
        positive("t", t)?;
        let rule = self.fourier_rule(t, x)?;
        Ok(rule.iter().map(|(xi, w)| w * (xi * x).cos()).sum())
    }

    /// p_t at several points, sharing one quadrature rule.
    pub fn p_row(&self, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
        positive("t", t)?;
        let xmax = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let rule = self.fourier_rule(t, xmax)?;
        Ok(xs.iter().map(|&x| rule.iter().map(|(xi, w)| w * (xi * x).cos()).sum()).collect())
    }

    /// ∂ₓp_t(x) by Fourier inversion.
    pub fn p_derivative(&self, t: f64, x: f64) -> Result<f64> {
        positive("t", t)?;
        let rule = self.fourier_rule(t, x)?;
        Ok(-rule.iter().map(|(xi, w)| w * xi * (xi * x).sin()).sum::<f64>())
    }

    /// Fast transition density used inside lattice and nested-quadrature
    /// loops: exact Gaussian for the Brownian family, an interpolated
    /// Fourier table for stable laws, and `p_eval` otherwise.
    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        match &self.exponent {
            Exponent::Brownian { kappa } => {
                let var = kappa * t;
                Ok((-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt())
            }
            Exponent::Stable { alpha, kappa } => {
                if *alpha == 2.0 {
                    let var = 2.0 * kappa * t;
                    return Ok((-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt());
                }
                let scale = (kappa * t).powf(1.0 / alpha);
                Ok(stable_table(*alpha).eval(x / scale) / scale)
            }
            Exponent::Tabulated(_) => self.p_eval(t, x),
        }
    }

    /// p_t(0).
    pub fn p_zero(&self, t: f64) -> Result<f64> {
        self.density(t, 0.0)
    }

    /// Substitution exponent that removes the r^{-1/α} singularity of
    /// p_r(0) at r = 0.
    pub fn grading_exponent(&self) -> f64 {
        let a = self.tail_index();
        if a <= 1.0 {
            return 8.0;
        }
        (a / (a - 1.0)).clamp(2.0, 8.0)
    }

    /// ∫₀ᵗ p_r(0) dr. Closed-form families integrate in time on a mesh
    /// graded towards r = 0; tabulated exponents use the frequency form.
    pub fn integrated_p0(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        self.require_dalang()?;
        if let Exponent::Tabulated(_) = self.exponent {
            return self.integrated_p0_fourier(t);
        }
        let q = self.grading_exponent();
        let mut err = None;
        let v = quadrature::singular_start(t, q, 8, self.quad.nodes, |r| match self.p_zero(r) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// ∫₀ᵗ p_r(0) dr = (1/π)∫₀^∞ (1 − e^{−tΨ(ξ)})/Ψ(ξ) dξ.
    pub fn integrated_p0_fourier(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        self.require_dalang()?;
        let split = self.psi_inverse(1.0 / t);
        Ok(self.xi_integral(split, |xi| {
            let psi = self.psi(xi);
            if t * psi < 1e-8 {
                t * (1.0 - 0.5 * t * psi)
            } else {
                -(-t * psi).exp_m1() / psi
            }
        }) / PI)
    }

    /// ∫_{−L}^{L} p_t(x) dx.
    pub fn mass_within(&self, t: f64, half_width: f64) -> Result<f64> {
        let w = self.width(t);
        let panels = ((half_width / w).ceil() as usize).clamp(4, 20_000);
        let edges: Vec<f64> = (0..=panels).map(|k| half_width * k as f64 / panels as f64).collect();
        let mut err = None;
        let v = quadrature::composite(&edges, self.quad.nodes, |x| match self.density(t, x) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(2.0 * v),
        }
    }

    /// Lower estimate of Θ = sup_t p_{t/2}(0)/p_t(0), maximized over `t_grid`.
    pub fn theta_estimate(&self, t_grid: &[f64]) -> Result<f64> {
        if t_grid.is_empty() {
            return Err(Error::InvalidParameter("empty t grid".into()));
        }
        let mut best = f64::NEG_INFINITY;
        for &t in t_grid {
            let ratio = self.p_eval(0.5 * t, 0.0)? / self.p_eval(t, 0.0)?;
            best = best.max(ratio);
        }
        Ok(best)
    }

    /// Log grid over [1e−4, 1e4], 33 points per decade.
    pub fn default_theta_grid() -> Vec<f64> {
        (0..=8 * 33).map(|i| 10f64.powf(-4.0 + i as f64 / 33.0)).collect()
    }

    /// Θ over the default grid, flagged as uncertified for tabulated input.
    pub fn theta(&self) -> Result<ThetaEstimate> {
        let grid = Self::default_theta_grid();
        let value = self.theta_estimate(&grid)?;
        let warning = match self.exponent {
            Exponent::Tabulated(_) => Some("grid maximum from finite data; finiteness of the supremum is not certified".to_string()),
            _ => None,
        };
        Ok(ThetaEstimate { value, grid_points: grid.len(), warning })
    }

    fn require_dalang(&self) -> Result<()> {
        if self.tail_index() <= 1.0 + 1e-9 {
            return Err(Error::DivergentResolvent(format!(
                "Ψ grows with index {} <= 1, so ∫dξ/(β+2Ψ) diverges",
                self.tail_index()
            )));
        }
        Ok(())
    }

    /// Υ(β) = (1/2π)∫ dξ / (β + 2Ψ(ξ)).
    pub fn upsilon(&self, beta: f64) -> Result<f64> {
        positive("beta", beta)?;
        self.require_dalang()?;
        let split = self.psi_inverse(beta);
        Ok(self.xi_integral(split, |xi| 1.0 / (beta + 2.0 * self.psi(xi))) / PI)
    }

    /// ∫₀^∞ f(ξ) dξ for f decaying like 1/Ψ: graded panels on [0, split] and
    /// the substitution ξ = split·v^{−m}, m = 1/(a−1), beyond it.
    pub(crate) fn xi_integral<F: Fn(f64) -> f64>(&self, split: f64, f: F) -> f64 {
        let a = self.tail_index();
        let mut split = split.max(1e-300);
        if let Exponent::Tabulated(t) = &self.exponent {
            split = split.max(t.xi[t.xi.len() - 1]);
        }
        let order = 32;
        let grade = if self.smooth_at_origin() { 0 } else { ORIGIN_GRADING };
        let mut edges = quadrature::graded_edges(split, 8, grade);
        if let Exponent::Tabulated(t) = &self.exponent {
            edges.extend(t.xi.iter().copied().filter(|&x| x > 0.0 && x < split));
            edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
            edges.dedup();
        }
        let head = quadrature::composite(&edges, order, &f);
        let m = 1.0 / (a - 1.0);
        let tail_edges = quadrature::graded_edges(1.0, 8, 24);
        let tail = quadrature::composite(&tail_edges, order, |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let xi = split * v.powf(-m);
            if !xi.is_finite() {
                return 0.0;
            }
            m * split * v.powf(-m - 1.0) * f(xi)
        });
        head + tail
    }

    /// Resolvent density at zero, Ῡ(β) = ∫₀^∞ e^{−βt} p_t(0) dt, by time
    /// quadrature of the Fourier-inverted p_t(0).
    pub fn upsilon_bar(&self, beta: f64) -> Result<f64> {
        positive("beta", beta)?;
        self.require_dalang()?;
        let split = 1.0 / beta;
        let q = self.grading_exponent();
        let mut err = None;
        let mut p0 = |t: f64| match self.p_eval(t, 0.0) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        };
        let head = quadrature::singular_start(split, q, 16, self.quad.nodes, |t| (-beta * t).exp() * p0(t));
        // t = split − ln(u)/β maps [split, ∞) onto (0, 1]
        let edges = quadrature::graded_edges(1.0, 16, 40);
        let tail = quadrature::composite(&edges, self.quad.nodes, |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let t = split - u.ln() / beta;
            (-beta * split).exp() * p0(t) / beta
        });
        match err {
            Some(e) => Err(e),
            None => Ok(head + tail),
        }
    }

    /// |Υ(β) − ½Ῡ(β/2)|, the two sides computed by independent quadratures.
    pub fn resolvent_identity_check(&self, beta: f64) -> Result<f64> {
        Ok((self.upsilon(beta)? - 0.5 * self.upsilon_bar(0.5 * beta)?).abs())
    }

    /// γ(k) = inf{β > 0 : Υ(2β/k) < 1/(4k Lip²)}.
    pub fn gamma_k(&self, k: f64, lip: f64) -> Result<f64> {
        if !(k >= 2.0) {
            return Err(Error::InvalidParameter(format!("moment order {k} < 2")));
        }
        positive("lip", lip)?;
        let threshold = 1.0 / (4.0 * k * lip * lip);
        let mut hi = 1.0;
        while self.upsilon(hi)? >= threshold {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NoRoot(format!("Υ stays above {threshold:e}")));
            }
        }
        let mut lo = hi;
        loop {
            lo *= 0.5;
            if lo < 1e-300 {
                return Ok(0.0);
            }
            if self.upsilon(lo)? >= threshold {
                break;
            }
        }
        let mut err = None;
        let b = quadrature::bisect_increasing(lo, hi, -threshold, 1e-12, |b| match self.upsilon(b) {
            Ok(v) => -v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(0.5 * k * b)
    }

    /// 𝔤(a) = inf{t > 0 : ∫₀ᵗ p_r(0) dr ≥ a}; `f64::INFINITY` when the
    /// integral saturates below `a`.
    pub fn g_eval(&self, a: f64) -> Result<f64> {
        positive("a", a)?;
        let mut hi = 1.0;
        let mut prev = -1.0;
        while self.integrated_p0(hi)? < a {
            let cur = self.integrated_p0(hi)?;
            if hi > 1e15 || (cur - prev).abs() <= 1e-14 * cur {
                return Ok(f64::INFINITY);
            }
            prev = cur;
            hi *= 4.0;
        }
        let mut lo = hi;
        loop {
            lo *= 0.25;
            if self.integrated_p0(lo)? < a {
                break;
            }
        }
        let mut err = None;
        let t = quadrature::bisect_increasing(lo, hi, a, 1e-12, |t| match self.integrated_p0(t) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::INFINITY
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(t),
        }
    }

    /// 𝔗ₖ = 𝔤((32kΘ[1 ∨ Lip²])⁻¹).
    pub fn frak_t(&self, k: f64, lip: f64, theta: f64) -> Result<f64> {
        self.g_eval(1.0 / (32.0 * k * theta * lip.powi(2).max(1.0)))
    }

    pub fn functionals(&self) -> Result<KernelFunctionals> {
        Ok(KernelFunctionals { theta: self.theta()?, model: self.clone() })
    }
}

/// Θ together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub value: f64,
    pub grid_points: usize,
    pub warning: Option<String>,
}

/// Derived functionals of one kernel, with Θ computed once.
#[derive(Debug, Clone)]
pub struct KernelFunctionals {
    pub model: KernelModel,
    pub theta: ThetaEstimate,
}

impl KernelFunctionals {
    pub fn theta(&self) -> f64 {
        self.theta.value
    }

    pub fn upsilon(&self, beta: f64) -> Result<f64> {
        self.model.upsilon(beta)
    }

    pub fn gamma(&self, k: f64, lip: f64) -> Result<f64> {
        self.model.gamma_k(k, lip)
    }

    pub fn g(&self, a: f64) -> Result<f64> {
        self.model.g_eval(a)
    }

    pub fn frak_t(&self, k: f64, lip: f64) -> Result<f64> {
        self.model.frak_t(k, lip, self.theta.value)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn build_tabulated(xi: &[f64], psi: &[f64]) -> Result<Tabulated> {
    if xi.len() != psi.len() || xi.len() < 2 {
        return Err(Error::InvalidParameter("tabulated Ψ needs at least two (ξ, Ψ) pairs of equal length".into()));
    }
    if xi[0] < 0.0 || xi.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("tabulated ξ must be nonnegative and strictly increasing".into()));
    }
    if xi[0] == 0.0 && psi[0] != 0.0 {
        return Err(Error::InvalidParameter("tabulated Ψ must vanish at ξ = 0".into()));
    }
    if psi.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || psi.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("tabulated Ψ must be finite, nonnegative and nondecreasing".into()));
    }
    let n = xi.len();
    let (x0, x1, y0, y1) = (xi[n - 2], xi[n - 1], psi[n - 2], psi[n - 1]);
    if !(x0 > 0.0 && y0 > 0.0 && y1 > y0) {
        return Err(Error::InvalidParameter("tabulated Ψ must grow strictly over its last two samples".into()));
    }
    let tail_exp = (y1 / y0).ln() / (x1 / x0).ln();
    let tail_coef = y1 / x1.powf(tail_exp);
    // below the first positive sample Ψ continues as a power law through 0
    let head_exp = if xi[0] > 0.0 && psi[0] > 0.0 && psi[1] > psi[0] {
        (psi[1] / psi[0]).ln() / (xi[1] / xi[0]).ln()
    } else {
        1.0
    };
    Ok(Tabulated { xi: xi.to_vec(), psi: psi.to_vec(), head_exp, tail_coef, tail_exp })
}

/// ln P and its derivative for the standard stable density
/// P(z) = (1/π)∫₀^∞ e^{−ξ^α} cos(zξ) dξ on a uniform grid, with the
/// large-z asymptotic series beyond it.
#[derive(Debug)]
struct StableTable {
    alpha: f64,
    h: f64,
    zmax: f64,
    ln_p: Vec<f64>,
    dln_p: Vec<f64>,
    series: Vec<f64>,
}

const STABLE_ZMAX: f64 = 40.0;
const STABLE_STEP: f64 = 0.01;

fn stable_table(alpha: f64) -> Arc<StableTable> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("stable table cache poisoned").get(&alpha.to_bits()) {
        return t.clone();
    }
    let table = Arc::new(StableTable::build(alpha));
    cache
        .lock()
        .expect("stable table cache poisoned")
        .entry(alpha.to_bits())
        .or_insert(table)
        .clone()
}

impl StableTable {
    fn build(alpha: f64) -> Self {
        let model = KernelModel::stable(alpha, 1.0).expect("valid stable index");
        let rule = model.fourier_rule(1.0, STABLE_ZMAX).expect("unit-time rule resolves");
        let n = (STABLE_ZMAX / STABLE_STEP).round() as usize + 1;
        let mut p = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for &(xi, w) in &rule {
            // rotate e^{iξz} along the uniform z grid
            let (s1, c1) = (xi * STABLE_STEP).sin_cos();
            let (mut s, mut c) = (0.0f64, 1.0f64);
            for i in 0..n {
                if i % 256 == 0 {
                    let (ss, cc) = (xi * STABLE_STEP * i as f64).sin_cos();
                    s = ss;
                    c = cc;
                }
                p[i] += w * c;
                dp[i] -= w * xi * s;
                let cn = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = cn;
            }
        }
        let ln_p = p.iter().map(|v| v.ln()).collect();
        let dln_p = p.iter().zip(&dp).map(|(v, d)| d / v).collect();
        let series = (1..=12)
            .map(|k| {
                let kf = k as f64;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * statrs::function::gamma::gamma(kf * alpha + 1.0) / statrs::function::gamma::gamma(kf + 1.0)
                    * (kf * PI * alpha / 2.0).sin()
                    / PI
            })
            .collect();
        Self { alpha, h: STABLE_STEP, zmax: STABLE_ZMAX, ln_p, dln_p, series }
    }

    fn tail(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        let mut last = f64::INFINITY;
        for (k, c) in self.series.iter().enumerate() {
            let term = c * z.powf(-((k + 1) as f64) * self.alpha - 1.0);
            if term.abs() > last {
                break;
            }
            acc += term;
            last = term.abs();
        }
        acc
    }

    fn eval(&self, z: f64) -> f64 {
        let z = z.abs();
        if z >= self.zmax {
            return self.tail(z);
        }
        let u = z / self.h;
        let i = (u.floor() as usize).min(self.ln_p.len() - 2);
        let s = u - i as f64;
        let (y0, y1) = (self.ln_p[i], self.ln_p[i + 1]);
        let (d0, d1) = (self.dln_p[i] * self.h, self.dln_p[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1;
        v.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(t: f64, x: f64) -> f64 {
        (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
    }

    #[test]
    fn psi_examples() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert_eq!(b.psi(2.0), 2.0);
        assert_eq!(b.psi(-2.0), 2.0);
        let s = KernelModel::stable(1.5, 1.0).unwrap();
        assert_eq!(s.psi(1.0), 1.0);
    }

    #[test]
    fn p_eval_matches_gaussian() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert!((b.p_eval(1.0, 0.0).unwrap() - 0.3989422804).abs() < 1e-10);
        assert!((b.p_eval(1.0, 1.0).unwrap() - 0.2419707245).abs() < 1e-10);
        for &(t, x) in &[(1e-3, 0.05), (0.5, 3.0), (10.0, -7.0)] {
            assert!((b.p_eval(t, x).unwrap() - gaussian(t, x)).abs() < 1e-11 * gaussian(t, 0.0));
        }
    }

    #[test]
    fn cauchy_via_table() {
        let xi: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let m = KernelModel::tabulated(xi.clone(), xi).unwrap();
        assert!((m.tail_index() - 1.0).abs() < 1e-12);
        assert!((m.p_eval(1.0, 0.0).unwrap() - 1.0 / PI).abs() < 1e-9);
        let cauchy = |t: f64, x: f64| t / (PI * (t * t + x * x));
        assert!((m.p_eval(1.0, 2.0).unwrap() - cauchy(1.0, 2.0)).abs() < 1e-9);
        assert!(matches!(m.upsilon(1.0), Err(Error::DivergentResolvent(_))));
    }

    #[test]
    fn stable_index_at_most_one_is_divergent() {
        assert!(matches!(KernelModel::stable(1.0, 1.0), Err(Error::DivergentResolvent(_))));
        assert!(matches!(KernelModel::stable(2.5, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn underresolved_quadrature_is_reported() {
        let quad = QuadratureSpec { cutoff_xi: 10.0, ..QuadratureSpec::default() };
        let m = KernelModel::new(KernelKind::Brownian { kappa: 1.0 }, quad).unwrap();
        assert!(matches!(m.p_eval(1e-3, 0.0), Err(Error::QuadratureUnderresolved(_))));
        assert!(m.p_eval(1.0, 0.0).is_ok());
    }

    #[test]
    fn stable_table_agrees_with_direct_inversion() {
        for &alpha in &[1.2, 1.5, 1.8] {
            let m = KernelModel::stable(alpha, 1.0).unwrap();
            for &x in &[0.0, 0.337, 1.0, 4.2, 17.3, 39.9, 40.5, 80.0] {
                let direct = m.p_eval(1.0, x).unwrap();
                let fast = m.density(1.0, x).unwrap();
                assert!((fast - direct).abs() <= 1e-8 * direct + 1e-12, "alpha {alpha} x {x}: {fast} vs {direct}");
            }
            let closed = statrs::function::gamma::gamma(1.0 + 1.0 / alpha) / PI;
            assert!((m.p_zero(1.0).unwrap() - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn theta_closed_forms() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert!((b.theta().unwrap().value - 2f64.sqrt()).abs() < 1e-6);
        for &alpha in &[1.5, 2.0] {
            let s = KernelModel::stable(alpha, 1.0).unwrap();
            let th = s.theta().unwrap().value;
            assert!((th - 2f64.powf(1.0 / alpha)).abs() < 1e-4, "alpha {alpha}: {th}");
        }
    }

    #[test]
    fn upsilon_brownian_closed_form() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert!((b.upsilon(4.0).unwrap() - 0.25).abs() < 1e-10);
        assert!((b.upsilon(1.0).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn upsilon_stable_scaling() {
        let s = KernelModel::stable(1.5, 1.0).unwrap();
        let c: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|&b| s.upsilon(b).unwrap() * b.powf(1.0 / 3.0)).collect();
        for v in &c {
            assert!((v / c[0] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn resolvent_identity() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert!(b.resolvent_identity_check(1.0).unwrap() < 1e-6);
        assert!(b.resolvent_identity_check(4.0).unwrap() < 1e-6);
        let s = KernelModel::stable(1.5, 1.0).unwrap();
        assert!(s.resolvent_identity_check(1.0).unwrap() < 1e-4);
    }

    #[test]
    fn gamma_closed_form_and_scaling() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert!((b.gamma_k(2.0, 1.0).unwrap() / 16.0 - 1.0).abs() < 1e-8);
        assert!((b.gamma_k(3.0, 1.0).unwrap() / 54.0 - 1.0).abs() < 1e-8);
        let s = KernelModel::stable(1.5, 1.0).unwrap();
        let r: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|&k| s.gamma_k(k, 1.0).unwrap() * k.powi(-4)).collect();
        for v in &r {
            assert!((v / r[0] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn g_closed_form() {
        let b = KernelModel::brownian(1.0).unwrap();
        assert!((b.g_eval(1.0).unwrap() - PI / 2.0).abs() < 1e-7);
        let small = b.g_eval(0.01).unwrap();
        assert!((small / (PI * 1e-4 / 2.0) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn integrated_p0_matches_frequency_route() {
        let s = KernelModel::stable(1.5, 1.0).unwrap();
        for &t in &[1e-3f64, 0.7, 20.0] {
            let exact = statrs::function::gamma::gamma(1.0 + 1.0 / 1.5) / PI * t.powf(1.0 / 3.0) * 3.0;
            assert!((s.integrated_p0(t).unwrap() / exact - 1.0).abs() < 1e-10);
            assert!((s.integrated_p0_fourier(t).unwrap() / exact - 1.0).abs() < 1e-8);
        }
        let b = KernelModel::brownian(1.0).unwrap();
        assert!((b.integrated_p0_fourier(2.0).unwrap() - (4.0 / PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn frak_t_decreases_in_k() {
        let b = KernelModel::brownian(1.0).unwrap();
        let f = b.functionals().unwrap();
        let ts: Vec<f64> = (2..8).map(|k| f.frak_t(k as f64, 1.0).unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] < w[0]));
        // 𝔗₂ coincides with 𝔤((64Θ[1∨Lip²])⁻¹)
        let t2 = b.g_eval(1.0 / (64.0 * f.theta())).unwrap();
        assert!((ts[0] - t2).abs() < 1e-12 * t2);
    }

    #[test]
    fn saturating_integral_gives_infinite_g() {
        // Ψ ~ ξ^{1/2} near 0 makes ∫ dξ/Ψ finite, so ∫₀^∞ p_r(0) dr saturates
        let xi: Vec<f64> = (-8..=8).map(|k| 2f64.powi(k)).collect();
        let psi: Vec<f64> = xi.iter().map(|&x: &f64| if x < 1.0 { x.sqrt() } else { x * x }).collect();
        let m = KernelModel::tabulated(xi, psi).unwrap();
        assert!((m.tail_index() - 2.0).abs() < 1e-12);
        let total = m.integrated_p0_fourier(1e12).unwrap();
        assert!(total.is_finite());
        assert_eq!(m.g_eval(2.0 * total).unwrap(), f64::INFINITY);
        let half = m.g_eval(0.5 * total).unwrap();
        assert!((m.integrated_p0(half).unwrap() / (0.5 * total) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn density_is_maximal_at_origin_and_nonincreasing_in_time() {
        for m in [KernelModel::brownian(1.0).unwrap(), KernelModel::stable(1.5, 1.0).unwrap()] {
            let ts = [1e-3, 1e-2, 0.1, 1.0, 10.0];
            let mut prev = f64::INFINITY;
            for &t in &ts {
                let p0 = m.p_eval(t, 0.0).unwrap();
                assert!(p0 <= prev);
                prev = p0;
                for &x in &[0.01, 0.3, 2.0, 9.0] {
                    let p = m.p_eval(t, x).unwrap();
                    assert!(p <= p0 && p >= -1e-12);
                }
            }
        }
    }
}
