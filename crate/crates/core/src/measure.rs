//! Finite Borel initial data u₀: point masses, Gaussian bumps and a sampled
//! density, with exact heat-kernel smoothing of the atomic part.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelKind, KernelModel};
use crate::quadrature::GaussLegendre;

/// Nonnegative density sampled on an increasing grid, linear in between and
/// zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledDensity {
    fn mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
            .sum()
    }

    fn eval(&self, y: f64) -> f64 {
        let n = self.grid.len();
        if y < self.grid[0] || y > self.grid[n - 1] {
            return 0.0;
        }
        let k = self.grid.partition_point(|&g| g <= y).clamp(1, n - 1) - 1;
        let (g0, g1) = (self.grid[k], self.grid[k + 1]);
        let s = (y - g0) / (g1 - g0);
        self.values[k] * (1.0 - s) + self.values[k + 1] * s
    }
}

/// Gaussian bump `mass · N(mean, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub mean: f64,
    pub sd: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeasureRepr {
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    gaussians: Vec<GaussianBump>,
    #[serde(default)]
    density: Option<SampledDensity>,
    #[serde(default)]
    support_radius: Option<f64>,
}

/// A finite, nonzero, nonnegative measure on ℝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct FiniteMeasure {
    atoms: Vec<(f64, f64)>,
    gaussians: Vec<GaussianBump>,
    density: Option<SampledDensity>,
    total_mass: f64,
    support_radius: f64,
}

impl TryFrom<MeasureRepr> for FiniteMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        FiniteMeasure::new(r.atoms, r.gaussians, r.density, r.support_radius)
    }
}

impl From<FiniteMeasure> for MeasureRepr {
    fn from(m: FiniteMeasure) -> Self {
        MeasureRepr {
            atoms: m.atoms,
            gaussians: m.gaussians,
            density: m.density,
            support_radius: m.support_radius.is_finite().then_some(m.support_radius),
        }
    }
}

impl FiniteMeasure {
    /// Validates the parts and records the support radius; a declared radius
    /// must contain every atom and the sampled density must vanish outside it.
    pub fn new(
        atoms: Vec<(f64, f64)>,
        gaussians: Vec<GaussianBump>,
        density: Option<SampledDensity>,
        support_radius: Option<f64>,
    ) -> Result<Self> {
        for &(y, m) in &atoms {
            if !(y.is_finite() && m.is_finite() && m > 0.0) {
                return Err(Error::InvalidParameter(format!("atom ({y}, {m}) needs finite location and positive mass")));
            }
        }
        for g in &gaussians {
            if !(g.mean.is_finite() && g.sd > 0.0 && g.sd.is_finite() && g.mass > 0.0 && g.mass.is_finite()) {
                return Err(Error::InvalidParameter(format!("bad gaussian component {g:?}")));
            }
        }
        if let Some(d) = &density {
            if d.grid.len() != d.values.len() || d.grid.len() < 2 {
                return Err(Error::InvalidParameter("density grid and values must have equal length >= 2".into()));
            }
            if d.grid.windows(2).any(|w| !(w[1] > w[0])) || d.grid.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidParameter("density grid must be finite and strictly increasing".into()));
            }
            if d.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParameter("density values must be finite and nonnegative".into()));
            }
        }
        let mut radius: f64 = atoms.iter().fold(0.0, |r, (y, _)| r.max(y.abs()));
        if let Some(d) = &density {
            for (g, v) in d.grid.iter().zip(&d.values) {
                if *v > 0.0 {
                    radius = radius.max(g.abs());
                }
            }
        }
        if !gaussians.is_empty() {
            radius = f64::INFINITY;
        }
        let support_radius = match support_radius {
            Some(k) => {
                if !(k >= 0.0) {
                    return Err(Error::InvalidParameter(format!("support radius {k} must be nonnegative")));
                }
                if radius > k * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!("mass found at |y| = {radius} outside declared support radius {k}")));
                }
                k
            }
            None => radius,
        };
        let parts = [
            atoms.iter().map(|a| a.1).sum::<f64>(),
            gaussians.iter().map(|g| g.mass).sum::<f64>(),
            density.as_ref().map_or(0.0, |d| d.mass()),
        ];
        let total_mass: f64 = parts.iter().sum();
        if !(total_mass > 0.0 && total_mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("total mass {total_mass} must be positive and finite")));
        }
        let recomputed = parts[2] + parts[1] + parts[0];
        assert!((recomputed - total_mass).abs() <= 1e-10 * total_mass, "mass bookkeeping drifted");
        Ok(Self { atoms, gaussians, density, total_mass, support_radius })
    }

    /// Point mass `m` at `y`.
    pub fn dirac(y: f64, m: f64) -> Result<Self> {
        Self::new(vec![(y, m)], vec![], None, None)
    }

    /// Unit point mass at the origin.
    pub fn delta0() -> Self {
        Self::dirac(0.0, 1.0).expect("unit atom is valid")
    }

    /// Absolutely continuous measure with density `values` on `grid`.
    pub fn sampled(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![], vec![], Some(SampledDensity { grid, values }), None)
    }

    /// aδ₀ plus a unit-mass standard Gaussian density; its Fourier transform
    /// a + e^{−ξ²/2} is positive with liminf a.
    pub fn make_positive_definite_example(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("atom weight {a} must be positive")));
        }
        Self::new(vec![(0.0, a)], vec![GaussianBump { mean: 0.0, sd: 1.0, mass: 1.0 }], None, None)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn gaussians(&self) -> &[GaussianBump] {
        &self.gaussians
    }

    pub fn density(&self) -> Option<&SampledDensity> {
        self.density.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// K with supp u₀ ⊂ [−K, K]; infinite when a Gaussian part is present.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn is_atomic(&self) -> bool {
        self.gaussians.is_empty() && self.density.is_none()
    }

    /// The absolutely continuous part, if any.
    pub fn continuous_part(&self) -> Option<Self> {
        if self.gaussians.is_empty() && self.density.is_none() {
            return None;
        }
        Self::new(vec![], self.gaussians.clone(), self.density.clone(), None).ok()
    }

    /// c·u₀.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.atoms.iter().map(|&(y, m)| (y, c * m)).collect(),
            self.gaussians.iter().map(|g| GaussianBump { mass: c * g.mass, ..*g }).collect(),
            self.density.as_ref().map(|d| SampledDensity { grid: d.grid.clone(), values: d.values.iter().map(|v| c * v).collect() }),
            self.support_radius.is_finite().then_some(self.support_radius),
        )
    }

    /// Density of the absolutely continuous part at y.
    pub fn continuous_density(&self, y: f64) -> f64 {
        let g: f64 = self
            .gaussians
            .iter()
            .map(|g| {
                let z = (y - g.mean) / g.sd;
                g.mass * (-0.5 * z * z).exp() / (g.sd * (2.0 * PI).sqrt())
            })
            .sum();
        g + self.density.as_ref().map_or(0.0, |d| d.eval(y))
    }

    /// û₀(ξ) = ∫ e^{iξy} u₀(dy); the sampled part is integrated exactly as a
    /// piecewise-linear function.
    pub fn fourier(&self, xi: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(y, m) in &self.atoms {
            acc += m * Complex64::from_polar(1.0, xi * y);
        }
        for g in &self.gaussians {
            acc += g.mass * (-0.5 * (g.sd * xi).powi(2)).exp() * Complex64::from_polar(1.0, xi * g.mean);
        }
        if let Some(d) = &self.density {
            acc += piecewise_linear_fourier(&d.grid, &d.values, xi);
        }
        acc
    }

    /// (p_t * u₀)(x) = ∫ p_t(x − y) u₀(dy).
    pub fn heat_convolve(&self, model: &KernelModel, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
        }
        let mut acc = 0.0;
        for &(y, m) in &self.atoms {
            acc += m * model.density(t, x - y)?;
        }
        let brownian_var = match model.kind() {
            KernelKind::Brownian { kappa } => Some(kappa * t),
            KernelKind::Stable { alpha, kappa } if *alpha == 2.0 => Some(2.0 * kappa * t),
            _ => None,
        };
        for g in &self.gaussians {
            acc += match brownian_var {
                Some(v) => {
                    let var = v + g.sd * g.sd;
                    g.mass * (-(x - g.mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
                }
                None => g.mass * gaussian_fourier_convolve(model, t, x - g.mean, g.sd),
            };
        }
        if let Some(d) = &self.density {
            acc += sampled_convolve(model, t, x, d)?;
        }
        Ok(acc)
    }

    /// `heat_convolve` at several points.
    pub fn heat_convolve_row(&self, model: &KernelModel, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.heat_convolve(model, t, x)).collect()
    }

    /// Mass of p_t * u₀ outside [−L, L].
    pub fn mass_outside(&self, model: &KernelModel, t: f64, half_width: f64) -> Result<f64> {
        let mut inside = 0.0;
        for &(y, m) in &self.atoms {
            inside += m * kernel_mass_between(model, t, -half_width - y, half_width - y)?;
        }
        if !self.gaussians.is_empty() || self.density.is_some() {
            let w = model.width(t).min(1.0);
            let panels = ((2.0 * half_width / w).ceil() as usize).clamp(16, 100_000);
            let h = 2.0 * half_width / panels as f64;
            let rule = GaussLegendre::cached(8);
            for k in 0..panels {
                let a = -half_width + k as f64 * h;
                let mut err = None;
                inside += rule.integrate(a, a + h, |x| {
                    let mut v = 0.0;
                    for g in &self.gaussians {
                        let one = FiniteMeasure { atoms: vec![], gaussians: vec![*g], density: None, total_mass: g.mass, support_radius: f64::INFINITY };
                        match one.heat_convolve(model, t, x) {
                            Ok(c) => v += c,
                            Err(e) => {
                                err.get_or_insert(e);
                            }
                        }
                    }
                    if let Some(d) = &self.density {
                        match sampled_convolve(model, t, x, d) {
                            Ok(c) => v += c,
                            Err(e) => {
                                err.get_or_insert(e);
                            }
                        }
                    }
                    v
                });
                if let Some(e) = err {
                    return Err(e);
                }
            }
        }
        Ok((self.total_mass - inside).max(0.0))
    }

    /// Gaussian envelope const·e^{−x²/(4t)} valid for |x| ≥ 2K under the
    /// Brownian kernel with variance κt.
    pub fn gaussian_envelope(&self, kappa: f64, t: f64, x: f64) -> f64 {
        let k = self.support_radius;
        let v = kappa * t;
        self.total_mass / (2.0 * PI * v).sqrt() * (k * k / (2.0 * v)).exp() * (-x * x / (4.0 * v)).exp()
    }
}

/// ∫_a^b p_t(z) dz.
fn kernel_mass_between(model: &KernelModel, t: f64, a: f64, b: f64) -> Result<f64> {
    match model.kind() {
        KernelKind::Brownian { kappa } => {
            let s = (kappa * t).sqrt() * std::f64::consts::SQRT_2;
            Ok(0.5 * (statrs::function::erf::erf(b / s) - statrs::function::erf::erf(a / s)))
        }
        _ => {
            let mass = |c: f64| -> Result<f64> { Ok(0.5 * c.signum() * model.mass_within(t, c.abs())?) };
            Ok(mass(b)? - mass(a)?)
        }
    }
}

/// (p_t * N(0, sd²))(z) = (1/π)∫₀^∞ e^{−tΨ(ξ) − sd²ξ²/2} cos(zξ) dξ.
fn gaussian_fourier_convolve(model: &KernelModel, t: f64, z: f64, sd: f64) -> f64 {
    let tol = model.quadrature().tol;
    let cutoff = (2.0 * (10.0 / tol).ln()).sqrt() / sd;
    let cutoff = cutoff.min(model.psi_inverse((10.0 / tol).ln() / t));
    let uniform = (z.abs() * cutoff / PI).ceil() as usize + 4;
    let edges = crate::quadrature::graded_edges(cutoff, uniform, 48);
    crate::quadrature::composite(&edges, model.quadrature().nodes, |xi| {
        (-t * model.psi(xi) - 0.5 * (sd * xi).powi(2)).exp() * (z * xi).cos()
    }) / PI
}

fn sampled_convolve(model: &KernelModel, t: f64, x: f64, d: &SampledDensity) -> Result<f64> {
    let n = d.grid.len();
    let lo = d.grid[0];
    let hi = d.grid[n - 1];
    let h = (hi - lo) / (n - 1) as f64;
    let edges = convolution_edges(model.width(t), h.max(1e-300), x, lo, hi, &d.grid);
    let rule = GaussLegendre::cached(8);
    let mut acc = 0.0;
    let mut err = None;
    for w in edges.windows(2) {
        acc += rule.integrate(w[0], w[1], |y| match model.density(t, x - y) {
            Ok(p) => p * d.eval(y),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        });
    }
    match err {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

/// Panel edges on [lo, hi]: steps of half a kernel width within eight widths
/// of x, growing geometrically away from x, never longer than scale/2, plus
/// the given breakpoints.
fn convolution_edges(width: f64, scale: f64, x: f64, lo: f64, hi: f64, breaks: &[f64]) -> Vec<f64> {
    let cap = 0.5 * scale;
    let mut offsets = vec![0.0];
    let mut d = 0.0;
    let mut step = (0.5 * width).min(cap);
    let reach = (hi - x).abs().max((x - lo).abs());
    while d < reach {
        d += step;
        offsets.push(d);
        if d > 8.0 * width {
            step = (step * 1.5).min(cap);
        }
    }
    let mut edges: Vec<f64> = Vec::with_capacity(2 * offsets.len() + breaks.len() + 2);
    edges.push(lo);
    edges.push(hi);
    for &o in &offsets {
        for y in [x - o, x + o] {
            if y > lo && y < hi {
                edges.push(y);
            }
        }
    }
    edges.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + b.abs()));
    edges
}

/// ∫ e^{iξy} f(y) dy for f linear between samples and zero outside.
fn piecewise_linear_fourier(grid: &[f64], values: &[f64], xi: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..grid.len() - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let (fa, fb) = (values[k], values[k + 1]);
        let h = b - a;
        let th = xi * h;
        let ea = Complex64::from_polar(1.0, xi * a);
        // ∫₀^h e^{iξs}(fa + (fb − fa)s/h) ds, series for small ξh
        let (i0, i1) = if th.abs() < 1e-3 {
            let i = Complex64::i();
            (
                h * (1.0 + i * th / 2.0 - th * th / 6.0 - i * th.powi(3) / 24.0),
                h * (0.5 + i * th / 3.0 - th * th / 8.0 - i * th.powi(3) / 30.0),
            )
        } else {
            let i = Complex64::i();
            let e = Complex64::from_polar(1.0, th);
            let j0 = (e - 1.0) / (i * xi);
            // ∫₀^h s e^{iξs} ds / h
            let j1 = (h * e / (i * xi) + (e - 1.0) / (xi * xi)) / h;
            (j0, j1)
        };
        acc += ea * (fa * i0 + (fb - fa) * i1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_matches_kernel() {
        let b = KernelModel::brownian(1.0).unwrap();
        let d = FiniteMeasure::delta0();
        assert!((d.heat_convolve(&b, 1.0, 0.0).unwrap() - 0.3989422804).abs() < 1e-10);
        let two = d.scaled(2.0).unwrap();
        assert_eq!(two.heat_convolve(&b, 0.3, 0.7).unwrap(), 2.0 * d.heat_convolve(&b, 0.3, 0.7).unwrap());
    }

    #[test]
    fn fourier_of_examples() {
        let d = FiniteMeasure::delta0();
        assert_eq!(d.fourier(3.7), Complex64::new(1.0, 0.0));
        let pd = FiniteMeasure::make_positive_definite_example(0.5).unwrap();
        assert!((pd.fourier(0.0).re - 1.5).abs() < 1e-15);
        assert_eq!(pd.total_mass(), 1.5);
        for &xi in &[20.0, -25.0, 100.0] {
            let v = pd.fourier(xi);
            assert!(v.im.abs() < 1e-14 && v.re >= 0.5 - 1e-14);
        }
    }

    #[test]
    fn piecewise_linear_fourier_matches_quadrature() {
        let grid: Vec<f64> = (0..=40).map(|k| -2.0 + 0.1 * k as f64).collect();
        let values: Vec<f64> = grid.iter().map(|g| (1.0 - g * g / 4.0).max(0.0)).collect();
        let m = FiniteMeasure::sampled(grid, values).unwrap();
        for &xi in &[0.0, 1e-4, 0.3, 2.0, 17.0] {
            let direct = crate::quadrature::composite(
                &(0..=400).map(|k| -2.0 + 0.01 * k as f64).collect::<Vec<_>>(),
                8,
                |y| m.continuous_density(y) * (xi * y).cos(),
            );
            let v = m.fourier(xi);
            assert!((v.re - direct).abs() < 1e-10, "xi {xi}: {} vs {direct}", v.re);
            assert!(v.im.abs() < 1e-10);
        }
    }

    #[test]
    fn support_radius_is_enforced() {
        let r = FiniteMeasure::new(vec![(3.0, 1.0)], vec![], None, Some(2.0));
        assert!(r.is_err());
        let m = FiniteMeasure::new(vec![(1.5, 1.0), (-0.5, 2.0)], vec![], None, None).unwrap();
        assert_eq!(m.support_radius(), 1.5);
        assert_eq!(m.total_mass(), 3.0);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"atoms":[[0.0,1.0]],"density":{"grid":[-1.0,0.0,1.0],"values":[0.0,1.0,0.0]},"support_radius":1.0}"#;
        let m: FiniteMeasure = serde_json::from_str(text).unwrap();
        assert!((m.total_mass() - 2.0).abs() < 1e-15);
        let back: FiniteMeasure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"atoms":[[0.0,-1.0]]}"#;
        assert!(serde_json::from_str::<FiniteMeasure>(bad).is_err());
    }

    #[test]
    fn gaussian_part_under_stable_kernel_conserves_mass() {
        let s = KernelModel::stable(1.5, 1.0).unwrap();
        let pd = FiniteMeasure::make_positive_definite_example(1.0).unwrap();
        // Fourier route: (1/π)∫ e^{−tΨ} û₀(ξ) cos(xξ) dξ
        for &(t, x) in &[(1e-3, 0.0), (0.05, 0.4), (1.0, 3.0)] {
            let v = pd.heat_convolve(&s, t, x).unwrap() - s.density(t, x).unwrap();
            let f = crate::quadrature::composite(&crate::quadrature::graded_edges(12.0, 48, 0), 16, |xi| {
                (-t * s.psi(xi)).exp() * (-0.5 * xi * xi).exp() * (x * xi).cos()
            }) / PI;
            assert!((v - f).abs() < 1e-9, "t {t} x {x}: {v} vs {f}");
        }
    }

    #[test]
    fn outside_mass_of_delta() {
        let b = KernelModel::brownian(1.0).unwrap();
        let d = FiniteMeasure::delta0();
        let out = d.mass_outside(&b, 1.0, 2.0).unwrap();
        assert!((out - statrs::function::erf::erfc(2.0 / 2f64.sqrt())).abs() < 1e-12);
    }
}
