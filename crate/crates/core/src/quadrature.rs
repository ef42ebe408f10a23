//! Gauss–Legendre rules, composite panels and small numerical helpers
//! shared by the kernel, convolution and solver modules.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Cached rule of order `n`.
    pub fn cached(n: usize) -> &'static GaussLegendre {
        static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussLegendre>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("quadrature cache poisoned");
        map.entry(n)
            .or_insert_with(|| Box::leak(Box::new(GaussLegendre::new(n))))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Push the mapped nodes and weights of [a, b] onto `out`.
    pub fn push_panel(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            out.push((mid + half * x, w * half));
        }
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Composite Gauss–Legendre over the given panel edges.
pub fn composite<F: FnMut(f64) -> f64>(edges: &[f64], order: usize, mut f: F) -> f64 {
    let rule = GaussLegendre::cached(order);
    edges
        .windows(2)
        .map(|w| rule.integrate(w[0], w[1], &mut f))
        .sum()
}

/// Panel edges on [0, b]: `uniform` equal panels, with the first one split
/// geometrically `grade` times towards zero.
pub fn graded_edges(b: f64, uniform: usize, grade: usize) -> Vec<f64> {
    let uniform = uniform.max(1);
    let h = b / uniform as f64;
    let mut edges = Vec::with_capacity(uniform + grade + 1);
    edges.push(0.0);
    for g in (1..=grade).rev() {
        edges.push(h * 0.5f64.powi(g as i32));
    }
    for k in 1..=uniform {
        edges.push(h * k as f64);
    }
    edges
}

/// Integral of `f` over [0, t] for an integrand with an integrable power
/// singularity at 0, via the substitution r = t w^q.
pub fn singular_start<F: FnMut(f64) -> f64>(t: f64, q: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let edges: Vec<f64> = (0..=panels).map(|k| k as f64 / panels as f64).collect();
    composite(&edges, order, |w| {
        if w <= 0.0 {
            return 0.0;
        }
        let r = t * w.powf(q);
        f(r) * t * q * w.powf(q - 1.0)
    })
}

/// Integral of `f` over [0, t] for an integrand singular at both ends
/// (power-type), splitting at t/2 and grading towards each endpoint.
/// `f` receives (s, t − s), with the smaller one never formed by
/// subtraction.
pub fn singular_both<F: FnMut(f64, f64) -> f64>(t: f64, q: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let half = 0.5 * t;
    let left = singular_start(half, q, panels, order, |r| f(r, t - r));
    let right = singular_start(half, q, panels, order, |r| f(t - r, r));
    left + right
}

/// Find x in [lo, hi] with `f(x) = target` for nondecreasing `f`, to
/// relative tolerance `rel_tol` in x.
pub fn bisect_increasing<F: FnMut(f64) -> f64>(mut lo: f64, mut hi: f64, target: f64, rel_tol: f64, mut f: F) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= rel_tol * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    hi
}

/// Pairwise summation; the result is independent of thread scheduling
/// as long as the slice order is fixed.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Ordinary least-squares slope and intercept of `y` on `x`, with the
/// standard error of the slope.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let se = if x.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, intercept, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the exactness limit for 8 nodes
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_start_handles_inverse_sqrt() {
        let v = singular_start(2.0, 2.0, 4, 16, |r| r.powf(-0.5));
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn singular_both_beta_integral() {
        // ∫_0^1 (s(1-s))^{-1/2} ds = π
        let v = singular_both(1.0, 2.0, 4, 16, |s, rest| (s * rest).powf(-0.5));
        assert!((v - std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn bisection_finds_sqrt() {
        let r = bisect_increasing(0.0, 10.0, 2.0, 1e-12, |x| x * x);
        assert!((r - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn least_squares_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, c, se) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-12 && (c - 3.0).abs() < 1e-12 && se < 1e-10);
    }
}
