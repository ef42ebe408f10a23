use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::plan::LatticePlan;
use crate::error::{Error, Result};

impl LatticePlan {
    /// E|u|² of the lattice scheme itself for σ(u) = λu, row by row.
    ///
    /// The increments are independent, so the fluctuation's variance obeys a
    /// closed discrete Volterra sum with kernels G² (current step) and
    /// (Pᵈ * G_b)² (d steps back). Comparing this with the continuum oracle
    /// isolates the discretization bias from Monte Carlo error. Boundary
    /// truncation is ignored, which is exact away from the lattice edge.
    pub fn linear_second_moment(&self, lambda: f64) -> Result<Vec<f64>> {
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        let (nt, nx) = (self.nt(), self.nx());
        let n = (4 * nx).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let zero = Complex64::new(0.0, 0.0);
        let spectrum = |taps: &[f64]| {
            let mut s = vec![zero; n];
            for (m, &t) in taps.iter().enumerate() {
                s[m].re = t;
                if m > 0 {
                    s[n - m].re = t;
                }
            }
            fwd.process(&mut s);
            s
        };
        let p_hat = spectrum(self.propagator().taps());
        let g_hat = spectrum(self.noise_kernels().first().taps());
        let full_hat = spectrum(self.noise_kernels().second().taps());
        let scale = 1.0 / n as f64;
        // squared-kernel spectra by lag
        let mut sq = Vec::with_capacity(nt);
        let mut cur = g_hat.clone();
        for d in 0..nt {
            let mut k: Vec<Complex64> = if d == 0 { full_hat.clone() } else { cur.clone() };
            inv.process(&mut k);
            let mut k2: Vec<Complex64> = k.iter().map(|z| Complex64::new((z.re * scale).powi(2), 0.0)).collect();
            fwd.process(&mut k2);
            sq.push(k2);
            for (c, p) in cur.iter_mut().zip(&p_hat) {
                *c *= p;
            }
        }
        let c = lambda * lambda * self.dt() * self.dx();
        let mut src_hat: Vec<Vec<Complex64>> = Vec::with_capacity(nt);
        let mut var_prev = vec![0.0; nx];
        let mut out = Vec::with_capacity(nt * nx);
        for r in 0..nt {
            let level = self.level_row(r);
            let mut a = vec![zero; n];
            for j in 0..nx {
                a[j].re = c * (level[j] * level[j] + var_prev[j]);
            }
            fwd.process(&mut a);
            src_hat.push(a);
            let mut acc = vec![zero; n];
            for m in 0..=r {
                for ((z, s), k) in acc.iter_mut().zip(&src_hat[m]).zip(&sq[r - m]) {
                    *z += s * k;
                }
            }
            inv.process(&mut acc);
            for j in 0..nx {
                var_prev[j] = acc[j].re * scale;
            }
            let det = self.det_row(r);
            out.extend((0..nx).map(|j| det[j] * det[j] + var_prev[j]));
        }
        Ok(out)
    }
}
