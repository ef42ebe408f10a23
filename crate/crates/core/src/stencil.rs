//! Symmetric convolution stencils applied to lattice rows with a zero
//! exterior: direct summation for short stencils, zero-padded FFT otherwise.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Taps longer than this switch the row convolution to FFT.
const DIRECT_LIMIT: usize = 16;

/// Even stencil `taps[|m|]`, m = −half..=half.
#[derive(Clone)]
pub struct Stencil {
    taps: Vec<f64>,
    nx: usize,
    fft: Option<FftConv>,
}

#[derive(Clone)]
struct FftConv {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl std::fmt::Debug for Stencil {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stencil").field("half", &self.half()).field("nx", &self.nx).field("fft", &self.fft.is_some()).finish()
    }
}

impl Stencil {
    /// `one_sided[m]` for m = 0..; trailing taps below `rel_cut`·max are
    /// dropped, and nothing beyond nx − 1 is kept.
    pub fn new(one_sided: &[f64], nx: usize, rel_cut: f64) -> Self {
        let peak = one_sided.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut len = one_sided.len().min(nx);
        while len > 1 && one_sided[len - 1].abs() <= rel_cut * peak {
            len -= 1;
        }
        let taps = one_sided[..len].to_vec();
        let half = len - 1;
        let fft = (half > DIRECT_LIMIT).then(|| {
            let n = (nx + half).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
            for (m, &t) in taps.iter().enumerate() {
                spectrum[m].re = t;
                if m > 0 {
                    spectrum[n - m].re = t;
                }
            }
            forward.process(&mut spectrum);
            let scale = 1.0 / n as f64;
            for s in spectrum.iter_mut() {
                *s *= scale;
            }
            FftConv { forward, inverse, spectrum }
        });
        Self { taps, nx, fft }
    }

    pub fn half(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Σ_m taps[|m|].
    pub fn sum(&self) -> f64 {
        self.taps[0] + 2.0 * self.taps[1..].iter().sum::<f64>()
    }

    /// out[i] += Σ_j taps[|i − j|]·input[j].
    pub fn apply_add(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.nx);
        debug_assert_eq!(out.len(), self.nx);
        match &self.fft {
            None => {
                let h = self.half() as isize;
                let n = self.nx as isize;
                for (j, &v) in input.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let j = j as isize;
                    let lo = (j - h).max(0);
                    let hi = (j + h).min(n - 1);
                    for i in lo..=hi {
                        out[i as usize] += self.taps[(i - j).unsigned_abs()] * v;
                    }
                }
            }
            Some(f) => {
                let n = f.spectrum.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for (b, &v) in buf.iter_mut().zip(input) {
                    b.re = v;
                }
                f.forward.process(&mut buf);
                for (b, s) in buf.iter_mut().zip(&f.spectrum) {
                    *b *= s;
                }
                f.inverse.process(&mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o += b.re;
                }
            }
        }
    }
}

/// Two stencils applied to the same row with one forward and one inverse
/// transform: the real and imaginary parts of IFFT(ŝ·(â + ib̂)) are a*s and
/// b*s, both being real.
#[derive(Clone)]
pub struct StencilPair {
    a: Stencil,
    b: Stencil,
    fft: Option<FftConv>,
}

impl std::fmt::Debug for StencilPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StencilPair").field("a", &self.a).field("b", &self.b).finish()
    }
}

impl StencilPair {
    pub fn new(a: Stencil, b: Stencil) -> Self {
        let nx = a.nx;
        let half = a.half().max(b.half());
        let fft = (half > DIRECT_LIMIT).then(|| {
            let n = (nx + half).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let mut sa = vec![Complex64::new(0.0, 0.0); n];
            let mut sb = sa.clone();
            for (spec, taps) in [(&mut sa, a.taps()), (&mut sb, b.taps())] {
                for (m, &t) in taps.iter().enumerate() {
                    spec[m].re = t;
                    if m > 0 {
                        spec[n - m].re = t;
                    }
                }
                forward.process(spec);
            }
            let scale = 1.0 / n as f64;
            let spectrum = sa.iter().zip(&sb).map(|(x, y)| Complex64::new(x.re - y.im, x.im + y.re) * scale).collect();
            FftConv { forward, inverse, spectrum }
        });
        Self { a, b, fft }
    }

    pub fn first(&self) -> &Stencil {
        &self.a
    }

    pub fn second(&self) -> &Stencil {
        &self.b
    }

    /// out_a += a * input, out_b += b * input; `buf` is scratch.
    pub fn apply_add(&self, input: &[f64], out_a: &mut [f64], out_b: &mut [f64], buf: &mut Vec<Complex64>) {
        match &self.fft {
            None => {
                self.a.apply_add(input, out_a);
                self.b.apply_add(input, out_b);
            }
            Some(f) => {
                let n = f.spectrum.len();
                buf.clear();
                buf.extend(input.iter().map(|&v| Complex64::new(v, 0.0)));
                buf.resize(n, Complex64::new(0.0, 0.0));
                f.forward.process(buf);
                for (z, s) in buf.iter_mut().zip(&f.spectrum) {
                    *z *= s;
                }
                f.inverse.process(buf);
                for ((oa, ob), z) in out_a.iter_mut().zip(out_b.iter_mut()).zip(buf.iter()) {
                    *oa += z.re;
                    *ob += z.im;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(taps: &[f64], input: &[f64]) -> Vec<f64> {
        let n = input.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let m = (i as isize - j as isize).unsigned_abs();
                        if m < taps.len() {
                            taps[m] * input[j]
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_and_direct_agree() {
        let nx = 200;
        let one: Vec<f64> = (0..150).map(|m| 1.0 / (1.0 + (m as f64).powf(2.5))).collect();
        let s = Stencil::new(&one, nx, 0.0);
        assert!(s.fft.is_some());
        let input: Vec<f64> = (0..nx).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let mut out = vec![0.0; nx];
        s.apply_add(&input, &mut out);
        let want = direct(s.taps(), &input);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let short = Stencil::new(&one[..10], nx, 0.0);
        assert!(short.fft.is_none());
        let mut out = vec![0.0; nx];
        short.apply_add(&input, &mut out);
        let want = direct(short.taps(), &input);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pair_matches_separate_application() {
        let nx = 300;
        let a: Vec<f64> = (0..nx).map(|m| 1.0 / (1.0 + m as f64).powi(2)).collect();
        let b: Vec<f64> = (0..20).map(|m| (-(m as f64)).exp()).collect();
        let pair = StencilPair::new(Stencil::new(&a, nx, 0.0), Stencil::new(&b, nx, 0.0));
        let input: Vec<f64> = (0..nx).map(|i| ((i * 13 % 7) as f64 - 3.0) / 2.0).collect();
        let (mut oa, mut ob) = (vec![1.0; nx], vec![-1.0; nx]);
        pair.apply_add(&input, &mut oa, &mut ob, &mut Vec::new());
        let wa = direct(pair.first().taps(), &input);
        let wb = direct(pair.second().taps(), &input);
        for i in 0..nx {
            assert!((oa[i] - 1.0 - wa[i]).abs() < 1e-12);
            assert!((ob[i] + 1.0 - wb[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn trailing_taps_are_cut() {
        let s = Stencil::new(&[1.0, 0.5, 1e-20, 1e-25], 10, 1e-18);
        assert_eq!(s.half(), 1);
        assert_eq!(s.sum(), 2.0);
    }
}
