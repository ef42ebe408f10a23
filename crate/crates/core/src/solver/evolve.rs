use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::plan::LatticePlan;
use super::sigma::SigmaSpec;
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::noise::NoiseSource;

/// How a field was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Picard { n: usize },
    TimeStep,
}

/// One realization on the plan's lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldLattice {
    pub grid: SpaceTimeGrid,
    pub scheme: Scheme,
    pub seed: u64,
    pub truncation_l: f64,
}

/// Noise-driven part of the field after `step` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveState {
    step: usize,
    v: Vec<f64>,
    w: Vec<f64>,
}

impl EvolveState {
    pub fn new(nx: usize) -> Self {
        Self { step: 0, v: vec![0.0; nx], w: vec![0.0; nx] }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// u − (p_t * u₀) at the current row.
    pub fn fluctuation(&self) -> &[f64] {
        &self.w
    }
}

struct Scratch {
    noise: Vec<f64>,
    s: Vec<f64>,
    tmp: Vec<f64>,
    u: Vec<f64>,
    fft: Vec<Complex64>,
}

impl Scratch {
    fn new(nx: usize) -> Self {
        Self { noise: vec![0.0; nx], s: vec![0.0; nx], tmp: vec![0.0; nx], u: vec![0.0; nx], fft: Vec::new() }
    }
}

fn check_noise<N: NoiseSource + ?Sized>(plan: &LatticePlan, noise: &N, rows: usize) -> Result<()> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    if noise.nx() != plan.nx() || !close(noise.dt(), plan.dt()) || !close(noise.dx(), plan.dx()) {
        return Err(Error::GridMismatch(format!(
            "noise {}x(dt {}, dx {}) does not match lattice nx {} (dt {}, dx {})",
            noise.nx(),
            noise.dt(),
            noise.dx(),
            plan.nx(),
            plan.dt(),
            plan.dx()
        )));
    }
    if let Some(avail) = noise.rows() {
        if avail < rows {
            return Err(Error::OffsetOutOfRange { offset: rows, nt: avail });
        }
    }
    Ok(())
}

impl LatticePlan {
    pub fn initial_state(&self) -> EvolveState {
        EvolveState::new(self.nx())
    }

    /// One row: s = σ(ℓ_n + w_arg)·ΔW, v ← P*v + G_b*s, w ← P*v + G*s.
    fn step_with(&self, sigma: &SigmaSpec, n: usize, w_arg: &[f64], v: &mut [f64], w: &mut [f64], sc: &mut Scratch) {
        let level = self.level_row(n);
        for j in 0..self.nx() {
            sc.s[j] = sigma.eval(level[j] + w_arg[j]) * sc.noise[j];
        }
        sc.tmp.iter_mut().for_each(|t| *t = 0.0);
        self.propagator().apply_add(v, &mut sc.tmp);
        v.copy_from_slice(&sc.tmp);
        w.copy_from_slice(&sc.tmp);
        self.noise_kernels().apply_add(&sc.s, v, w, &mut sc.fft);
    }

    /// Advances `state` by `steps` rows, reading rows 0..steps of `noise`
    /// and calling `observer(n, u_row)` with the field at t_{n+1}.
    pub fn advance<N, F>(&self, sigma: &SigmaSpec, noise: &N, state: &mut EvolveState, steps: usize, mut observer: F) -> Result<()>
    where
        N: NoiseSource + ?Sized,
        F: FnMut(usize, &[f64]),
    {
        check_noise(self, noise, steps)?;
        if state.step + steps > self.nt() {
            return Err(Error::OffsetOutOfRange { offset: state.step + steps, nt: self.nt() });
        }
        let mut sc = Scratch::new(self.nx());
        let mut w_arg = vec![0.0; self.nx()];
        for r in 0..steps {
            let n = state.step;
            noise.fill_row(r, &mut sc.noise);
            w_arg.copy_from_slice(&state.w);
            self.step_with(sigma, n, &w_arg, &mut state.v, &mut state.w, &mut sc);
            for ((u, d), w) in sc.u.iter_mut().zip(self.det_row(n)).zip(&state.w) {
                *u = d + w;
            }
            state.step += 1;
            observer(n, &sc.u);
        }
        Ok(())
    }

    /// Time-stepped field over the whole lattice.
    pub fn evolve<N: NoiseSource + ?Sized>(&self, sigma: &SigmaSpec, noise: &N, seed: u64) -> Result<FieldLattice> {
        let mut state = self.initial_state();
        self.evolve_from(sigma, noise, seed, &mut state)
    }

    /// Continues `state` to the end of the lattice; `noise` row 0 drives the
    /// state's next step.
    pub fn evolve_from<N: NoiseSource + ?Sized>(
        &self,
        sigma: &SigmaSpec,
        noise: &N,
        seed: u64,
        state: &mut EvolveState,
    ) -> Result<FieldLattice> {
        let first = state.step;
        let mut values = Vec::with_capacity((self.nt() - first) * self.nx());
        self.advance(sigma, noise, state, self.nt() - first, |_, u| values.extend_from_slice(u))?;
        self.field(values, first, Scheme::TimeStep, seed)
    }

    fn field(&self, values: Vec<f64>, first: usize, scheme: Scheme, seed: u64) -> Result<FieldLattice> {
        let grid = SpaceTimeGrid::new(self.t_nodes()[first..].to_vec(), self.x_nodes().to_vec(), values)?;
        Ok(FieldLattice { grid, scheme, seed, truncation_l: self.grid().half_width })
    }

    /// 𝔗₂ for this kernel and σ.
    pub fn picard_horizon(&self, sigma: &SigmaSpec) -> Result<f64> {
        let theta = self.model().theta()?.value;
        self.model().frak_t(2.0, sigma.lip(), theta)
    }

    /// Picard iterates u⁽⁰⁾, …, u⁽ⁿ⁾ on one noise realization. Iterate k
    /// uses σ(u⁽ᵏ⁻¹⁾) in the same recursion as `evolve`, so for k > nt it
    /// reproduces the time-stepped field exactly.
    pub fn picard_iterates<N: NoiseSource + ?Sized>(
        &self,
        sigma: &SigmaSpec,
        noise: &N,
        seed: u64,
        n: usize,
    ) -> Result<Vec<FieldLattice>> {
        let horizon = self.picard_horizon(sigma)?;
        if self.grid().t_end > horizon * (1.0 + 1e-12) {
            return Err(Error::HorizonExceeded { horizon: self.grid().t_end, limit: horizon });
        }
        self.picard_iterates_unchecked(sigma, noise, seed, n)
    }

    /// `picard_iterates` without the horizon check.
    pub fn picard_iterates_unchecked<N: NoiseSource + ?Sized>(
        &self,
        sigma: &SigmaSpec,
        noise: &N,
        seed: u64,
        n: usize,
    ) -> Result<Vec<FieldLattice>> {
        check_noise(self, noise, self.nt())?;
        let (nt, nx) = (self.nt(), self.nx());
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.field(vec![0.0; nt * nx], 0, Scheme::Picard { n: 0 }, seed)?);
        // noise-driven part of the previous iterate, one row per output time
        let mut prev = vec![0.0; nt * nx];
        let mut next = vec![0.0; nt * nx];
        let mut sc = Scratch::new(nx);
        let zeros = vec![0.0; nx];
        let mut v = vec![0.0; nx];
        let mut w = vec![0.0; nx];
        for k in 1..=n {
            v.iter_mut().for_each(|a| *a = 0.0);
            if k == 1 {
                // σ(u⁽⁰⁾) = σ(0) = 0
                next.iter_mut().for_each(|a| *a = 0.0);
                std::mem::swap(&mut prev, &mut next);
                out.push(self.field(self.det_field(), 0, Scheme::Picard { n: 1 }, seed)?);
                continue;
            }
            for i in 0..nt {
                noise.fill_row(i, &mut sc.noise);
                let arg = if i == 0 { &zeros[..] } else { &prev[(i - 1) * nx..i * nx] };
                self.step_with(sigma, i, arg, &mut v, &mut w, &mut sc);
                next[i * nx..(i + 1) * nx].copy_from_slice(&w);
            }
            std::mem::swap(&mut prev, &mut next);
            let values: Vec<f64> = prev.iter().zip(&self.det_field()).map(|(w, d)| w + d).collect();
            out.push(self.field(values, 0, Scheme::Picard { n: k }, seed)?);
        }
        Ok(out)
    }

    /// u⁽ⁿ⁾ on the lattice.
    pub fn picard_iterate<N: NoiseSource + ?Sized>(&self, sigma: &SigmaSpec, noise: &N, seed: u64, n: usize) -> Result<FieldLattice> {
        Ok(self.picard_iterates(sigma, noise, seed, n)?.pop().expect("iterate 0 is always present"))
    }

    fn det_field(&self) -> Vec<f64> {
        (0..self.nt()).flat_map(|n| self.det_row(n).iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelModel;
    use crate::measure::FiniteMeasure;
    use crate::noise::{NoiseLattice, NoiseStream};
    use crate::solver::plan::GridSpec;

    fn setup(t_end: f64, nx: usize, nt: usize, half: f64) -> LatticePlan {
        let model = KernelModel::brownian(1.0).unwrap();
        let grid = GridSpec::with_counts(nx, nt, half, t_end).unwrap();
        LatticePlan::new(&model, &FiniteMeasure::delta0(), &grid).unwrap()
    }

    #[test]
    fn zero_sigma_gives_heat_term() {
        let plan = setup(0.25, 64, 32, 4.0);
        let noise = NoiseStream::new(plan.dt(), plan.dx(), plan.nx(), 3).unwrap();
        let f = plan.evolve(&SigmaSpec::linear(0.0), &noise, 3).unwrap();
        for n in 0..plan.nt() {
            assert_eq!(f.grid.row(n), plan.det_row(n));
        }
    }

    #[test]
    fn restart_matches_straight_run() {
        let plan = setup(0.25, 64, 32, 4.0);
        let sigma = SigmaSpec::linear(1.0);
        let noise = NoiseLattice::generate(plan.dt(), plan.dx(), plan.nt(), plan.nx(), 11, 0, usize::MAX).unwrap();
        let whole = plan.evolve(&sigma, &noise, 11).unwrap();
        let mut state = plan.initial_state();
        let mut head = Vec::new();
        plan.advance(&sigma, &noise, &mut state, 13, |_, u| head.extend_from_slice(u)).unwrap();
        let tail = plan.evolve_from(&sigma, &noise.shifted(13).unwrap(), 11, &mut state).unwrap();
        head.extend_from_slice(&tail.grid.values);
        assert_eq!(head, whole.grid.values);
    }

    #[test]
    fn picard_reaches_time_stepping() {
        let plan = setup(0.05, 32, 8, 2.0);
        let sigma = SigmaSpec::linear(1.0);
        let noise = NoiseStream::new(plan.dt(), plan.dx(), plan.nx(), 5).unwrap();
        let it = plan.picard_iterates_unchecked(&sigma, &noise, 5, 10).unwrap();
        assert_eq!(it[10].grid.values, it[9].grid.values);
        assert!(it[0].grid.values.iter().all(|&v| v == 0.0));
        for n in 0..plan.nt() {
            assert_eq!(it[1].grid.row(n), plan.det_row(n));
        }
        let ts = plan.evolve(&sigma, &noise, 5).unwrap();
        assert_ne!(it[8].grid.values, ts.grid.values);
        assert_eq!(it[9].grid.values, ts.grid.values);
        assert!(matches!(plan.picard_iterate(&sigma, &noise, 5, 2), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn pam_is_linear_in_mass() {
        let model = KernelModel::brownian(1.0).unwrap();
        let grid = GridSpec::with_counts(64, 32, 4.0, 0.25).unwrap();
        let one = LatticePlan::new(&model, &FiniteMeasure::delta0(), &grid).unwrap();
        let two = LatticePlan::new(&model, &FiniteMeasure::dirac(0.0, 2.0).unwrap(), &grid).unwrap();
        let noise = NoiseStream::new(one.dt(), one.dx(), one.nx(), 9).unwrap();
        let sigma = SigmaSpec::linear(1.3);
        let a = one.evolve(&sigma, &noise, 9).unwrap();
        let b = two.evolve(&sigma, &noise, 9).unwrap();
        for (x, y) in a.grid.values.iter().zip(&b.grid.values) {
            assert_eq!(2.0 * x, *y);
        }
    }
}
