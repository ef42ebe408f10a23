use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::montecarlo::{replicate, sample_stats};
use super::plan::{GridSpec, LatticePlan};
use super::sigma::SigmaSpec;
use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::measure::FiniteMeasure;
use crate::noise::NoiseStream;

/// Weighted L² distance between u and the solution started from p_ε*u₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub eps: f64,
    /// ∫₀ᵀ e^{−βt} ∫ E|u_t − U_t^ε|² dx dt.
    pub distance: f64,
    pub std_error: f64,
    /// Noise-free share of `distance`, by Plancherel.
    pub deterministic: f64,
    /// Noise-free contribution of (T, ∞), not included in `distance`.
    pub deterministic_tail: f64,
    /// (u₀(ℝ)²/π) ∫ (1 − e^{−εΨ})² / (β + 2Ψ) dξ.
    pub bound: f64,
}

/// (u₀(ℝ)²/π) ∫_ℝ (1 − e^{−εΨ(ξ)})² / (β + 2Ψ(ξ)) dξ.
pub fn stability_bound(model: &KernelModel, u0: &FiniteMeasure, eps: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || eps < 0.0 {
        return Err(Error::InvalidParameter(format!("need beta > 0 and eps >= 0, got {beta}, {eps}")));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    let split = model.psi_inverse(beta).max(model.psi_inverse(1.0 / eps));
    let v = model.xi_integral(split, |xi| {
        let psi = model.psi(xi);
        (-eps * psi).exp_m1().powi(2) / (beta + 2.0 * psi)
    });
    Ok(u0.total_mass().powi(2) * 2.0 * v / PI)
}

/// ∫_a^b e^{−βt} ‖p_t*u₀ − p_{t+ε}*u₀‖²_{L²} dt by Plancherel, with b = ∞
/// allowed.
pub fn deterministic_distance(model: &KernelModel, u0: &FiniteMeasure, eps: f64, beta: f64, a: f64, b: f64) -> Result<f64> {
    if !(beta > 0.0) || eps < 0.0 || !(b >= a) || a < 0.0 {
        return Err(Error::InvalidParameter(format!("bad arguments eps {eps}, beta {beta}, [{a}, {b}]")));
    }
    let split = model.psi_inverse(beta).max(model.psi_inverse(1.0 / eps.max(1e-300)));
    let v = model.xi_integral(split, |xi| {
        let psi = model.psi(xi);
        let rate = beta + 2.0 * psi;
        let window = (-rate * a).exp() - if b.is_finite() { (-rate * b).exp() } else { 0.0 };
        u0.fourier(xi).norm_sqr() * (-eps * psi).exp_m1().powi(2) * window / rate
    });
    // even integrand over ℝ with the 1/(2π) of Plancherel
    Ok(v / PI)
}

/// Coupled-noise comparison of u with U^ε for each ε, on `grid` up to
/// T = grid.t_end. β must satisfy Lip²·Υ(β) ≤ 1/2 so the bound applies.
pub fn stability_compare(
    model: &KernelModel,
    u0: &FiniteMeasure,
    sigma: &SigmaSpec,
    grid: &GridSpec,
    eps_list: &[f64],
    beta: f64,
    seeds: &[u64],
) -> Result<Vec<StabilityPoint>> {
    if eps_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter("eps values must be positive".into()));
    }
    let ups = model.upsilon(beta)?;
    if sigma.lip().powi(2) * ups > 0.5 {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} gives Lip²Υ(β) = {:.4} > 1/2",
            sigma.lip().powi(2) * ups
        )));
    }
    let base = LatticePlan::new(model, u0, grid)?;
    let shifted: Vec<LatticePlan> = eps_list
        .iter()
        .map(|&e| LatticePlan::with_time_shift(model, u0, grid, e))
        .collect::<Result<_>>()?;
    let (nt, nx, dt, dx) = (base.nt(), base.nx(), base.dt(), base.dx());
    let weights: Vec<f64> = base.t_nodes().iter().map(|t| (-beta * t).exp() * dt * dx).collect();
    let samples = replicate(seeds, |seed| {
        let noise = NoiseStream::new(dt, dx, nx, seed)?;
        let mut w0 = Vec::with_capacity(nt * nx);
        let mut state = base.initial_state();
        base.advance(sigma, &noise, &mut state, nt, |n, u| w0.extend(u.iter().zip(base.det_row(n)).map(|(a, d)| a - d)))?;
        let mut out = Vec::with_capacity(shifted.len());
        for plan in &shifted {
            let mut state = plan.initial_state();
            let mut acc = 0.0;
            plan.advance(sigma, &noise, &mut state, nt, |n, u| {
                let row = &w0[n * nx..(n + 1) * nx];
                let s: f64 = u.iter().zip(plan.det_row(n)).zip(row).map(|((a, d), w)| (a - d - w).powi(2)).sum();
                acc += weights[n] * s;
            })?;
            out.push(acc);
        }
        Ok(out)
    })?;
    let t_end = grid.t_end;
    eps_list
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            let st = sample_stats(&col);
            let det = deterministic_distance(model, u0, eps, beta, 0.0, t_end)?;
            Ok(StabilityPoint {
                eps,
                distance: det + st.mean,
                std_error: st.std_error,
                deterministic: det,
                deterministic_tail: deterministic_distance(model, u0, eps, beta, t_end, f64::INFINITY)?,
                bound: stability_bound(model, u0, eps, beta)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;

    #[test]
    fn bound_vanishes_at_zero_eps() {
        let m = KernelModel::brownian(1.0).unwrap();
        assert_eq!(stability_bound(&m, &FiniteMeasure::delta0(), 0.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn plancherel_matches_direct_integration() {
        // Brownian δ₀: ‖p_t − p_{t+ε}‖² = 1/√(4πt) + 1/√(4π(t+ε)) − 2/√(2π(2t+ε))
        let m = KernelModel::brownian(1.0).unwrap();
        let (eps, beta) = (0.1, 4.0);
        let f = |t: f64| {
            (-beta * t).exp()
                * (1.0 / (4.0 * PI * t).sqrt() + 1.0 / (4.0 * PI * (t + eps)).sqrt() - 2.0 / (2.0 * PI * (2.0 * t + eps)).sqrt())
        };
        let direct = quadrature::singular_start(2.0, 2.0, 32, 16, f);
        let fourier = deterministic_distance(&m, &FiniteMeasure::delta0(), eps, beta, 0.0, 2.0).unwrap();
        assert!((direct - fourier).abs() < 1e-4 * direct, "{direct} vs {fourier}");
    }

    #[test]
    fn noiseless_distance_is_deterministic_part() {
        let m = KernelModel::brownian(1.0).unwrap();
        let grid = GridSpec::with_counts(64, 32, 8.0, 1.0).unwrap();
        let pts = stability_compare(&m, &FiniteMeasure::delta0(), &SigmaSpec::linear(0.0), &grid, &[0.1], 4.0, &[1, 2]).unwrap();
        assert_eq!(pts[0].distance, pts[0].deterministic);
        assert!(pts[0].distance + pts[0].deterministic_tail <= pts[0].bound);
    }
}
