use levyheat::conv::{check_lemma_pp, st_convolve};
use levyheat::grid::SpaceTimeGrid;
use levyheat::noise::{sample_noise, shift_noise};
use levyheat::solver::{GridSpec, LatticePlan, SigmaKind, SigmaSpec};
use levyheat::{FiniteMeasure, KernelModel, NoiseStream};
use proptest::prelude::*;

fn grid(values: &[f64]) -> SpaceTimeGrid {
    let t: Vec<f64> = (1..=4).map(|i| 0.25 * i as f64).collect();
    let x: Vec<f64> = (-4..=4).map(|j| 0.5 * j as f64).collect();
    SpaceTimeGrid::new(t, x, values.to_vec()).unwrap()
}

fn field() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..2.0f64, 36)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_is_bilinear(f in field(), g in field(), h in field(), a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let mix: Vec<f64> = g.iter().zip(&h).map(|(u, v)| a * u + b * v).collect();
        let lhs = st_convolve(&grid(&f), &grid(&mix)).unwrap();
        let fg = st_convolve(&grid(&f), &grid(&g)).unwrap();
        let fh = st_convolve(&grid(&f), &grid(&h)).unwrap();
        for ((l, u), v) in lhs.values.iter().zip(&fg.values).zip(&fh.values) {
            prop_assert!(close(*l, a * u + b * v));
        }
    }

    #[test]
    fn convolution_is_monotone(f in field(), g in field(), bump in field()) {
        let bigger: Vec<f64> = g.iter().zip(&bump).map(|(u, v)| u + v).collect();
        let lo = st_convolve(&grid(&f), &grid(&g)).unwrap();
        let hi = st_convolve(&grid(&f), &grid(&bigger)).unwrap();
        for (l, h) in lo.values.iter().zip(&hi.values) {
            prop_assert!(*l <= *h + 1e-12);
        }
    }

    #[test]
    fn stable_triples_are_ordered(alpha in 1.1..2.0f64, log_t in -3.0..1.0f64) {
        let p = check_lemma_pp(&KernelModel::stable(alpha, 1.0).unwrap(), 10f64.powf(log_t)).unwrap();
        prop_assert!(p.lower < p.mid && p.mid < p.upper, "{p:?}");
    }

    #[test]
    fn heat_term_is_linear_in_mass(m in 0.1..5.0f64, y in -1.0..1.0f64, t in 0.01..2.0f64, x in -3.0..3.0f64) {
        let k = KernelModel::stable(1.6, 1.0).unwrap();
        let unit = FiniteMeasure::dirac(y, 1.0).unwrap();
        let scaled = unit.scaled(m).unwrap();
        prop_assert!(close(scaled.heat_convolve(&k, t, x).unwrap(), m * unit.heat_convolve(&k, t, x).unwrap()));
    }

    #[test]
    fn sigma_vanishes_at_zero_and_is_lipschitz(lambda in -3.0..3.0f64, cap in 0.1..4.0f64, u in -10.0..10.0f64, v in -10.0..10.0f64) {
        for kind in [SigmaKind::Linear { lambda }, SigmaKind::SaturatingLinear { lambda, cap }] {
            let s = SigmaSpec::new(kind).unwrap();
            prop_assert_eq!(s.eval(0.0), 0.0);
            prop_assert!((s.eval(u) - s.eval(v)).abs() <= s.lip() * (u - v).abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn noise_is_addressable_by_offset(seed in any::<u32>(), offset in 0usize..6) {
        let full = sample_noise(0.01, 0.1, 8, 5, seed as u64).unwrap();
        let shifted = shift_noise(&full, offset).unwrap();
        for i in 0..8 - offset {
            prop_assert_eq!(shifted.row(i), full.row(i + offset));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pam_field_is_linear_in_initial_mass(seed in any::<u32>(), m in 0.5..4.0f64) {
        let k = KernelModel::brownian(1.0).unwrap();
        let grid = GridSpec::with_counts(64, 32, 6.0, 0.5).unwrap();
        let unit = FiniteMeasure::delta0();
        let plan_a = LatticePlan::new(&k, &unit, &grid).unwrap();
        let plan_b = LatticePlan::new(&k, &unit.scaled(m).unwrap(), &grid).unwrap();
        let noise = NoiseStream::new(plan_a.dt(), plan_a.dx(), plan_a.nx(), seed as u64).unwrap();
        let sigma = SigmaSpec::linear(1.0);
        let a = plan_a.evolve(&sigma, &noise, seed as u64).unwrap();
        let b = plan_b.evolve(&sigma, &noise, seed as u64).unwrap();
        for (u, v) in a.grid.values.iter().zip(&b.grid.values) {
            prop_assert!((m * u - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }
}
