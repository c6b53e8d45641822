//! Cross-module invariants checked on randomized inputs.

use asclt_lab::asmeasure::{build_log_measure, LogAvgMeasure, Representation as MeasureRep};
use asclt_lab::inducing::{induce_step, InducedSystem, ReturnSet};
use asclt_lab::lab::{config_hash, ExperimentConfig};
use asclt_lab::laws::{ks_distance, TargetLaw, WeightedAtom};
use asclt_lab::martingale::{gordin_decompose, Representation};
use asclt_lab::orbits::{run_orbit, run_orbit_from, CheckpointGrid};
use asclt_lab::renorm::{solve_bn, RenormSeq, SlowVar};
use asclt_lab::rng::replica_rng;
use asclt_lab::spectral::EigenCurve;
use asclt_lab::systems::{Alphabet, Observable, System};
use proptest::prelude::*;

fn trajectory(obs: &Observable, n: u64, seed: u64) -> Vec<f64> {
    let grid = CheckpointGrid::explicit(vec![n]).unwrap();
    run_orbit(&System::doubling(), obs, n, replica_rng(seed, 0), &grid, true)
        .unwrap()
        .trajectory
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bn_solves_its_defining_relation(p in 1.05f64..2.0, e in -1.0f64..1.0, n in 1u64..1_000_000_000) {
        let slow = SlowVar::LogPower { exponent: e };
        let b = solve_bn(p, &slow, n).unwrap();
        let residual = n as f64 * slow.eval(b) / b.powf(p) - 1.0;
        prop_assert!(residual.abs() <= 1e-10, "residual {residual}");
    }

    #[test]
    fn zero_observable_measure_is_dirac(n in 1u64..5000, seed in 0u64..1000) {
        let s = trajectory(&Observable::constant(0.0), n, seed);
        let m = build_log_measure(s, &RenormSeq::sqrt(), n, 20.0).unwrap();
        prop_assert_eq!(m.ks_to(&TargetLaw::Dirac0).unwrap(), 0.0);
    }

    #[test]
    fn extension_equals_direct_build(n in 1u64..3000, extra in 1u64..3000, seed in 0u64..1000) {
        let s = trajectory(&Observable::cosine(1), n + extra, seed);
        let seq = RenormSeq::sqrt();
        let mut grown = build_log_measure(s.iter().copied(), &seq, n, 20.0).unwrap();
        for k in n + 1..=n + extra {
            grown.push(s[k as usize - 1] / seq.eval(k));
        }
        let direct = build_log_measure(s.iter().copied(), &seq, n + extra, 20.0).unwrap();
        match (grown.representation(), direct.representation()) {
            (MeasureRep::ExactAtoms(a), MeasureRep::ExactAtoms(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "expected exact atoms"),
        }
        prop_assert_eq!(grown.normalizer(), direct.normalizer());
    }

    #[test]
    fn measure_moments_are_finite(n in 1u64..3000, seed in 0u64..1000) {
        let mut m = LogAvgMeasure::new(20.0);
        let seq = RenormSeq::sqrt();
        for (k, s) in trajectory(&Observable::cosine(1), n, seed).into_iter().enumerate() {
            m.push(s / seq.eval(k as u64 + 1));
        }
        let (mean, var) = m.moments();
        prop_assert!(mean.is_finite() && var.is_finite() && var >= 0.0);
        prop_assert!((m.total_weight() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ks_is_a_probability_gap(values in prop::collection::vec(-5.0f64..5.0, 1..200), sigma2 in 0.1f64..4.0) {
        let w = 1.0 / values.len() as f64;
        let atoms: Vec<_> = values.iter().map(|&value| WeightedAtom { value, weight: w }).collect();
        let d = ks_distance(&atoms, &TargetLaw::Gaussian { sigma2 }).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d >= 0.5 * w - 1e-12);
    }

    #[test]
    fn induced_orbit_tracks_base_orbit(seed in 0u64..1000, depth in 1u32..3, code in 0u64..4, steps in 1usize..300) {
        let y = ReturnSet::cylinders(depth, vec![code % (1 << depth)]).unwrap();
        let ind = InducedSystem::new(System::doubling(), y).unwrap();
        let f = Observable::fourier(vec![(1, 1.0), (3, -0.5)]);
        let mut point = ind.sample_in_y(replica_rng(seed, 0), seed, 0).unwrap();
        let mut base = point.clone();
        let (mut t, mut fy) = (0u64, 0.0);
        for _ in 0..steps {
            let e = induce_step(&ind, &f, &mut point).unwrap();
            t += e.phi;
            fy += e.f_y;
        }
        let grid = CheckpointGrid::explicit(vec![t]).unwrap();
        let mut visits = 0usize;
        let stats = run_orbit_from(&ind.base, &f, &mut base, t, &grid, |_, _, p| {
            visits += usize::from(ind.y.contains(&ind.base, p).unwrap());
        });
        prop_assert_eq!(visits, steps);
        prop_assert!((stats.sum() - fy).abs() <= 1e-9 * t as f64);
        prop_assert_eq!(ind.base.coordinate(&base), ind.base.coordinate(&point));
    }

    #[test]
    fn fourier_decomposition_is_exact(coeffs in prop::collection::vec(-2.0f64..2.0, 1..8), seed in 0u64..100) {
        let terms: Vec<(u32, f64)> = coeffs.iter().enumerate().map(|(i, &a)| (i as u32 + 1, a)).collect();
        let d = gordin_decompose(&System::doubling(), &Observable::fourier(terms), 200, Representation::FourierExact).unwrap();
        prop_assert!(d.identity_residual(2000, seed) <= 1e-12);
        prop_assert!(d.transfer_of_h_sup() <= 1e-10);
    }

    #[test]
    fn eigenvalue_is_hermitian_and_bounded(t in 0.01f64..3.0, p in 0.1f64..0.9) {
        let coin = System::bernoulli(Alphabet::Finite { probs: vec![p, 1.0 - p] }, 0.5).unwrap();
        let f = Observable::locally_constant(vec![-(1.0 - p), p]);
        let curve = EigenCurve::compute(&coin, &f, &[-t, t], 64).unwrap();
        let (neg, pos) = (curve.lambda_at(-t).unwrap(), curve.lambda_at(t).unwrap());
        prop_assert!((neg - pos.conj()).norm() <= 1e-12);
        prop_assert!(pos.norm() <= 1.0 + 1e-6);
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), n in 1u64..1_000_000, replicas in 1usize..100_000) {
        let text = format!(
            "name = \"p\"\nseed = {seed}\nsystem = {{ type = \"Doubling\" }}\n\
             observable = {{ kind = \"FourierSum\", terms = [[1, 1.0]] }}\n\
             law = {{ source = \"Explicit\", law = {{ type = \"Gaussian\", sigma2 = 0.5 }} }}\n\
             [experiment]\nkind = \"ClassicalCLT\"\nparams = {{ n = {n}, replicas = {replicas} }}\n"
        );
        let c = ExperimentConfig::from_toml(&text).unwrap();
        let once = c.to_toml().unwrap();
        let twice = ExperimentConfig::from_toml(&once).unwrap().to_toml().unwrap();
        prop_assert_eq!(config_hash(&once), config_hash(&twice));
        prop_assert_eq!(c.seed, seed);
    }
}
