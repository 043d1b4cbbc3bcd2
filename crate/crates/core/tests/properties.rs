use ecl_core::acquisition::ecl_f64;
use ecl_core::gp::{Dataset, GpModel, KernelFamily, KernelSpec};
use ecl_core::mfis::mfis_estimate;
use ecl_core::rng::substream;
use ecl_core::sampling::{lhs, mc_failure, InputDistribution, Marginal};
use ecl_core::{Bounds, LimitState, Matrix64};
use proptest::prelude::*;

fn model_on(points: &[(f64, f64)], lengthscale: f64) -> GpModel<f64> {
    let x = Matrix64::from_vec(points.len(), 2, points.iter().flat_map(|&(a, b)| [a, b]).collect());
    let y: Vec<f64> = points.iter().map(|&(a, b)| (4.0 * a).sin() + b * b).collect();
    let ds = Dataset::new(x, y, Bounds::unit(2)).unwrap();
    let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![lengthscale; 2], 1.0).unwrap();
    GpModel::with_kernel(&ds, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ecl_bounded_and_symmetric(m in -50.0f64..50.0, sd in 1e-6f64..20.0, t in -10.0f64..10.0) {
        let v = ecl_f64(m, sd, t);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&v));
        let mirrored = ecl_f64(2.0 * t - m, sd, t);
        prop_assert!((v - mirrored).abs() <= 1e-12);
    }

    #[test]
    fn unit_mapping_roundtrips(lo in -100.0f64..100.0, w in 0.01f64..50.0, u in 0.0f64..=1.0) {
        let b = Bounds::new(vec![lo, lo - 1.0], vec![lo + w, lo + 2.0 * w]).unwrap();
        let x = b.from_unit(&[u, 1.0 - u]);
        prop_assert!(b.contains(&x));
        let back = b.to_unit(&x);
        prop_assert!((back[0] - u).abs() < 1e-9 && (back[1] - (1.0 - u)).abs() < 1e-9);
    }

    #[test]
    fn lhs_hits_every_stratum(n in 1usize..60, d in 1usize..6, seed in any::<u64>()) {
        let m = lhs::<f64, _>(n, d, &mut substream(seed, 0, 0));
        for j in 0..d {
            let mut seen = vec![false; n];
            for i in 0..n {
                let k = (m[(i, j)] * n as f64).floor() as usize;
                prop_assert!(k < n && !seen[k]);
                seen[k] = true;
            }
        }
    }

    #[test]
    fn gp_interpolates_and_augmenting_shrinks_variance(
        pts in prop::collection::btree_set((0u32..40, 0u32..40), 4..12),
        q in (0.0f64..1.0, 0.0f64..1.0),
        extra in (0u32..40, 0u32..40),
    ) {
        let pts: Vec<(f64, f64)> = pts.into_iter().map(|(a, b)| (a as f64 / 39.0, b as f64 / 39.0)).collect();
        let m = model_on(&pts, 0.3);
        for &(a, b) in &pts {
            let (mean, sd) = m.predict_point(&[a, b]);
            let truth = (4.0 * a).sin() + b * b;
            prop_assert!((mean - truth).abs() < 1e-3 * (1.0 + truth.abs()));
            prop_assert!(sd >= 0.0);
        }
        let e = (extra.0 as f64 / 39.0 + 0.5 / 39.0, extra.1 as f64 / 39.0 + 0.5 / 39.0);
        let a = m.augment(&[e.0, e.1]).unwrap();
        let (m0, s0) = m.predict_point(&[q.0, q.1]);
        let (m1, s1) = a.predict_point(&[q.0, q.1]);
        prop_assert_eq!(m0.to_bits(), m1.to_bits());
        prop_assert!(s1 <= s0 + 1e-12);
    }

    #[test]
    fn importance_weights_vanish_under_the_nominal(t in -0.5f64..0.9, seed in any::<u64>()) {
        let nominal = InputDistribution::Independent {
            marginals: vec![
                Marginal::truncated_normal(0.2, 0.5, -1.0, 1.0).unwrap(),
                Marginal::uniform(0.0, 2.0).unwrap(),
            ],
        };
        let x = nominal.sample(500, &mut substream(seed, 1, 2)).unwrap();
        let y: Vec<f64> = x.rows().map(|r| r[0] * r[1]).collect();
        let limit = LimitState::above(t);
        let is = mfis_estimate(&y, &x, &nominal, &nominal, &limit).unwrap();
        let mc = mc_failure(&y, &limit, y.len()).unwrap();
        prop_assert_eq!(is.alpha_hat.to_bits(), mc.alpha_hat.to_bits());
    }
}
