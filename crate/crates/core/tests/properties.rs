use knnball::chenstein::{chebyshev_distance, neighborhood, tv_distance, GridRule, GridSpec, Pmf};
use knnball::experiment::ks_gumbel;
use knnball::geometry::{
    ball_box_volume, spherical_cap_volume, union_two_balls_exact, unit_ball_volume, BallUnionQuery,
    BoxVolumeQuery,
};
use knnball::limits::{binomial_tail, centered_max, exceedance_count, ThresholdParams};
use knnball::measures::{sample_points, DensityModel, DensitySpec, SpecKind};
use knnball::nn::kth_nn_radii;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn binomial_tail_is_a_probability(m in 1u64..400, k in 1u64..20, s in 0.0f64..=1.0) {
        prop_assume!(k <= m);
        let p = binomial_tail(m, k, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if k < m {
            // more allowed successes, larger tail
            prop_assert!(binomial_tail(m, k + 1, s).unwrap() >= p - 1e-15);
        }
    }

    #[test]
    fn binomial_tail_full_order(m in 1u64..60, s in 0.0f64..=1.0) {
        let p = binomial_tail(m, m, s).unwrap();
        prop_assert!((p - (1.0 - s.powi(m as i32))).abs() < 1e-12);
    }

    #[test]
    fn centered_max_tracks_threshold(n in 3u64..100_000, t in -2.0f64..2.0, p in 0.0f64..1.0) {
        let params = ThresholdParams::new(n, 1, t);
        prop_assume!(params.is_ok());
        let params = params.unwrap();
        let v = params.threshold();
        prop_assert_eq!(centered_max(&params, p) <= t, p <= v);
    }

    #[test]
    fn chebyshev_is_a_metric(a in prop::collection::vec(1u32..50, 3), b in prop::collection::vec(1u32..50, 3),
                             c in prop::collection::vec(1u32..50, 3)) {
        prop_assert_eq!(chebyshev_distance(&a, &b), chebyshev_distance(&b, &a));
        prop_assert_eq!(chebyshev_distance(&a, &a), 0);
        prop_assert!(chebyshev_distance(&a, &c) <= chebyshev_distance(&a, &b) + chebyshev_distance(&b, &c));
    }

    #[test]
    fn neighborhoods_are_bounded(n in 100u64..100_000, d in 1usize..4, k in 1u32..3, seed in 0u64..1000) {
        let g = GridSpec::new(n, 0.5, d, GridRule::Total).unwrap();
        let m = g.cells_per_axis();
        let j: Vec<u32> = (0..d).map(|a| 1 + ((seed >> (4 * a)) as u32 % m)).collect();
        let s = neighborhood(&g, &j, 2 * k);
        prop_assert!(s.contains(&j));
        prop_assert!(s.len() as u64 <= (4 * k as u64 + 1).pow(d as u32));
        prop_assert!(s.iter().all(|x| chebyshev_distance(x, &j) <= 2 * k && x.iter().all(|&c| c >= 1 && c <= m)));
    }

    #[test]
    fn tv_is_a_bounded_symmetric_distance(a in prop::collection::vec(0.0f64..1.0, 1..8),
                                          b in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let norm = |v: Vec<f64>| {
            let s: f64 = v.iter().sum();
            prop_assume!(s > 1e-6);
            Ok(Pmf::new(v.iter().map(|x| x / s).collect(), 0.0).unwrap())
        };
        let (p, q) = (norm(a)?, norm(b)?);
        let d = tv_distance(&p, &q);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
        prop_assert_eq!(d, tv_distance(&q, &p));
        prop_assert_eq!(tv_distance(&p, &p), 0.0);
    }

    #[test]
    fn ks_is_permutation_invariant(mut xs in prop::collection::vec(-5.0f64..10.0, 1..50), rot in 0usize..50) {
        let before = ks_gumbel(&xs).unwrap();
        let r = rot % xs.len();
        xs.rotate_left(r);
        xs.reverse();
        prop_assert_eq!(before, ks_gumbel(&xs).unwrap());
        prop_assert!((0.0..=1.0).contains(&before));
    }

    #[test]
    fn caps_complement(d in 1usize..8, a in -1.0f64..=1.0) {
        let k = unit_ball_volume(d).unwrap();
        let sum = spherical_cap_volume(d, a).unwrap() + spherical_cap_volume(d, -a).unwrap();
        prop_assert!((sum - k).abs() < 1e-12 * k.max(1.0));
    }

    #[test]
    fn union_grows_with_distance(d in 1usize..6, t1 in 0.0f64..2.5, t2 in 0.0f64..2.5) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let u = |t| union_two_balls_exact(&BallUnionQuery::new(d, 1.0, t).unwrap());
        let k = unit_ball_volume(d).unwrap();
        prop_assert!(u(lo) <= u(hi) + 1e-12);
        prop_assert!(u(lo) >= k - 1e-12 && u(hi) <= 2.0 * k + 1e-12);
    }

    #[test]
    fn ball_box_is_bounded(d in 1usize..5, seed in 0u64..10_000, r in 0.001f64..1.5) {
        let center: Vec<f64> = (0..d).map(|a| ((seed.wrapping_mul(2654435761) >> (8 * a)) % 1000) as f64 / 999.0).collect();
        let v = ball_box_volume(&BoxVolumeQuery::new(center.clone(), r).unwrap());
        let full = unit_ball_volume(d).unwrap() * r.powi(d as i32);
        prop_assert!(v >= 0.0 && v <= full.min(1.0) + 1e-9);
        let wall = center.iter().map(|c| c.min(1.0 - c)).fold(f64::INFINITY, f64::min);
        if r <= wall {
            prop_assert!((v - full).abs() <= 1e-12 * full.max(1e-300));
        }
    }

    #[test]
    fn mu_ball_within_density_bounds(seed in 0u64..10_000, r in 0.01f64..0.8) {
        let spec = DensitySpec { dim: 2, kind: SpecKind::Piecewise, m: Some(2), weights: Some(vec![0.5, 1.5, 1.2, 0.8]) };
        let f = spec.build().unwrap();
        let center = vec![(seed % 97) as f64 / 96.0, (seed / 97 % 101) as f64 / 100.0];
        let mu = f.mu_ball(&center, r);
        let vol = ball_box_volume(&BoxVolumeQuery::new(center.clone(), r).unwrap());
        prop_assert!(f.f_minus() * vol <= mu + 1e-9 && mu <= f.f_plus() * vol + 1e-9);
        let (lo, hi) = f.content_bounds(&center, r);
        prop_assert!(lo <= mu + 1e-9 && mu <= hi + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exceedances_agree_with_maximum(seed in 0u64..1_000_000, t in -1.0f64..1.0, k in 1u64..4) {
        let u = DensityModel::uniform(2).unwrap();
        let s = sample_points(&u, 400, seed).unwrap();
        let r = kth_nn_radii(&s, k as usize).unwrap();
        let p = ThresholdParams::new(400, k, t).unwrap();
        let e = exceedance_count(&u, &s, &r, &p).unwrap();
        prop_assert_eq!(e.count > 0, e.max_content > p.threshold());
        prop_assert!((0.0..=1.0).contains(&e.max_content));
    }
}
