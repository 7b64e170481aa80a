use gibbslab::ding::{ding_functional, j_functional, DingGrid, HermitianMetricMatrix};
use gibbslab::flows::{act_on_section, flow_matrix, LiftedFlow, VectorFieldSL2};
use gibbslab::geometry::*;
use gibbslab::pair::*;
use gibbslab::par::Execution;
use gibbslab::sampler::detailed_balance_defect;
use gibbslab::sections::*;
use gibbslab::stability::*;
use nalgebra::DMatrix;
use num_rational::Rational64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config(n: usize, rng: &mut ChaCha8Rng) -> Configuration {
    Configuration::new((0..n).map(|_| random_point(rng)).collect())
}

fn rational() -> impl Strategy<Value = Rational64> {
    (-50i64..50, 1i64..40).prop_map(|(p, q)| Rational64::new(p, q))
}

fn weighted_pair(ws: &[Rational64], rng: &mut ChaCha8Rng) -> LogPairCurve {
    loop {
        let pts: Vec<SpherePoint> = ws.iter().map(|_| random_point(rng)).collect();
        if let Ok(p) = LogPairCurve::genus0(pts, ws.to_vec()) {
            return p;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rational_text_round_trip(r in rational()) {
        prop_assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
    }

    #[test]
    fn point_text_round_trip(seed in any::<u64>()) {
        let p = random_point(&mut rng(seed));
        let q = parse_point(&format_point(&p)).unwrap();
        prop_assert!(p.chordal(&q) < 1e-11);
    }

    #[test]
    fn chart_covariance(seed in any::<u64>()) {
        // the degree 2 reference density transforms as an area form
        let p = random_point(&mut rng(seed));
        let metric = ReferenceMetric::new(2);
        if let (Some(a), Some(b), Some(j)) = (
            metric.log_density_in(&p, Chart::Zero),
            metric.log_density_in(&p, Chart::One),
            chart_log_jacobian(&p, Chart::Zero, Chart::One),
        ) {
            prop_assert!((b - (a + j)).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn mobius_action_axioms(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (g, h, x) = (random_unimodular(&mut r, 0.5), random_unimodular(&mut r, 0.5), random_point(&mut r));
        let id = mobius_apply(&Mat2::identity(), &x).unwrap();
        prop_assert!(id.chordal(&x) < 1e-12);
        let gh = mobius_apply(&(g * h), &x).unwrap();
        let g_h = mobius_apply(&g, &mobius_apply(&h, &x).unwrap()).unwrap();
        prop_assert!(gh.chordal(&g_h) < 1e-10);
    }

    #[test]
    fn chordal_is_a_unitary_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (x, y, u) = (random_point(&mut r), random_point(&mut r), random_su2(&mut r));
        let d = x.chordal(&y);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&d));
        prop_assert!((d - y.chordal(&x)).abs() < 1e-15);
        let (ux, uy) = (mobius_apply(&u, &x).unwrap(), mobius_apply(&u, &y).unwrap());
        prop_assert!((ux.chordal(&uy) - d).abs() < 1e-12);
    }

    #[test]
    fn slater_antisymmetry(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let space = SectionSpace::of_degree(n - 1);
        let cfg = config(n, &mut r);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(0, n - 1);
        let a = slater_det(&space, &cfg).unwrap();
        let b = slater_det(&space, &cfg.permuted(&perm)).unwrap();
        prop_assert!((a + b).norm() < 1e-10 * (1.0 + a.norm()));
        let la = slater_log_lu(&space, &cfg).unwrap().ln();
        let lb = slater_log_lu(&space, &cfg.permuted(&perm)).unwrap().ln();
        prop_assert!((la - lb).abs() < 1e-10 * (1.0 + la.abs()));
    }

    #[test]
    fn slater_vanishes_on_collisions(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let space = SectionSpace::of_degree(n - 1);
        let mut cfg = config(n, &mut r);
        cfg.points[1] = cfg.points[0];
        prop_assert!(slater_log_lu(&space, &cfg).unwrap().is_zero);
    }

    #[test]
    fn diagonal_equivariance(seed in any::<u64>(), k in 1u32..4) {
        let mut r = rng(seed);
        let space = SectionSpace::anticanonical(k);
        let g = random_unimodular(&mut r, 0.5);
        let cfg = config(space.dimension(), &mut r);
        prop_assert!(diagonal_equivariance_residual(&space, &g, &cfg).unwrap() < 1e-8);
    }

    #[test]
    fn lct_is_reciprocal_of_largest_coefficient(a in rational(), b in rational()) {
        let d = CurveDivisor::new(vec![(SpherePoint::zero(), a), (SpherePoint::infinity(), b)]).unwrap();
        let m = a.max(b);
        let expect = if m > Rational64::from_integer(0) { Lct::Finite(m.recip()) } else { Lct::Infinite };
        prop_assert_eq!(lct_curve_divisor(&d).unwrap(), expect);
    }

    #[test]
    fn maximal_cluster_threshold_identity(a in 1i64..10, b in 1i64..10, cc in 1i64..10, k in 1i64..30) {
        let sum = Rational64::new(a + b + cc, 10);
        let slack = Rational64::from_integer(2) - sum;
        prop_assume!(slack > Rational64::from_integer(0));
        let deg = slack * k;
        prop_assume!(deg.is_integer());
        let n = deg.to_integer() + 1;
        prop_assert_eq!(Rational64::from_integer(1) - Rational64::new(n - 1, 2 * k), sum / 2);
    }

    #[test]
    fn strata_integrable_iff_positive_exponent(k in 1i64..6, w in 1i64..10) {
        let ws = vec![Rational64::new(w, 10); 3];
        let kr = Rational64::from_integer(k);
        let pair = weighted_pair(&ws, &mut rng(k as u64));
        prop_assume!(pair.bundle_degree(kr).is_ok());
        let params = DeformedDensityParams::new(pair, kr, Rational64::from_integer(1)).unwrap();
        for (_, e) in one_cluster_strata(&params) {
            prop_assert_eq!(e.integrable, e.exponent > Rational64::from_integer(0));
        }
    }

    #[test]
    fn log_density_is_exchangeable(seed in any::<u64>(), k in 1u32..4) {
        let mut r = rng(seed);
        let params = DeformedDensityParams::new(LogPairCurve::bare(), Rational64::from_integer(k as i64), Rational64::new(1, 2)).unwrap();
        let n = params.n();
        let cfg = config(n, &mut r);
        let perm: Vec<usize> = (0..n).rev().collect();
        let a = deformed_log_density(&params, &cfg).unwrap().value();
        let b = deformed_log_density(&params, &cfg.permuted(&perm)).unwrap().value();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn detailed_balance_is_exact(seed in any::<u64>(), i in 0usize..3) {
        let mut r = rng(seed);
        let pair = weighted_pair(&[Rational64::new(1, 2); 3], &mut r);
        let params = DeformedDensityParams::new(pair, Rational64::from_integer(4), Rational64::from_integer(1)).unwrap();
        let x = config(params.n(), &mut r);
        let y = random_point(&mut r);
        prop_assert!(detailed_balance_defect(&params, &x, i, &y).unwrap().abs() < 1e-9);
    }

    #[test]
    fn field_chart_round_trip(p in prop::array::uniform6(-3.0f64..3.0)) {
        let poly = [c(p[0], p[1]), c(p[2], p[3]), c(p[4], p[5])];
        let v = VectorFieldSL2::from_chart(poly);
        prop_assert!(v.matrix().trace().norm() < 1e-12);
        let back = v.chart_polynomial();
        for (a, b) in poly.iter().zip(back) {
            prop_assert!((a - b).norm() < 1e-12);
        }
        let w = VectorFieldSL2::new(v.matrix()).unwrap();
        prop_assert!((w.matrix() - v.matrix()).norm() < 1e-12);
    }

    #[test]
    fn flow_group_law_and_section_representation(p in prop::array::uniform6(-1.0f64..1.0), t in -1.0f64..1.0, s in -1.0f64..1.0, d in 1usize..5) {
        let v = VectorFieldSL2::from_chart([c(p[0], p[1]), c(p[2], p[3]), c(p[4], p[5])]);
        let (tc, sc) = (c(t, 0.3 * s), c(s, -0.2 * t));
        let lhs = flow_matrix(&v, tc + sc);
        prop_assert!((lhs - flow_matrix(&v, tc) * flow_matrix(&v, sc)).norm() < 1e-10 * (1.0 + lhs.norm()));
        let f = LiftedFlow::new(v, d);
        let sec = BinaryForm::new((0..=d).map(|j| c(j as f64 - 1.0, 0.5)).collect());
        let both = act_on_section(&f, tc + sc, &sec).unwrap();
        let seq = act_on_section(&f, sc, &act_on_section(&f, tc, &sec).unwrap()).unwrap();
        for (a, b) in both.coeffs.iter().zip(&seq.coeffs) {
            prop_assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ding_gauge_invariance(seed in any::<u64>(), shift in -4.0f64..4.0, gamma in 0.1f64..1.0) {
        let mut r = rng(seed);
        let space = SectionSpace::anticanonical(1);
        let grid = DingGrid::new(&space, 12).unwrap();
        let a = DMatrix::from_fn(3, 3, |_, _| c(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)));
        let h = HermitianMetricMatrix::new(&a * a.adjoint() + DMatrix::identity(3, 3) * c(0.1, 0.0)).unwrap();
        let d = ding_functional(&h, gamma, &space, &grid, Execution::Sequential).unwrap();
        let ds = ding_functional(&h.scaled(shift), gamma, &space, &grid, Execution::Sequential).unwrap();
        prop_assert!((d - ds).abs() < 1e-9);
        let j = j_functional(&h, &space, &grid).unwrap();
        let js = j_functional(&h.scaled(shift), &space, &grid).unwrap();
        prop_assert!((j - js).abs() < 1e-9);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise(seed in 0u64..1000) {
        let params = DeformedDensityParams::new(
            weighted_pair(&[Rational64::new(1, 2); 3], &mut rng(seed ^ 0x9e37_79b9)),
            Rational64::from_integer(2),
            Rational64::from_integer(1),
        )
        .unwrap();
        let method = PartitionMethod::ImportanceMC { budget: 12_000, seed, proposal: Proposal::Defensive };
        let a = partition_estimate(&params, method, Execution::Sequential).unwrap();
        let b = partition_estimate(&params, method, Execution::Parallel).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
