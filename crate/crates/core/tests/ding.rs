use gibbslab::ding::*;
use gibbslab::flows::VectorFieldSL2;
use gibbslab::geometry::{SpherePoint, C64};
use gibbslab::pair::LogPairCurve;
use gibbslab::par::Execution;
use gibbslab::sections::SectionSpace;
use gibbslab::stability::PartitionMethod;
use nalgebra::DMatrix;
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn half_pair() -> LogPairCurve {
    LogPairCurve::genus0(
        vec![
            SpherePoint::zero(),
            SpherePoint::infinity(),
            SpherePoint::from_chart(C64::new(1.0, 0.0)),
        ],
        vec![Rational64::new(1, 2); 3],
    )
    .unwrap()
}

fn half_space(k: i64) -> SectionSpace {
    SectionSpace::new(half_pair(), Rational64::from_integer(k)).unwrap()
}

fn random_h(n: usize, rng: &mut ChaCha8Rng) -> HermitianMetricMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    HermitianMetricMatrix::new(&a * a.adjoint() + DMatrix::identity(n, n) * C64::new(0.1, 0.0)).unwrap()
}

#[test]
fn minimizer_converges_and_descends() {
    let space = half_space(2);
    let grid = DingGrid::new(&space, 32).unwrap();
    let rep = minimize_ding(1.0, &space, &grid, None, &DingSettings::default()).unwrap();
    assert_eq!(rep.termination, Termination::Gradient);
    assert!(rep.grad_norm < 1e-6, "{}", rep.grad_norm);
    let di = ding_functional(&HermitianMetricMatrix::identity(2), 1.0, &space, &grid, Execution::Parallel).unwrap();
    assert!(rep.d <= di);
    for w in rep.trace.windows(2) {
        assert!(w[1].d <= w[0].d + 1e-12, "{:?}", w);
    }
    assert!(!rep.non_coercive);
}

#[test]
fn restarts_agree() {
    let space = half_space(4);
    let grid = DingGrid::new(&space, 24).unwrap();
    let settings = DingSettings::default();
    let base = minimize_ding(1.0, &space, &grid, None, &settings).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let h0 = random_h(3, &mut rng);
        let rep = minimize_ding(1.0, &space, &grid, Some(&h0), &settings).unwrap();
        assert!((rep.d - base.d).abs() < 1e-5, "{} {}", rep.d, base.d);
    }
}

#[test]
fn bare_line_is_flagged_non_coercive() {
    let space = SectionSpace::anticanonical(1);
    let grid = DingGrid::new(&space, 32).unwrap();
    let rep = minimize_ding(1.0, &space, &grid, None, &DingSettings::default()).unwrap();
    assert!(rep.non_coercive);
}

#[test]
fn quadrature_refinement_is_within_estimate() {
    let space = half_space(2);
    let h = HermitianMetricMatrix::identity(2);
    let fine = DingGrid::new(&space, 64).unwrap();
    let coarse = fine.coarsened(&space).unwrap();
    let est = {
        let c2 = coarse.coarsened(&space).unwrap();
        let a = ding_functional(&h, 1.0, &space, &coarse, Execution::Parallel).unwrap();
        let b = ding_functional(&h, 1.0, &space, &c2, Execution::Parallel).unwrap();
        (a - b).abs()
    };
    let a = ding_functional(&h, 1.0, &space, &fine, Execution::Parallel).unwrap();
    let b = ding_functional(&h, 1.0, &space, &coarse, Execution::Parallel).unwrap();
    assert!((a - b).abs() <= est, "{} {}", (a - b).abs(), est);
}

#[test]
fn j_grows_along_torus_ray() {
    let space = SectionSpace::anticanonical(1);
    let grid = DingGrid::new(&space, 32).unwrap();
    let j: Vec<f64> = [0.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|t: &f64| {
            let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                C64::new(t.exp(), 0.0),
                C64::new(1.0, 0.0),
                C64::new((-t).exp(), 0.0),
            ]));
            j_functional(&HermitianMetricMatrix::new(h).unwrap(), &space, &grid).unwrap()
        })
        .collect();
    for w in j.windows(2) {
        assert!(w[1] > w[0] + 0.5, "{j:?}");
    }
}

#[test]
fn harmonicity_on_bare_line() {
    let space = SectionSpace::anticanonical(1);
    let grid = DingGrid::new(&space, 64).unwrap();
    let h0 = reference_metric(&space, &grid).unwrap();
    let zero = harmonicity_probe(&VectorFieldSL2::zero(), &h0, &space, &grid, C64::new(0.0, 0.0), 0.1, Execution::Parallel)
        .unwrap();
    assert_eq!(zero.laplacian_residual, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for h in [h0, random_h(3, &mut rng)] {
        let r = harmonicity_probe(&VectorFieldSL2::euler(), &h, &space, &grid, C64::new(0.3, -0.2), 0.1, Execution::Parallel)
            .unwrap();
        assert!(r.laplacian_residual < 1e-5, "{r:?}");
        assert!(r.formula_residual < 1e-7, "{r:?}");
        assert!(r.integral_residual < 1e-7, "{r:?}");
    }
}

#[test]
fn coercivity_profiles() {
    let bare = SectionSpace::anticanonical(1);
    let grid = DingGrid::new(&bare, 32).unwrap();
    let rays = default_rays(&bare, &grid, 2, 5).unwrap();
    let rows = coercivity_probe(&[0.0, 0.1], &rays, &bare, 48, 8.0, 16, Execution::Parallel).unwrap();
    assert!(!rows[0].non_coercive);
    assert!(rows[1].non_coercive);

    let space = half_space(4);
    let grid = DingGrid::new(&space, 32).unwrap();
    let rays = default_rays(&space, &grid, 3, 5).unwrap();
    let rows = coercivity_probe(&[0.0, 0.05], &rays, &space, 48, 8.0, 16, Execution::Parallel).unwrap();
    for row in &rows {
        assert!(!row.non_coercive, "{row:?}");
        let start = row.profile[0].1;
        assert!(row.profile.iter().all(|p| p.1 > start - 1.0), "{row:?}");
    }
}

#[test]
fn inequality_holds_on_weighted_pair() {
    for (k, g) in [(2, Rational64::from_integer(1)), (2, Rational64::new(1, 2))] {
        let rep = inequality_check(
            &half_pair(),
            Rational64::from_integer(k),
            g,
            PartitionMethod::ImportanceMC {
                budget: 300_000,
                seed: 1,
                proposal: Default::default(),
            },
            32,
            &DingSettings::default(),
        )
        .unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!((rep.gap - (rep.rhs - rep.lhs)).abs() < 1e-15);
    }
}

#[test]
fn inequality_refuses_divergent_partition() {
    let r = inequality_check(
        &LogPairCurve::bare(),
        Rational64::from_integer(1),
        Rational64::from_integer(1),
        PartitionMethod::ImportanceMC {
            budget: 60_000,
            seed: 1,
            proposal: Default::default(),
        },
        16,
        &DingSettings::default(),
    );
    assert_eq!(r.unwrap_err(), gibbslab::Error::DivergentPartition);
}

#[test]
fn su2_conjugation_invariance_on_bare_line() {
    use gibbslab::geometry::Mat2;
    use gibbslab::sections::symmetric_power;
    let space = SectionSpace::anticanonical(2);
    let grid = DingGrid::new(&space, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (a, b) = (C64::new(0.6, 0.48), C64::new(0.0, 0.64));
    let g = Mat2::new(a, -b.conj(), b, a.conj());
    let q = symmetric_power(&g, space.degree());
    for gamma in [1.0, 0.5] {
        let h = random_h(5, &mut rng);
        let d = ding_functional(&h, gamma, &space, &grid, Execution::Parallel).unwrap();
        let dq = ding_functional(&h.congruence(&q).unwrap(), gamma, &space, &grid, Execution::Parallel).unwrap();
        assert!((d - dq).abs() < 1e-6, "{d} {dq}");
    }
}
