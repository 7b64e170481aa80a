use std::f64::consts::PI;

use gibbslab::geometry::{su2_rotation, SpherePoint, C64};
use gibbslab::pair::LogPairCurve;
use gibbslab::par::Execution;
use gibbslab::sampler::*;
use gibbslab::stability::DeformedDensityParams;
use gibbslab::Error;
use num_rational::Rational64;

fn r(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

fn cube_roots(w: Rational64) -> LogPairCurve {
    LogPairCurve::genus0(
        (0..3)
            .map(|j| SpherePoint::from_chart(C64::from_polar(1.0, 2.0 * PI * j as f64 / 3.0)))
            .collect(),
        vec![w; 3],
    )
    .unwrap()
}

#[test]
fn toy_target_matches_enumeration() {
    let toy = IcosahedralToy::new();
    let params = DeformedDensityParams::new(LogPairCurve::bare(), r(1, 1), r(1, 1)).unwrap();
    let exact = toy.exact(&params).unwrap();
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let emp = toy.empirical(&params, 1_000_000, 7).unwrap();
    let tv = total_variation(&exact, &emp);
    assert!(tv < 0.02, "{tv}");
}

#[test]
fn flat_target_moments() {
    // gamma = 0 on bare P^1: FS-uniform points, E h = 0, E h^2 = 1/3
    let batch = run_chain(
        &LogPairCurve::bare(),
        r(2, 1),
        r(0, 1),
        &SamplerSettings {
            budget: 100_000,
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(batch.acceptance_rate > 1.0 - 1e-12);
    let hs: Vec<f64> = batch.samples.iter().flat_map(|s| s.config.points.iter().map(|p| p.height())).collect();
    let n = hs.len() as f64;
    let ess: f64 = batch.ess.iter().sum();
    assert!(ess <= n + 1e-9);
    for (moment, exact, var) in [(1, 0.0, 1.0 / 3.0), (2, 1.0 / 3.0, 1.0 / 5.0 - 1.0 / 9.0)] {
        let m = hs.iter().map(|h| h.powi(moment)).sum::<f64>() / n;
        let se = (var / ess).sqrt();
        assert!((m - exact).abs() < 3.0 * se, "moment {moment}: {m} vs {exact} (se {se})");
    }
    let hist = pushforward_histogram(&batch, HistogramBins { bands: 3, sectors: 4 }).unwrap();
    assert!((hist.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn bare_line_is_refused() {
    let r1 = run_chain(&LogPairCurve::bare(), r(1, 1), r(1, 1), &SamplerSettings::default());
    assert!(matches!(r1, Err(Error::UnstableTarget(_))));
    let forced = run_chain(
        &LogPairCurve::bare(),
        r(1, 1),
        r(1, 1),
        &SamplerSettings {
            budget: 3_000,
            force: true,
            ..Default::default()
        },
    );
    assert!(forced.is_ok());
}

#[test]
fn seeds_are_deterministic() {
    let settings = SamplerSettings {
        budget: 20_000,
        seed: 11,
        ..Default::default()
    };
    let a = run_chain(&cube_roots(r(1, 2)), r(2, 1), r(1, 1), &settings).unwrap();
    let b = run_chain(&cube_roots(r(1, 2)), r(2, 1), r(1, 1), &settings).unwrap();
    let c = run_chain(
        &cube_roots(r(1, 2)),
        r(2, 1),
        r(1, 1),
        &SamplerSettings {
            exec: Execution::Sequential,
            ..settings
        },
    )
    .unwrap();
    let ja = format!("{a:?}");
    assert_eq!(ja, format!("{b:?}"));
    assert_eq!(ja, format!("{c:?}"));
    assert!(a.max_drift < 1e-9);
    assert!(a.step_scales.iter().all(|s| *s <= PI / 4.0));
}

#[test]
fn order_three_symmetry() {
    let batch = run_chain(
        &cube_roots(r(1, 2)),
        r(2, 1),
        r(1, 1),
        &SamplerSettings {
            budget: 1_600_000,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let bins = HistogramBins { bands: 4, sectors: 6 };
    let rot = su2_rotation([0.0, 0.0, 1.0], 2.0 * PI / 3.0);
    let z = transport_zscores(&batch, bins, &rot).unwrap();
    assert!(z.iter().all(|v| v.abs() < 2.0), "{z:?}");
}

#[test]
fn exchangeable_indices_and_independent_seeds() {
    let run = |seed| {
        run_chain(
            &cube_roots(r(1, 2)),
            r(2, 1),
            r(1, 1),
            &SamplerSettings {
                budget: 400_000,
                seed,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (run(20), run(40));
    let bins = HistogramBins { bands: 2, sectors: 3 };
    let ha = pushforward_histogram(&a, bins).unwrap();
    let hb = pushforward_histogram(&b, bins).unwrap();
    assert!(histogram_discrepancy(&ha, &hb) < 2.0, "{}", histogram_discrepancy(&ha, &hb));
    let h0 = index_histogram(&a, bins, 0).unwrap();
    let h1 = index_histogram(&a, bins, 1).unwrap();
    assert!(histogram_discrepancy(&h0, &h1) < 2.0, "{}", histogram_discrepancy(&h0, &h1));
}

#[test]
fn marked_point_mass_grows_with_weight() {
    // fraction of pooled points within chordal 0.3 of a marked point, at
    // k = 5 (N = 8, 5, 2); the one-point factor chordal^{-2w} attracts
    let marked: Vec<SpherePoint> = (0..3)
        .map(|j| SpherePoint::from_chart(C64::from_polar(1.0, 2.0 * PI * j as f64 / 3.0)))
        .collect();
    let stats: Vec<(f64, f64)> = [r(1, 5), r(2, 5), r(3, 5)]
        .iter()
        .map(|w| {
            let batch = run_chain(
                &cube_roots(*w),
                r(5, 1),
                r(1, 1),
                &SamplerSettings {
                    budget: 800_000,
                    seed: 3,
                    ..Default::default()
                },
            )
            .unwrap();
            // batch means over 20 contiguous blocks
            let len = batch.samples.len();
            let blocks: Vec<f64> = (0..20)
                .map(|b| {
                    let part = &batch.samples[b * len / 20..(b + 1) * len / 20];
                    let pts = part.iter().flat_map(|s| s.config.points.iter());
                    let total = (part.len() * batch.n) as f64;
                    pts.filter(|p| marked.iter().any(|q| p.chordal(q) < 0.3)).count() as f64 / total
                })
                .collect();
            let m = blocks.iter().sum::<f64>() / 20.0;
            let se = (blocks.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 19.0 / 20.0).sqrt();
            (m, se)
        })
        .collect();
    for w in stats.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!(b.0 - a.0 > 2.0 * (a.1 * a.1 + b.1 * b.1).sqrt(), "{stats:?}");
    }
}
