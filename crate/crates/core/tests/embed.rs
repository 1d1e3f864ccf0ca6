use drape_core::embed::{
    rank_correlation_report, scatter_svg, synthetic_triplets, triplet_agreement, tste_embed,
    Embedding, Triplet, TsteOptions,
};
use drape_core::seed::rng_for;
use proptest::prelude::*;
use rand::Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| points.iter().map(|q| dist(p, q)).collect())
        .collect()
}

/// Brute-force agreement, written independently of the library.
fn agreement_oracle(points: &[Vec<f64>], triplets: &[Triplet]) -> f64 {
    let mut s = 0.0;
    for t in triplets {
        let dc = dist(&points[t.reference], &points[t.chosen]);
        let dj = dist(&points[t.reference], &points[t.rejected]);
        s += if dc < dj {
            1.0
        } else if dc == dj {
            0.5
        } else {
            0.0
        };
    }
    s / triplets.len() as f64
}

fn planted_2d(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, &[1]);
    (0..10)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect()
}

#[test]
fn line_ordering_is_recovered() {
    let planted: Vec<f64> = (0..10).map(|i| (i as f64).powf(1.3)).collect();
    let mut triplets = Vec::new();
    for r in 0..10 {
        for a in 0..10 {
            for b in (a + 1)..10 {
                if a == r || b == r {
                    continue;
                }
                let (da, db) = (
                    (planted[r] - planted[a]).abs(),
                    (planted[r] - planted[b]).abs(),
                );
                triplets.push(if da < db {
                    Triplet::new(r, a, b)
                } else {
                    Triplet::new(r, b, a)
                });
            }
        }
    }
    assert_eq!(triplets.len(), 360);
    let e = tste_embed(&triplets, 10, 1, &TsteOptions::default()).unwrap();
    let xs: Vec<f64> = e.points.iter().map(|p| p[0]).collect();
    let increasing = xs.windows(2).all(|w| w[0] < w[1]);
    let decreasing = xs.windows(2).all(|w| w[0] > w[1]);
    assert!(increasing || decreasing, "{xs:?}");
}

#[test]
fn planted_points_reach_high_agreement() {
    let planted = planted_2d(3);
    let triplets = synthetic_triplets(&matrix(&planted), 1000, 0.0, 11).unwrap();
    assert_eq!(agreement_oracle(&planted, &triplets), 1.0);
    let e = tste_embed(
        &triplets,
        10,
        2,
        &TsteOptions {
            alpha: 5.0,
            ..Default::default()
        },
    )
    .unwrap();
    let a = triplet_agreement(&e, &triplets);
    assert!((a - agreement_oracle(&e.points, &triplets)).abs() < 1e-12);
    assert!(a >= 0.95, "agreement {a}");
}

#[test]
fn noisy_triplets_generalize_to_clean_ones() {
    let planted = planted_2d(4);
    let d = matrix(&planted);
    let noisy = synthetic_triplets(&d, 1000, 0.13, 21).unwrap();
    let clean = synthetic_triplets(&d, 1000, 0.0, 22).unwrap();
    let observed = agreement_oracle(&planted, &noisy);
    assert!((observed - 0.87).abs() < 0.04, "flip rate off: {observed}");
    let e = tste_embed(
        &noisy,
        10,
        2,
        &TsteOptions {
            alpha: 5.0,
            ..Default::default()
        },
    )
    .unwrap();
    let a = triplet_agreement(&e, &clean);
    assert!(a >= 0.85, "held-out agreement {a}");
}

#[test]
fn loss_never_increases_and_runs_are_deterministic() {
    let planted = planted_2d(5);
    let triplets = synthetic_triplets(&matrix(&planted), 300, 0.2, 9).unwrap();
    let opt = TsteOptions {
        iterations: 400,
        ..Default::default()
    };
    let e = tste_embed(&triplets, 10, 2, &opt).unwrap();
    assert_eq!(e.history.len(), 400);
    assert!(e.history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(e.history.last().copied(), Some(e.loss));
    assert_eq!(e, tste_embed(&triplets, 10, 2, &opt).unwrap());
    let other = tste_embed(&triplets, 10, 2, &TsteOptions { seed: 1, ..opt }).unwrap();
    assert_ne!(e.points, other.points);
    assert!(e.points.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn embedding_exports() {
    let e = Embedding {
        dims: 2,
        points: vec![vec![0.0, 1.0], vec![2.0, -1.0]],
        loss: 0.3,
        history: vec![],
    };
    let mut buf = Vec::new();
    e.write_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "index,x0,x1\n0,0,1\n1,2,-1\n"
    );
    let svg = scatter_svg(&e, &["silk".into(), "a<b".into()]);
    assert!(svg.starts_with("<svg") && svg.contains(">silk</text>") && svg.contains("a&lt;b"));
    assert_eq!(svg.matches("<circle").count(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn agreement_invariant_under_similarity_transforms(
        seed in any::<u64>(),
        angle in 0.0f64..std::f64::consts::TAU,
        scale in 0.1f64..10.0,
        tx in -5.0f64..5.0,
        ty in -5.0f64..5.0,
    ) {
        let mut rng = rng_for(seed, &[2]);
        let points: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let triplets: Vec<Triplet> = (0..60)
            .filter_map(|_| {
                let (r, c, j) = (rng.random_range(0..8), rng.random_range(0..8), rng.random_range(0..8));
                (r != c && r != j && c != j).then_some(Triplet::new(r, c, j))
            })
            .collect();
        prop_assume!(!triplets.is_empty());
        let (s, c) = angle.sin_cos();
        let moved: Vec<Vec<f64>> = points
            .iter()
            .map(|p| vec![scale * (c * p[0] - s * p[1]) + tx, scale * (s * p[0] + c * p[1]) + ty])
            .collect();
        let a = triplet_agreement(&Embedding { dims: 2, points, loss: 0.0, history: vec![] }, &triplets);
        let b = triplet_agreement(&Embedding { dims: 2, points: moved, loss: 0.0, history: vec![] }, &triplets);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rank_report_invariant_under_monotone_transforms(seed in any::<u64>(), k in 0.1f64..3.0) {
        let mut rng = rng_for(seed, &[3]);
        let n = 6;
        let rand_matrix = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
        };
        let reference = rand_matrix(&mut rng);
        let candidate = rand_matrix(&mut rng);
        let warped: Vec<Vec<f64>> = candidate.iter().map(|r| r.iter().map(|v| (k * v).exp() + v.powi(3)).collect()).collect();
        let a = rank_correlation_report(&reference, &candidate).unwrap();
        let b = rank_correlation_report(&reference, &warped).unwrap();
        prop_assert_eq!(a.flagged, b.flagged);
        for (x, y) in a.per_material.iter().zip(&b.per_material) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
        }
    }
}
