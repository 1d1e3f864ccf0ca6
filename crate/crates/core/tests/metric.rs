use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use drape_core::image::GrayImage;
use drape_core::material::MaterialParams;
use drape_core::metric::{
    mean_abs_diff, read_distances_csv, ssim, write_distances_csv, DistanceRecord, DistanceReport,
    DrapeMetric, ExternalConfig, ExternalDistance, ImagePair, InnerDistance, InnerMetric,
    MetricConfig, MetricError, Render, SceneDistance, SsimDistance,
};
use drape_core::seed::rng_for;
use drape_core::sim::SceneKind;
use proptest::prelude::*;
use rand::Rng;

fn random_image(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut rng = rng_for(seed, &[0]);
    GrayImage::from_data(
        w,
        h,
        (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap()
}

/// SSIM evaluated window by window with an explicit 2D Gaussian.
fn ssim_oracle(a: &GrayImage, b: &GrayImage) -> f64 {
    let r = 5i64;
    let mut wgt = vec![0.0; 121];
    for dy in -r..=r {
        for dx in -r..=r {
            wgt[((dy + r) * 11 + dx + r) as usize] =
                (-((dx * dx + dy * dy) as f64) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = wgt.iter().sum();
    wgt.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (1e-4, 9e-4);
    let mut sum = 0.0;
    let mut count = 0;
    for cy in r..(a.height as i64 - r) {
        for cx in r..(a.width as i64 - r) {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let w = wgt[((dy + r) * 11 + dx + r) as usize];
                    let (x, y) = ((cx + dx) as usize, (cy + dy) as usize);
                    let (va, vb) = (a.get(x, y), b.get(x, y));
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn ssim_matches_windowed_oracle() {
    for seed in 0..4 {
        let a = random_image(seed, 16, 16);
        let mut b = random_image(seed + 100, 16, 16);
        for (k, v) in b.data.iter_mut().enumerate() {
            *v = 0.5 * *v + 0.5 * a.data[k];
        }
        let got = ssim(&a, &b).unwrap();
        let want = ssim_oracle(&a, &b);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    let stripes =
        GrayImage::from_data(16, 16, (0..256).map(|k| ((k / 3) % 2) as f64).collect()).unwrap();
    let flat = GrayImage::filled(16, 16, 0.5);
    assert!((ssim(&stripes, &flat).unwrap() - ssim_oracle(&stripes, &flat)).abs() < 1e-12);
}

#[test]
fn mad_matches_hand_count() {
    let a = GrayImage::from_data(2, 2, vec![0.0, 0.5, 1.0, 0.25]).unwrap();
    let b = GrayImage::from_data(2, 2, vec![1.0, 0.5, 0.0, 0.75]).unwrap();
    assert!((mean_abs_diff(&a, &b).unwrap() - 0.625).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ssim_is_symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = random_image(s1, 14, 13);
        let b = random_image(s2, 14, 13);
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12 && ab >= -1.0 - 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scene_distance_is_the_mean_of_all_pairs(values in prop::collection::vec(0.0f64..2.0, 1..6)) {
        let n = values.len();
        let inner: Vec<f64> = (0..n * n).map(|k| values[k / n] * 0.5 + values[k % n]).collect();
        let s = SceneDistance::from_inner(inner.clone());
        let mut brute = 0.0;
        for i in 0..n {
            for j in 0..n {
                brute += inner[i * n + j];
            }
        }
        prop_assert!((s.distance - brute / (n * n) as f64).abs() < 1e-12);
    }
}

#[test]
fn scene_and_overall_averaging() {
    let h = SceneDistance::from_inner(vec![0.1, 0.2, 0.3, 0.4]);
    assert!((h.distance - 0.25).abs() < 1e-15);
    let s = SceneDistance::from_inner(vec![0.45]);
    assert_eq!(s.distance, 0.45);
    let r = DistanceReport::from_scenes(h, s);
    assert!((r.d - 0.35).abs() < 1e-15);
}

/// Returns 0.1, 0.2, ... in call order and records pair ids.
#[derive(Default)]
struct Counting {
    next: AtomicUsize,
    ids: Mutex<Vec<String>>,
}

struct Shared(Arc<Counting>);

impl InnerDistance for Shared {
    fn distances(&self, pairs: &[ImagePair<'_>]) -> Result<Vec<f64>, MetricError> {
        let c = &self.0;
        let mut ids = c.ids.lock().unwrap();
        Ok(pairs
            .iter()
            .map(|p| {
                ids.push(p.id.clone());
                0.1 * (c.next.fetch_add(1, Ordering::SeqCst) + 1) as f64
            })
            .collect())
    }
}

fn coarse(replicates: usize) -> MetricConfig {
    MetricConfig {
        replicates,
        mesh_edge: 0.1,
        image_size: 24,
        ..Default::default()
    }
}

fn cotton() -> MaterialParams {
    MaterialParams::uniform(300.0, 1e-5, 0.2)
}

#[test]
fn stub_inner_metric_gives_the_pair_mean() {
    let stub = Arc::new(Counting::default());
    let m = DrapeMetric::with_inner(coarse(2), Box::new(Shared(stub.clone()))).unwrap();
    let s = m
        .scene_distance(
            &cotton(),
            &MaterialParams::uniform(900.0, 1e-4, 0.3),
            SceneKind::Hanging,
        )
        .unwrap();
    assert_eq!(s.inner.len(), 4);
    assert!((s.distance - 0.25).abs() < 1e-12);
    let ids = stub.ids.lock().unwrap().clone();
    let unique: std::collections::HashSet<_> = ids.iter().collect();
    assert_eq!(unique.len(), 4);
    assert!(ids
        .iter()
        .all(|id| id.contains("-hanging-a") && id.contains("~")));
}

#[test]
fn single_replicate_equals_inner_distance() {
    let m = DrapeMetric::with_inner(coarse(1), Box::new(SsimDistance)).unwrap();
    let (pa, pb) = (cotton(), MaterialParams::uniform(2000.0, 5e-4, 0.4));
    let r = m.drape_distance(&pa, &pb).unwrap();
    for (scene, d) in [
        (SceneKind::Hanging, r.d_hanging),
        (SceneKind::Stretch, r.d_stretch),
    ] {
        let a = &m.renders(&pa, scene, drape_core::metric::Side::A).unwrap()[0];
        let b = &m.renders(&pb, scene, drape_core::metric::Side::B).unwrap()[0];
        assert!((d - (1.0 - ssim(&a.image, &b.image).unwrap())).abs() < 1e-15);
    }
    assert!((r.d - (r.d_hanging + r.d_stretch) / 2.0).abs() < 1e-15);
    assert!(r.d > 0.0);
}

#[test]
fn matrix_agrees_with_pairwise_calls() {
    let m = DrapeMetric::new(MetricConfig {
        inner: InnerMetric::Mad,
        ..coarse(2)
    })
    .unwrap();
    let mats = [cotton(), MaterialParams::uniform(2000.0, 5e-4, 0.4)];
    let mat = m.distance_matrix(&mats).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(mat[i][j], m.drape_distance(&mats[i], &mats[j]).unwrap());
        }
    }
    assert!(mat[0][0].d < mat[0][1].d);
}

#[test]
fn external_protocol_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("score.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nset -e\necho pair_id,distance > \"$2\"\n\
         grep -o '\"pair_id\": \"[^\"]*\"' \"$1\" | sed 's/.*: \"\\(.*\\)\"/\\1,0.375/' >> \"$2\"\n",
    )
    .unwrap();
    let ext = ExternalConfig {
        workdir: dir.path().join("work"),
        command: Some(vec!["sh".into(), script.display().to_string()]),
    };
    let cfg = MetricConfig {
        inner: InnerMetric::External,
        external: Some(ext.clone()),
        ..coarse(2)
    };
    let m = DrapeMetric::new(cfg).unwrap();
    let r = m.drape_distance(&cotton(), &cotton()).unwrap();
    assert_eq!(r.inner_hanging, vec![0.375; 4]);
    assert_eq!(r.d, 0.375);

    let pairs: Vec<serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(ExternalDistance(ext.clone()).pairs_path()).unwrap(),
    )
    .unwrap();
    assert_eq!(pairs.len(), 4);
    let first = &pairs[0];
    let img = GrayImage::read_png(std::path::Path::new(
        first["image_a_path"].as_str().unwrap(),
    ))
    .unwrap();
    assert_eq!((img.width, img.height), (24, 24));
    let raw = png::Decoder::new(std::io::BufReader::new(
        std::fs::File::open(first["image_b_path"].as_str().unwrap()).unwrap(),
    ));
    assert_eq!(
        raw.read_info().unwrap().info().bit_depth,
        png::BitDepth::Sixteen
    );
}

#[test]
fn external_without_command_reads_existing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ext = ExternalDistance(ExternalConfig {
        workdir: dir.path().to_path_buf(),
        command: None,
    });
    let a = Render {
        key: "a0".into(),
        image: Arc::new(GrayImage::filled(12, 12, 0.2)),
    };
    let b = Render {
        key: "b0".into(),
        image: Arc::new(GrayImage::filled(12, 12, 0.8)),
    };
    let pairs = [ImagePair {
        id: "a0~b0".into(),
        a: &a,
        b: &b,
    }];
    assert!(matches!(
        ext.distances(&pairs),
        Err(MetricError::External(_))
    ));

    write_distances_csv(
        &ext.distances_path(),
        &[DistanceRecord {
            pair_id: "other".into(),
            distance: 1.0,
        }],
    )
    .unwrap();
    assert!(
        matches!(ext.distances(&pairs), Err(MetricError::MissingExternal(id)) if id == "a0~b0")
    );

    write_distances_csv(
        &ext.distances_path(),
        &[
            DistanceRecord {
                pair_id: "a0~b0".into(),
                distance: 0.125,
            },
            DistanceRecord {
                pair_id: "x".into(),
                distance: 2.0,
            },
        ],
    )
    .unwrap();
    assert_eq!(ext.distances(&pairs).unwrap(), vec![0.125]);
    assert_eq!(read_distances_csv(&ext.distances_path()).unwrap().len(), 2);

    std::fs::write(ext.distances_path(), "pair_id,distance\na0~b0,-1\n").unwrap();
    assert!(ext.distances(&pairs).is_err());
}

#[test]
fn failing_external_command_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ext = ExternalDistance(ExternalConfig {
        workdir: dir.path().to_path_buf(),
        command: Some(vec!["false".into()]),
    });
    let a = Render {
        key: "a0".into(),
        image: Arc::new(GrayImage::filled(12, 12, 0.2)),
    };
    let pairs = [ImagePair {
        id: "a0~a0".into(),
        a: &a,
        b: &a,
    }];
    assert!(matches!(
        ext.distances(&pairs),
        Err(MetricError::External(_))
    ));
}
