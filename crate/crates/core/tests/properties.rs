use proptest::prelude::*;
use svann_core::eval::{match_detections, BoundingBox, Detection};
use svann_core::geom::{distance, DistanceMetric, GeoPoint, Neighbor, SpatialIndex};
use svann_core::nn::{Activation, NetworkSpec, Parameters};
use svann_core::partition::{Rect, ZoneMap};
use svann_core::predict::{inverse_distance_weight, predict_distance_weighted};
use svann_core::train::{epoch_order, Anchor, ModelSite, RegimeKind, TrainingRegime};
use svann_core::{Dataset, LabeledSample};

fn planar() -> impl Strategy<Value = GeoPoint> {
    (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| GeoPoint { x, y })
}

fn lonlat() -> impl Strategy<Value = GeoPoint> {
    (-180f64..=180.0, -90f64..=90.0).prop_map(|(x, y)| GeoPoint { x, y })
}

fn network() -> impl Strategy<Value = (NetworkSpec, u64, Vec<f64>, usize)> {
    (prop::collection::vec(1usize..6, 2..5), any::<bool>(), any::<u64>()).prop_flat_map(|(mut sizes, relu, seed)| {
        let last = sizes.len() - 1;
        sizes[last] = sizes[last].max(2);
        let classes = sizes[last];
        let act = if relu { Activation::Relu } else { Activation::Sigmoid };
        let spec = NetworkSpec::new(sizes.clone(), act).unwrap();
        (Just(spec), Just(seed), prop::collection::vec(-3f64..3.0, sizes[0]), 0..classes)
    })
}

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (0f64..20.0, 0f64..20.0, 0.5f64..6.0, 0.5f64..6.0).prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

/// A one-feature site that always predicts `class`.
fn constant_site(site_id: usize, x: f64, y: f64, class: usize, classes: usize) -> ModelSite {
    let spec = NetworkSpec::new(vec![1, classes], Activation::Relu).unwrap();
    let mut params = Parameters::zeros(&spec).unwrap();
    params.layers[0].biases[class] = 1.0;
    ModelSite { site_id, anchor: Anchor::Point { x, y }, regime: TrainingRegime::new(RegimeKind::Osfa), seed: 0, params }
}

proptest! {
    #[test]
    fn planar_distance_is_a_symmetric_metric(a in planar(), b in planar(), c in planar()) {
        let m = DistanceMetric::PlanarEuclidean;
        let ab = distance(&a, &b, m).unwrap();
        prop_assert_eq!(ab, distance(&b, &a, m).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(distance(&a, &a, m).unwrap(), 0.0);
        let via = distance(&a, &c, m).unwrap() + distance(&c, &b, m).unwrap();
        prop_assert!(ab <= via * (1.0 + 1e-12) + 1e-9);
    }

    #[test]
    fn haversine_is_symmetric_and_bounded(a in lonlat(), b in lonlat()) {
        let m = DistanceMetric::Haversine;
        let ab = distance(&a, &b, m).unwrap();
        prop_assert!((ab - distance(&b, &a, m).unwrap()).abs() <= 1e-6);
        prop_assert!((0.0..=std::f64::consts::PI * 6_371_000.0 + 1e-6).contains(&ab));
    }

    #[test]
    fn forward_gives_a_probability_vector((spec, seed, x, _) in network()) {
        let p = Parameters::init(&spec, seed).unwrap().forward(&x).unwrap();
        prop_assert_eq!(p.len(), spec.class_count());
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn a_small_step_does_not_increase_the_loss((spec, seed, x, label) in network()) {
        let params = Parameters::init(&spec, seed).unwrap();
        let (before, g) = params.backprop(&x, label).unwrap();
        let (after, _) = params.sgd_step(&g, 1e-4).unwrap().backprop(&x, label).unwrap();
        prop_assert!(after <= before + 1e-12, "{} -> {}", before, after);
    }

    #[test]
    fn two_steps_equal_one_double_step_for_a_fixed_signal((spec, seed, x, label) in network(), eta in 1e-4f64..0.5) {
        let params = Parameters::init(&spec, seed).unwrap();
        let (_, g) = params.backprop(&x, label).unwrap();
        let twice = params.sgd_step(&g, eta).unwrap().sgd_step(&g, eta).unwrap();
        let once = params.sgd_step(&g, 2.0 * eta).unwrap();
        for (a, b) in twice.layers.iter().zip(&once.layers) {
            for (u, v) in a.weights.iter().chain(&a.biases).zip(b.weights.iter().chain(&b.biases)) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn vote_weights_match_a_brute_force_table(
        raw in prop::collection::vec((-10f64..10.0, -10f64..10.0, 0usize..3), 1..8),
        q in (-10f64..10.0, -10f64..10.0),
        exponent in 0.5f64..4.0,
        d_min in 1e-3f64..1.0,
    ) {
        let sites: Vec<ModelSite> = raw.iter().enumerate().map(|(i, &(x, y, c))| constant_site(i, x, y, c, 3)).collect();
        let loc = GeoPoint { x: q.0, y: q.1 };
        let p = predict_distance_weighted(&sites, None, DistanceMetric::PlanarEuclidean, &[0.0], &loc, exponent, d_min).unwrap();
        let mut table = [0.0f64; 3];
        for &(x, y, c) in &raw {
            let d = ((x - q.0).powi(2) + (y - q.1).powi(2)).sqrt();
            table[c] += 1.0 / d.max(d_min).powf(exponent);
        }
        for (got, want) in p.class_weights.iter().zip(&table) {
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        }
        let best = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(table[p.class] >= best * (1.0 - 1e-12));
        prop_assert_eq!(inverse_distance_weight(0.0, exponent, d_min), 1.0 / d_min.powf(exponent));
    }

    #[test]
    fn matching_conserves_counts(
        truth in prop::collection::vec(bbox(), 0..12),
        preds in prop::collection::vec((bbox(), 0f64..1.0), 0..12),
        threshold in 0.05f64..=1.0,
    ) {
        let dets: Vec<Detection> = preds.into_iter().map(|(bbox, confidence)| Detection { bbox, confidence }).collect();
        let c = match_detections(&dets, &truth, threshold).unwrap();
        prop_assert_eq!(c.tp + c.fp, dets.len() as u64);
        prop_assert_eq!(c.tp + c.fn_, truth.len() as u64);
    }

    #[test]
    fn index_agrees_with_a_linear_scan_including_ties(
        pts in prop::collection::vec((0i32..12, 0i32..12), 1..120),
        q in (-2i32..14, -2i32..14),
        k in 1usize..40,
        r in 0f64..6.0,
    ) {
        // integer coordinates make equal distances common
        let points: Vec<(GeoPoint, u64)> = pts.iter().enumerate().map(|(i, &(x, y))| (GeoPoint { x: x as f64, y: y as f64 }, i as u64)).collect();
        let index = SpatialIndex::build(points.iter().copied(), DistanceMetric::PlanarEuclidean).unwrap();
        let q = GeoPoint { x: q.0 as f64, y: q.1 as f64 };
        let mut all: Vec<Neighbor> = points.iter().map(|(p, id)| Neighbor { id: *id, distance: distance(&q, p, DistanceMetric::PlanarEuclidean).unwrap() }).collect();
        all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
        let k = k.min(points.len());
        prop_assert_eq!(index.knn(&q, k).unwrap(), all[..k].to_vec());
        let ball: Vec<Neighbor> = all.iter().filter(|n| n.distance <= r).cloned().collect();
        prop_assert_eq!(index.within(&q, r).unwrap(), ball);
    }

    #[test]
    fn grid_cells_partition_the_extent(rows in 1usize..6, cols in 1usize..6, fx in 0f64..=1.0, fy in 0f64..=1.0) {
        let extent = Rect::new(-3.0, 2.0, 7.0, 9.5).unwrap();
        let zones = ZoneMap::grid(extent, rows, cols).unwrap();
        let p = GeoPoint { x: -3.0 + 10.0 * fx, y: 2.0 + 7.5 * fy };
        prop_assert_eq!(zones.owner_count(&p), 1);
        let id = zones.assign(&p).unwrap();
        prop_assert!(zones.zone(id).unwrap().bounds.contains(&p));
    }

    #[test]
    fn epoch_order_is_a_permutation(len in 0usize..300, seed in any::<u64>(), epoch in 0usize..50) {
        let mut order = epoch_order(len, seed, epoch);
        order.sort_unstable();
        prop_assert_eq!(order, (0..len).collect::<Vec<_>>());
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec((any::<f64>(), any::<f64>(), -1e9f64..1e9, 0usize..4), 1..30)) {
        let samples: Vec<LabeledSample> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0.is_finite() && r.1.is_finite())
            .map(|(i, &(x, y, f, label))| LabeledSample { id: i as u64, loc: GeoPoint { x, y }, features: vec![f, -f / 3.0], label })
            .collect();
        prop_assume!(!samples.is_empty());
        let data = Dataset::new(samples).unwrap();
        let text = data.to_csv_string().unwrap();
        let back = Dataset::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back.samples(), data.samples());
        prop_assert_eq!(back.to_csv_string().unwrap(), text);
    }
}

#[test]
fn uniform_points_split_evenly_over_equal_cells() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
    let zones = ZoneMap::grid(Rect::new(0.0, 0.0, 4.0, 2.0).unwrap(), 2, 2).unwrap();
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        let p = GeoPoint { x: rng.random_range(0.0..4.0), y: rng.random_range(0.0..2.0) };
        counts[zones.assign(&p).unwrap().0] += 1;
    }
    for c in counts {
        assert!((c as f64 - 2500.0).abs() <= 0.05 * 2500.0, "{counts:?}");
    }
}
