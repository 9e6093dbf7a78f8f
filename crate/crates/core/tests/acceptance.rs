//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svann_core::eval::{self, iou, BoundingBox, Counts};
use svann_core::experiment::{self, ExperimentConfig};
use svann_core::geom::{distance, DistanceMetric, GeoPoint, Neighbor, SpatialIndex};
use svann_core::nn::{Activation, NetworkSpec, Parameters};
use svann_core::partition::{Rect, ZoneId, ZoneMap};
use svann_core::predict::{predict_distance_weighted, predict_zonal, VoteRule};
use svann_core::suite::{self, SuiteOptions};
use svann_core::synth;
use svann_core::train::{self, Anchor, ModelSite, RegimeKind, TrainingRegime};
use svann_core::{Dataset, LabeledSample};

type Check = Result<String, String>;

/// Name, check and optional runtime budget.
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Units in the last place between two finite floats of the same sign.
fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.signum() != b.signum() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

fn max_ulps(a: &Parameters, b: &Parameters) -> u64 {
    assert_eq!(a.layers.len(), b.layers.len());
    a.layers
        .iter()
        .zip(&b.layers)
        .flat_map(|(la, lb)| la.weights.iter().chain(&la.biases).zip(lb.weights.iter().chain(&lb.biases)).map(|(x, y)| ulps(*x, *y)))
        .max()
        .unwrap_or(0)
}

// --- 1 ---------------------------------------------------------------------

fn harmonic_mean_reproduction() -> Check {
    let table = [
        (0.794, 0.419, 0.549),
        (0.713, 0.341, 0.461),
        (0.924, 0.674, 0.779),
        (0.886, 0.618, 0.728),
        (0.836, 0.485, 0.614),
        (0.771, 0.412, 0.537),
    ];
    let mut worst: f64 = 0.0;
    for (p, r, published) in table {
        let f1 = eval::f1_from(p, r);
        ensure(f1.defined, || format!("F1 undefined for ({p}, {r})"))?;
        let dev = (f1.value - published).abs();
        worst = worst.max(dev);
        ensure(dev <= 0.0005, || format!("({p}, {r}) gives {:.6}, published {published}", f1.value))?;
    }
    // the same law through counts: 0.5 precision and recall from tp=1, fp=1, fn=1
    let c = eval::prf1(Counts::new(1, 1, 1));
    ensure(c.f1.value == 0.5, || format!("count path gives {}", c.f1.value))?;
    Ok(format!("6/6 pairs, max deviation {worst:.2e}"))
}

// --- 2 ---------------------------------------------------------------------

fn simpson_benchmark() -> Check {
    let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(1).build())?;
    let result = ok(pool.install(|| suite::run_simpson_suite(&suite::DEFAULT_SUITE_SEEDS, &SuiteOptions::default())))?;
    let s = result.svann_mean.macro_f1;
    let o = result.osfa_mean.macro_f1;
    ensure(result.per_seed.len() == 10, || "expected 10 seeds".into())?;
    ensure(s >= suite::SVANN_MIN_MEAN_MACRO_F1, || format!("SVANN mean macro-F1 {s:.4} < 0.90"))?;
    ensure(o <= suite::OSFA_MAX_MEAN_MACRO_F1, || format!("OSFA mean macro-F1 {o:.4} > 0.75"))?;
    ensure(result.failing_seeds.is_empty(), || format!("SVANN does not beat OSFA on seeds {:?}", result.failing_seeds))?;
    Ok(format!("SVANN {s:.4}, OSFA {o:.4}, SVANN ahead on 10/10 seeds, 1 thread"))
}

// --- 3 ---------------------------------------------------------------------

fn osfa_collapse() -> Check {
    let seed = 11;
    let b = ok(synth::simpson_benchmark(seed))?;
    let spec = ok(NetworkSpec::new(vec![2, 8, 2], Activation::Relu))?;
    let regime = |kind| TrainingRegime::new(kind);
    let osfa = ok(train::train_osfa(&b.train, &spec, &regime(RegimeKind::Osfa), seed))?.sites[0].params.clone();
    let n = b.train.len();
    let centre = b.zones.extent().centroid();
    let metric = DistanceMetric::PlanarEuclidean;

    let single = ok(ZoneMap::grid(*b.zones.extent(), 1, 1))?;
    let fixed = ok(train::train_fixed_partition(&b.train, &spec, &single, &regime(RegimeKind::FixedPartition), seed))?;
    let knn = ok(train::train_knn(&b.train, &spec, &[centre], metric, &regime(RegimeKind::Knn { k: n }), seed))?;
    let radius = b.zones.extent().diagonal();
    let ball = ok(train::train_distance_bound(&b.train, &spec, &[centre], metric, &regime(RegimeKind::DistanceBound { radius }), seed))?;

    // d = 1 for every sample: move the training samples onto the four axis
    // points at unit distance from the anchor
    let axis = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
    let unit = ok(Dataset::new(
        b.train
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| LabeledSample { loc: GeoPoint { x: axis[i % 4].0, y: axis[i % 4].1 }, ..s.clone() })
            .collect(),
    ))?;
    let origin = GeoPoint { x: 0.0, y: 0.0 };
    ensure(unit.samples().iter().all(|s| distance(&origin, &s.loc, metric).unwrap() == 1.0), || "axis points not at d = 1".into())?;
    let unit_osfa = ok(train::train_osfa(&unit, &spec, &regime(RegimeKind::Osfa), seed))?.sites[0].params.clone();
    let dw =
        ok(train::train_distance_weighted(&unit, &spec, &[origin], metric, &regime(RegimeKind::DistanceWeighted { d_min: 0.1 }), seed))?;

    let cases = [
        ("1 zone", fixed.sites[0].params.clone(), &osfa),
        ("k = n", knn.sites[0].params.clone(), &osfa),
        ("covering ball", ball.sites[0].params.clone(), &osfa),
        ("d = 1", dw.sites[0].params.clone(), &unit_osfa),
    ];
    let mut notes = Vec::new();
    for (name, params, reference) in cases {
        let u = max_ulps(&params, reference);
        ensure(u <= 1, || format!("{name}: parameters differ by {u} ulps"))?;
        notes.push(format!("{name} {u} ulp"));
    }
    ensure(ball.audits[0].sample_ids.len() == n, || "covering ball misses samples".into())?;
    Ok(notes.join(", "))
}

// --- 4 ---------------------------------------------------------------------

/// Hidden pre-activations, used to reject inputs that sit near a ReLU kink.
fn hidden_pre(params: &Parameters, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut current = x.to_vec();
    for layer in &params.layers[..params.layers.len() - 1] {
        let z: Vec<f64> =
            (0..layer.outputs).map(|r| (0..layer.inputs).map(|c| layer.weight(r, c) * current[c]).sum::<f64>() + layer.biases[r]).collect();
        out.extend(&z);
        current = z
            .iter()
            .map(|v| match params.activation {
                Activation::Relu => v.max(0.0),
                Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            })
            .collect();
    }
    out
}

fn loss(params: &Parameters, x: &[f64], label: usize) -> f64 {
    params.backprop(x, label).unwrap().0
}

fn gradient_check() -> Check {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    // gradients smaller than this are compared absolutely
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let mut networks = 0;
    while networks < 100 {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 1..depth {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(2..=4));
        let activation = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Sigmoid };
        let spec = ok(NetworkSpec::new(sizes.clone(), activation))?;
        let mut params = ok(Parameters::init(&spec, rng.random()))?;
        for l in &mut params.layers {
            l.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let label = rng.random_range(0..*sizes.last().unwrap());
        if activation == Activation::Relu && hidden_pre(&params, &x).iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        networks += 1;
        let (_, g) = ok(params.backprop(&x, label))?;
        for li in 0..params.layers.len() {
            let (rows, cols) = (params.layers[li].outputs, params.layers[li].inputs);
            for r in 0..rows {
                for c in 0..=cols {
                    // c == cols stands for the bias of row r
                    let analytic = if c == cols { g.layers[li].error[r] } else { g.layers[li].weight_gradient(r, c) };
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    if c == cols {
                        plus.layers[li].biases[r] += EPS;
                        minus.layers[li].biases[r] -= EPS;
                    } else {
                        plus.layers[li].weights[r * cols + c] += EPS;
                        minus.layers[li].weights[r * cols + c] -= EPS;
                    }
                    let numeric = (loss(&plus, &x, label) - loss(&minus, &x, label)) / (2.0 * EPS);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
                    worst = worst.max(rel);
                    checked += 1;
                    ensure(rel <= TOL, || {
                        format!("network {sizes:?} {activation:?} layer {li} ({r},{c}): analytic {analytic:e}, numeric {numeric:e}")
                    })?;
                }
            }
        }
    }
    Ok(format!("100 networks, {checked} entries, max relative error {worst:.1e}"))
}

// --- 5 ---------------------------------------------------------------------

fn brute_knn(points: &[(GeoPoint, u64)], q: &GeoPoint, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> =
        points.iter().map(|(p, id)| Neighbor { id: *id, distance: distance(q, p, DistanceMetric::PlanarEuclidean).unwrap() }).collect();
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

fn brute_within(points: &[(GeoPoint, u64)], q: &GeoPoint, r: f64) -> Vec<Neighbor> {
    let mut all = brute_knn(points, q, points.len());
    all.retain(|n| n.distance <= r);
    all
}

fn index_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<(GeoPoint, u64)> =
        (0..1000).map(|i| (GeoPoint { x: rng.random_range(0.0..100.0), y: rng.random_range(0.0..100.0) }, i)).collect();
    let index = ok(SpatialIndex::build(points.iter().copied(), DistanceMetric::PlanarEuclidean))?;
    let mut returned = 0;
    for i in 0..100 {
        let q = GeoPoint { x: rng.random_range(-10.0..110.0), y: rng.random_range(-10.0..110.0) };
        let k = rng.random_range(1..=50);
        let got = ok(index.knn(&q, k))?;
        ensure(got == brute_knn(&points, &q, k), || format!("knn query {i} (k = {k}) differs from brute force"))?;
        let r = rng.random_range(0.0..25.0);
        let got = ok(index.within(&q, r))?;
        ensure(got == brute_within(&points, &q, r), || format!("within query {i} (r = {r}) differs from brute force"))?;
        returned += got.len();
    }
    Ok(format!("100 knn + 100 within queries match, {returned} ball hits"))
}

// --- 6 ---------------------------------------------------------------------

fn factor_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = ok(NetworkSpec::new(vec![3, 5, 4, 3], Activation::Sigmoid))?;
    for trial in 0..200 {
        let params = ok(Parameters::init(&spec, trial))?;
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = ok(params.backprop(&x, rng.random_range(0..3)))?;
        let eta = rng.random_range(1e-4..1.0);
        let d_min: f64 = rng.random_range(0.01..1.0);
        let at_two = ok(params.distance_weighted_step(&g, eta, 2.0, d_min))?;
        ensure(at_two == ok(params.sgd_step(&g, eta / 4.0))?, || format!("trial {trial}: d = 2 is not sgd at eta / 4"))?;
        let below = d_min * rng.random_range(0.0..1.0);
        let clamped = ok(params.distance_weighted_step(&g, eta, below, d_min))?;
        let expected = ok(params.sgd_step(&g, eta / (d_min * d_min)))?;
        ensure(clamped == expected, || format!("trial {trial}: clamp at d = {below} < d_min = {d_min} differs"))?;
    }
    Ok("200 trials, d = 2 and clamped cases bit-identical to sgd_step".into())
}

// --- 7 ---------------------------------------------------------------------

/// A one-feature site that always predicts `class`.
fn constant_site(site_id: usize, anchor: Anchor, class: usize) -> ModelSite {
    let spec = NetworkSpec::new(vec![1, 3], Activation::Relu).unwrap();
    let mut params = Parameters::zeros(&spec).unwrap();
    params.layers[0].biases[class] = 1.0;
    ModelSite { site_id, anchor, regime: TrainingRegime::new(RegimeKind::Osfa), seed: 0, params }
}

fn voting_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let metric = DistanceMetric::PlanarEuclidean;
    let d_min = 1e-3;
    let q = GeoPoint { x: 0.0, y: 0.0 };
    for trial in 0..2000 {
        let n = rng.random_range(1..=9);
        let raw: Vec<(f64, f64, usize)> = (0..n)
            .map(|_| {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = rng.random_range(0.01..10.0);
                (r * angle.cos(), r * angle.sin(), rng.random_range(0..3))
            })
            .collect();
        let scale = rng.random_range(0.5..20.0);
        let exponent = [1.0, 2.0, 3.0][trial % 3];
        let sites = |s: f64| -> Vec<ModelSite> {
            raw.iter().enumerate().map(|(i, (x, y, c))| constant_site(i, Anchor::Point { x: x * s, y: y * s }, *c)).collect()
        };
        let a = ok(predict_distance_weighted(&sites(1.0), None, metric, &[0.0], &q, exponent, d_min))?;
        let b = ok(predict_distance_weighted(&sites(scale), None, metric, &[0.0], &q, exponent, d_min))?;
        ensure(a.class == b.class, || format!("trial {trial}: scaling by {scale} changed the prediction"))?;
    }

    let zones = ok(ZoneMap::grid(Rect::unit(), 1, 2))?;
    let z0 = Anchor::Zone { zone: ZoneId(0) };
    let loc = GeoPoint { x: 0.25, y: 0.5 };
    let forward = [constant_site(0, z0, 2), constant_site(1, z0, 1), constant_site(2, Anchor::Zone { zone: ZoneId(1) }, 0)];
    let mut backward = forward.clone();
    backward[..2].reverse();
    for sites in [&forward[..], &backward[..]] {
        for _ in 0..3 {
            let p = ok(predict_zonal(sites, &zones, VoteRule::Majority, &[0.0], &loc))?;
            ensure(p.class == 1, || format!("zonal 1-1 tie resolved to {} (expected the lower class 1)", p.class))?;
        }
    }

    let mut worst_asym: f64 = 0.0;
    for i in 0..10_000 {
        let mut bx = || {
            BoundingBox::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.01..6.0),
                rng.random_range(0.01..6.0),
            )
            .unwrap()
        };
        let (a, b) = (bx(), bx());
        let ab = ok(iou(&a, &b))?;
        let ba = ok(iou(&b, &a))?;
        worst_asym = worst_asym.max((ab - ba).abs());
        ensure(ab == ba, || format!("pair {i}: iou not symmetric ({ab} vs {ba})"))?;
        ensure((0.0..=1.0).contains(&ab), || format!("pair {i}: iou {ab} out of range"))?;
        ensure((ok(iou(&a, &a))? - 1.0).abs() < 1e-12, || format!("pair {i}: self iou is not 1"))?;
    }
    Ok("2000 scaling cases, zonal tie to lower class, 10000 IoU pairs".into())
}

// --- 8 ---------------------------------------------------------------------

fn compare_determinism() -> Check {
    let config = ExperimentConfig::simpson(42);
    let first = ok(tempfile::tempdir())?;
    let second = ok(tempfile::tempdir())?;
    let a = ok(experiment::cmd_compare(&config, first.path()))?;
    ok(experiment::cmd_compare(&config, second.path()))?;
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("comparison.json")).unwrap();
    let (x, y) = (read(&first), read(&second));
    ensure(x == y, || "comparison.json differs between runs".into())?;
    ensure(a.rows.len() == 6, || format!("expected 6 rows, got {}", a.rows.len()))?;
    Ok(format!("two runs byte-identical ({} bytes)", x.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 harmonic-mean reproduction", harmonic_mean_reproduction, Some(Duration::from_secs(1))),
        ("2 simpson benchmark", simpson_benchmark, Some(Duration::from_secs(60))),
        ("3 osfa collapse equalities", osfa_collapse, Some(Duration::from_secs(30))),
        ("4 gradient correctness", gradient_check, Some(Duration::from_secs(10))),
        ("5 spatial-index oracle", index_oracle, Some(Duration::from_secs(5))),
        ("6 distance factor law", factor_law, None),
        ("7 voting invariants", voting_invariants, None),
        ("8 compare determinism", compare_determinism, None),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(limit)) if elapsed >= limit => Err(format!("took {elapsed:.2?}, budget {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
