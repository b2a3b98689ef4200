mod common;

use std::collections::BTreeMap;

use bidb::domain::cosine;
use bidb::rng;
use bidb::synth::{annotate, generate_world, ConditionSpec, SyntheticIdentity, World, WorldConfig};
use nalgebra::DMatrix;

fn clean_feature(world: &World, id: &SyntheticIdentity) -> Vec<f64> {
    let v = world.config.attribute_visibility;
    let attr: Vec<f64> = id.attributes.iter().map(|a| v * a).collect();
    let mut out = vec![0.0; world.config.feature_dim];
    world.maps.attribute.apply_add(&attr, &mut out);
    world.maps.idiosyncrasy.apply_add(&id.idiosyncrasy, &mut out);
    out
}

/// Without nuisance or frame noise every frame is a linear image of the
/// attributes, so least squares recovers them exactly.
#[test]
fn attributes_are_linearly_recoverable_without_nuisance() {
    let cfg = WorldConfig {
        frame_noise: 0.0,
        conditions: vec![ConditionSpec {
            name: "close".into(),
            strength: 0.0,
        }],
        ..common::tiny_world(5)
    };
    let cfg = WorldConfig {
        feature_dim: cfg.attribute_dim + cfg.idiosyncrasy_dim + 4,
        ..cfg
    };
    let world = generate_world(&cfg).unwrap();
    let truth: BTreeMap<&str, &SyntheticIdentity> = world
        .train_identities
        .iter()
        .map(|i| (i.identity_id.as_str(), i))
        .collect();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for m in &world.train {
        for f in 0..m.frames.len() {
            rows.extend_from_slice(m.frames.frame(f));
            targets.extend_from_slice(&truth[m.identity_id.as_str()].attributes);
        }
    }
    let (n, d, a) = (rows.len() / cfg.feature_dim, cfg.feature_dim, cfg.attribute_dim);
    let x = DMatrix::from_row_slice(n, d, &rows);
    let y = DMatrix::from_row_slice(n, a, &targets);
    let b = x.clone().svd(true, true).solve(&y, 1e-10).unwrap();
    let residual = (&x * &b - &y).abs().max();
    assert!(residual < 1e-9, "max residual {residual:e}");

    // The annotations are noisy readings of the same attributes.
    let ann_err: f64 = world
        .annotations
        .iter()
        .map(|(id, v)| {
            v.as_slice()
                .iter()
                .zip(&truth[id.as_str()].attributes)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (world.annotations.len() * a) as f64;
    let expected = cfg.annotator_noise.powi(2) / cfg.annotators as f64;
    assert!((ann_err / expected - 1.0).abs() < 0.35, "{ann_err} vs {expected}");
}

#[test]
fn annotation_mean_and_variance_match_monte_carlo() {
    let world = generate_world(&common::tiny_world(1)).unwrap();
    let id = &world.train_identities[0];
    let (k, sigma, draws) = (5, 0.3, 20_000);
    let mut r = rng::seeded(42);
    let dim = id.attributes.len();
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for _ in 0..draws {
        let a = annotate(id, k, sigma, &mut r).unwrap();
        for ((s, q), (x, t)) in sum.iter_mut().zip(&mut sq).zip(a.as_slice().iter().zip(&id.attributes)) {
            *s += x - t;
            *q += (x - t).powi(2);
        }
    }
    let var = sigma * sigma / k as f64;
    let se_mean = (var / draws as f64).sqrt();
    for (s, q) in sum.iter().zip(&sq) {
        let mean = s / draws as f64;
        assert!(mean.abs() < 5.0 * se_mean, "bias {mean}");
        let v = q / draws as f64;
        // Sample variance of a Gaussian has relative s.e. sqrt(2 / n) ~ 1%.
        assert!((v / var - 1.0).abs() < 0.06, "variance {v} vs {var}");
    }
}

/// Stronger nuisance lowers the average cosine between a probe frame and
/// its identity's noise-free feature.
#[test]
fn nuisance_strength_orders_condition_difficulty() {
    let order = ["close", "100-300m", "370-600m", "uav"];
    for seed in 0..3 {
        let cfg = WorldConfig {
            seed,
            feature_dim: 256,
            frames_per_video: 6,
            train_identities: 2,
            ..WorldConfig::default()
        };
        let world = generate_world(&cfg).unwrap();
        let ids: BTreeMap<&str, &SyntheticIdentity> = world
            .test_identities
            .iter()
            .map(|i| (i.identity_id.as_str(), i))
            .collect();
        let mut per: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for m in &world.probes {
            let clean = clean_feature(&world, ids[m.identity_id.as_str()]);
            for f in 0..m.frames.len() {
                let e = per.entry(m.condition.as_str()).or_default();
                e.0 += cosine(m.frames.frame(f), &clean).unwrap();
                e.1 += 1;
            }
        }
        let means: Vec<f64> = order.iter().map(|c| per[c].0 / per[c].1 as f64).collect();
        assert!(means.windows(2).all(|w| w[0] >= w[1]), "seed {seed}: {means:?}");
    }
}
