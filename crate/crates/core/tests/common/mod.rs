//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bidb::nn::loss::{attribute_loss, cross_entropy};
use bidb::nn::{PreluMode, Stack};
use bidb::scoring::ScoreMatrix;
use bidb::synth::WorldConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random matrix with up to `max_p` probes and `max_g` gallery ids. Scores
/// are drawn from a coarse grid half of the time so ties are common. At
/// least one probe is mated; others are mated with probability 0.7.
pub fn random_matrix<R: Rng>(r: &mut R, max_p: usize, max_g: usize) -> ScoreMatrix {
    let p = r.gen_range(1..=max_p);
    let g = r.gen_range(1..=max_g);
    let coarse = r.gen_bool(0.5);
    let probes: Vec<String> = (0..p).map(|i| format!("p{i:03}")).collect();
    let gallery: Vec<String> = (0..g).map(|j| format!("g{j:03}")).collect();
    let scores = (0..p * g)
        .map(|_| {
            if coarse {
                r.gen_range(-4i32..=4) as f64 / 4.0
            } else {
                r.gen_range(-1.0..=1.0)
            }
        })
        .collect();
    let mut mated = BTreeMap::new();
    for (i, probe) in probes.iter().enumerate() {
        if i == 0 || r.gen_bool(0.7) {
            mated.insert(probe.clone(), gallery[r.gen_range(0..g)].clone());
        }
    }
    ScoreMatrix::new(probes, gallery, scores, Some(mated)).unwrap()
}

/// CMC by sorting each mated row with the mate placed after every tie.
pub fn oracle_cmc(m: &ScoreMatrix) -> Vec<f64> {
    let mated = m.mated().unwrap();
    let mut ranks = Vec::new();
    for (i, p) in m.probe_ids().iter().enumerate() {
        let Some(mate) = mated.get(p) else { continue };
        let mut entries: Vec<(f64, bool)> = m
            .gallery_ids()
            .iter()
            .zip(m.row(i))
            .map(|(id, &s)| (s, id == mate))
            .collect();
        // Descending score; among equal scores the mate sorts last.
        entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        ranks.push(entries.iter().position(|e| e.1).unwrap() + 1);
    }
    (1..=m.gallery_len())
        .map(|r| ranks.iter().filter(|&&k| k <= r).count() as f64 / ranks.len() as f64)
        .collect()
}

/// (threshold, FAR, TAR) at `-inf`, every distinct score ascending, `+inf`,
/// counting `score >= threshold` by linear scan.
pub fn oracle_roc(m: &ScoreMatrix) -> Vec<(f64, f64, f64)> {
    let mated = m.mated().unwrap();
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (i, p) in m.probe_ids().iter().enumerate() {
        for (j, g) in m.gallery_ids().iter().enumerate() {
            if mated.get(p) == Some(g) {
                genuine.push(m.score(i, j));
            } else {
                impostor.push(m.score(i, j));
            }
        }
    }
    let mut thresholds: Vec<f64> = m.scores().to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds.insert(0, f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    let frac = |v: &[f64], t: f64| v.iter().filter(|&&s| s >= t).count() as f64 / v.len() as f64;
    thresholds
        .into_iter()
        .map(|t| (t, frac(&impostor, t), frac(&genuine, t)))
        .collect()
}

pub enum LossKind {
    CrossEntropy,
    Attribute,
}

fn total_loss(stack: &Stack, x: &[f64], batch: usize, loss: &LossKind, labels: &[usize], targets: &[f64]) -> f64 {
    let out = stack.forward(x, batch).unwrap();
    let width = stack.output_dim();
    let sum: f64 = out
        .chunks_exact(width)
        .enumerate()
        .map(|(b, row)| match loss {
            LossKind::CrossEntropy => cross_entropy(row, labels[b]).unwrap(),
            LossKind::Attribute => attribute_loss(row, &targets[b * width..(b + 1) * width]).unwrap(),
        })
        .sum();
    sum / batch as f64
}

/// Largest relative deviation between the analytic gradient of a random
/// miniature head and central differences with step `eps`. The relative
/// error uses `max(|a|, |n|, 1e-6)` as denominator so parameters with
/// (near-)zero gradient are judged on an absolute scale.
pub fn gradient_check(seed: u64, widths: &[usize], mode: PreluMode, loss: LossKind, eps: f64) -> f64 {
    let mut r = rng(seed);
    let mut stack = Stack::init(widths, mode, &mut r).unwrap();
    // Move the PReLU slopes away from their shared init so slope gradients
    // differ per channel.
    for layer in stack.layers_mut() {
        if let Some(p) = &mut layer.prelu {
            let n = p.slopes().len();
            *p = bidb::nn::Prelu::from_slopes((0..n).map(|_| r.gen_range(0.05..0.5)).collect());
        }
    }
    let batch = 3;
    let x: Vec<f64> = (0..batch * widths[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
    let out_dim = *widths.last().unwrap();
    let labels: Vec<usize> = (0..batch).map(|_| r.gen_range(0..out_dim)).collect();
    let targets: Vec<f64> = (0..batch * out_dim).map(|_| r.gen_range(-1.0..1.0)).collect();

    let cache = stack.forward_cached(&x, batch).unwrap();
    let mut d_out = vec![0.0; cache.output().len()];
    match loss {
        LossKind::CrossEntropy => {
            bidb::nn::loss::cross_entropy_batch(cache.output(), out_dim, &labels, &mut d_out).unwrap();
        }
        LossKind::Attribute => {
            bidb::nn::loss::attribute_loss_batch(cache.output(), &targets, out_dim, &mut d_out).unwrap();
        }
    }
    let grads = stack.backward(&cache, &d_out).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(<[f64]>::to_vec).collect();

    let mut worst: f64 = 0.0;
    for (t, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let orig = stack.params_mut()[t][k];
            stack.params_mut()[t][k] = orig + eps;
            let up = total_loss(&stack, &x, batch, &loss, &labels, &targets);
            stack.params_mut()[t][k] = orig - eps;
            let down = total_loss(&stack, &x, batch, &loss, &labels, &targets);
            stack.params_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Rank-1/10/20 fixture: 100 mated probes over 30 gallery ids, with 36
/// mates at rank 1, 88 within rank 10 and 95 within rank 20.
pub fn table4_fixture() -> ScoreMatrix {
    let g = 30;
    let gallery: Vec<String> = (0..g).map(|j| format!("G{j:02}")).collect();
    let mut ranks = vec![1; 36];
    ranks.extend((0..52).map(|i| 2 + i % 9));
    ranks.extend((0..7).map(|i| 11 + i % 10));
    ranks.extend((0..5).map(|i| 21 + i % 10));
    let mut probes = Vec::new();
    let mut scores = Vec::new();
    let mut mated = BTreeMap::new();
    for (i, &rank) in ranks.iter().enumerate() {
        let p = format!("P{i:03}");
        let mate = i % g;
        // Non-mates take descending scores; the mate slots in below the
        // first rank - 1 of them.
        let mut others = (0..g - 1).map(|k| 0.9 - 0.02 * k as f64);
        let mut row = vec![0.0; g];
        for (j, slot) in row.iter_mut().enumerate() {
            if j != mate {
                *slot = others.next().unwrap();
            }
        }
        row[mate] = 0.9 - 0.02 * (rank as f64 - 1.5);
        mated.insert(p.clone(), gallery[mate].clone());
        probes.push(p);
        scores.extend(row);
    }
    // Columns other than the mate were filled in column order, so the
    // score of the k-th non-mate is 0.9 - 0.02 k regardless of position.
    ScoreMatrix::new(probes, gallery, scores, Some(mated)).unwrap()
}

/// A world small enough for CLI round trips in a second or two.
pub fn tiny_world(seed: u64) -> WorldConfig {
    WorldConfig {
        seed,
        feature_dim: 48,
        attribute_factors: 6,
        idiosyncrasy_dim: 8,
        nuisance_private_dim: 8,
        clothing_private_dim: 4,
        train_identities: 12,
        gallery_identities: 8,
        probe_identities: 10,
        mated_probe_identities: 6,
        train_videos_per_identity: 2,
        frames_per_video: 12,
        ..WorldConfig::default()
    }
}
