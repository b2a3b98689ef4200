//! Mini-batch Adam training of the two heads.

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::heads::{AttributeHead, IdentityHead};
use super::layer::{PreluMode, Stack};
use super::loss::{argmax, attribute_loss_batch, cross_entropy_batch};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of samples used for training; the rest is validation.
    pub train_fraction: f64,
    pub prelu: PreluMode,
    /// Stop an identity run after the first epoch whose validation accuracy
    /// reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            train_fraction: 0.8,
            prelu: PreluMode::Shared,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("beta1", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta2", "must be in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must be in (0, 1)"));
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config("target_accuracy", "must be in [0, 1]"));
            }
        }
        Ok(())
    }

    fn adam(&self, shapes: &[usize]) -> AdamState {
        AdamState::new(shapes, self.learning_rate, self.beta1, self.beta2, self.epsilon)
    }
}

/// Features paired with annotator-averaged attribute targets.
#[derive(Debug, Clone)]
pub struct AttributeDataset {
    pub feature_dim: usize,
    pub attribute_dim: usize,
    /// Row-major `len x feature_dim`.
    pub features: Vec<f64>,
    /// Row-major `len x attribute_dim`.
    pub targets: Vec<f64>,
    /// Identity index of every sample.
    pub identities: Vec<usize>,
    /// Split unit of every sample, typically its media item; empty means
    /// every sample is its own unit.
    pub groups: Vec<usize>,
}

impl AttributeDataset {
    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Dataset("attribute dataset is empty".into()));
        }
        if self.features.len() != n * self.feature_dim {
            return Err(Error::Dimension {
                expected: n * self.feature_dim,
                got: self.features.len(),
            });
        }
        if self.targets.len() != n * self.attribute_dim {
            return Err(Error::Dimension {
                expected: n * self.attribute_dim,
                got: self.targets.len(),
            });
        }
        check_groups(&self.groups, n)?;
        let mut ids = self.identities.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(Error::Dataset(format!(
                "attribute training needs at least 2 identities, got {}",
                ids.len()
            )));
        }
        Ok(())
    }
}

/// Features paired with identity class labels in `0..classes`.
#[derive(Debug, Clone)]
pub struct IdentityDataset {
    pub feature_dim: usize,
    pub classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    /// Split unit of every sample; see [`AttributeDataset::groups`].
    pub groups: Vec<usize>,
}

impl IdentityDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Dataset("identity dataset is empty".into()));
        }
        if self.classes < 2 {
            return Err(Error::Dataset(format!(
                "identity training needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.features.len() != n * self.feature_dim {
            return Err(Error::Dimension {
                expected: n * self.feature_dim,
                got: self.features.len(),
            });
        }
        check_groups(&self.groups, n)?;
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::Index {
                index: bad,
                len: self.classes,
            });
        }
        Ok(())
    }
}

fn check_groups(groups: &[usize], n: usize) -> Result<()> {
    if !groups.is_empty() && groups.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: groups.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_samples: usize,
    pub validation_samples: usize,
}

impl TrainReport {
    /// First (1-based) epoch whose validation accuracy reaches `target`.
    pub fn epochs_to_accuracy(&self, target: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.validation_accuracy.is_some_and(|a| a >= target))
            .map(|e| e.epoch)
    }

    /// CSV with header `epoch,train_loss,validation_loss,validation_accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,validation_loss,validation_accuracy\n");
        for e in &self.epochs {
            let acc = e
                .validation_accuracy
                .map(|a| format!("{a:.17e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{}\n",
                e.epoch, e.train_loss, e.validation_loss, acc
            ));
        }
        out
    }
}

enum Task<'a> {
    Regression { targets: &'a [f64], width: usize },
    Classification { labels: &'a [usize], classes: usize },
}

impl Task<'_> {
    fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// Seeded split of `0..n` into (train, validation) index lists.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, streams::SPLIT), &mut idx);
    let mut n_train = (train_fraction * n as f64).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    } else {
        n_train = n;
    }
    let val = idx.split_off(n_train);
    (idx, val)
}

/// Seeded split that keeps every group on one side. Groups are shuffled
/// and cut by count; sample indices come back in ascending order.
pub fn split_groups(groups: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if groups.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let (train_groups, _) = split_indices(ids.len(), train_fraction, seed);
    let mut is_train = vec![false; ids.len()];
    for g in train_groups {
        is_train[g] = true;
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let k = ids.binary_search(g).unwrap_or_default();
        if is_train[k] {
            train.push(i);
        } else {
            val.push(i);
        }
    }
    (train, val)
}

/// Trains a fresh attribute head on annotator-averaged targets.
pub fn train_attribute_head(
    data: &AttributeDataset,
    cfg: &TrainConfig,
) -> Result<(AttributeHead, TrainReport)> {
    data.validate()?;
    let head = AttributeHead::init_for_input(
        data.feature_dim,
        data.attribute_dim,
        cfg.prelu,
        &mut rng::stream(cfg.seed, streams::ATTRIBUTE_HEAD_INIT),
    )?;
    train_attribute_head_from(head, data, cfg)
}

/// Continues training an existing attribute head of any widths.
pub fn train_attribute_head_from(
    mut head: AttributeHead,
    data: &AttributeDataset,
    cfg: &TrainConfig,
) -> Result<(AttributeHead, TrainReport)> {
    cfg.validate()?;
    data.validate()?;
    let task = Task::Regression {
        targets: &data.targets,
        width: data.attribute_dim,
    };
    let report = run(head.stack_mut(), &data.features, &data.groups, data.len(), &task, cfg)?;
    Ok((head, report))
}

/// Trains an identity head. With `init`, the attribute head's first encoder
/// layer seeds the embedding layer; otherwise every layer starts fresh.
pub fn train_identity_head(
    data: &IdentityDataset,
    cfg: &TrainConfig,
    init: Option<&AttributeHead>,
) -> Result<(IdentityHead, TrainReport)> {
    data.validate()?;
    let mut head = IdentityHead::with_widths(
        data.feature_dim,
        init.map_or(crate::domain::EMBEDDING_DIM, |a| {
            a.first_layer().dense.out_dim()
        }),
        data.classes,
        cfg.prelu,
        &mut rng::stream(cfg.seed, streams::HEAD_INIT),
    )?;
    if let Some(attr) = init {
        head.transfer_embedding_layer(attr.first_layer())?;
    }
    train_identity_head_from(head, data, cfg)
}

pub fn train_identity_head_from(
    mut head: IdentityHead,
    data: &IdentityDataset,
    cfg: &TrainConfig,
) -> Result<(IdentityHead, TrainReport)> {
    cfg.validate()?;
    data.validate()?;
    if head.classes() != data.classes {
        return Err(Error::Dimension {
            expected: head.classes(),
            got: data.classes,
        });
    }
    let task = Task::Classification {
        labels: &data.labels,
        classes: data.classes,
    };
    let report = run(head.stack_mut(), &data.features, &data.groups, data.len(), &task, cfg)?;
    Ok((head, report))
}

fn run(
    stack: &mut Stack,
    features: &[f64],
    groups: &[usize],
    n: usize,
    task: &Task<'_>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let dim = stack.input_dim();
    let (mut train, val) = if groups.is_empty() {
        split_indices(n, cfg.train_fraction, cfg.seed)
    } else {
        split_groups(groups, cfg.train_fraction, cfg.seed)
    };
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        train_samples: train.len(),
        validation_samples: val.len(),
    };
    let mut adam = cfg.adam(&stack.param_shapes());
    let mut shuffler = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut xb = Vec::with_capacity(cfg.batch_size * dim);

    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut shuffler, &mut train);
        let mut loss_sum = 0.0;
        for chunk in train.chunks(cfg.batch_size) {
            gather(features, dim, chunk, &mut xb);
            let cache = stack.forward_cached(&xb, chunk.len())?;
            let mut d_out = vec![0.0; cache.output().len()];
            let loss = batch_loss(task, chunk, cache.output(), &mut d_out)?;
            loss_sum += loss * chunk.len() as f64;
            let grads = stack.backward(&cache, &d_out)?;
            let tensors = grads.tensors();
            adam.step(&mut stack.params_mut(), &tensors)?;
        }
        if !stack.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let (validation_loss, validation_accuracy) = evaluate(stack, features, &val, task)?;
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            validation_loss,
            validation_accuracy,
        });
        if let (Some(target), Some(acc)) = (cfg.target_accuracy, validation_accuracy) {
            if acc >= target {
                break;
            }
        }
    }
    Ok(report)
}

fn gather(features: &[f64], dim: usize, rows: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &r in rows {
        out.extend_from_slice(&features[r * dim..(r + 1) * dim]);
    }
}

fn batch_loss(task: &Task<'_>, rows: &[usize], output: &[f64], d_out: &mut [f64]) -> Result<f64> {
    match task {
        Task::Regression { targets, width } => {
            let mut t = Vec::with_capacity(rows.len() * width);
            gather(targets, *width, rows, &mut t);
            attribute_loss_batch(output, &t, *width, d_out)
        }
        Task::Classification { labels, classes } => {
            let l: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            cross_entropy_batch(output, *classes, &l, d_out)
        }
    }
}

const EVAL_CHUNK: usize = 256;

fn evaluate(
    stack: &Stack,
    features: &[f64],
    rows: &[usize],
    task: &Task<'_>,
) -> Result<(f64, Option<f64>)> {
    if rows.is_empty() {
        return Ok((f64::NAN, None));
    }
    let dim = stack.input_dim();
    let width = stack.output_dim();
    let mut xb = Vec::new();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in rows.chunks(EVAL_CHUNK) {
        gather(features, dim, chunk, &mut xb);
        let out = stack.forward(&xb, chunk.len())?;
        let mut scratch = vec![0.0; out.len()];
        loss_sum += batch_loss(task, chunk, &out, &mut scratch)? * chunk.len() as f64;
        if let Task::Classification { labels, .. } = task {
            for (row, &r) in out.chunks_exact(width).zip(chunk) {
                if argmax(row) == labels[r] {
                    correct += 1;
                }
            }
        }
    }
    let accuracy = task
        .is_classification()
        .then(|| correct as f64 / rows.len() as f64);
    Ok((loss_sum / rows.len() as f64, accuracy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_80_20_and_disjoint() {
        let (t, v) = split_indices(100, 0.8, 5);
        assert_eq!((t.len(), v.len()), (80, 20));
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.8, 5), (t, v));
    }

    #[test]
    fn group_split_keeps_groups_whole() {
        let groups: Vec<usize> = (0..50).map(|i| i / 5).collect();
        let (t, v) = split_groups(&groups, 0.8, 3);
        assert_eq!((t.len(), v.len()), (40, 10));
        for &i in &v {
            assert!(t.iter().all(|&j| groups[j] != groups[i]));
        }
        assert_eq!(split_groups(&groups, 0.8, 3), (t, v));
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = TrainConfig {
            train_fraction: 1.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train_fraction"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn degenerate_datasets_rejected() {
        let one_identity = AttributeDataset {
            feature_dim: 2048,
            attribute_dim: 30,
            features: vec![0.0; 2 * 2048],
            targets: vec![0.0; 60],
            identities: vec![0, 0],
            groups: vec![],
        };
        assert!(matches!(
            train_attribute_head(&one_identity, &TrainConfig::default()),
            Err(Error::Dataset(_))
        ));
        let empty = IdentityDataset {
            feature_dim: 4,
            classes: 3,
            features: vec![],
            labels: vec![],
            groups: vec![],
        };
        assert!(matches!(
            train_identity_head(&empty, &TrainConfig::default(), None),
            Err(Error::Dataset(_))
        ));
        let single_class = IdentityDataset {
            feature_dim: 4,
            classes: 1,
            features: vec![0.0; 8],
            labels: vec![0, 0],
            groups: vec![],
        };
        assert!(matches!(
            train_identity_head(&single_class, &TrainConfig::default(), None),
            Err(Error::Dataset(_))
        ));
    }
}
