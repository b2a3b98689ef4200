//! Glue between media collections, training datasets and score matrices.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::AttributeVector;
use crate::error::{Error, Result};
use crate::nn::{AttributeDataset, IdentityDataset, IdentityHead};
use crate::scoring::{score_all_with, ScoreMatrix};
use crate::templates::{build_gallery_with, canonical_order, embed_all, FrameSampler, MediaItem};

/// Frame-level identity dataset grouped by media item. Classes are the
/// distinct identity ids in sorted order; the returned vector maps class
/// index to identity id.
pub fn identity_dataset(
    media: &[MediaItem],
    sampler: FrameSampler,
) -> Result<(IdentityDataset, Vec<String>)> {
    let sorted = canonical_order(media)?;
    let classes: Vec<String> = sorted
        .iter()
        .map(|m| m.identity_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let feature_dim = feature_dim(&sorted)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (g, m) in sorted.into_iter().enumerate() {
        let label = classes.binary_search(&m.identity_id).unwrap_or_default();
        let frames = sampler.select(m)?;
        features.extend(m.frames.gather(&frames));
        labels.extend(std::iter::repeat(label).take(frames.len()));
        groups.extend(std::iter::repeat(g).take(frames.len()));
    }
    Ok((
        IdentityDataset {
            feature_dim,
            classes: classes.len(),
            features,
            labels,
            groups,
        },
        classes,
    ))
}

/// Frame-level attribute dataset; every frame of an identity gets that
/// identity's annotation as target.
pub fn attribute_dataset(
    media: &[MediaItem],
    annotations: &BTreeMap<String, AttributeVector>,
    sampler: FrameSampler,
) -> Result<AttributeDataset> {
    let sorted = canonical_order(media)?;
    let feature_dim = feature_dim(&sorted)?;
    let attribute_dim = annotations
        .values()
        .next()
        .map(|a| a.as_slice().len())
        .ok_or_else(|| Error::Dataset("no annotations".into()))?;
    let ids: Vec<&String> = annotations.keys().collect();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut identities = Vec::new();
    let mut groups = Vec::new();
    for (g, m) in sorted.into_iter().enumerate() {
        let target = annotations.get(&m.identity_id).ok_or_else(|| {
            Error::Dataset(format!("identity {} has no annotation", m.identity_id))
        })?;
        if target.as_slice().len() != attribute_dim {
            return Err(Error::Dimension {
                expected: attribute_dim,
                got: target.as_slice().len(),
            });
        }
        let index = ids.binary_search(&&m.identity_id).unwrap_or_default();
        let frames = sampler.select(m)?;
        features.extend(m.frames.gather(&frames));
        for _ in &frames {
            targets.extend_from_slice(target.as_slice());
            identities.push(index);
            groups.push(g);
        }
    }
    Ok(AttributeDataset {
        feature_dim,
        attribute_dim,
        features,
        targets,
        identities,
        groups,
    })
}

fn feature_dim(media: &[&MediaItem]) -> Result<usize> {
    let first = media
        .first()
        .ok_or_else(|| Error::Dataset("no media".into()))?;
    let dim = first.frames.dim();
    if let Some(bad) = media.iter().find(|m| m.frames.dim() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: bad.frames.dim(),
        });
    }
    Ok(dim)
}

/// Probe-media id to identity id.
pub fn probe_identities(probes: &[MediaItem]) -> BTreeMap<String, String> {
    probes
        .iter()
        .map(|m| (m.media_id.clone(), m.identity_id.clone()))
        .collect()
}

/// Probe-media id to condition tag.
pub fn probe_conditions(probes: &[MediaItem]) -> BTreeMap<String, String> {
    probes
        .iter()
        .map(|m| (m.media_id.clone(), m.condition.clone()))
        .collect()
}

/// Evaluation-protocol score matrix: identity-level gallery templates,
/// one template per probe media item, every-sixth-frame sampling.
pub fn score_media(
    head: &IdentityHead,
    gallery: &[MediaItem],
    probes: &[MediaItem],
    pool: Option<&rayon::ThreadPool>,
) -> Result<ScoreMatrix> {
    let g = build_gallery_with(gallery, head, FrameSampler::EverySixth, pool)?;
    let p = embed_all(probes, head, FrameSampler::EverySixth, pool)?;
    score_all_with(&p, &g, pool)?.with_ground_truth(&probe_identities(probes))
}

/// Splits a matrix by probe condition.
pub fn split_by_condition(
    matrix: &ScoreMatrix,
    conditions: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, ScoreMatrix>> {
    let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in matrix.probe_ids() {
        let c = conditions
            .get(p)
            .ok_or_else(|| Error::Ingestion(format!("no condition for probe {p}")))?;
        groups.entry(c.clone()).or_default().insert(p.clone());
    }
    groups
        .into_iter()
        .map(|(c, ids)| Ok((c, matrix.select_probes(&ids)?)))
        .collect()
}
