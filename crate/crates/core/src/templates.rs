//! Media items, frame sampling, and template construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{mean_vector, norm};
use crate::error::{Error, Result};
use crate::nn::IdentityHead;
use crate::rng;

/// Frame stride used when embedding test media.
pub const TEST_FRAME_STRIDE: usize = 6;
/// Frames drawn per training video.
pub const TRAIN_FRAMES_PER_VIDEO: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        })
    }
}

impl FromStr for MediaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(MediaKind::Image),
            "video" => Ok(MediaKind::Video),
            other => Err(Error::Ingestion(format!("unknown media kind `{other}`"))),
        }
    }
}

/// Frame-ordered features, row-major `frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    dim: usize,
    values: Vec<f64>,
}

impl Frames {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::Dimension {
                expected: dim,
                got: values.len(),
            });
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows<V: AsRef<[f64]>>(rows: &[V]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyAggregate)?.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copies the selected frames into one contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.frame(i));
        }
        out
    }
}

/// One gallery or probe item: a still image or a video.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaItem {
    pub media_id: String,
    pub identity_id: String,
    pub kind: MediaKind,
    /// Capture condition, e.g. `close`, `100-300m`, `370-600m`, `uav`.
    pub condition: String,
    pub frames: Frames,
}

impl MediaItem {
    pub fn new(
        media_id: impl Into<String>,
        identity_id: impl Into<String>,
        kind: MediaKind,
        condition: impl Into<String>,
        frames: Frames,
    ) -> Result<Self> {
        let item = Self {
            media_id: media_id.into(),
            identity_id: identity_id.into(),
            kind,
            condition: condition.into(),
            frames,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::EmptyMedia(self.media_id.clone()));
        }
        if self.kind == MediaKind::Image && self.frames.len() != 1 {
            return Err(Error::Ingestion(format!(
                "image {} has {} frames, expected exactly 1",
                self.media_id,
                self.frames.len()
            )));
        }
        Ok(())
    }
}

/// Averaged embedding for one media item or one gallery identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub owner_id: String,
    pub vector: Vec<f64>,
    pub source_count: usize,
}

/// Gallery identities in id order, one template each.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    templates: BTreeMap<String, Template>,
}

impl Gallery {
    pub fn from_templates(templates: Vec<Template>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::Dataset("gallery is empty".into()));
        }
        let mut map = BTreeMap::new();
        for t in templates {
            let id = t.owner_id.clone();
            if map.insert(id.clone(), t).is_some() {
                return Err(Error::Ingestion(format!("duplicate gallery identity {id}")));
            }
        }
        Ok(Self { templates: map })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, identity_id: &str) -> Option<&Template> {
        self.templates.get(identity_id)
    }

    pub fn contains(&self, identity_id: &str) -> bool {
        self.templates.contains_key(identity_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Templates in identity-id order.
    pub fn templates(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }
}

/// Indices `0, 6, 12, ...` below `frame_count`.
pub fn sample_test_frames(frame_count: usize) -> Result<Vec<usize>> {
    if frame_count == 0 {
        return Err(Error::EmptyMedia("zero frames".into()));
    }
    Ok((0..frame_count).step_by(TEST_FRAME_STRIDE).collect())
}

/// Splits the frames into `k` contiguous near-equal partitions and draws
/// one index uniformly from each. With fewer than `k` frames every frame
/// is returned.
pub fn sample_train_frames<R: Rng + ?Sized>(
    frame_count: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if frame_count == 0 {
        return Err(Error::EmptyMedia("zero frames".into()));
    }
    if k == 0 {
        return Err(Error::config("frames_per_video", "must be at least 1"));
    }
    if frame_count <= k {
        return Ok((0..frame_count).collect());
    }
    Ok((0..k)
        .map(|i| {
            let lo = i * frame_count / k;
            let hi = (i + 1) * frame_count / k;
            rng.gen_range(lo..hi)
        })
        .collect())
}

/// Which frames of a media item are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSampler {
    /// Every sixth frame from the first; the evaluation protocol.
    EverySixth,
    /// One random frame from each of `per_video` partitions, seeded per
    /// media id so the draw does not depend on processing order.
    Partitioned { per_video: usize, seed: u64 },
    All,
}

impl FrameSampler {
    pub fn select(&self, media: &MediaItem) -> Result<Vec<usize>> {
        let n = media.frames.len();
        match *self {
            FrameSampler::EverySixth => sample_test_frames(n),
            FrameSampler::Partitioned { per_video, seed } => {
                let mut r = rng::stream(seed ^ stable_hash(&media.media_id), rng::streams::FRAME_SAMPLING);
                sample_train_frames(n, per_video, &mut r)
            }
            FrameSampler::All => {
                if n == 0 {
                    Err(Error::EmptyMedia(media.media_id.clone()))
                } else {
                    Ok((0..n).collect())
                }
            }
        }
    }
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Embeds the sampled frames and averages them into one template.
pub fn embed_media(media: &MediaItem, head: &IdentityHead, sampler: FrameSampler) -> Result<Template> {
    media.validate()?;
    if media.frames.dim() != head.input_dim() {
        return Err(Error::Dimension {
            expected: head.input_dim(),
            got: media.frames.dim(),
        });
    }
    let indices = sampler.select(media)?;
    let batch = media.frames.gather(&indices);
    let embedded = head.embed_batch(&batch, indices.len())?;
    let rows: Vec<&[f64]> = embedded.chunks_exact(head.embedding_dim()).collect();
    let vector = mean_vector(&rows)?;
    template(media.media_id.clone(), vector, indices.len())
}

fn template(owner_id: String, vector: Vec<f64>, source_count: usize) -> Result<Template> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("template {owner_id}")));
    }
    if norm(&vector) == 0.0 {
        return Err(Error::DegenerateVector(format!("template {owner_id}")));
    }
    Ok(Template {
        owner_id,
        vector,
        source_count,
    })
}

/// Rejects duplicate media ids and returns the items sorted by media id.
pub fn canonical_order(media: &[MediaItem]) -> Result<Vec<&MediaItem>> {
    let mut sorted: Vec<&MediaItem> = media.iter().collect();
    sorted.sort_by(|a, b| a.media_id.cmp(&b.media_id));
    for pair in sorted.windows(2) {
        if pair[0].media_id == pair[1].media_id {
            return Err(Error::Ingestion(format!(
                "duplicate media id {}",
                pair[0].media_id
            )));
        }
    }
    Ok(sorted)
}

/// Embeds every item, in media-id order, optionally on a worker pool.
/// Output does not depend on the number of workers.
pub fn embed_all(
    media: &[MediaItem],
    head: &IdentityHead,
    sampler: FrameSampler,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<Template>> {
    let sorted = canonical_order(media)?;
    match pool {
        Some(pool) => pool.install(|| {
            sorted
                .par_iter()
                .map(|m| embed_media(m, head, sampler))
                .collect()
        }),
        None => sorted.iter().map(|m| embed_media(m, head, sampler)).collect(),
    }
}

/// One template per identity: media templates averaged in media-id order.
pub fn build_gallery(
    media: &[MediaItem],
    head: &IdentityHead,
    sampler: FrameSampler,
) -> Result<Gallery> {
    build_gallery_with(media, head, sampler, None)
}

pub fn build_gallery_with(
    media: &[MediaItem],
    head: &IdentityHead,
    sampler: FrameSampler,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Gallery> {
    if media.is_empty() {
        return Err(Error::Dataset("no gallery media".into()));
    }
    let templates = embed_all(media, head, sampler, pool)?;
    let sorted = canonical_order(media)?;
    aggregate_by_identity(sorted.iter().map(|m| m.identity_id.as_str()).zip(templates))
}

/// Averages media templates per identity, in the order given.
pub fn aggregate_by_identity<'a>(
    items: impl IntoIterator<Item = (&'a str, Template)>,
) -> Result<Gallery> {
    let mut groups: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (identity, t) in items {
        if !seen.insert(t.owner_id.clone()) {
            return Err(Error::Ingestion(format!("duplicate media id {}", t.owner_id)));
        }
        groups.entry(identity).or_default().push(t.vector);
    }
    let templates = groups
        .into_iter()
        .map(|(id, vs)| {
            let n = vs.len();
            template(id.to_owned(), mean_vector(&vs)?, n)
        })
        .collect::<Result<Vec<_>>>()?;
    Gallery::from_templates(templates)
}
