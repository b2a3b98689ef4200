//! Seeded synthetic world: identities with latent body-shape attributes and
//! idiosyncratic shape, rendered into backbone-like features under clothing
//! and distance nuisance, plus a noisy annotator panel.
//!
//! A frame `t` of media `m` (identity `i`, condition `c`, clothing set `k`):
//!
//! ```text
//! f = v·Wa·a_i + Wz·z_i + s_c·(Wn·n_m + Wc·c_ik) + σ_f·ε_t
//! ```
//!
//! `Wn = [Wa | Wz | Wp]` and `Wc = [Wa | Wz | Wq]`, so part of the per-media
//! nuisance and of the clothing offset lands on the identity directions
//! themselves and cannot be projected away. The split is set by the
//! `*_attribute_weight` / `*_idiosyncrasy_weight` knobs. Mixing matrices
//! have i.i.d. `N(0, 1/D)` entries. The visibility `v` scales how strongly
//! the attributes show in the features without changing the annotations.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AttributeVector, ATTRIBUTE_DIM, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::rng::{self, streams, DetRng};
use crate::templates::{Frames, MediaItem, MediaKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub name: String,
    /// Nuisance multiplier `s_c`.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub feature_dim: usize,
    pub attribute_dim: usize,
    /// Latent body-shape factors behind the attributes; 0 draws the
    /// attributes independently.
    pub attribute_factors: usize,
    pub idiosyncrasy_dim: usize,
    pub nuisance_private_dim: usize,
    pub clothing_private_dim: usize,

    pub train_identities: usize,
    pub gallery_identities: usize,
    pub probe_identities: usize,
    pub mated_probe_identities: usize,

    pub train_videos_per_identity: usize,
    pub gallery_images_per_identity: usize,
    pub gallery_videos_per_identity: usize,
    pub probe_videos_per_condition: usize,
    pub frames_per_video: usize,

    /// Standard deviation of the latent attributes.
    pub attribute_scale: f64,
    /// Standard deviation of the idiosyncratic latents.
    pub idiosyncrasy_scale: f64,
    /// Gain of the attributes in the features; annotations are unaffected.
    pub attribute_visibility: f64,
    pub nuisance_attribute_weight: f64,
    pub nuisance_idiosyncrasy_weight: f64,
    pub nuisance_private_weight: f64,
    pub clothing_attribute_weight: f64,
    pub clothing_idiosyncrasy_weight: f64,
    pub clothing_private_weight: f64,
    pub frame_noise: f64,

    /// Capture conditions in increasing order of difficulty.
    pub conditions: Vec<ConditionSpec>,
    /// Condition tag of gallery media.
    pub gallery_condition: String,

    pub annotators: usize,
    pub annotator_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            feature_dim: FEATURE_DIM,
            attribute_dim: ATTRIBUTE_DIM,
            attribute_factors: 12,
            idiosyncrasy_dim: 30,
            nuisance_private_dim: 64,
            clothing_private_dim: 16,
            train_identities: 100,
            gallery_identities: 60,
            probe_identities: 100,
            mated_probe_identities: 60,
            train_videos_per_identity: 4,
            gallery_images_per_identity: 1,
            gallery_videos_per_identity: 1,
            probe_videos_per_condition: 1,
            frames_per_video: 20,
            attribute_scale: 1.0,
            idiosyncrasy_scale: 1.0,
            attribute_visibility: 1.0,
            nuisance_attribute_weight: 0.15,
            nuisance_idiosyncrasy_weight: 0.15,
            nuisance_private_weight: 1.0,
            clothing_attribute_weight: 0.1,
            clothing_idiosyncrasy_weight: 0.1,
            clothing_private_weight: 1.0,
            frame_noise: 0.05,
            conditions: default_conditions(),
            gallery_condition: "close".into(),
            annotators: 5,
            annotator_noise: 0.3,
        }
    }
}

pub fn default_conditions() -> Vec<ConditionSpec> {
    [
        ("close", 0.5),
        ("100-300m", 1.8),
        ("370-600m", 2.8),
        ("uav", 3.8),
    ]
    .into_iter()
    .map(|(name, strength)| ConditionSpec {
        name: name.into(),
        strength,
    })
    .collect()
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("attribute_dim", self.attribute_dim),
            ("train_identities", self.train_identities),
            ("gallery_identities", self.gallery_identities),
            ("probe_identities", self.probe_identities),
            ("frames_per_video", self.frames_per_video),
            ("annotators", self.annotators),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.train_identities < 2 {
            return Err(Error::config("train_identities", "must be at least 2"));
        }
        if self.mated_probe_identities > self.gallery_identities {
            return Err(Error::config(
                "mated_probe_identities",
                "cannot exceed gallery_identities",
            ));
        }
        if self.mated_probe_identities > self.probe_identities {
            return Err(Error::config(
                "mated_probe_identities",
                "cannot exceed probe_identities",
            ));
        }
        if self.train_videos_per_identity == 0 {
            return Err(Error::config("train_videos_per_identity", "must be at least 1"));
        }
        if self.gallery_images_per_identity + self.gallery_videos_per_identity == 0 {
            return Err(Error::config(
                "gallery_videos_per_identity",
                "gallery identities need at least one image or video",
            ));
        }
        if self.probe_videos_per_condition == 0 {
            return Err(Error::config("probe_videos_per_condition", "must be at least 1"));
        }
        let reals = [
            ("attribute_scale", self.attribute_scale),
            ("idiosyncrasy_scale", self.idiosyncrasy_scale),
            ("attribute_visibility", self.attribute_visibility),
            ("nuisance_attribute_weight", self.nuisance_attribute_weight),
            ("nuisance_idiosyncrasy_weight", self.nuisance_idiosyncrasy_weight),
            ("nuisance_private_weight", self.nuisance_private_weight),
            ("clothing_attribute_weight", self.clothing_attribute_weight),
            ("clothing_idiosyncrasy_weight", self.clothing_idiosyncrasy_weight),
            ("clothing_private_weight", self.clothing_private_weight),
            ("frame_noise", self.frame_noise),
            ("annotator_noise", self.annotator_noise),
        ];
        for (field, v) in reals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be finite and non-negative"));
            }
        }
        if self.conditions.is_empty() {
            return Err(Error::config("conditions", "at least one condition is required"));
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if c.name.is_empty() || c.name.contains([',', '"', '\n']) {
                return Err(Error::config("conditions", format!("bad condition name `{}`", c.name)));
            }
            if !(c.strength >= 0.0 && c.strength.is_finite()) {
                return Err(Error::config(
                    "conditions",
                    format!("strength of `{}` must be finite and non-negative", c.name),
                ));
            }
            if self.conditions[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::config("conditions", format!("duplicate condition `{}`", c.name)));
            }
        }
        if !self.conditions.iter().any(|c| c.name == self.gallery_condition) {
            return Err(Error::config(
                "gallery_condition",
                format!("`{}` is not a listed condition", self.gallery_condition),
            ));
        }
        Ok(())
    }

    fn strength(&self, condition: &str) -> f64 {
        self.conditions
            .iter()
            .find(|c| c.name == condition)
            .map_or(0.0, |c| c.strength)
    }
}

/// Column-major `dim x cols` mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    pub dim: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl MixingMatrix {
    fn random(rng: &mut DetRng, dim: usize, cols: usize) -> Self {
        Self {
            dim,
            cols,
            values: rng::gaussian_vec(rng, dim * cols, 1.0 / (dim as f64).sqrt()),
        }
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// `out += W · x`
    pub fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, w) in out.iter_mut().zip(self.column(j)) {
                    *o += w * xj;
                }
            }
        }
    }
}

/// The fixed seeded maps of a world.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeMaps {
    /// `A x F` loadings with unit-norm rows, present when
    /// `attribute_factors > 0`.
    pub attribute_loadings: Option<MixingMatrix>,
    pub attribute: MixingMatrix,
    pub idiosyncrasy: MixingMatrix,
    pub nuisance_private: MixingMatrix,
    pub clothing_private: MixingMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIdentity {
    pub identity_id: String,
    pub attributes: Vec<f64>,
    pub idiosyncrasy: Vec<f64>,
    /// Two clothing offsets: set 0 for gallery media, set 1 for probe media.
    clothing: [Vec<f64>; 2],
}

impl SyntheticIdentity {
    pub fn clothing(&self, set: usize) -> &[f64] {
        &self.clothing[set]
    }
}

/// Gallery media always use clothing set 0 and probe media set 1.
pub const GALLERY_CLOTHING: usize = 0;
pub const PROBE_CLOTHING: usize = 1;

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub maps: GenerativeMaps,
    pub train_identities: Vec<SyntheticIdentity>,
    pub test_identities: Vec<SyntheticIdentity>,
    pub train: Vec<MediaItem>,
    pub gallery: Vec<MediaItem>,
    pub probes: Vec<MediaItem>,
    /// Annotator-averaged attributes of every training identity.
    pub annotations: BTreeMap<String, AttributeVector>,
}

/// Mean of `k` noisy readings `a + σ·ε` of the identity's attributes.
pub fn annotate(
    identity: &SyntheticIdentity,
    annotators: usize,
    noise: f64,
    rng: &mut DetRng,
) -> Result<AttributeVector> {
    if annotators == 0 {
        return Err(Error::config("annotators", "must be at least 1"));
    }
    let a = &identity.attributes;
    let mut sum = vec![0.0; a.len()];
    for _ in 0..annotators {
        for (s, &ai) in sum.iter_mut().zip(a) {
            *s += ai + noise * rng::gaussian(rng);
        }
    }
    let k = annotators as f64;
    AttributeVector::from_values(sum.into_iter().map(|s| s / k).collect())
}

struct Renderer<'a> {
    cfg: &'a WorldConfig,
    maps: &'a GenerativeMaps,
}

impl Renderer<'_> {
    /// The per-media part of the mean feature: identity plus scaled nuisance.
    fn media_mean(
        &self,
        identity: &SyntheticIdentity,
        condition: &str,
        clothing: &[f64],
        rng: &mut DetRng,
    ) -> Vec<f64> {
        let cfg = self.cfg;
        let s = cfg.strength(condition);
        let mut attr: Vec<f64> = identity
            .attributes
            .iter()
            .map(|a| cfg.attribute_visibility * a)
            .collect();
        let mut idio = identity.idiosyncrasy.clone();
        let mut out = vec![0.0; cfg.feature_dim];

        // Per-media nuisance n = (u_a, u_z, u_p); drawn even at s = 0 so the
        // random stream does not depend on the strengths.
        let u_a = rng::gaussian_vec(rng, cfg.attribute_dim, cfg.nuisance_attribute_weight);
        let u_z = rng::gaussian_vec(rng, cfg.idiosyncrasy_dim, cfg.nuisance_idiosyncrasy_weight);
        let u_p = rng::gaussian_vec(rng, cfg.nuisance_private_dim, cfg.nuisance_private_weight);

        let (c_a, rest) = clothing.split_at(cfg.attribute_dim);
        let (c_z, c_q) = rest.split_at(cfg.idiosyncrasy_dim);
        for (i, v) in attr.iter_mut().enumerate() {
            *v += s * (u_a[i] + c_a[i]);
        }
        for (i, v) in idio.iter_mut().enumerate() {
            *v += s * (u_z[i] + c_z[i]);
        }
        self.maps.attribute.apply_add(&attr, &mut out);
        self.maps.idiosyncrasy.apply_add(&idio, &mut out);
        let scaled_p: Vec<f64> = u_p.iter().map(|u| s * u).collect();
        self.maps.nuisance_private.apply_add(&scaled_p, &mut out);
        let scaled_q: Vec<f64> = c_q.iter().map(|c| s * c).collect();
        self.maps.clothing_private.apply_add(&scaled_q, &mut out);
        out
    }

    fn render(&self, mean: &[f64], frames: usize, rng: &mut DetRng) -> Result<Frames> {
        let d = self.cfg.feature_dim;
        let mut values = Vec::with_capacity(frames * d);
        for _ in 0..frames {
            for &m in mean {
                values.push(m + self.cfg.frame_noise * rng::gaussian(rng));
            }
        }
        Frames::new(d, values)
    }

    #[allow(clippy::too_many_arguments)]
    fn media(
        &self,
        media_id: String,
        identity: &SyntheticIdentity,
        kind: MediaKind,
        condition: &str,
        clothing_set: usize,
        rng: &mut DetRng,
    ) -> Result<MediaItem> {
        let mean = self.media_mean(identity, condition, identity.clothing(clothing_set), rng);
        let frames = match kind {
            MediaKind::Image => 1,
            MediaKind::Video => self.cfg.frames_per_video,
        };
        MediaItem::new(
            media_id,
            identity.identity_id.clone(),
            kind,
            condition,
            self.render(&mean, frames, rng)?,
        )
    }
}

fn draw_identity(
    cfg: &WorldConfig,
    maps: &GenerativeMaps,
    id: String,
    rng: &mut DetRng,
) -> SyntheticIdentity {
    let attributes = match &maps.attribute_loadings {
        Some(l) => {
            let g = rng::gaussian_vec(rng, l.cols, cfg.attribute_scale);
            let mut a = vec![0.0; cfg.attribute_dim];
            l.apply_add(&g, &mut a);
            a
        }
        None => rng::gaussian_vec(rng, cfg.attribute_dim, cfg.attribute_scale),
    };
    let idiosyncrasy = rng::gaussian_vec(rng, cfg.idiosyncrasy_dim, cfg.idiosyncrasy_scale);
    let mut clothing_set = || {
        let mut c = rng::gaussian_vec(rng, cfg.attribute_dim, cfg.clothing_attribute_weight);
        c.extend(rng::gaussian_vec(rng, cfg.idiosyncrasy_dim, cfg.clothing_idiosyncrasy_weight));
        c.extend(rng::gaussian_vec(rng, cfg.clothing_private_dim, cfg.clothing_private_weight));
        c
    };
    let clothing = [clothing_set(), clothing_set()];
    SyntheticIdentity {
        identity_id: id,
        attributes,
        idiosyncrasy,
        clothing,
    }
}

/// Scales each row to unit norm so every attribute has variance
/// `attribute_scale^2`.
fn normalize_rows(m: &mut MixingMatrix) {
    for r in 0..m.dim {
        let n = (0..m.cols)
            .map(|c| m.values[c * m.dim + r].powi(2))
            .sum::<f64>()
            .sqrt();
        if n > 0.0 {
            for c in 0..m.cols {
                m.values[c * m.dim + r] /= n;
            }
        }
    }
}

pub fn train_identity_id(i: usize) -> String {
    format!("T{i:04}")
}

pub fn test_identity_id(i: usize) -> String {
    format!("S{i:04}")
}

/// Generates a complete world. A pure function of the config (seed included).
pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let d = cfg.feature_dim;
    let mut map_rng = rng::stream(cfg.seed, streams::WORLD_MAPS);
    let attribute = MixingMatrix::random(&mut map_rng, d, cfg.attribute_dim);
    let idiosyncrasy = MixingMatrix::random(&mut map_rng, d, cfg.idiosyncrasy_dim);
    let nuisance_private = MixingMatrix::random(&mut map_rng, d, cfg.nuisance_private_dim);
    let clothing_private = MixingMatrix::random(&mut map_rng, d, cfg.clothing_private_dim);
    let attribute_loadings = (cfg.attribute_factors > 0).then(|| {
        let mut l = MixingMatrix::random(&mut map_rng, cfg.attribute_dim, cfg.attribute_factors);
        normalize_rows(&mut l);
        l
    });
    let maps = GenerativeMaps {
        attribute_loadings,
        attribute,
        idiosyncrasy,
        nuisance_private,
        clothing_private,
    };

    let mut id_rng = rng::stream(cfg.seed, streams::WORLD_IDENTITIES);
    let train_identities: Vec<SyntheticIdentity> = (0..cfg.train_identities)
        .map(|i| draw_identity(cfg, &maps, train_identity_id(i), &mut id_rng))
        .collect();
    let n_test = cfg.gallery_identities + (cfg.probe_identities - cfg.mated_probe_identities);
    let test_identities: Vec<SyntheticIdentity> = (0..n_test)
        .map(|i| draw_identity(cfg, &maps, test_identity_id(i), &mut id_rng))
        .collect();

    let renderer = Renderer { cfg, maps: &maps };
    let mut media_rng = rng::stream(cfg.seed, streams::WORLD_MEDIA);

    let mut train = Vec::new();
    for identity in &train_identities {
        for v in 0..cfg.train_videos_per_identity {
            let condition = &cfg.conditions[media_rng.gen_range(0..cfg.conditions.len())].name;
            let clothing = media_rng.gen_range(0..2);
            train.push(renderer.media(
                format!("{}-v{v:02}", identity.identity_id),
                identity,
                MediaKind::Video,
                condition,
                clothing,
                &mut media_rng,
            )?);
        }
    }

    // Gallery identities are S0000.. and the mated probe identities are the
    // first `mated_probe_identities` of them; the remaining probe identities
    // come after the gallery block and are unmated.
    let mut gallery = Vec::new();
    for identity in &test_identities[..cfg.gallery_identities] {
        for k in 0..cfg.gallery_images_per_identity {
            gallery.push(renderer.media(
                format!("{}-g-img{k:02}", identity.identity_id),
                identity,
                MediaKind::Image,
                &cfg.gallery_condition,
                GALLERY_CLOTHING,
                &mut media_rng,
            )?);
        }
        for k in 0..cfg.gallery_videos_per_identity {
            gallery.push(renderer.media(
                format!("{}-g-vid{k:02}", identity.identity_id),
                identity,
                MediaKind::Video,
                &cfg.gallery_condition,
                GALLERY_CLOTHING,
                &mut media_rng,
            )?);
        }
    }

    let unmated = cfg.probe_identities - cfg.mated_probe_identities;
    let probe_identities = test_identities[..cfg.mated_probe_identities]
        .iter()
        .chain(&test_identities[cfg.gallery_identities..][..unmated]);
    let mut probes = Vec::new();
    for identity in probe_identities {
        for c in &cfg.conditions {
            for k in 0..cfg.probe_videos_per_condition {
                probes.push(renderer.media(
                    format!("{}-p-{}-{k:02}", identity.identity_id, c.name),
                    identity,
                    MediaKind::Video,
                    &c.name,
                    PROBE_CLOTHING,
                    &mut media_rng,
                )?);
            }
        }
    }

    let mut ann_rng = rng::stream(cfg.seed, streams::ANNOTATORS);
    let annotations = train_identities
        .iter()
        .map(|identity| {
            Ok((
                identity.identity_id.clone(),
                annotate(identity, cfg.annotators, cfg.annotator_noise, &mut ann_rng)?,
            ))
        })
        .collect::<Result<_>>()?;

    Ok(World {
        config: cfg.clone(),
        maps,
        train_identities,
        test_identities,
        train,
        gallery,
        probes,
        annotations,
    })
}
