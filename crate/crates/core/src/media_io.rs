//! Media manifests and `BIDF` feature containers.
//!
//! A manifest is a CSV with header `media_id,identity_id,kind,condition,feature_file`;
//! `feature_file` is resolved relative to the manifest's directory.
//!
//! `BIDF` layout (little-endian): magic `BIDF`, version u32, frame count u32,
//! dim u32, then `frames x dim` f64 values in row-major frame order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::{ByteReader, ByteWriter};
use crate::domain::AttributeVector;
use crate::error::{Error, Result};
use crate::scoring::format_score;
use crate::synth::World;
use crate::templates::{Frames, MediaItem, MediaKind};

const MAGIC: &[u8; 4] = b"BIDF";
const VERSION: u32 = 1;

pub fn frames_to_bytes(frames: &Frames) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(MAGIC, VERSION);
    w.len_u32(frames.len())?;
    w.len_u32(frames.dim())?;
    w.f64s(frames.values());
    Ok(w.finish())
}

pub fn frames_from_bytes(bytes: &[u8]) -> Result<Frames> {
    let (mut r, _) = ByteReader::open(bytes, MAGIC, VERSION)?;
    let count = r.usize()?;
    let dim = r.usize()?;
    if dim == 0 {
        return Err(Error::Format("BIDF dim is zero".into()));
    }
    let values = r.f64s(
        count
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("BIDF size overflow".into()))?,
    )?;
    r.finish()?;
    Frames::new(dim, values)
}

pub fn write_frames(path: &Path, frames: &Frames) -> Result<()> {
    std::fs::write(path, frames_to_bytes(frames)?).map_err(|e| Error::io(path, e))
}

pub fn read_frames(path: &Path) -> Result<Frames> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    frames_from_bytes(&bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub media_id: String,
    pub identity_id: String,
    pub kind: MediaKind,
    pub condition: String,
    pub feature_file: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["media_id", "identity_id", "kind", "condition", "feature_file"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Ingestion(format!(
            "{}: manifest header must be `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        writer.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Resolves a record's feature file against the manifest directory.
pub fn feature_path(manifest: &Path, record: &ManifestRecord) -> PathBuf {
    manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&record.feature_file)
}

/// Reads a manifest and every feature file it references.
pub fn load_media(manifest: &Path) -> Result<Vec<MediaItem>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|r| {
            let frames = read_frames(&feature_path(manifest, &r))?;
            MediaItem::new(r.media_id, r.identity_id, r.kind, r.condition, frames)
        })
        .collect()
}

/// Annotation CSV: `identity_id,attr_0,..,attr_{A-1}`, one row per identity.
pub fn write_annotations(path: &Path, annotations: &BTreeMap<String, AttributeVector>) -> Result<()> {
    let width = annotations.values().next().map_or(0, |a| a.len());
    let mut out = String::from("identity_id");
    for i in 0..width {
        out.push_str(&format!(",attr_{i}"));
    }
    out.push('\n');
    for (id, a) in annotations {
        out.push_str(id);
        for v in a.as_slice() {
            out.push(',');
            out.push_str(&format_score(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, AttributeVector>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let width = headers.len().saturating_sub(1);
    let header_ok = headers.get(0) == Some("identity_id")
        && width > 0
        && (0..width).all(|i| headers.get(i + 1) == Some(format!("attr_{i}").as_str()));
    if !header_ok {
        return Err(Error::Ingestion(format!(
            "{}: annotation header must be `identity_id,attr_0,...`",
            path.display()
        )));
    }
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let id = record[0].to_owned();
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::Ingestion(format!("{}: bad attribute value `{v}` for {id}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if out.insert(id.clone(), AttributeVector::from_values(values)?).is_some() {
            return Err(Error::Ingestion(format!(
                "{}: duplicate identity {id}",
                path.display()
            )));
        }
    }
    Ok(out)
}

/// File names of a world written by [`write_world`].
pub const WORLD_MANIFEST: &str = "manifest.csv";
pub const TRAIN_MANIFEST: &str = "train.csv";
pub const GALLERY_MANIFEST: &str = "gallery.csv";
pub const PROBE_MANIFEST: &str = "probe.csv";
pub const ANNOTATIONS: &str = "annotations.csv";
pub const FEATURE_DIR: &str = "features";

/// Writes every media item as `features/<media_id>.bidf`, the split
/// manifests, their union `manifest.csv`, and the annotations.
pub fn write_world(world: &World, dir: &Path) -> Result<()> {
    let features = dir.join(FEATURE_DIR);
    std::fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    let mut all = Vec::new();
    for (name, media) in [
        (TRAIN_MANIFEST, &world.train),
        (GALLERY_MANIFEST, &world.gallery),
        (PROBE_MANIFEST, &world.probes),
    ] {
        let mut records = Vec::with_capacity(media.len());
        for m in media {
            let file = format!("{FEATURE_DIR}/{}.bidf", m.media_id);
            write_frames(&dir.join(&file), &m.frames)?;
            records.push(ManifestRecord {
                media_id: m.media_id.clone(),
                identity_id: m.identity_id.clone(),
                kind: m.kind,
                condition: m.condition.clone(),
                feature_file: file,
            });
        }
        write_manifest(&dir.join(name), &records)?;
        all.extend(records);
    }
    write_manifest(&dir.join(WORLD_MANIFEST), &all)?;
    write_annotations(&dir.join(ANNOTATIONS), &world.annotations)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Ingestion(format!("{}: {e}", path.display()))
    }
}
