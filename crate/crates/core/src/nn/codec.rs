//! `BIDH` head container.
//!
//! Layout (little-endian): magic `BIDH`, version u32, head kind u32
//! (1 = attribute, 2 = identity), encoder depth u32 (0 for identity heads),
//! layer count u32, then per layer: in-dim u32, out-dim u32, row-major
//! weights f64, biases f64, slope count u32 (0 = linear layer), slopes f64.

use std::path::Path;

use super::heads::{AttributeHead, IdentityHead};
use super::layer::{DenseLayer, Layer, Prelu, Stack};
use crate::container::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BIDH";
const VERSION: u32 = 1;
const KIND_ATTRIBUTE: u32 = 1;
const KIND_IDENTITY: u32 = 2;

/// Either kind of head, as read from a `BIDH` file.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Attribute(AttributeHead),
    Identity(IdentityHead),
}

impl Head {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (kind, depth, stack) = match self {
            Head::Attribute(h) => (KIND_ATTRIBUTE, h.encoder_depth(), h.stack()),
            Head::Identity(h) => (KIND_IDENTITY, 0, h.stack()),
        };
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.u32(kind);
        w.len_u32(depth)?;
        w.len_u32(stack.layers().len())?;
        for layer in stack.layers() {
            w.len_u32(layer.dense.in_dim())?;
            w.len_u32(layer.dense.out_dim())?;
            w.f64s(layer.dense.weights());
            w.f64s(layer.dense.biases());
            match &layer.prelu {
                Some(p) => {
                    w.len_u32(p.slopes().len())?;
                    w.f64s(p.slopes());
                }
                None => w.u32(0),
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = ByteReader::open(bytes, MAGIC, VERSION)?;
        let kind = r.u32()?;
        let depth = r.usize()?;
        let count = r.usize()?;
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let in_dim = r.usize()?;
            let out_dim = r.usize()?;
            let weights = r.f64s(in_dim.checked_mul(out_dim).ok_or_else(|| {
                Error::Format("layer size overflow".into())
            })?)?;
            let biases = r.f64s(out_dim)?;
            let slopes = r.usize()?;
            let prelu = match slopes {
                0 => None,
                n => Some(Prelu::from_slopes(r.f64s(n)?)),
            };
            layers.push(Layer {
                dense: DenseLayer::from_parts(in_dim, out_dim, weights, biases)?,
                prelu,
            });
        }
        r.finish()?;
        let stack = Stack::new(layers)?;
        match kind {
            KIND_ATTRIBUTE => Ok(Head::Attribute(AttributeHead::from_stack(stack, depth)?)),
            KIND_IDENTITY => Ok(Head::Identity(IdentityHead::from_stack(stack)?)),
            k => Err(Error::Format(format!("unknown head kind {k}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn into_identity(self) -> Result<IdentityHead> {
        match self {
            Head::Identity(h) => Ok(h),
            Head::Attribute(_) => Err(Error::Format(
                "expected an identity head, found an attribute head".into(),
            )),
        }
    }

    pub fn into_attribute(self) -> Result<AttributeHead> {
        match self {
            Head::Attribute(h) => Ok(h),
            Head::Identity(_) => Err(Error::Format(
                "expected an attribute head, found an identity head".into(),
            )),
        }
    }
}
