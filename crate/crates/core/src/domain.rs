//! Semantic vector types and the elementary vector math used by every stage.
//!
//! All arithmetic is `f64`. Sums run strictly left to right so results are
//! reproducible bit-for-bit; callers that need permutation invariance sort
//! their inputs by identifier before aggregating.

use crate::error::{Error, Result};

/// Width of the pooled backbone feature.
pub const FEATURE_DIM: usize = 2048;
/// Width of the identity embedding tapped at the penultimate layer.
pub const EMBEDDING_DIM: usize = 512;
/// Default number of linguistic descriptors.
pub const ATTRIBUTE_DIM: usize = 30;

macro_rules! fixed_vector {
    ($(#[$meta:meta])* $name:ident, $dim:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub const DIM: usize = $dim;

            pub fn new(values: Vec<f64>) -> Result<Self> {
                if values.len() != Self::DIM {
                    return Err(Error::Dimension {
                        expected: Self::DIM,
                        got: values.len(),
                    });
                }
                check_finite(&values, stringify!($name))?;
                Ok(Self(values))
            }

            pub fn zeros() -> Self {
                Self(vec![0.0; Self::DIM])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl AsRef<[f64]> for $name {
            fn as_ref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

fixed_vector!(
    /// A 2048-d pooled backbone activation, the input boundary of the pipeline.
    FeatureVector,
    FEATURE_DIM
);

fixed_vector!(
    /// A 512-d identity embedding.
    EmbeddingVector,
    EMBEDDING_DIM
);

/// Linguistic descriptor scores, one per vocabulary slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector(Vec<f64>);

impl AttributeVector {
    pub fn new(values: Vec<f64>, vocabulary: &DescriptorVocabulary) -> Result<Self> {
        if values.len() != vocabulary.len() {
            return Err(Error::Dimension {
                expected: vocabulary.len(),
                got: values.len(),
            });
        }
        Self::from_values(values)
    }

    /// Builds an attribute vector without checking against a vocabulary.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension {
                expected: ATTRIBUTE_DIM,
                got: 0,
            });
        }
        check_finite(&values, "AttributeVector")?;
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for AttributeVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Ordered descriptor names; the position of a name is its attribute index.
///
/// Duplicate names are allowed. The default vocabulary keeps the three
/// repeated rows of the annotation sheet as distinct slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorVocabulary {
    names: Vec<String>,
}

const DEFAULT_DESCRIPTORS: [&str; ATTRIBUTE_DIM] = [
    "proportioned",
    "rectangular",
    "stocky",
    "short legs",
    "muscular",
    "average",
    "tall",
    "sturdy",
    "big",
    "long legs",
    "lean",
    "short torso",
    "pear-shaped",
    "petite",
    "broad shoulders",
    "heavy set",
    "long",
    "long torso",
    "round (apple)",
    "built",
    "fit",
    "skinny",
    "masculine",
    "small",
    "pear-shaped",
    "petite",
    "broad shoulders",
    "short",
    "feminine",
    "curvy",
];

impl DescriptorVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::config("vocabulary", "descriptor list is empty"));
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for DescriptorVocabulary {
    fn default() -> Self {
        Self {
            names: DEFAULT_DESCRIPTORS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Inner product of two equal-length vectors.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    dot_unchecked(a, a).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
///
/// A zero-norm input is an error, never a silent zero score.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    let na = norm(a);
    if na == 0.0 {
        return Err(Error::DegenerateVector("left operand".into()));
    }
    let nb = norm(b);
    if nb == 0.0 {
        return Err(Error::DegenerateVector("right operand".into()));
    }
    Ok((dot_unchecked(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Elementwise arithmetic mean, summed left to right in input order.
pub fn mean_vector<V: AsRef<[f64]>>(vs: &[V]) -> Result<Vec<f64>> {
    let first = vs.first().ok_or(Error::EmptyAggregate)?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for v in vs {
        let v = v.as_ref();
        check_len(first, v)?;
        for (s, x) in acc.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|s| *s /= n);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 0.0, 2.0], &[3.0, 1.0, 1.0]).unwrap(), 5.0);
        assert_eq!(dot(&[4.0, -2.0, 7.5], &[0.0; 3]).unwrap(), 0.0);
        let e = |i: usize| {
            let mut v = vec![0.0; 4];
            v[i] = 1.0;
            v
        };
        assert_eq!(dot(&e(1), &e(3)).unwrap(), 0.0);
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateVector(_))
        ));
        assert!(matches!(
            cosine(&[1.0, 0.0], &[0.0, 0.0]),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn cosine_is_clamped() {
        // Parallel vectors whose rounded ratio can exceed 1.
        let a = [0.1, 0.2, 0.3];
        let b = [0.1 * 3.0, 0.2 * 3.0, 0.3 * 3.0];
        let c = cosine(&a, &b).unwrap();
        assert!(c <= 1.0 && c >= -1.0);
    }

    #[test]
    fn mean_examples() {
        let v = vec![0.5, -1.25, 3.0];
        assert_eq!(mean_vector(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        assert_eq!(
            mean_vector(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(matches!(
            mean_vector::<Vec<f64>>(&[]),
            Err(Error::EmptyAggregate)
        ));
    }

    #[test]
    fn default_vocabulary_keeps_duplicate_rows() {
        let vocab = DescriptorVocabulary::default();
        assert_eq!(vocab.len(), ATTRIBUTE_DIM);
        let unique: std::collections::BTreeSet<_> = vocab.names().iter().collect();
        assert_eq!(unique.len(), 27);
    }

    #[test]
    fn fixed_vectors_check_shape() {
        assert!(FeatureVector::new(vec![0.0; 10]).is_err());
        assert!(FeatureVector::new(vec![0.0; FEATURE_DIM]).is_ok());
        let mut bad = vec![0.0; EMBEDDING_DIM];
        bad[3] = f64::NAN;
        assert!(matches!(
            EmbeddingVector::new(bad),
            Err(Error::NonFinite(_))
        ));
        let vocab = DescriptorVocabulary::default();
        assert!(AttributeVector::new(vec![0.0; 29], &vocab).is_err());
    }
}
