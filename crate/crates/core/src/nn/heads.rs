//! The two trainable heads that sit on top of the pooled backbone feature.

use rand::Rng;

use super::layer::{Layer, PreluMode, Stack};
use crate::domain::{EMBEDDING_DIM, FEATURE_DIM};
use crate::error::{Error, Result};

/// Encoder widths of the attribute head, ending in the 16-d bottleneck.
pub const ENCODER_WIDTHS: [usize; 4] = [FEATURE_DIM, EMBEDDING_DIM, 64, 16];
/// Decoder widths after the bottleneck; the attribute count is appended.
pub const DECODER_HIDDEN: [usize; 1] = [24];

/// Linguistic encoder/decoder: feature -> bottleneck code -> attribute scores.
///
/// Held as one stack with PReLU after every layer but the last, so the
/// attribute output is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeHead {
    stack: Stack,
    encoder_depth: usize,
}

impl AttributeHead {
    /// The production head: 2048 -> 512 -> 64 -> 16 -> 24 -> `attributes`.
    pub fn init<R: Rng + ?Sized>(attributes: usize, mode: PreluMode, rng: &mut R) -> Result<Self> {
        Self::init_for_input(FEATURE_DIM, attributes, mode, rng)
    }

    /// Production widths over a feature of width `input`.
    pub fn init_for_input<R: Rng + ?Sized>(
        input: usize,
        attributes: usize,
        mode: PreluMode,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = ENCODER_WIDTHS.to_vec();
        widths[0] = input;
        widths.extend_from_slice(&DECODER_HIDDEN);
        widths.push(attributes);
        Self::with_widths(&widths, ENCODER_WIDTHS.len() - 1, mode, rng)
    }

    /// Arbitrary widths; the first `encoder_depth` layers form the encoder.
    pub fn with_widths<R: Rng + ?Sized>(
        widths: &[usize],
        encoder_depth: usize,
        mode: PreluMode,
        rng: &mut R,
    ) -> Result<Self> {
        let stack = Stack::init(widths, mode, rng)?;
        Self::from_stack(stack, encoder_depth)
    }

    pub fn from_stack(stack: Stack, encoder_depth: usize) -> Result<Self> {
        if encoder_depth == 0 || encoder_depth >= stack.layers().len() {
            return Err(Error::Dimension {
                expected: stack.layers().len().saturating_sub(1),
                got: encoder_depth,
            });
        }
        Ok(Self {
            stack,
            encoder_depth,
        })
    }

    pub fn stack(&self) -> &Stack {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut Stack {
        &mut self.stack
    }

    pub fn encoder_depth(&self) -> usize {
        self.encoder_depth
    }

    pub fn input_dim(&self) -> usize {
        self.stack.input_dim()
    }

    pub fn attribute_dim(&self) -> usize {
        self.stack.output_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.stack.layers()[self.encoder_depth - 1].dense.out_dim()
    }

    /// Bottleneck code and attribute prediction for one feature.
    pub fn forward_attribute(&self, feature: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.forward_attribute_batch(feature, 1)
    }

    /// Batched [`forward_attribute`](Self::forward_attribute); outputs are
    /// row-major `batch x code_dim` and `batch x attribute_dim`.
    pub fn forward_attribute_batch(
        &self,
        features: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.stack.forward_cached(features, batch)?;
        let code = cache.activation(self.encoder_depth - 1).to_vec();
        Ok((code, cache.output().to_vec()))
    }

    /// The first encoder layer, the one transferred into an identity head.
    pub fn first_layer(&self) -> &Layer {
        &self.stack.layers()[0]
    }
}

/// Direct identity head: feature -> PReLU embedding -> class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityHead {
    stack: Stack,
}

impl IdentityHead {
    /// The production head: 2048 -> 512 (PReLU) -> `classes`.
    pub fn init<R: Rng + ?Sized>(classes: usize, mode: PreluMode, rng: &mut R) -> Result<Self> {
        Self::with_widths(FEATURE_DIM, EMBEDDING_DIM, classes, mode, rng)
    }

    pub fn with_widths<R: Rng + ?Sized>(
        input: usize,
        embedding: usize,
        classes: usize,
        mode: PreluMode,
        rng: &mut R,
    ) -> Result<Self> {
        check_classes(classes)?;
        Self::from_stack(Stack::init(&[input, embedding, classes], mode, rng)?)
    }

    pub fn from_stack(stack: Stack) -> Result<Self> {
        if stack.layers().len() != 2 || stack.layers()[0].prelu.is_none() {
            return Err(Error::Format(
                "identity head needs an embedding layer with PReLU and a classifier".into(),
            ));
        }
        check_classes(stack.output_dim())?;
        Ok(Self { stack })
    }

    /// Replace the embedding layer with a shape-compatible layer taken from
    /// another head, e.g. the first encoder layer of an [`AttributeHead`].
    pub fn transfer_embedding_layer(&mut self, layer: &Layer) -> Result<()> {
        let ours = &self.stack.layers()[0];
        if layer.dense.in_dim() != ours.dense.in_dim()
            || layer.dense.out_dim() != ours.dense.out_dim()
        {
            return Err(Error::Dimension {
                expected: ours.dense.in_dim() * ours.dense.out_dim(),
                got: layer.dense.in_dim() * layer.dense.out_dim(),
            });
        }
        if layer.prelu.is_none() {
            return Err(Error::Format("transferred layer has no PReLU".into()));
        }
        self.stack.layers_mut()[0] = layer.clone();
        Ok(())
    }

    pub fn stack(&self) -> &Stack {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut Stack {
        &mut self.stack
    }

    pub fn input_dim(&self) -> usize {
        self.stack.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.stack.layers()[0].dense.out_dim()
    }

    pub fn classes(&self) -> usize {
        self.stack.output_dim()
    }

    /// Post-PReLU embedding and classifier logits for one feature.
    pub fn forward_identity(&self, feature: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.forward_identity_batch(feature, 1)
    }

    pub fn forward_identity_batch(
        &self,
        features: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.stack.forward_cached(features, batch)?;
        Ok((cache.activation(0).to_vec(), cache.output().to_vec()))
    }

    /// Embeddings only; the classifier is skipped.
    pub fn embed_batch(&self, features: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.stack.forward_to(features, batch, 1)
    }
}

fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::Dataset(format!(
            "identity head needs at least 2 classes, got {classes}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{DenseLayer, Prelu};
    use crate::rng;

    fn zero_stack(widths: &[usize]) -> Stack {
        let n = widths.len() - 1;
        Stack::new(
            widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| Layer {
                    dense: DenseLayer::zeros(w[0], w[1]),
                    prelu: (i + 1 < n).then(|| Prelu::new(PreluMode::Shared, w[1])),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn production_widths() {
        let mut r = rng::seeded(1);
        let a = AttributeHead::init(30, PreluMode::Shared, &mut r).unwrap();
        let widths: Vec<usize> = a
            .stack()
            .layers()
            .iter()
            .map(|l| l.dense.out_dim())
            .collect();
        assert_eq!(widths, [512, 64, 16, 24, 30]);
        assert_eq!(a.input_dim(), 2048);
        assert_eq!(a.code_dim(), 16);
        let i = IdentityHead::init(577, PreluMode::Shared, &mut r).unwrap();
        assert_eq!(i.embedding_dim(), 512);
        assert_eq!(i.classes(), 577);
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let head = AttributeHead::from_stack(zero_stack(&[6, 5, 4, 3, 2, 4]), 3).unwrap();
        let f = [1.0, -2.0, 3.0, 0.5, 9.0, -7.0];
        let (code, attrs) = head.forward_attribute(&f).unwrap();
        assert!(code.iter().all(|&v| v == 0.0));
        assert!(attrs.iter().all(|&v| v == 0.0));

        let id = IdentityHead::from_stack(zero_stack(&[6, 4, 3])).unwrap();
        let (e, l) = id.forward_identity(&f).unwrap();
        assert_eq!(e, vec![0.0; 4]);
        assert_eq!(l, vec![0.0; 3]);
    }

    #[test]
    fn miniature_identity_forward_by_hand() {
        // 4 -> 3 (PReLU 0.25) -> 2.
        let l0 = DenseLayer::from_parts(
            4,
            3,
            vec![
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, -1.0, 0.0, //
                0.5, 0.5, 0.5, 0.5,
            ],
            vec![0.0, 0.0, -1.0],
        )
        .unwrap();
        let l1 = DenseLayer::from_parts(3, 2, vec![1.0, 1.0, 1.0, -1.0, 0.0, 2.0], vec![0.5, 0.0])
            .unwrap();
        let head = IdentityHead::from_stack(
            Stack::new(vec![
                Layer {
                    dense: l0,
                    prelu: Some(Prelu::new(PreluMode::Shared, 3)),
                },
                Layer {
                    dense: l1,
                    prelu: None,
                },
            ])
            .unwrap(),
        )
        .unwrap();
        // f = [2, 1, 3, -2]
        // z = [2, 1 - 3, 0.5*(2+1+3-2) - 1] = [2, -2, 1]; e = [2, -0.5, 1]
        // logits = [2 - 0.5 + 1 + 0.5, -2 + 0 + 2] = [3, 0]
        let (e, logits) = head.forward_identity(&[2.0, 1.0, 3.0, -2.0]).unwrap();
        assert_eq!(e, vec![2.0, -0.5, 1.0]);
        assert_eq!(logits, vec![3.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic_and_batch_consistent() {
        let mut r = rng::seeded(2);
        let head = IdentityHead::with_widths(8, 6, 4, PreluMode::Shared, &mut r).unwrap();
        let x = rng::gaussian_vec(&mut r, 8 * 3, 1.0);
        let (e1, l1) = head.forward_identity_batch(&x, 3).unwrap();
        let (e2, l2) = head.forward_identity_batch(&x, 3).unwrap();
        assert_eq!((e1.clone(), l1.clone()), (e2, l2));
        for i in 0..3 {
            let (e, l) = head.forward_identity(&x[i * 8..(i + 1) * 8]).unwrap();
            for (a, b) in e.iter().zip(&e1[i * 6..(i + 1) * 6]) {
                assert!((a - b).abs() <= 1e-12);
            }
            for (a, b) in l.iter().zip(&l1[i * 4..(i + 1) * 4]) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        assert_eq!(head.embed_batch(&x, 3).unwrap(), e1);
    }

    #[test]
    fn single_class_rejected() {
        let mut r = rng::seeded(3);
        assert!(matches!(
            IdentityHead::with_widths(4, 3, 1, PreluMode::Shared, &mut r),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn dimension_errors() {
        let mut r = rng::seeded(3);
        let head = IdentityHead::with_widths(4, 3, 2, PreluMode::Shared, &mut r).unwrap();
        assert!(matches!(
            head.forward_identity(&[1.0; 5]),
            Err(Error::Dimension { .. })
        ));
    }
}
