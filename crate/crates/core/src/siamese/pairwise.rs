use super::model::{Model, SimilarityHead};
use crate::error::{Error, Result};
use crate::nnkernel::{clamp_prob, sgd_step, sigmoid_bce, sigmoid_scalar, sign, SgdState, Tensor};
use crate::prep::{batch_tensor, NormalizedImage};
use crate::scalar::Scalar;

fn check_dims<T: Scalar>(f1: &[T], f2: &[T], head: &SimilarityHead<T>) -> Result<()> {
    if f1.len() != f2.len() || f1.len() != head.dim() {
        return Err(Error::Shape(format!(
            "feature dims {} and {} against head of width {}",
            f1.len(),
            f2.len(),
            head.dim()
        )));
    }
    Ok(())
}

/// Pre-sigmoid score `Σ_k w_k |f1_k − f2_k| + b`, accumulated in a fixed order.
pub fn similarity_logit<T: Scalar>(f1: &[T], f2: &[T], head: &SimilarityHead<T>) -> Result<T> {
    check_dims(f1, f2, head)?;
    let mut acc = 0f64;
    for ((&a, &b), &w) in f1.iter().zip(f2).zip(head.weight.data()) {
        acc += w.wide() * (a - b).abs().wide();
    }
    Ok(T::lit(acc + head.bias.data()[0].wide()))
}

/// Match probability `σ(w · |f1 − f2| + b)`, clamped into the open unit
/// interval; symmetric in its arguments.
pub fn similarity<T: Scalar>(f1: &[T], f2: &[T], head: &SimilarityHead<T>) -> Result<T> {
    similarity_logit(f1, f2, head).map(|z| clamp_prob(sigmoid_scalar(z)))
}

/// One scored pair: rows of the batch image tensor and the target label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairIndex {
    pub template: usize,
    pub sample: usize,
    pub label: bool,
}

/// Images embedded together in one forward pass plus the pairs scored from
/// them. An image may take part in several pairs.
#[derive(Clone, Debug)]
pub struct PairBatch<T> {
    pub images: Tensor<T>,
    pub pairs: Vec<PairIndex>,
}

impl<T: Scalar> PairBatch<T> {
    pub fn new(images: &[&NormalizedImage], pairs: Vec<PairIndex>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(p) = pairs
            .iter()
            .find(|p| p.template >= images.len() || p.sample >= images.len())
        {
            return Err(Error::Shape(format!(
                "pair {p:?} indexes past {} images",
                images.len()
            )));
        }
        Ok(PairBatch {
            images: batch_tensor(images)?,
            pairs,
        })
    }

    /// One `(template, sample, label)` triple per pair, each image embedded separately.
    pub fn from_triples(triples: &[(&NormalizedImage, &NormalizedImage, bool)]) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut images = Vec::with_capacity(triples.len() * 2);
        let mut pairs = Vec::with_capacity(triples.len());
        for (i, (t, s, y)) in triples.iter().enumerate() {
            images.push(*t);
            images.push(*s);
            pairs.push(PairIndex {
                template: 2 * i,
                sample: 2 * i + 1,
                label: *y,
            });
        }
        Self::new(&images, pairs)
    }
}

/// Mean corrected-BCE over the pairs, given the embedded batch. Returns the
/// loss (kept at accumulator precision), the feature gradient and the head
/// gradients `(dw, db)`.
pub fn pair_loss<T: Scalar>(
    features: &Tensor<T>,
    pairs: &[PairIndex],
    head: &SimilarityHead<T>,
) -> Result<(f64, Tensor<T>, Vec<T>, T)> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (_, dim) = features.dims2()?;
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0f64;
    let mut dfeat = vec![0f64; features.len()];
    let mut dw = vec![0f64; dim];
    let mut db = 0f64;
    for p in pairs {
        let f1 = features.outer(p.template);
        let f2 = features.outer(p.sample);
        let z = similarity_logit(f1, f2, head)?;
        let y = if p.label { T::one() } else { T::zero() };
        let (l, dz) = sigmoid_bce(z, y);
        loss += l;
        let dz = dz.wide() * scale;
        db += dz;
        for k in 0..dim {
            let diff = f1[k] - f2[k];
            dw[k] += dz * diff.abs().wide();
            let g = dz * head.weight.data()[k].wide() * sign(diff).wide();
            dfeat[p.template * dim + k] += g;
            dfeat[p.sample * dim + k] -= g;
        }
    }
    Ok((
        loss * scale,
        Tensor::new(features.shape(), dfeat.into_iter().map(T::lit).collect())?,
        dw.into_iter().map(T::lit).collect(),
        T::lit(db),
    ))
}

/// Forward both branches through the shared embedder (train-mode batch
/// norm), score every pair, and back-propagate the mean loss. Gradients are
/// left in the model's buffers; no parameter is updated.
pub fn pair_loss_and_grads<T: Scalar>(model: &mut Model<T>, batch: &PairBatch<T>) -> Result<f64> {
    model.zero_grad();
    let (features, trace) = model.forward_train(&batch.images)?;
    let (loss, dfeat, dw, db) = pair_loss(&features, &batch.pairs, &model.head)?;
    model.head.weight.accumulate_grad(&dw)?;
    model.head.bias.accumulate_grad(&[db])?;
    model.backward(&trace, &dfeat)?;
    Ok(loss)
}

/// One SGD step on a pair batch; returns the batch loss before the update.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    batch: &PairBatch<T>,
    sgd: &mut SgdState<T>,
) -> Result<f64> {
    let loss = pair_loss_and_grads(model, batch)?;
    sgd_step(&mut model.trainable_mut(), sgd)?;
    Ok(loss)
}
