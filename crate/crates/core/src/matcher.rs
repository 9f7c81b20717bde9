//! Cached template features and arg-max classification over them.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::nnkernel::{clamp_prob, sigmoid_scalar};
use crate::prep::{batch_tensor, NormalizedImage};
use crate::scalar::Scalar;
use crate::siamese::{similarity_logit, Model, SimilarityHead};

/// Embedding chunk size used when building the cache; rows do not depend on it.
const EMBED_CHUNK: usize = 64;

/// One embedded template per row, aligned with `class_ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateMatrix<T> {
    class_ids: Vec<u32>,
    features: Vec<T>,
    dim: usize,
}

impl<T: Scalar> TemplateMatrix<T> {
    pub fn new(class_ids: Vec<u32>, features: Vec<T>, dim: usize) -> Result<Self> {
        if features.len() != class_ids.len() * dim {
            return Err(Error::LengthMismatch(format!(
                "{} rows of width {dim} need {} values, got {}",
                class_ids.len(),
                class_ids.len() * dim,
                features.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(&dup) = class_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::DuplicateClass(dup));
        }
        Ok(TemplateMatrix {
            class_ids,
            features,
            dim,
        })
    }

    pub fn rows(&self) -> usize {
        self.class_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }

    /// Matrix restricted to the given classes, in the original row order.
    pub fn subset(&self, allowed: &BTreeSet<u32>) -> Result<Self> {
        check_allowed(self, allowed)?;
        let mut ids = Vec::new();
        let mut feats = Vec::new();
        for (k, id) in self.class_ids.iter().enumerate() {
            if allowed.contains(id) {
                ids.push(*id);
                feats.extend_from_slice(self.row(k));
            }
        }
        Self::new(ids, feats, self.dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<T> {
    pub class_id: u32,
    pub probability: T,
    pub logit: T,
}

/// Embeds every template (inference-mode batch norm) and stacks the features.
pub fn build_template_matrix<T: Scalar>(
    model: &Model<T>,
    templates: &[(u32, &NormalizedImage)],
) -> Result<TemplateMatrix<T>> {
    let mut ids = Vec::with_capacity(templates.len());
    let mut features = Vec::new();
    for chunk in templates.chunks(EMBED_CHUNK) {
        let imgs: Vec<&NormalizedImage> = chunk.iter().map(|t| t.1).collect();
        features.extend_from_slice(model.embed(&batch_tensor(&imgs)?)?.data());
        ids.extend(chunk.iter().map(|t| t.0));
    }
    TemplateMatrix::new(ids, features, model.head.dim())
}

/// Embeds a list of images in inference mode; one feature row per image.
pub fn embed_images<T: Scalar>(
    model: &Model<T>,
    images: &[&NormalizedImage],
) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EMBED_CHUNK) {
        let f = model.embed(&batch_tensor(chunk)?)?;
        out.extend((0..chunk.len()).map(|i| f.outer(i).to_vec()));
    }
    Ok(out)
}

fn argmax<'a, T: Scalar>(
    candidates: impl Iterator<Item = (u32, &'a [T])>,
    feature: &[T],
    head: &SimilarityHead<T>,
) -> Result<Option<Prediction<T>>> {
    let mut best: Option<(u32, T)> = None;
    for (id, row) in candidates {
        let z = similarity_logit(feature, row, head)?;
        best = match best {
            Some((bid, bz)) if bz > z || (bz == z && bid < id) => Some((bid, bz)),
            _ => Some((id, z)),
        };
    }
    Ok(best.map(|(class_id, logit)| Prediction {
        class_id,
        probability: clamp_prob(sigmoid_scalar(logit)),
        logit,
    }))
}

/// Class of maximum similarity; ranking uses the logit, equal scores go to
/// the lowest class id.
pub fn classify<T: Scalar>(
    feature: &[T],
    matrix: &TemplateMatrix<T>,
    head: &SimilarityHead<T>,
) -> Result<Prediction<T>> {
    let rows = (0..matrix.rows()).map(|k| (matrix.class_ids[k], matrix.row(k)));
    argmax(rows, feature, head)?.ok_or(Error::EmptyMatrix)
}

fn check_allowed<T: Scalar>(matrix: &TemplateMatrix<T>, allowed: &BTreeSet<u32>) -> Result<()> {
    if allowed.is_empty() {
        return Err(Error::EmptyAllowedSet);
    }
    let present: HashSet<u32> = matrix.class_ids.iter().copied().collect();
    if let Some(&missing) = allowed.iter().find(|id| !present.contains(id)) {
        return Err(Error::UnknownClass(missing));
    }
    Ok(())
}

/// [`classify`] over the `allowed` classes only.
pub fn classify_restricted<T: Scalar>(
    feature: &[T],
    matrix: &TemplateMatrix<T>,
    head: &SimilarityHead<T>,
    allowed: &BTreeSet<u32>,
) -> Result<Prediction<T>> {
    check_allowed(matrix, allowed)?;
    let rows = (0..matrix.rows())
        .filter(|&k| allowed.contains(&matrix.class_ids[k]))
        .map(|k| (matrix.class_ids[k], matrix.row(k)));
    argmax(rows, feature, head)?.ok_or(Error::EmptyMatrix)
}

/// Uncached path: embeds the query and each template separately and scores
/// every pair. Agrees bit-for-bit with [`classify`] on a matrix built from
/// the same templates.
pub fn classify_direct<T: Scalar>(
    model: &Model<T>,
    image: &NormalizedImage,
    templates: &[(u32, &NormalizedImage)],
) -> Result<Prediction<T>> {
    let mut seen = HashSet::new();
    if let Some(&(dup, _)) = templates.iter().find(|t| !seen.insert(t.0)) {
        return Err(Error::DuplicateClass(dup));
    }
    let query = model.embed(&image.to_tensor())?;
    let mut feats = Vec::with_capacity(templates.len());
    for (id, t) in templates {
        feats.push((*id, model.embed(&t.to_tensor())?));
    }
    let rows = feats.iter().map(|(id, f)| (*id, f.data()));
    argmax(rows, query.data(), &model.head)?.ok_or(Error::EmptyMatrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siamese::EMBED_DIM;

    fn matrix(rows: &[Vec<f64>]) -> TemplateMatrix<f64> {
        let ids = (0..rows.len() as u32).collect();
        TemplateMatrix::new(ids, rows.concat(), EMBED_DIM).unwrap()
    }

    fn constant(v: f64) -> Vec<f64> {
        vec![v; EMBED_DIM]
    }

    #[test]
    fn single_row_always_wins() {
        let m = matrix(&[constant(3.0)]);
        let head = SimilarityHead::new(vec![0.5; EMBED_DIM], 0.0).unwrap();
        assert_eq!(classify(&constant(-7.0), &m, &head).unwrap().class_id, 0);
    }

    #[test]
    fn exact_match_wins_under_negative_weights() {
        let m = matrix(&[constant(0.0), constant(1.0), constant(2.0)]);
        let head = SimilarityHead::new(vec![-1.0; EMBED_DIM], 0.0).unwrap();
        let p = classify(&constant(1.0), &m, &head).unwrap();
        assert_eq!(p.class_id, 1);
        assert_eq!(p.probability, 0.5);
    }

    #[test]
    fn ties_pick_lowest_class() {
        let m = TemplateMatrix::new(
            vec![5, 2, 9],
            [constant(1.0), constant(1.0), constant(1.0)].concat(),
            EMBED_DIM,
        )
        .unwrap();
        let head = SimilarityHead::new(vec![-1.0; EMBED_DIM], 0.0).unwrap();
        assert_eq!(classify(&constant(0.0), &m, &head).unwrap().class_id, 2);
    }

    #[test]
    fn restriction_errors() {
        let m = matrix(&[constant(0.0), constant(1.0)]);
        let head = SimilarityHead::zeros();
        assert!(matches!(
            classify_restricted(&constant(0.0), &m, &head, &BTreeSet::new()),
            Err(Error::EmptyAllowedSet)
        ));
        assert!(matches!(
            classify_restricted(&constant(0.0), &m, &head, &BTreeSet::from([7])),
            Err(Error::UnknownClass(7))
        ));
        let only = classify_restricted(&constant(0.0), &m, &head, &BTreeSet::from([1])).unwrap();
        assert_eq!(only.class_id, 1);
    }

    #[test]
    fn empty_matrix_and_duplicates() {
        let m = TemplateMatrix::<f32>::new(vec![], vec![], EMBED_DIM).unwrap();
        assert!(matches!(
            classify(&[0.0; EMBED_DIM], &m, &SimilarityHead::zeros()),
            Err(Error::EmptyMatrix)
        ));
        assert!(matches!(
            TemplateMatrix::<f32>::new(vec![1, 1], vec![0.0; 2 * EMBED_DIM], EMBED_DIM),
            Err(Error::DuplicateClass(1))
        ));
    }
}
