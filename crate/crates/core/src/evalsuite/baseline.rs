//! Character-based comparison classifier: the embedder backbone followed by a
//! C-way dense layer trained with softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{Corpus, Sample};
use super::schedule::{PlateauSchedule, ScheduleAction};
use super::train::{EpochRecord, TrainConfig};
use crate::dataio::ParameterSet;
use crate::error::{Error, Result};
use crate::nnkernel::{
    dense_backward, dense_forward, sgd_step, softmax_cross_entropy, SgdState, Tensor,
};
use crate::prep::{batch_tensor, NormalizedImage};
use crate::scalar::Scalar;
use crate::siamese::{Model, EMBED_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T> {
    pub backbone: Model<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    /// Class id of each output unit.
    pub classes: Vec<u32>,
}

impl<T: Scalar> Classifier<T> {
    /// Zero-initialized output layer over `classes`.
    pub fn new(backbone: Model<T>, classes: Vec<u32>) -> Self {
        let c = classes.len();
        Classifier {
            backbone,
            weight: Tensor::zeros(&[c, EMBED_DIM]),
            bias: Tensor::zeros(&[c]),
            classes,
        }
    }

    pub fn predict(&self, images: &[&NormalizedImage]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            let feats = self.backbone.embed(&batch_tensor(chunk)?)?;
            let logits = dense_forward(&feats, &self.weight, &self.bias)?;
            for row in 0..chunk.len() {
                let z = logits.outer(row);
                let mut best = 0;
                for k in 1..z.len() {
                    if z[k] > z[best] {
                        best = k;
                    }
                }
                out.push(self.classes[best]);
            }
        }
        Ok(out)
    }

    fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut params = self.backbone.trainable_mut();
        // the similarity head plays no part here
        params.truncate(params.len() - 2);
        params.push(&mut self.weight);
        params.push(&mut self.bias);
        params
    }
}

impl<T: Scalar> ParameterSet<T> for Classifier<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.backbone.named_tensors();
        out.push(("classifier.weight".into(), &self.weight));
        out.push(("classifier.bias".into(), &self.bias));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.backbone.named_tensors_mut();
        out.push(("classifier.weight".into(), &mut self.weight));
        out.push(("classifier.bias".into(), &mut self.bias));
        out
    }
}

fn accuracy<T: Scalar>(clf: &Classifier<T>, samples: &[(u32, &Sample)]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let imgs: Vec<&NormalizedImage> = samples.iter().map(|(_, s)| &s.image).collect();
    let pred = clf.predict(&imgs)?;
    let hits = pred
        .iter()
        .zip(samples)
        .filter(|(p, (t, _))| *p == t)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains backbone and output layer end to end on the training samples of
/// `classes`. Training-set accuracy drives the plateau schedule.
pub fn train_softmax_baseline<T: Scalar>(
    backbone: Model<T>,
    corpus: &Corpus,
    classes: &[u32],
    config: &TrainConfig,
) -> Result<(Classifier<T>, Vec<EpochRecord>)> {
    config.validate()?;
    let mut clf = Classifier::new(backbone, classes.to_vec());
    let samples: Vec<(u32, &Sample)> = Corpus::samples_of(&corpus.train, classes).collect();
    if samples.is_empty() {
        return Err(Error::EmptyPairList);
    }
    let label_of = |id: u32| {
        classes
            .iter()
            .position(|c| *c == id)
            .expect("sample class in label space")
    };

    let mut schedule = PlateauSchedule::new(
        config.lr0,
        config.lr_decay,
        config.plateau_patience,
        config.max_decays,
    );
    let mut sgd = SgdState::new(
        T::lit(config.lr0),
        T::lit(config.momentum),
        T::lit(config.weight_decay),
    );
    let acc0 = accuracy(&clf, &samples)?;
    schedule.observe(acc0);
    let mut history = vec![EpochRecord {
        epoch: 0,
        lr: config.lr0,
        train_loss: f64::NAN,
        monitor_acc: acc0,
    }];

    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=config.max_epochs {
        let lr = schedule.lr;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0f64;
        let mut batches = 0;
        // batch norm needs at least two images per step
        let chunks: Vec<&[usize]> = order
            .chunks(config.batch_size.max(2))
            .filter(|c| c.len() >= 2)
            .collect();
        for chunk in chunks {
            let imgs: Vec<&NormalizedImage> = chunk.iter().map(|&i| &samples[i].1.image).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| label_of(samples[i].0)).collect();
            for p in clf.trainable_mut() {
                p.zero_grad();
            }
            let (feats, trace) = clf.backbone.forward_train(&batch_tensor(&imgs)?)?;
            let logits = dense_forward(&feats, &clf.weight, &clf.bias)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            let g = dense_backward(&feats, &clf.weight, &dlogits)?;
            clf.weight.accumulate_grad(g.dw.data())?;
            clf.bias.accumulate_grad(g.db.data())?;
            clf.backbone.backward(&trace, &g.dx)?;
            sgd_step(&mut clf.trainable_mut(), &mut sgd)?;
            total += loss.wide();
            batches += 1;
        }
        let acc = accuracy(&clf, &samples)?;
        let train_loss = if batches > 0 {
            total / batches as f64
        } else {
            0.0
        };
        log::info!("baseline epoch {epoch}: lr={lr} loss={train_loss:.5} train_acc={acc:.4}");
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            monitor_acc: acc,
        });
        match schedule.observe(acc) {
            ScheduleAction::Continue => {}
            ScheduleAction::Decay(new_lr) => sgd.learning_rate = T::lit(new_lr),
            ScheduleAction::Stop => break,
        }
    }
    Ok((clf, history))
}

/// Accuracy on the held-out samples of the classifier's classes.
pub fn evaluate_closed<T: Scalar>(clf: &Classifier<T>, corpus: &Corpus) -> Result<f64> {
    let samples: Vec<(u32, &Sample)> = Corpus::samples_of(&corpus.test, &clf.classes).collect();
    if samples.is_empty() {
        return Err(Error::SplitMismatch(
            "no test samples for the classifier's classes".into(),
        ));
    }
    accuracy(clf, &samples)
}
