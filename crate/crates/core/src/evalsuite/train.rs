use std::collections::HashMap;
use std::fmt::Write as _;

use super::corpus::{Corpus, Sample};
use super::schedule::{PlateauSchedule, ScheduleAction};
use super::split::SplitSpec;
use crate::error::{Error, Result};
use crate::matcher::{build_template_matrix, classify, embed_images};
use crate::nnkernel::SgdState;
use crate::pairs::{generate_pairs, reshuffle, PairList, PairRecord};
use crate::prep::NormalizedImage;
use crate::scalar::Scalar;
use crate::siamese::{train_step, Model, PairBatch, PairIndex};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub plateau_patience: usize,
    /// Decays allowed before the next plateau ends training.
    pub max_decays: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Negatives drawn per (template class, other class) cell.
    pub n: usize,
    /// Hand back the weights of the epoch with the best monitor reading
    /// instead of the last epoch's.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            lr0: 0.1,
            lr_decay: 0.1,
            plateau_patience: 3,
            max_decays: 2,
            momentum: 0.9,
            weight_decay: 1e-4,
            max_epochs: 100,
            seed: 0,
            n: 5,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("lr0 must be positive and lr_decay in (0, 1)");
        }
        if self.plateau_patience == 0 || self.max_epochs == 0 {
            return bad("plateau_patience and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("momentum must be in [0, 1) and weight_decay non-negative");
        }
        Ok(())
    }
}

/// One row of the training history. Epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub monitor_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Loss of every SGD step, in order.
    pub step_losses: Vec<f64>,
    /// Epoch whose weights the model holds on return.
    pub kept_epoch: usize,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,monitor_acc\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.epoch, r.lr, r.train_loss, r.monitor_acc
        );
    }
    out
}

/// Accuracy of `samples` classified against templates of `classes` only.
pub fn label_space_accuracy<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    classes: &[u32],
    samples: &[(u32, &Sample)],
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let tpl: Vec<(u32, &NormalizedImage)> =
        classes.iter().map(|c| (*c, &corpus.templates[c])).collect();
    let matrix = build_template_matrix(model, &tpl)?;
    let imgs: Vec<&NormalizedImage> = samples.iter().map(|(_, s)| &s.image).collect();
    let feats = embed_images(model, &imgs)?;
    let mut correct = 0;
    for ((truth, _), f) in samples.iter().zip(&feats) {
        if classify(f, &matrix, &model.head)?.class_id == *truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Pair list over the seen classes' training samples.
pub fn seen_pairs(corpus: &Corpus, split: &SplitSpec, n: usize, seed: u64) -> Result<PairList> {
    let sizes: Vec<(u32, usize)> = split
        .seen
        .iter()
        .map(|c| (*c, corpus.train.get(c).map_or(0, Vec::len)))
        .collect();
    generate_pairs(&sizes, n, seed)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum ImageKey {
    Template(u32),
    Sample(u32, usize),
}

fn slot<'a>(
    slots: &mut HashMap<ImageKey, usize>,
    images: &mut Vec<&'a NormalizedImage>,
    key: ImageKey,
    img: &'a NormalizedImage,
) -> usize {
    *slots.entry(key).or_insert_with(|| {
        images.push(img);
        images.len() - 1
    })
}

/// Assembles a batch in which every distinct image is embedded once.
pub fn assemble_batch<T: Scalar>(corpus: &Corpus, records: &[PairRecord]) -> Result<PairBatch<T>> {
    let mut slots = HashMap::new();
    let mut images = Vec::new();
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let tpl = corpus
            .templates
            .get(&r.template_class)
            .ok_or(Error::UnknownClass(r.template_class))?;
        let smp = corpus
            .train_sample(r.sample)
            .ok_or_else(|| Error::SplitMismatch(format!("no training sample {:?}", r.sample)))?;
        let template = slot(
            &mut slots,
            &mut images,
            ImageKey::Template(r.template_class),
            tpl,
        );
        let sample = slot(
            &mut slots,
            &mut images,
            ImageKey::Sample(r.sample.class_id, r.sample.index),
            &smp.image,
        );
        pairs.push(PairIndex {
            template,
            sample,
            label: r.label,
        });
    }
    PairBatch::new(&images, pairs)
}

/// Trains the siamese model on pairs from the seen classes. After every epoch
/// the monitor accuracy (unseen training samples against unseen templates;
/// seen ones in a closed split) drives the plateau schedule. With
/// `restore_best` the model returns holding the weights of the trained epoch
/// with the highest monitor reading (earliest on ties).
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    corpus: &Corpus,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let pairs = seen_pairs(corpus, split, config.n, config.seed)?;
    if pairs.is_empty() {
        return Err(Error::EmptyPairList);
    }
    let monitor_classes = if split.is_closed() {
        &split.seen
    } else {
        &split.unseen
    };
    let monitor: Vec<(u32, &Sample)> = Corpus::samples_of(&corpus.train, monitor_classes).collect();

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
    let acc0 = label_space_accuracy(model, corpus, monitor_classes, &monitor)?;
    schedule.observe(acc0);
    let mut history = vec![EpochRecord {
        epoch: 0,
        lr: config.lr0,
        train_loss: f64::NAN,
        monitor_acc: acc0,
    }];
    let mut step_losses = Vec::new();
    let mut best: Option<(f64, usize, Model<T>)> = None;

    for epoch in 1..=config.max_epochs {
        let lr = schedule.lr;
        let order = reshuffle(&pairs, epoch as u64);
        let mut epoch_loss = 0f64;
        let mut batches = 0usize;
        for chunk in order.records.chunks(config.batch_size) {
            let batch = assemble_batch::<T>(corpus, chunk)?;
            let loss = train_step(model, &batch, &mut sgd)?;
            step_losses.push(loss);
            epoch_loss += loss;
            batches += 1;
        }
        let acc = label_space_accuracy(model, corpus, monitor_classes, &monitor)?;
        let train_loss = epoch_loss / batches as f64;
        log::info!("epoch {epoch}: lr={lr} loss={train_loss:.5} monitor_acc={acc:.4}");
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            monitor_acc: acc,
        });
        if !train_loss.is_finite() {
            log::warn!("non-finite training loss at epoch {epoch}; stopping");
            break;
        }
        if config.restore_best && best.as_ref().is_none_or(|b| acc > b.0) {
            best = Some((acc, epoch, model.clone()));
        }
        match schedule.observe(acc) {
            ScheduleAction::Continue => {}
            ScheduleAction::Decay(new_lr) => sgd.learning_rate = T::lit(new_lr),
            ScheduleAction::Stop => break,
        }
    }
    let kept_epoch = match best {
        Some((_, epoch, kept)) => {
            *model = kept;
            epoch
        }
        None => history.last().map_or(0, |r| r.epoch),
    };
    Ok(TrainOutcome {
        history,
        step_losses,
        kept_epoch,
    })
}
