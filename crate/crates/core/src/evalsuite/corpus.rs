use std::collections::BTreeMap;
use std::path::Path;

use crate::dataio::{load_manifest, load_pgm, GrayImage};
use crate::error::{Error, Result};
use crate::pairs::SampleRef;
use crate::prep::{preprocess, NormalizedImage};
use crate::toygen::ToyFixture;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: NormalizedImage,
    /// Where the raw image came from; carried into error reports.
    pub source: String,
}

/// Preprocessed templates and per-class train/test samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub templates: BTreeMap<u32, NormalizedImage>,
    pub train: BTreeMap<u32, Vec<Sample>>,
    pub test: BTreeMap<u32, Vec<Sample>>,
}

/// Number of the `count` samples of a class that go to the training side.
pub fn train_share(count: usize, test_fraction: f64) -> usize {
    let test = (count as f64 * test_fraction).round() as usize;
    count - test.min(count.saturating_sub(1))
}

impl Corpus {
    /// Builds a corpus from raw per-class images. The first samples of each
    /// class (in order) form the training side, the trailing
    /// `test_fraction` the test side.
    pub fn from_raw(
        templates: Vec<(u32, GrayImage)>,
        samples: Vec<(u32, String, GrayImage)>,
        test_fraction: f64,
        threshold: u8,
    ) -> Result<Self> {
        let mut tpl = BTreeMap::new();
        for (id, img) in templates {
            if tpl.insert(id, preprocess(&img, threshold)?).is_some() {
                return Err(Error::DuplicateClass(id));
            }
        }
        let mut grouped: BTreeMap<u32, Vec<Sample>> = BTreeMap::new();
        for (id, source, img) in samples {
            grouped.entry(id).or_default().push(Sample {
                image: preprocess(&img, threshold)?,
                source,
            });
        }
        if let Some(id) = grouped.keys().find(|id| !tpl.contains_key(id)) {
            return Err(Error::SplitMismatch(format!(
                "class {id} has samples but no template"
            )));
        }
        let mut train = BTreeMap::new();
        let mut test = BTreeMap::new();
        for (id, mut list) in grouped {
            let keep = train_share(list.len(), test_fraction);
            test.insert(id, list.split_off(keep));
            train.insert(id, list);
        }
        Ok(Corpus {
            templates: tpl,
            train,
            test,
        })
    }

    pub fn from_fixture(fixture: &ToyFixture, test_fraction: f64, threshold: u8) -> Result<Self> {
        let templates = fixture
            .templates
            .iter()
            .enumerate()
            .map(|(c, t)| (c as u32, t.clone()))
            .collect();
        let samples = fixture
            .samples
            .iter()
            .enumerate()
            .flat_map(|(c, imgs)| {
                imgs.iter().enumerate().map(move |(i, img)| {
                    (c as u32, format!("samples/c{c:04}_{i:04}.pgm"), img.clone())
                })
            })
            .collect();
        Self::from_raw(templates, samples, test_fraction, threshold)
    }

    /// Loads `manifest.tsv` and `templates.tsv` from a dataset directory.
    pub fn load_dir(dir: impl AsRef<Path>, test_fraction: f64, threshold: u8) -> Result<Self> {
        let dir = dir.as_ref();
        let samples = load_manifest(dir.join("manifest.tsv"), false)?;
        let templates = load_manifest(dir.join("templates.tsv"), false)?;
        let tpl = templates
            .entries
            .iter()
            .map(|e| Ok((e.class_id, load_pgm(templates.resolve(e))?)))
            .collect::<Result<Vec<_>>>()?;
        let smp = samples
            .entries
            .iter()
            .map(|e| Ok((e.class_id, e.path.clone(), load_pgm(samples.resolve(e))?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_raw(tpl, smp, test_fraction, threshold)
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.templates.keys().copied().collect()
    }

    pub fn train_sample(&self, r: SampleRef) -> Option<&Sample> {
        self.train.get(&r.class_id).and_then(|v| v.get(r.index))
    }

    /// `(class, sample)` pairs of one side restricted to `classes`.
    pub fn samples_of<'a>(
        side: &'a BTreeMap<u32, Vec<Sample>>,
        classes: &'a [u32],
    ) -> impl Iterator<Item = (u32, &'a Sample)> + 'a {
        classes
            .iter()
            .flat_map(move |c| side.get(c).into_iter().flatten().map(move |s| (*c, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_share_keeps_at_least_one() {
        assert_eq!(train_share(20, 0.25), 15);
        assert_eq!(train_share(1, 0.5), 1);
        assert_eq!(train_share(4, 0.0), 4);
    }
}
