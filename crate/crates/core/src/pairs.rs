//! Positive/negative template–sample pair generation.
//!
//! For every template class `i`: all samples of class `i` become positives,
//! and for every other class `j`, `n` distinct samples of `j` drawn without
//! replacement become negatives. The full list is then shuffled.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub class_id: u32,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairRecord {
    pub template_class: u32,
    pub sample: SampleRef,
    pub label: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairList {
    pub records: Vec<PairRecord>,
    pub seed: u64,
    pub n: usize,
}

impl PairList {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(positives, negatives)`.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self.records.iter().filter(|r| r.label).count();
        (pos, self.records.len() - pos)
    }

    /// Records in sorted order, independent of shuffling.
    pub fn canonical(&self) -> Vec<PairRecord> {
        let mut r = self.records.clone();
        r.sort();
        r
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("#seed={}\tn={}\n", self.seed, self.n);
        out.push_str("template_class\tsample_class\tsample_index\tlabel\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.template_class,
                r.sample.class_id,
                r.sample.index,
                u8::from(r.label)
            );
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::ManifestParse {
            path: "pairs.tsv".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let mut seed = None;
        let mut n = None;
        for field in header.trim_start_matches('#').split('\t') {
            match field.split_once('=') {
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("n", v)) => n = v.parse().ok(),
                _ => return Err(bad(1, "header must be #seed=<u64>\\tn=<usize>")),
            }
        }
        let (seed, n) = seed
            .zip(n)
            .ok_or_else(|| bad(1, "header must record seed and n"))?;
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.starts_with("template_class") || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(i + 1, "expected 4 columns"));
            }
            let num = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| bad(i + 1, "non-integer field"))
            };
            let label = match f[3] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(i + 1, "label must be 0 or 1")),
            };
            records.push(PairRecord {
                template_class: num(f[0])? as u32,
                sample: SampleRef {
                    class_id: num(f[1])? as u32,
                    index: num(f[2])? as usize,
                },
                label,
            });
        }
        Ok(PairList { records, seed, n })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Closed-form `(positives, negatives)` = `(Σ|D[i]|, c(c−1)n)`.
pub fn pair_counts(sizes: &[usize], n: usize) -> (usize, usize) {
    let c = sizes.len();
    (sizes.iter().sum(), c * c.saturating_sub(1) * n)
}

/// Generates the shuffled pair list for classes given as `(class id, sample count)`.
pub fn generate_pairs(classes: &[(u32, usize)], n: usize, seed: u64) -> Result<PairList> {
    let mut ids = BTreeSet::new();
    for &(id, count) in classes {
        if !ids.insert(id) {
            return Err(Error::DuplicateClass(id));
        }
        if count == 0 {
            return Err(Error::EmptyClass(id));
        }
        if classes.len() > 1 && count < n {
            return Err(Error::NotEnoughSamples {
                class: id,
                available: count,
                n,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pos, neg) = pair_counts(&classes.iter().map(|c| c.1).collect::<Vec<_>>(), n);
    let mut records = Vec::with_capacity(pos + neg);
    for &(ti, _) in classes {
        for &(cj, count) in classes {
            if ti == cj {
                records.extend((0..count).map(|index| PairRecord {
                    template_class: ti,
                    sample: SampleRef {
                        class_id: cj,
                        index,
                    },
                    label: true,
                }));
            } else {
                for index in index::sample(&mut rng, count, n) {
                    records.push(PairRecord {
                        template_class: ti,
                        sample: SampleRef {
                            class_id: cj,
                            index,
                        },
                        label: false,
                    });
                }
            }
        }
    }
    records.shuffle(&mut rng);
    Ok(PairList { records, seed, n })
}

/// Per-epoch permutation of `pairs`, determined by `(pairs.seed, epoch)`.
pub fn reshuffle(pairs: &PairList, epoch: u64) -> PairList {
    let mut rng = ChaCha8Rng::seed_from_u64(pairs.seed);
    rng.set_stream(epoch.wrapping_add(1));
    let mut records = pairs.records.clone();
    records.shuffle(&mut rng);
    PairList {
        records,
        seed: pairs.seed,
        n: pairs.n,
    }
}
