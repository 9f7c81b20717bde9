use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Partition of the character set into seen (`C_s`) and unseen (`C_u`) classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub charset: Vec<u32>,
    pub seen: Vec<u32>,
    pub unseen: Vec<u32>,
    pub seed: u64,
}

impl SplitSpec {
    /// Every class seen: the closed-set configuration.
    pub fn closed(charset: &[u32]) -> Self {
        let mut all = charset.to_vec();
        all.sort_unstable();
        SplitSpec {
            charset: all.clone(),
            seen: all,
            unseen: Vec::new(),
            seed: 0,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.unseen.is_empty()
    }

    pub fn seen_set(&self) -> BTreeSet<u32> {
        self.seen.iter().copied().collect()
    }

    pub fn unseen_set(&self) -> BTreeSet<u32> {
        self.unseen.iter().copied().collect()
    }
}

/// Uniform seeded draw of `c_seen` classes from `charset`; the rest are
/// unseen. The draw is a prefix of one seeded permutation, so for a fixed
/// seed the seen sets are nested as `c_seen` grows.
pub fn split_charset(charset: &[u32], c_seen: usize, seed: u64) -> Result<SplitSpec> {
    let mut all = charset.to_vec();
    all.sort_unstable();
    all.dedup();
    if all.len() != charset.len() {
        return Err(Error::SplitMismatch("charset contains duplicates".into()));
    }
    if c_seen == 0 || c_seen >= all.len() {
        return Err(Error::SplitOutOfRange {
            c_seen,
            classes: all.len(),
        });
    }
    let mut order = all.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let picked: BTreeSet<u32> = order[..c_seen].iter().copied().collect();
    let (seen, unseen): (Vec<u32>, Vec<u32>) = all.iter().partition(|id| picked.contains(id));
    Ok(SplitSpec {
        charset: all,
        seen,
        unseen,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_disjointness() {
        let charset: Vec<u32> = (0..10).collect();
        let s = split_charset(&charset, 4, 3).unwrap();
        assert_eq!((s.seen.len(), s.unseen.len()), (4, 6));
        assert!(s.seen_set().is_disjoint(&s.unseen_set()));
        assert_eq!(s, split_charset(&charset, 4, 3).unwrap());
    }

    #[test]
    fn out_of_range() {
        let charset: Vec<u32> = (0..5).collect();
        assert!(split_charset(&charset, 0, 1).is_err());
        assert!(split_charset(&charset, 5, 1).is_err());
    }

    #[test]
    fn large_charset_grid_sizes() {
        let charset: Vec<u32> = (0..3755).collect();
        for c in [500, 1000, 2000] {
            let s = split_charset(&charset, c, 0).unwrap();
            assert_eq!(s.seen.len(), c);
            assert_eq!(s.unseen.len(), 3755 - c);
        }
    }

    #[test]
    fn seen_sets_nest_under_one_seed() {
        let charset: Vec<u32> = (0..16).collect();
        let small = split_charset(&charset, 6, 0).unwrap().seen_set();
        let mid = split_charset(&charset, 10, 0).unwrap().seen_set();
        let large = split_charset(&charset, 14, 0).unwrap().seen_set();
        assert!(small.is_subset(&mid) && mid.is_subset(&large));
    }
}
