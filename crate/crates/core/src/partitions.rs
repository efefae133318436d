//! Partitions of the arms into equal-effect blocks and the true-null sets they imply.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::model::{ArmSet, HypothesisIndex};

/// A partition of the arms into blocks of equal effect. Every within-block
/// pair is a true null hypothesis.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartitionHypothesisSet {
    /// Blocks ordered by their smallest arm.
    blocks: Vec<ArmSet>,
}

impl PartitionHypothesisSet {
    pub fn new(arms: usize, mut blocks: Vec<ArmSet>) -> Result<Self> {
        let mut seen = ArmSet::empty();
        for &b in &blocks {
            if b.is_empty() || !b.intersection(seen).is_empty() {
                return Err(Error::Invalid(format!("blocks must be non-empty and disjoint, got {b}")));
            }
            seen = seen.union(b);
        }
        if seen != ArmSet::full(arms) {
            return Err(Error::Invalid(format!("blocks cover {seen}, expected all {arms} arms")));
        }
        blocks.sort_by_key(|b| b.iter().next());
        Ok(PartitionHypothesisSet { blocks })
    }

    pub fn blocks(&self) -> &[ArmSet] {
        &self.blocks
    }

    pub fn arms(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Within-block pairs, lexicographic.
    pub fn indices(&self) -> Vec<HypothesisIndex> {
        let mut out: Vec<HypothesisIndex> = self.blocks.iter().flat_map(|b| b.pairs()).collect();
        out.sort();
        out
    }

    /// Block index of every arm.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.arms()];
        for (i, b) in self.blocks.iter().enumerate() {
            for k in b.iter() {
                out[k] = i;
            }
        }
        out
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }
}

impl fmt::Debug for PartitionHypothesisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for PartitionHypothesisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Every set partition of `arms` arms, via restricted growth strings.
pub fn all_partitions(arms: usize) -> Vec<PartitionHypothesisSet> {
    let mut out = Vec::new();
    if arms == 0 {
        return out;
    }
    let mut growth = vec![0usize; arms];
    loop {
        let count = growth.iter().max().unwrap() + 1;
        let mut blocks = vec![ArmSet::empty(); count];
        for (k, &b) in growth.iter().enumerate() {
            blocks[b].insert(k);
        }
        out.push(PartitionHypothesisSet { blocks });
        // next restricted growth string
        let mut i = arms - 1;
        loop {
            if i == 0 {
                return out;
            }
            let prefix_max = growth[..i].iter().max().copied().unwrap_or(0);
            if growth[i] <= prefix_max {
                growth[i] += 1;
                for g in &mut growth[i + 1..] {
                    *g = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Partitions other than one block and all singletons (`Bell(K) - 2` of them).
pub fn candidate_null_sets(arms: usize) -> Vec<PartitionHypothesisSet> {
    all_partitions(arms)
        .into_iter()
        .filter(|p| p.blocks.len() > 1 && p.blocks.len() < arms)
        .collect()
}

/// Partitions into exactly two blocks (`Stirling(K, 2)` of them).
pub fn two_block_partitions(arms: usize) -> Vec<PartitionHypothesisSet> {
    all_partitions(arms)
        .into_iter()
        .filter(|p| p.blocks.len() == 2)
        .collect()
}

/// One two-block partition per block-size split, with the number of
/// partitions it stands for. Sufficient when every arm has the same sizes.
pub fn two_block_representatives(arms: usize) -> Vec<(PartitionHypothesisSet, u64)> {
    (1..=arms / 2)
        .map(|s| {
            let blocks = vec![ArmSet::from_arms(0..s), ArmSet::from_arms(s..arms)];
            let mut count = binomial(arms as u64, s as u64);
            if 2 * s == arms {
                count /= 2;
            }
            (PartitionHypothesisSet { blocks }, count)
        })
        .collect()
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Stirling number of the second kind.
pub fn stirling2(n: u64, k: u64) -> u64 {
    let mut row = vec![0u64; k as usize + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i) as usize).rev() {
            row[j] = j as u64 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[k as usize]
}

pub fn bell(n: u64) -> u64 {
    (0..=n).map(|k| stirling2(n, k)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(stirling2(4, 2), 7);
        assert_eq!(stirling2(5, 2), 15);
        assert_eq!(stirling2(0, 0), 1);
        assert_eq!(bell(4), 15);
        assert_eq!(bell(6), 203);
        for k in 1..=7 {
            assert_eq!(all_partitions(k).len() as u64, bell(k as u64));
            assert_eq!(two_block_partitions(k).len() as u64, stirling2(k as u64, 2));
            if k >= 2 {
                assert_eq!(candidate_null_sets(k).len() as u64, bell(k as u64) - 2);
            }
        }
    }

    #[test]
    fn representatives_cover_all_two_block_partitions() {
        for k in 2..=8 {
            let total: u64 = two_block_representatives(k).iter().map(|(_, c)| c).sum();
            assert_eq!(total, stirling2(k as u64, 2));
        }
        let reps = two_block_representatives(4);
        assert_eq!(reps.len(), 2);
        assert_eq!(reps[0].0.to_string(), "{1}+{2,3,4}");
        assert_eq!(reps[0].1, 4);
        assert_eq!(reps[1].1, 3);
    }

    #[test]
    fn implied_nulls() {
        let p = PartitionHypothesisSet::new(
            4,
            vec![ArmSet::from_arms([1, 3]), ArmSet::from_arms([0, 2])],
        )
        .unwrap();
        assert_eq!(p.to_string(), "{1,3}+{2,4}");
        let idx: Vec<_> = p.indices().iter().map(|h| h.to_string()).collect();
        assert_eq!(idx, ["(1,3)", "(2,4)"]);
        assert_eq!(p.block_of(), vec![0, 1, 0, 1]);
        assert!(PartitionHypothesisSet::new(3, vec![ArmSet::from_arms([0, 1])]).is_err());
        assert!(PartitionHypothesisSet::new(
            3,
            vec![ArmSet::from_arms([0, 1]), ArmSet::from_arms([1, 2])]
        )
        .is_err());
    }
}
