//! Labeled/unlabeled split manifests.

use alloc::vec::Vec;

use super::DataError;
use crate::rng::Rng;

/// Labeled-data fraction: either `num/den` of the pool or an absolute count
/// (the benchmark-style "full" setting pins the labeled count directly).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRatio {
    Fraction(u32, u32),
    Absolute(usize),
}

impl SplitRatio {
    pub fn labeled_count(&self, total: usize) -> Result<usize, DataError> {
        let count = match *self {
            SplitRatio::Fraction(num, den) => {
                if den == 0 {
                    return Err(DataError::BadRatio("zero denominator"));
                }
                if num == 0 {
                    return Err(DataError::BadRatio("ratio must be positive"));
                }
                if num > den {
                    return Err(DataError::BadRatio("ratio must be at most 1"));
                }
                // round(num/den * total), half away from zero.
                let num = num as u64;
                let den = den as u64;
                ((2 * num * total as u64 + den) / (2 * den)) as usize
            }
            SplitRatio::Absolute(n) => {
                if n > total {
                    return Err(DataError::BadRatio("labeled count exceeds pool"));
                }
                n
            }
        };
        if count == 0 {
            return Err(DataError::ZeroLabeled);
        }
        Ok(count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub labeled_ids: Vec<usize>,
    pub unlabeled_ids: Vec<usize>,
    pub ratio: SplitRatio,
}

/// Disjoint labeled/unlabeled id lists over `0..total`, shuffled by `seed`
/// and stored sorted.
pub fn make_splits(total: usize, ratio: SplitRatio, seed: u64) -> Result<SplitManifest, DataError> {
    let labeled_count = ratio.labeled_count(total)?;
    let mut ids: Vec<usize> = (0..total).collect();
    let mut rng = Rng::from_stream(seed, 0x73706c6974); // "split" stream
    rng.shuffle(&mut ids);
    let mut labeled_ids: Vec<usize> = ids[..labeled_count].to_vec();
    let mut unlabeled_ids: Vec<usize> = ids[labeled_count..].to_vec();
    labeled_ids.sort_unstable();
    unlabeled_ids.sort_unstable();
    Ok(SplitManifest {
        labeled_ids,
        unlabeled_ids,
        ratio,
    })
}
