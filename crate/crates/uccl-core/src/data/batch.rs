//! Synchronized labeled/unlabeled batch assembly. One epoch reshuffles both
//! splits, walks `ceil(max(|labeled|, |unlabeled|) / B)` steps, and cycles
//! the smaller split so every batch is full-size.

use alloc::vec::Vec;

use super::augment::{make_pair, AugmentConfig};
use super::scene::Scene;
use super::split::SplitManifest;
use super::DataError;
use crate::rng::{mix, Rng};
use crate::tensor::{LabelMap, Tensor4};

#[derive(Debug, Clone)]
pub struct LabeledBatch {
    /// Weak-augmented images `(B, 3, H, W)`.
    pub images: Tensor4,
    /// Masks transformed identically to the images.
    pub masks: LabelMap,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct UnlabeledBatch {
    pub weak: Tensor4,
    pub strong: Tensor4,
    pub ids: Vec<usize>,
}

/// One training step's worth of data. `unlabeled` is `None` when the
/// unlabeled split is empty (supervised-only runs).
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub labeled: LabeledBatch,
    pub unlabeled: Option<UnlabeledBatch>,
}

pub struct EpochBatches<'a> {
    scenes: &'a [Scene],
    aug: &'a AugmentConfig,
    labeled_order: Vec<usize>,
    unlabeled_order: Vec<usize>,
    batch_size: usize,
    steps: usize,
    step: usize,
    rng: Rng,
}

/// Deterministic batch stream for one epoch: ordering and augmentation draws
/// derive from `(seed, epoch)` only.
pub fn epoch_batches<'a>(
    scenes: &'a [Scene],
    manifest: &SplitManifest,
    aug: &'a AugmentConfig,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<EpochBatches<'a>, DataError> {
    if manifest.labeled_ids.is_empty() {
        return Err(DataError::EmptyLabeledSplit);
    }
    let mut order_rng = Rng::from_stream(seed, mix(0x6f72646572 ^ epoch as u64));
    let mut labeled_order = manifest.labeled_ids.clone();
    order_rng.shuffle(&mut labeled_order);
    let mut unlabeled_order = manifest.unlabeled_ids.clone();
    order_rng.shuffle(&mut unlabeled_order);
    let longest = labeled_order.len().max(unlabeled_order.len());
    let steps = longest.div_ceil(batch_size);
    Ok(EpochBatches {
        scenes,
        aug,
        labeled_order,
        unlabeled_order,
        batch_size,
        steps,
        step: 0,
        rng: Rng::from_stream(seed, mix(0x617567 ^ epoch as u64)),
    })
}

impl EpochBatches<'_> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn labeled_batch(&mut self, ids: &[usize]) -> LabeledBatch {
        let first = &self.scenes[ids[0]];
        let (h, w) = (first.height, first.width);
        let mut images = Tensor4::zeros(ids.len(), 3, h, w);
        let mut masks = LabelMap::zeros(ids.len(), h, w);
        for (bi, &id) in ids.iter().enumerate() {
            let pair = make_pair(&self.scenes[id], self.aug, &mut self.rng, true);
            let plane = h * w;
            for c in 0..3 {
                images
                    .plane_mut(bi, c)
                    .copy_from_slice(&pair.weak_view[c * plane..(c + 1) * plane]);
            }
            masks
                .plane_mut(bi)
                .copy_from_slice(pair.mask_view.as_ref().expect("labeled mask"));
        }
        LabeledBatch {
            images,
            masks,
            ids: ids.to_vec(),
        }
    }

    fn unlabeled_batch(&mut self, ids: &[usize]) -> UnlabeledBatch {
        let first = &self.scenes[ids[0]];
        let (h, w) = (first.height, first.width);
        let mut weak = Tensor4::zeros(ids.len(), 3, h, w);
        let mut strong = Tensor4::zeros(ids.len(), 3, h, w);
        for (bi, &id) in ids.iter().enumerate() {
            let pair = make_pair(&self.scenes[id], self.aug, &mut self.rng, false);
            let plane = h * w;
            for c in 0..3 {
                weak.plane_mut(bi, c)
                    .copy_from_slice(&pair.weak_view[c * plane..(c + 1) * plane]);
                strong
                    .plane_mut(bi, c)
                    .copy_from_slice(&pair.strong_view[c * plane..(c + 1) * plane]);
            }
        }
        UnlabeledBatch {
            weak,
            strong,
            ids: ids.to_vec(),
        }
    }
}

impl Iterator for EpochBatches<'_> {
    type Item = TrainBatch;

    fn next(&mut self) -> Option<TrainBatch> {
        if self.step >= self.steps {
            return None;
        }
        let start = self.step * self.batch_size;
        let batch_size = self.batch_size;
        let take = |order: &[usize]| -> Vec<usize> {
            (0..batch_size)
                .map(|i| order[(start + i) % order.len()])
                .collect()
        };
        let labeled_ids = take(&self.labeled_order);
        let unlabeled_ids = (!self.unlabeled_order.is_empty()).then(|| take(&self.unlabeled_order));
        let labeled = self.labeled_batch(&labeled_ids);
        let unlabeled = unlabeled_ids.map(|ids| self.unlabeled_batch(&ids));
        self.step += 1;
        Some(TrainBatch { labeled, unlabeled })
    }
}
