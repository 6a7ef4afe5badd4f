//! Confusion-matrix accumulation and intersection-over-union. This is the
//! production metric path; `verification::miou_naive` recomputes the same
//! quantity by direct set counting.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::LabelMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionItem {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Row-major `C x C` counts: `counts[gt * classes + pred]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<u64>,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    ShapeMismatch,
    ClassOutOfRange,
    NoClassPresent,
}

impl core::fmt::Display for MetricError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricError::ShapeMismatch => write!(f, "prediction and target shapes differ"),
            MetricError::ClassOutOfRange => write!(f, "class index out of range"),
            MetricError::NoClassPresent => write!(f, "no class present in prediction or target"),
        }
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![0; classes * classes],
            classes,
        }
    }

    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<(), MetricError> {
        if pred.b != gt.b || pred.h != gt.h || pred.w != gt.w {
            return Err(MetricError::ShapeMismatch);
        }
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            if p as usize >= self.classes || g as usize >= self.classes {
                return Err(MetricError::ClassOutOfRange);
            }
            self.counts[g as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    fn item(&self, class: usize) -> ConfusionItem {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for other in 0..self.classes {
            let pred_c = self.counts[other * self.classes + class];
            let gt_c = self.counts[class * self.classes + other];
            if other == class {
                tp = pred_c;
            } else {
                fp += pred_c;
                fn_ += gt_c;
            }
        }
        ConfusionItem { tp, fp, fn_ }
    }

    /// IoU per class; `None` for classes absent from both prediction and
    /// ground truth (they are excluded from the mean).
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let it = self.item(c);
                let union = it.tp + it.fp + it.fn_;
                if union == 0 {
                    None
                } else {
                    Some(it.tp as f64 / union as f64)
                }
            })
            .collect()
    }

    pub fn mean_iou(&self) -> Result<f64, MetricError> {
        let ious = self.per_class_iou();
        let present: Vec<f64> = ious.into_iter().flatten().collect();
        if present.is_empty() {
            return Err(MetricError::NoClassPresent);
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: &[u8], h: usize, w: usize) -> LabelMap {
        LabelMap::from_vec(values.to_vec(), 1, h, w)
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = map(&[0, 1, 2, 1], 2, 2);
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&gt, &gt).unwrap();
        assert_eq!(cm.mean_iou().unwrap(), 1.0);
    }

    #[test]
    fn swapped_binary_maps_score_zero() {
        let gt = map(&[0, 0, 1, 1], 2, 2);
        let pred = map(&[1, 1, 0, 0], 2, 2);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &gt).unwrap();
        assert_eq!(cm.mean_iou().unwrap(), 0.0);
    }

    #[test]
    fn hand_counted_example() {
        // pred [0,0,1,1], gt [0,1,1,1]: IoU (0.5, 2/3), mean 0.583333.
        let pred = map(&[0, 0, 1, 1], 1, 4);
        let gt = map(&[0, 1, 1, 1], 1, 4);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &gt).unwrap();
        let ious = cm.per_class_iou();
        assert_eq!(ious[0], Some(0.5));
        assert_eq!(ious[1], Some(2.0 / 3.0));
        assert!((cm.mean_iou().unwrap() - 7.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let pred = map(&[0, 0], 1, 2);
        let gt = map(&[0, 0], 1, 2);
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&pred, &gt).unwrap();
        let ious = cm.per_class_iou();
        assert_eq!(ious[0], Some(1.0));
        assert_eq!(ious[1], None);
        assert_eq!(cm.mean_iou().unwrap(), 1.0);
    }

    #[test]
    fn empty_matrix_errors() {
        let cm = ConfusionMatrix::new(3);
        assert_eq!(cm.mean_iou(), Err(MetricError::NoClassPresent));
    }

    #[test]
    fn constant_prediction_zeroes_other_present_classes() {
        let pred = map(&[0, 0, 0, 0], 2, 2);
        let gt = map(&[0, 1, 2, 3], 2, 2);
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&pred, &gt).unwrap();
        let ious = cm.per_class_iou();
        assert_eq!(ious[1], Some(0.0));
        assert_eq!(ious[2], Some(0.0));
        assert_eq!(ious[3], Some(0.0));
        assert_eq!(ious[0], Some(0.25));
    }
}
