//! Synthetic shape-segmentation data: deterministic scene generation,
//! labeled/unlabeled split management, and the weak/strong augmentation
//! contract (spatial transforms are sampled once and shared, so pixel `(i,j)`
//! of the strong view always corresponds to pixel `(i,j)` of the weak view).

mod augment;
mod batch;
mod scene;
mod split;

pub use augment::{
    apply_spatial_image, apply_spatial_mask, make_pair, strong_augment, weak_augment,
    AugmentConfig, AugmentedPair, SpatialRecord,
};
pub use batch::{epoch_batches, EpochBatches, LabeledBatch, TrainBatch, UnlabeledBatch};
pub use scene::{class_color, generate_scene, Scene};
pub use split::{make_splits, SplitManifest, SplitRatio};

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    TooFewClasses(usize),
    ImageTooSmall { height: usize, width: usize },
    BadShapeCount,
    BadRatio(&'static str),
    ZeroLabeled,
    EmptyLabeledSplit,
    SceneShapeMismatch,
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::TooFewClasses(c) => write!(f, "need at least 2 classes, got {c}"),
            DataError::ImageTooSmall { height, width } => {
                write!(
                    f,
                    "image {height}x{width} too small to render shapes (min 32)"
                )
            }
            DataError::BadShapeCount => write!(f, "max_shapes must be at least 1"),
            DataError::BadRatio(msg) => write!(f, "bad split ratio: {msg}"),
            DataError::ZeroLabeled => write!(f, "split ratio yields zero labeled scenes"),
            DataError::EmptyLabeledSplit => write!(f, "labeled split is empty"),
            DataError::SceneShapeMismatch => write!(f, "scene dims differ from config"),
        }
    }
}

/// Generator configuration for the synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub height: usize,
    pub width: usize,
    /// Class count including background (class 0).
    pub classes: usize,
    /// Training-pool scene count.
    pub scenes: usize,
    /// Held-out scenes for evaluation, ids continue after the train pool.
    pub val_scenes: usize,
    pub max_shapes: usize,
    /// Per-pixel uniform noise amplitude.
    pub noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            height: 64,
            width: 64,
            classes: 4,
            scenes: 200,
            val_scenes: 40,
            max_shapes: 3,
            noise: 0.05,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes < 2 {
            return Err(DataError::TooFewClasses(self.classes));
        }
        if self.height < 32 || self.width < 32 {
            return Err(DataError::ImageTooSmall {
                height: self.height,
                width: self.width,
            });
        }
        if self.max_shapes == 0 {
            return Err(DataError::BadShapeCount);
        }
        Ok(())
    }
}
