//! The full training loss family: supervised cross-entropy, certainty-gated
//! consistency, the uncertain-pixel reweighting loss, and the class-prototype
//! regulation loss, combined by [`total_loss`].
//!
//! Gradient policy: the weak view only ever supplies targets. Pseudo-labels,
//! confidences, masks, similarity weights, and weak prototypes are constants
//! during differentiation; gradients flow through the strong view's logits
//! (consistency and reweighting terms) and through the strong features via
//! the strong prototypes (regulation term).

mod ckr;
mod pixel;
mod sbu;

pub use ckr::{
    ckr_loss, ckr_loss_grad, class_feature_maps, class_prototypes, ClassFeatureMap,
    ClassPrototypes, PrototypeEntry,
};
pub use pixel::{
    certainty_consistency_loss, certainty_consistency_loss_grad, cross_entropy_map,
    supervised_loss, supervised_loss_grad,
};
pub use sbu::{
    per_location_similarity, sbu_loss, sbu_loss_from_weights, sbu_loss_grad, sbu_weight_map,
    uncertain_mask, SbuArtifacts, SbuWeightMap, SimilarityMap, UncertainMask,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    ShapeMismatch(&'static str),
    ClassOutOfRange { class: u8, classes: usize },
    InvalidThreshold(f64),
    EmptyBatch,
    NonFinite(&'static str),
}

impl core::fmt::Display for LossError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LossError::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            LossError::ClassOutOfRange { class, classes } => {
                write!(f, "class index {class} out of range for {classes} classes")
            }
            LossError::InvalidThreshold(t) => {
                write!(f, "confidence threshold {t} outside (0, 1)")
            }
            LossError::EmptyBatch => write!(f, "empty batch"),
            LossError::NonFinite(what) => write!(f, "non-finite loss component: {what}"),
        }
    }
}

/// Per-step loss decomposition with its combination coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_x: f64,
    pub l_su: f64,
    pub l_cr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

/// Combine the four components: `total = l_s + l_x + alpha*l_su + beta*l_cr`.
/// A non-finite component is an error (it signals a diverged run).
pub fn total_loss(
    l_s: f64,
    l_x: f64,
    l_su: f64,
    l_cr: f64,
    alpha: f64,
    beta: f64,
) -> Result<LossBreakdown, LossError> {
    for (v, name) in [(l_s, "l_s"), (l_x, "l_x"), (l_su, "l_su"), (l_cr, "l_cr")] {
        if !v.is_finite() {
            return Err(LossError::NonFinite(name));
        }
    }
    Ok(LossBreakdown {
        l_s,
        l_x,
        l_su,
        l_cr,
        alpha,
        beta,
        total: l_s + l_x + alpha * l_su + beta * l_cr,
    })
}

/// Default combination coefficients.
pub const DEFAULT_ALPHA: f64 = 0.015;
pub const DEFAULT_BETA: f64 = 0.02;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_the_stated_linear_combination() {
        let b = total_loss(1.0, 0.5, 0.2, 0.4, DEFAULT_ALPHA, DEFAULT_BETA).unwrap();
        assert!((b.total - 1.511).abs() < 1e-12);
    }

    #[test]
    fn zero_components_give_zero_total() {
        let b = total_loss(0.0, 0.0, 0.0, 0.0, DEFAULT_ALPHA, DEFAULT_BETA).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn zero_coefficients_reduce_to_baseline() {
        let b = total_loss(0.9, 0.3, 5.0, 7.0, 0.0, 0.0).unwrap();
        assert!((b.total - 1.2).abs() < 1e-12);
    }

    #[test]
    fn nan_component_is_rejected() {
        assert!(matches!(
            total_loss(f64::NAN, 0.0, 0.0, 0.0, 0.1, 0.1),
            Err(LossError::NonFinite("l_s"))
        ));
    }
}
