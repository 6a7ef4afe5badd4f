//! Weak (spatial) and strong (photometric) augmentation. The strong view is
//! built on top of the already-flipped weak view, never re-flipped, so the
//! per-pixel losses can rely on spatial correspondence between views.

use alloc::vec;
use alloc::vec::Vec;

use super::scene::Scene;
use crate::mathf;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialRecord {
    pub hflip: bool,
    pub vflip: bool,
}

/// Photometric parameters. Ranges follow common consistency-training
/// practice; everything is config-exposed because the reference recipe
/// names the operations but not their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Master switch; off makes the strong view equal the weak view exactly.
    pub photometric: bool,
    pub jitter_min: f64,
    pub jitter_max: f64,
    pub gray_prob: f64,
    pub blur_prob: f64,
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            photometric: true,
            jitter_min: 0.6,
            jitter_max: 1.4,
            gray_prob: 0.2,
            blur_prob: 0.5,
            blur_sigma_min: 0.1,
            blur_sigma_max: 2.0,
        }
    }
}

/// A weak/strong pair with the spatial transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    pub weak_view: Vec<f64>,
    pub strong_view: Vec<f64>,
    pub spatial: SpatialRecord,
    /// Transformed mask; carried for labeled scenes only.
    pub mask_view: Option<Vec<u8>>,
}

pub fn apply_spatial_image(image: &[f64], h: usize, w: usize, rec: SpatialRecord) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; image.len()];
    let channels = image.len() / plane;
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                let sy = if rec.vflip { h - 1 - y } else { y };
                let sx = if rec.hflip { w - 1 - x } else { x };
                out[c * plane + y * w + x] = image[c * plane + sy * w + sx];
            }
        }
    }
    out
}

pub fn apply_spatial_mask(mask: &[u8], h: usize, w: usize, rec: SpatialRecord) -> Vec<u8> {
    let mut out = vec![0u8; mask.len()];
    for y in 0..h {
        for x in 0..w {
            let sy = if rec.vflip { h - 1 - y } else { y };
            let sx = if rec.hflip { w - 1 - x } else { x };
            out[y * w + x] = mask[sy * w + sx];
        }
    }
    out
}

/// Each flip applied independently with probability 0.5; image and mask
/// transform identically.
pub fn weak_augment(scene: &Scene, rng: &mut Rng) -> (Vec<f64>, SpatialRecord, Vec<u8>) {
    let rec = SpatialRecord {
        hflip: rng.bernoulli(0.5),
        vflip: rng.bernoulli(0.5),
    };
    (
        apply_spatial_image(&scene.image, scene.height, scene.width, rec),
        rec,
        apply_spatial_mask(&scene.mask, scene.height, scene.width, rec),
    )
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn gaussian_blur(image: &mut [f64], h: usize, w: usize, sigma: f64) {
    let radius = mathf::ceil(2.5 * sigma).max(1.0) as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = mathf::exp(-(i as f64 * i as f64) / (2.0 * sigma * sigma));
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let plane = h * w;
    let channels = image.len() / plane;
    let mut tmp = vec![0.0; plane];
    for c in 0..channels {
        let ch = &mut image[c * plane..(c + 1) * plane];
        // Horizontal pass with clamp-to-edge.
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = (x as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += kv * ch[y * w + sx];
                }
                tmp[y * w + x] = acc;
            }
        }
        // Vertical pass.
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[sy * w + x];
                }
                ch[y * w + x] = acc;
            }
        }
    }
}

/// Photometric-only strong augmentation of an already spatially augmented
/// view: brightness/contrast/saturation jitter, optional graying, optional
/// Gaussian blur, clamped to `[0,1]`.
pub fn strong_augment(
    weak: &[f64],
    h: usize,
    w: usize,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Vec<f64> {
    let mut out = weak.to_vec();
    if !cfg.photometric {
        return out;
    }
    let plane = h * w;

    let brightness = rng.range(cfg.jitter_min, cfg.jitter_max);
    let contrast = rng.range(cfg.jitter_min, cfg.jitter_max);
    let saturation = rng.range(cfg.jitter_min, cfg.jitter_max);
    let gray = rng.bernoulli(cfg.gray_prob);
    let blur = rng.bernoulli(cfg.blur_prob);
    let sigma = rng.range(cfg.blur_sigma_min, cfg.blur_sigma_max);

    for v in &mut out {
        *v *= brightness;
    }

    // Contrast pivots on the mean luma of the current image.
    let mut mean = 0.0;
    for p in 0..plane {
        mean += luma(out[p], out[plane + p], out[2 * plane + p]);
    }
    mean /= plane as f64;
    for v in &mut out {
        *v = (*v - mean) * contrast + mean;
    }

    for p in 0..plane {
        let l = luma(out[p], out[plane + p], out[2 * plane + p]);
        for c in 0..3 {
            let v = &mut out[c * plane + p];
            *v = (*v - l) * saturation + l;
        }
    }

    if gray {
        for p in 0..plane {
            let l = luma(out[p], out[plane + p], out[2 * plane + p]);
            out[p] = l;
            out[plane + p] = l;
            out[2 * plane + p] = l;
        }
    }

    if blur {
        gaussian_blur(&mut out, h, w, sigma);
    }

    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Weak view (shared spatial transform) plus its photometric strong view.
pub fn make_pair(
    scene: &Scene,
    cfg: &AugmentConfig,
    rng: &mut Rng,
    keep_mask: bool,
) -> AugmentedPair {
    let (weak_view, spatial, mask_view) = weak_augment(scene, rng);
    let strong_view = strong_augment(&weak_view, scene.height, scene.width, cfg, rng);
    AugmentedPair {
        weak_view,
        strong_view,
        spatial,
        mask_view: keep_mask.then_some(mask_view),
    }
}
