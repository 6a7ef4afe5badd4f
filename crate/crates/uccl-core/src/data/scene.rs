//! Deterministic scene synthesis: filled geometric primitives over a
//! textured background. Shape kind is tied to class id (disk, rectangle,
//! triangle, cycling), so classes are visually distinct by both shape and
//! color.

use alloc::vec;
use alloc::vec::Vec;

use super::{DataError, DatasetConfig};
use crate::mathf;
use crate::rng::Rng;

/// One synthetic scene: CHW image in `[0,1]` plus its class-index mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// `3 * height * width`, channel-major.
    pub image: Vec<f64>,
    /// `height * width` class indices, 0 = background.
    pub mask: Vec<u8>,
    pub height: usize,
    pub width: usize,
}

impl Scene {
    pub fn background_fraction(&self) -> f64 {
        let zeros = self.mask.iter().filter(|&&m| m == 0).count();
        zeros as f64 / self.mask.len() as f64
    }
}

/// Saturated fill colors per non-background class, cycling a 6-color table
/// with a brightness drop on each revolution.
pub fn class_color(class: usize) -> [f64; 3] {
    const BASE: [[f64; 3]; 6] = [
        [0.85, 0.20, 0.20],
        [0.20, 0.80, 0.25],
        [0.20, 0.30, 0.85],
        [0.85, 0.80, 0.20],
        [0.80, 0.25, 0.80],
        [0.20, 0.75, 0.80],
    ];
    let idx = (class - 1) % 6;
    let fade = 1.0 / (1.0 + ((class - 1) / 6) as f64 * 0.4);
    let c = BASE[idx];
    [c[0] * fade, c[1] * fade, c[2] * fade]
}

enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64 },
    Triangle { v: [(f64, f64); 3] },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Disk { cx, cy, r } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= r * r
            }
            Shape::Rect { cx, cy, hw, hh } => (x - cx).abs() <= *hw && (y - cy).abs() <= *hh,
            Shape::Triangle { v } => {
                // Consistent-sign edge test.
                let sign = |a: (f64, f64), b: (f64, f64)| {
                    (x - b.0) * (a.1 - b.1) - (a.0 - b.0) * (y - b.1)
                };
                let d0 = sign(v[0], v[1]);
                let d1 = sign(v[1], v[2]);
                let d2 = sign(v[2], v[0]);
                let has_neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
                let has_pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
                !(has_neg && has_pos)
            }
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Disk { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Shape::Rect { cx, cy, hw, hh } => (cx - hw, cy - hh, cx + hw, cy + hh),
            Shape::Triangle { v } => {
                let xs = [v[0].0, v[1].0, v[2].0];
                let ys = [v[0].1, v[1].1, v[2].1];
                let min = |a: &[f64]| a.iter().copied().fold(f64::INFINITY, f64::min);
                let max = |a: &[f64]| a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min(&xs), min(&ys), max(&xs), max(&ys))
            }
        }
    }
}

/// Sample a shape of the kind assigned to `class`, fully inside the canvas
/// so clipping never shrinks it below the renderable minimum.
fn sample_shape(class: usize, h: usize, w: usize, rng: &mut Rng) -> Shape {
    let dim = h.min(w) as f64;
    let kind = (class - 1) % 3;
    match kind {
        0 => {
            let r = rng.range(0.14, 0.24) * dim;
            let cx = rng.range(r, w as f64 - r);
            let cy = rng.range(r, h as f64 - r);
            Shape::Disk { cx, cy, r }
        }
        1 => {
            let hw = rng.range(0.12, 0.22) * dim;
            let hh = rng.range(0.12, 0.22) * dim;
            let cx = rng.range(hw, w as f64 - hw);
            let cy = rng.range(hh, h as f64 - hh);
            Shape::Rect { cx, cy, hw, hh }
        }
        _ => {
            let r = rng.range(0.24, 0.32) * dim;
            let cx = rng.range(r, w as f64 - r);
            let cy = rng.range(r, h as f64 - r);
            let phase = rng.range(0.0, 2.0 * mathf::PI);
            let mut v = [(0.0, 0.0); 3];
            for (i, vert) in v.iter_mut().enumerate() {
                let jitter = rng.range(-0.25, 0.25);
                let a = phase + i as f64 * 2.0 * mathf::PI / 3.0 + jitter;
                *vert = (cx + r * mathf::cos(a), cy + r * mathf::sin(a));
            }
            Shape::Triangle { v }
        }
    }
}

/// Deterministic scene from `(seed, cfg)`: textured gradient background plus
/// 1..=max_shapes filled primitives drawn painter-style (later shapes win).
pub fn generate_scene(seed: u64, cfg: &DatasetConfig) -> Result<Scene, DataError> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = Rng::from_stream(seed, 0x7363656e65); // "scene" stream
    let plane = h * w;
    let mut image = vec![0.0f64; 3 * plane];
    let mut mask = vec![0u8; plane];

    // Background: dull tinted base with a linear gradient and pixel noise.
    let base = [
        rng.range(0.30, 0.55),
        rng.range(0.30, 0.55),
        rng.range(0.30, 0.55),
    ];
    let angle = rng.range(0.0, 2.0 * mathf::PI);
    let amp = rng.range(0.0, 0.12);
    let (gx, gy) = (mathf::cos(angle), mathf::sin(angle));
    for y in 0..h {
        for x in 0..w {
            let t = gx * (x as f64 / w as f64 - 0.5) + gy * (y as f64 / h as f64 - 0.5);
            for c in 0..3 {
                let noise = rng.range(-cfg.noise, cfg.noise);
                image[c * plane + y * w + x] = (base[c] + amp * t + noise).clamp(0.0, 1.0);
            }
        }
    }

    // Shapes, painter's order.
    let count = 1 + rng.below(cfg.max_shapes);
    for _ in 0..count {
        let class = 1 + rng.below(cfg.classes - 1);
        let shape = sample_shape(class, h, w, &mut rng);
        let base_color = class_color(class);
        let jitter = [
            rng.range(-0.08, 0.08),
            rng.range(-0.08, 0.08),
            rng.range(-0.08, 0.08),
        ];
        let (x0, y0, x1, y1) = shape.bounds();
        let x0 = (x0.max(0.0) as usize).min(w - 1);
        let y0 = (y0.max(0.0) as usize).min(h - 1);
        let x1 = (x1.min(w as f64 - 1.0) as usize).max(x0);
        let y1 = (y1.min(h as f64 - 1.0) as usize).max(y0);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    mask[y * w + x] = class as u8;
                    for c in 0..3 {
                        let noise = rng.range(-cfg.noise, cfg.noise);
                        image[c * plane + y * w + x] =
                            (base_color[c] + jitter[c] + noise).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }

    Ok(Scene {
        image,
        mask,
        height: h,
        width: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DatasetConfig {
        DatasetConfig {
            max_shapes: 3,
            classes: 4,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn mask_values_stay_below_class_count() {
        let s = generate_scene(7, &cfg()).unwrap();
        assert!(s.mask.iter().all(|&m| (m as usize) < 4));
    }

    #[test]
    fn identical_seed_and_config_reproduce_bitwise() {
        let a = generate_scene(7, &cfg()).unwrap();
        let b = generate_scene(7, &cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(8, &cfg()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn image_values_stay_in_unit_range() {
        for seed in 0..20 {
            let s = generate_scene(seed, &cfg()).unwrap();
            assert!(s.image.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn background_fraction_within_measured_bounds() {
        // Measured on the frozen generator across this seed range.
        for seed in 0..200 {
            let s = generate_scene(seed, &cfg()).unwrap();
            let f = s.background_fraction();
            assert!((0.2..=0.95).contains(&f), "seed {seed}: {f}");
        }
    }

    #[test]
    fn every_mask_class_corresponds_to_a_drawn_shape() {
        // Non-background ids in the mask must be valid shape classes.
        for seed in 0..50 {
            let s = generate_scene(seed, &cfg()).unwrap();
            for &m in &s.mask {
                assert!(m == 0 || (1..4).contains(&(m as usize)));
            }
            // At least one shape survives painter overwrites.
            assert!(s.mask.iter().any(|&m| m != 0));
        }
    }

    #[test]
    fn small_dims_and_class_counts_are_rejected() {
        let mut bad = cfg();
        bad.classes = 1;
        assert!(matches!(
            generate_scene(0, &bad),
            Err(DataError::TooFewClasses(1))
        ));
        let mut bad = cfg();
        bad.height = 16;
        assert!(matches!(
            generate_scene(0, &bad),
            Err(DataError::ImageTooSmall { .. })
        ));
    }
}
