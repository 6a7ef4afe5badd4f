//! On-disk dataset layout:
//!   `<root>/data/images/<id>.png`  8-bit RGB
//!   `<root>/data/masks/<id>.png`   8-bit single channel, value = class index
//!   `<root>/splits/labeled.txt`, `unlabeled.txt`, `val.txt`  newline ids

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uccl_core::data::{
    generate_scene, make_splits, DatasetConfig, Scene, SplitManifest, SplitRatio,
};

pub fn image_path(root: &Path, id: usize) -> PathBuf {
    root.join("data/images").join(format!("{id:05}.png"))
}

pub fn mask_path(root: &Path, id: usize) -> PathBuf {
    root.join("data/masks").join(format!("{id:05}.png"))
}

fn write_png_rgb(path: &Path, scene: &Scene) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        scene.width as u32,
        scene.height as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    let plane = scene.height * scene.width;
    let mut buf = vec![0u8; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            buf[p * 3 + c] = (scene.image[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    writer.write_image_data(&buf)?;
    Ok(())
}

fn write_png_mask(path: &Path, scene: &Scene) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        scene.width as u32,
        scene.height as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&scene.mask)?;
    Ok(())
}

fn read_png(path: &Path) -> Result<(Vec<u8>, usize, usize, png::ColorType)> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size().context("png too large")?];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok((
        buf,
        info.height as usize,
        info.width as usize,
        info.color_type,
    ))
}

fn read_scene(root: &Path, id: usize) -> Result<Scene> {
    let (img, h, w, color) = read_png(&image_path(root, id))?;
    if color != png::ColorType::Rgb {
        bail!("{}: expected RGB", image_path(root, id).display());
    }
    let (mask, mh, mw, mcolor) = read_png(&mask_path(root, id))?;
    if mcolor != png::ColorType::Grayscale {
        bail!("{}: expected grayscale", mask_path(root, id).display());
    }
    if (h, w) != (mh, mw) {
        bail!("scene {id}: image and mask dims differ");
    }
    let plane = h * w;
    let mut image = vec![0.0f64; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            image[c * plane + p] = img[p * 3 + c] as f64 / 255.0;
        }
    }
    Ok(Scene {
        image,
        mask,
        height: h,
        width: w,
    })
}

fn write_id_list(path: &Path, ids: &[usize]) -> Result<()> {
    let mut text = String::new();
    for id in ids {
        text.push_str(&format!("{id:05}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_id_list(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .with_context(|| format!("bad id `{l}`"))
        })
        .collect()
}

/// Generate every scene (train pool then validation) and the split
/// manifests. Idempotent: identical config and seed rewrite identical bytes.
pub fn write_dataset(
    root: &Path,
    cfg: &DatasetConfig,
    ratio: SplitRatio,
    seed: u64,
) -> Result<SplitManifest> {
    fs::create_dir_all(root.join("data/images"))?;
    fs::create_dir_all(root.join("data/masks"))?;
    fs::create_dir_all(root.join("splits"))?;
    let total = cfg.scenes + cfg.val_scenes;
    for id in 0..total {
        let scene = generate_scene(scene_seed(seed, id), cfg)
            .map_err(|e| anyhow::anyhow!("scene {id}: {e}"))?;
        write_png_rgb(&image_path(root, id), &scene)?;
        write_png_mask(&mask_path(root, id), &scene)?;
    }
    let manifest =
        make_splits(cfg.scenes, ratio, seed).map_err(|e| anyhow::anyhow!("splits: {e}"))?;
    write_id_list(&root.join("splits/labeled.txt"), &manifest.labeled_ids)?;
    write_id_list(&root.join("splits/unlabeled.txt"), &manifest.unlabeled_ids)?;
    let val_ids: Vec<usize> = (cfg.scenes..total).collect();
    write_id_list(&root.join("splits/val.txt"), &val_ids)?;
    Ok(manifest)
}

/// Per-scene generator stream.
pub fn scene_seed(dataset_seed: u64, id: usize) -> u64 {
    uccl_core::rng::mix(dataset_seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug)]
pub struct LoadedDataset {
    /// Train-pool scenes indexed by id.
    pub train: Vec<Scene>,
    /// Held-out scenes, ids following the train pool.
    pub val: Vec<Scene>,
    pub manifest: SplitManifest,
}

/// Load the dataset back; quantized pixel values are the canonical training
/// input (training always reads from disk, never from in-memory scenes).
pub fn load_dataset(root: &Path, cfg: &DatasetConfig, ratio: SplitRatio) -> Result<LoadedDataset> {
    if !root.join("splits/labeled.txt").exists() {
        bail!(
            "dataset not found under {} (run `uccl gen-data` first)",
            root.display()
        );
    }
    let labeled_ids = read_id_list(&root.join("splits/labeled.txt"))?;
    let unlabeled_ids = read_id_list(&root.join("splits/unlabeled.txt"))?;
    let val_ids = read_id_list(&root.join("splits/val.txt"))?;

    let mut train = Vec::with_capacity(cfg.scenes);
    for id in 0..cfg.scenes {
        let scene = read_scene(root, id)?;
        if scene.height != cfg.height || scene.width != cfg.width {
            bail!(
                "scene {id}: dims {}x{} differ from config",
                scene.height,
                scene.width
            );
        }
        if scene.mask.iter().any(|&m| m as usize >= cfg.classes) {
            bail!("scene {id}: mask value exceeds class count");
        }
        train.push(scene);
    }
    let mut val = Vec::with_capacity(val_ids.len());
    for &id in &val_ids {
        val.push(read_scene(root, id)?);
    }
    Ok(LoadedDataset {
        train,
        val,
        manifest: SplitManifest {
            labeled_ids,
            unlabeled_ids,
            ratio,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("uccl-test-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_cfg() -> DatasetConfig {
        DatasetConfig {
            height: 32,
            width: 32,
            scenes: 6,
            val_scenes: 2,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn write_then_load_round_trips_quantized_pixels() {
        let root = tmp_dir("roundtrip");
        let cfg = small_cfg();
        write_dataset(&root, &cfg, SplitRatio::Fraction(1, 2), 0).unwrap();
        let ds = load_dataset(&root, &cfg, SplitRatio::Fraction(1, 2)).unwrap();
        assert_eq!(ds.train.len(), 6);
        assert_eq!(ds.val.len(), 2);
        assert_eq!(ds.manifest.labeled_ids.len(), 3);

        // Loaded pixels are the quantized originals.
        let original = generate_scene(scene_seed(0, 0), &cfg).unwrap();
        let loaded = &ds.train[0];
        assert_eq!(loaded.mask, original.mask);
        for (l, o) in loaded.image.iter().zip(&original.image) {
            assert!((l - o).abs() <= 0.5 / 255.0 + 1e-12);
        }
        fs::remove_dir_all(&root).unwrap();
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let root = tmp_dir("idempotent");
        let cfg = small_cfg();
        write_dataset(&root, &cfg, SplitRatio::Fraction(1, 2), 7).unwrap();
        let before = fs::read(image_path(&root, 0)).unwrap();
        let before_mask = fs::read(mask_path(&root, 3)).unwrap();
        write_dataset(&root, &cfg, SplitRatio::Fraction(1, 2), 7).unwrap();
        assert_eq!(fs::read(image_path(&root, 0)).unwrap(), before);
        assert_eq!(fs::read(mask_path(&root, 3)).unwrap(), before_mask);
        fs::remove_dir_all(&root).unwrap();
    }

    #[test]
    fn missing_dataset_is_reported() {
        let root = tmp_dir("missing");
        let err = load_dataset(&root, &small_cfg(), SplitRatio::Fraction(1, 2)).unwrap_err();
        assert!(err.to_string().contains("gen-data"));
        fs::remove_dir_all(&root).unwrap();
    }
}
