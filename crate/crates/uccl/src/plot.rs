//! Deterministic PNG figures: loss/mIoU curves and (input, ground truth,
//! prediction) panels, drawn directly into an RGB buffer with a 3x5 micro
//! font. No plotting dependency keeps the byte output stable across runs.

use std::path::Path;

use anyhow::{Context, Result};
use uccl_core::data::class_color;

pub struct Canvas {
    pub w: usize,
    pub h: usize,
    pix: Vec<u8>,
}

impl Canvas {
    pub fn new(w: usize, h: usize, bg: [u8; 3]) -> Canvas {
        let mut pix = vec![0u8; w * h * 3];
        for p in pix.chunks_exact_mut(3) {
            p.copy_from_slice(&bg);
        }
        Canvas { w, h, pix }
    }

    pub fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            return;
        }
        let i = (y as usize * self.w + x as usize) * 3;
        self.pix[i..i + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx, yy, c);
            }
        }
    }

    /// Bresenham segment.
    pub fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        let (mut x, mut y) = (x0, y0);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// 3x5 glyphs scaled 2x; enough for axis numbers and short labels.
    pub fn text(&mut self, x: i64, y: i64, s: &str, c: [u8; 3]) {
        let scale = 2i64;
        let mut cx = x;
        for ch in s.chars() {
            let rows = glyph(ch);
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        self.fill_rect(
                            cx + rx as i64 * scale,
                            y + ry as i64 * scale,
                            scale,
                            scale,
                            c,
                        );
                    }
                }
            }
            cx += 4 * scale;
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut enc =
            png::Encoder::new(std::io::BufWriter::new(file), self.w as u32, self.h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.pix)?;
        Ok(())
    }
}

fn glyph(ch: char) -> [u8; 5] {
    match ch.to_ascii_lowercase() {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b001, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        ',' => [0b000, 0b000, 0b000, 0b010, 0b100],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        '_' => [0b000, 0b000, 0b000, 0b000, 0b111],
        '/' => [0b001, 0b001, 0b010, 0b100, 0b100],
        ':' => [0b000, 0b010, 0b000, 0b010, 0b000],
        'a' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'b' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'c' => [0b111, 0b100, 0b100, 0b100, 0b111],
        'd' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'e' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'f' => [0b111, 0b100, 0b110, 0b100, 0b100],
        'g' => [0b111, 0b100, 0b101, 0b101, 0b111],
        'h' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'i' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'k' => [0b101, 0b110, 0b100, 0b110, 0b101],
        'l' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'm' => [0b101, 0b111, 0b111, 0b101, 0b101],
        'n' => [0b101, 0b111, 0b111, 0b111, 0b101],
        'o' => [0b111, 0b101, 0b101, 0b101, 0b111],
        'p' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'q' => [0b111, 0b101, 0b101, 0b111, 0b001],
        'r' => [0b110, 0b101, 0b110, 0b101, 0b101],
        's' => [0b011, 0b100, 0b010, 0b001, 0b110],
        't' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'u' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'v' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'w' => [0b101, 0b101, 0b111, 0b111, 0b101],
        'x' => [0b101, 0b101, 0b010, 0b101, 0b101],
        'y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'z' => [0b111, 0b001, 0b010, 0b100, 0b111],
        _ => [0b000; 5],
    }
}

pub struct Series<'a> {
    pub name: &'a str,
    pub color: [u8; 3],
    pub points: Vec<(f64, f64)>,
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else if a < 1.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2}")
    }
}

/// Line chart with axes, ticks, and a legend.
pub fn plot_curves(path: &Path, title: &str, series: &[Series]) -> Result<()> {
    const W: usize = 800;
    const H: usize = 500;
    const ML: i64 = 72;
    const MR: i64 = 16;
    const MT: i64 = 30;
    const MB: i64 = 44;
    let mut canvas = Canvas::new(W, H, [255, 255, 255]);

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;

    let plot_w = (W as i64 - ML - MR) as f64;
    let plot_h = (H as i64 - MT - MB) as f64;
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = ML as f64 + (x - x_min) / (x_max - x_min) * plot_w;
        let py = MT as f64 + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;
        (px.round() as i64, py.round() as i64)
    };

    let axis = [60, 60, 60];
    let grid = [225, 225, 225];
    for i in 0..=5 {
        let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
        let (_, py) = to_px(x_min, fy);
        canvas.line(ML, py, W as i64 - MR, py, grid);
        canvas.text(6, py - 5, &fmt_tick(fy), axis);
        let fx = x_min + (x_max - x_min) * i as f64 / 5.0;
        let (px, _) = to_px(fx, y_min);
        canvas.line(px, MT, px, H as i64 - MB, grid);
        canvas.text(px - 10, H as i64 - MB + 8, &fmt_tick(fx), axis);
    }
    canvas.line(ML, MT, ML, H as i64 - MB, axis);
    canvas.line(ML, H as i64 - MB, W as i64 - MR, H as i64 - MB, axis);
    canvas.text(ML, 8, title, [0, 0, 0]);

    for (si, s) in series.iter().enumerate() {
        let mut prev: Option<(i64, i64)> = None;
        for &(x, y) in &s.points {
            let p = to_px(x, y);
            if let Some(q) = prev {
                canvas.line(q.0, q.1, p.0, p.1, s.color);
            }
            prev = Some(p);
        }
        let ly = MT + 8 + si as i64 * 16;
        let lx = W as i64 - MR - 90;
        canvas.fill_rect(lx, ly, 10, 10, s.color);
        canvas.text(lx + 14, ly, s.name, axis);
    }
    canvas.save_png(path)
}

/// Fixed mask colorization palette: background is dark gray, the rest uses
/// the generator's class colors.
pub fn class_palette(class: usize) -> [u8; 3] {
    if class == 0 {
        return [45, 45, 45];
    }
    let c = class_color(class);
    [
        (c[0] * 255.0).round() as u8,
        (c[1] * 255.0).round() as u8,
        (c[2] * 255.0).round() as u8,
    ]
}

pub struct PanelRow<'a> {
    /// CHW float image.
    pub image: &'a [f64],
    pub gt: &'a [u8],
    pub pred: &'a [u8],
    pub height: usize,
    pub width: usize,
}

/// Grid of (input, ground truth, prediction) triplets.
pub fn prediction_panel(path: &Path, rows: &[PanelRow<'_>]) -> Result<()> {
    anyhow::ensure!(!rows.is_empty(), "no panel rows");
    const SCALE: usize = 2;
    const GAP: usize = 6;
    const HEADER: usize = 16;
    let cell_w = rows[0].width * SCALE;
    let cell_h = rows[0].height * SCALE;
    let w = GAP + 3 * (cell_w + GAP);
    let h = HEADER + GAP + rows.len() * (cell_h + GAP);
    let mut canvas = Canvas::new(w, h, [255, 255, 255]);
    for (ci, name) in ["input", "truth", "pred"].iter().enumerate() {
        let x = (GAP + ci * (cell_w + GAP) + cell_w / 2 - name.len() * 4) as i64;
        canvas.text(x, 3, name, [0, 0, 0]);
    }
    for (ri, row) in rows.iter().enumerate() {
        let oy = HEADER + GAP + ri * (cell_h + GAP);
        let plane = row.height * row.width;
        for y in 0..cell_h {
            for x in 0..cell_w {
                let (sy, sx) = (y / SCALE, x / SCALE);
                let p = sy * row.width + sx;
                let rgb = [
                    (row.image[p].clamp(0.0, 1.0) * 255.0).round() as u8,
                    (row.image[plane + p].clamp(0.0, 1.0) * 255.0).round() as u8,
                    (row.image[2 * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8,
                ];
                canvas.set((GAP + x) as i64, (oy + y) as i64, rgb);
                canvas.set(
                    (GAP + cell_w + GAP + x) as i64,
                    (oy + y) as i64,
                    class_palette(row.gt[p] as usize),
                );
                canvas.set(
                    (GAP + 2 * (cell_w + GAP) + x) as i64,
                    (oy + y) as i64,
                    class_palette(row.pred[p] as usize),
                );
            }
        }
    }
    canvas.save_png(path)
}
