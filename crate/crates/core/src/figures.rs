//! Figure emission: confusion-matrix heatmap and 2-D embedding scatter.
//!
//! Rendering is dependency-light: PNGs are drawn pixel by pixel with a small
//! embedded 5x7 glyph set for the class labels (1-10, A-G).

use crate::data::{paper_class_id, CLASS_COUNT};
use crate::encoders::EncoderRegistry;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::BpLczModel;
use crate::tsne::{tsne_embed, TsneConfig};
use crate::data::{NormStats, Sample};
use image::{Rgb, RgbImage};
use std::path::Path;

/// 17 visually distinct colors, indexed by 0-based class label.
pub const CLASS_PALETTE: [(u8, u8, u8); CLASS_COUNT] = [
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
    (128, 128, 0),
];

/// 5x7 bitmaps for '0'-'9' and 'A'-'G', one byte per row, low 5 bits used.
fn glyph(c: char) -> Option<[u8; 7]> {
    let g = match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        _ => return None,
    };
    Some(g)
}

fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, color: Rgb<u8>) {
    let mut x = x0;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (dy, row) in rows.iter().enumerate() {
                for dx in 0..5u32 {
                    if row & (0x10 >> dx) != 0 {
                        let (px, py) = (x + dx, y0 + dy as u32);
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, color);
                        }
                    }
                }
            }
        }
        x += 6;
    }
}

fn heat_color(v: f64) -> Rgb<u8> {
    // White through mid-blue to dark blue.
    let v = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    Rgb([lerp(255.0, 35.0), lerp(255.0, 60.0), lerp(255.0, 150.0)])
}

/// Row-normalized confusion heatmap with class labels in published order.
pub fn emit_confusion_figure(report: &EvalReport, path: &Path) -> Result<()> {
    let k = report.confusion.nrows();
    let cell = 20u32;
    let margin_left = 22u32;
    let margin_top = 22u32;
    let pad = 6u32;
    let size_x = margin_left + cell * k as u32 + pad;
    let size_y = margin_top + cell * k as u32 + pad;
    let mut img = RgbImage::from_pixel(size_x, size_y, Rgb([255, 255, 255]));

    for i in 0..k {
        let row_sum: u64 = report.confusion.row(i).iter().sum();
        for j in 0..k {
            let v = if row_sum == 0 {
                0.0
            } else {
                report.confusion[[i, j]] as f64 / row_sum as f64
            };
            let color = heat_color(v);
            for dy in 0..cell {
                for dx in 0..cell {
                    let px = margin_left + j as u32 * cell + dx;
                    let py = margin_top + i as u32 * cell + dy;
                    // Thin grid line on the top/left edge of each cell.
                    if dx == 0 || dy == 0 {
                        img.put_pixel(px, py, Rgb([210, 210, 210]));
                    } else {
                        img.put_pixel(px, py, color);
                    }
                }
            }
        }
    }

    let label_of = |i: usize| -> String {
        if k == CLASS_COUNT {
            paper_class_id(i as u8).to_string()
        } else {
            i.to_string()
        }
    };
    let black = Rgb([0, 0, 0]);
    for i in 0..k {
        let label = label_of(i);
        let w = label.len() as u32 * 6;
        // Row label, right-aligned in the left margin.
        let y = margin_top + i as u32 * cell + (cell - 7) / 2;
        draw_text(&mut img, &label, margin_left.saturating_sub(w + 2), y, black);
        // Column label, centered above the column.
        let x = margin_left + i as u32 * cell + (cell.saturating_sub(w)) / 2;
        draw_text(&mut img, &label, x, margin_top - 10, black);
    }

    img.save(path).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Scatter of a seeded 2-D t-SNE projection of fused features, one color per
/// class, with a sidecar text file recording the projection parameters.
pub fn emit_embedding_projection(
    model: &BpLczModel,
    registry: &EncoderRegistry,
    samples: &[Sample],
    norm: &NormStats,
    per_class: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::data("projection needs at least one sample"));
    }
    // Deterministic per-class subsample: seeded shuffle, then the first
    // per_class indices of each class.
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let mut taken = vec![0usize; CLASS_COUNT];
    let mut chosen: Vec<usize> = Vec::new();
    for &i in &order {
        let k = usize::from(samples[i].label);
        if taken[k] < per_class {
            taken[k] += 1;
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    let subset: Vec<Sample> = chosen.iter().map(|&i| samples[i].clone()).collect();

    let features = crate::train::fused_features(model, registry, &subset, norm)?;
    let cfg = TsneConfig { seed, ..Default::default() };
    let embedded = tsne_embed(&features, &cfg)?;

    // Scale into the drawing area.
    let size = 600u32;
    let margin = 30.0;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in embedded.rows() {
        min_x = min_x.min(r[0]);
        max_x = max_x.max(r[0]);
        min_y = min_y.min(r[1]);
        max_y = max_y.max(r[1]);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let scale = (size as f64 - 2.0 * margin) / span_x.max(span_y);

    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    for (row, sample) in embedded.rows().into_iter().zip(&subset) {
        let (r, g, b) = CLASS_PALETTE[usize::from(sample.label)];
        let px = (margin + (row[0] - min_x) * scale).round() as i64;
        let py = (margin + (row[1] - min_y) * scale).round() as i64;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (px + dx, py + dy);
                if x >= 0 && y >= 0 && (x as u32) < size && (y as u32) < size {
                    img.put_pixel(x as u32, y as u32, Rgb([r, g, b]));
                }
            }
        }
    }
    img.save(path).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;

    // Sidecar with every invented projection parameter.
    let mut sidecar = String::new();
    sidecar.push_str("projection=tsne (exact)\n");
    sidecar.push_str(&format!("seed={seed}\n"));
    sidecar.push_str(&format!("per_class_requested={per_class}\n"));
    sidecar.push_str(&format!("points={}\n", subset.len()));
    sidecar.push_str(&format!("perplexity={}\n", cfg.perplexity));
    sidecar.push_str(&format!("iterations={}\n", cfg.iterations));
    sidecar.push_str(&format!("learning_rate={}\n", cfg.learning_rate));
    sidecar.push_str(&format!(
        "early_exaggeration={} (first {} iterations)\n",
        cfg.early_exaggeration, cfg.exaggeration_iters
    ));
    sidecar.push_str("class_colors:\n");
    for k in 0..CLASS_COUNT {
        if taken[k] > 0 {
            let (r, g, b) = CLASS_PALETTE[k];
            sidecar.push_str(&format!(
                "{}=#{r:02x}{g:02x}{b:02x} ({} points)\n",
                paper_class_id(k as u8),
                taken[k]
            ));
        }
    }
    std::fs::write(path.with_extension("txt"), sidecar)?;
    Ok(())
}
