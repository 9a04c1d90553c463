//! Minimal raster plots written as PNG: heatmap grids, bar histograms and
//! line charts. No text rendering; axes are implied by the data order and
//! the numbers live in the accompanying CSV/JSON files.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

pub const GREY: Rgb<u8> = Rgb([160, 160, 160]);
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);

/// Viridis-like colour for `t` in `[0, 1]` (piecewise-linear through five
/// anchor colours).
pub fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: cannot write image: {e}", path.display())))
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, c: Rgb<u8>) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

/// Grid of `rows x cols` cells; `cells[r][c]` is a value in `[0, 1]` or
/// `None` for a greyed-out cell.
pub fn heatmap_grid(cells: &[Vec<Option<f64>>], cell_px: u32, path: &Path) -> Result<()> {
    let rows = cells.len() as u32;
    let cols = cells.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let gap = 1;
    let mut img = RgbImage::from_pixel(
        (cols * (cell_px + gap) + gap).max(1),
        (rows * (cell_px + gap) + gap).max(1),
        WHITE,
    );
    for (r, row) in cells.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let colour = v.map_or(GREY, colormap);
            fill_rect(
                &mut img,
                gap + c as u32 * (cell_px + gap),
                gap + r as u32 * (cell_px + gap),
                cell_px,
                cell_px,
                colour,
            );
        }
    }
    save(&img, path)
}

/// Vertical bars for `counts`, scaled to the tallest bar.
pub fn bar_chart(counts: &[usize], path: &Path) -> Result<()> {
    let (w, h, margin) = (40 * counts.len().max(1) as u32 + 20, 240u32, 10u32);
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_h = h - 2 * margin;
    for (i, &c) in counts.iter().enumerate() {
        let bh = ((c as f64 / max) * plot_h as f64).round() as u32;
        let x = margin + i as u32 * 40 + 4;
        fill_rect(&mut img, x, h - margin - bh, 32, bh, colormap(i as f64 / counts.len().max(2) as f64));
    }
    fill_rect(&mut img, margin, h - margin, w - 2 * margin, 1, AXIS);
    save(&img, path)
}

/// Draws each series as a polyline with square markers over the shared
/// x-range. Series are coloured along the colour map.
pub fn line_chart(series: &[Vec<(f64, f64)>], path: &Path) -> Result<()> {
    let (w, h, m) = (480u32, 320u32, 20u32);
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let pts = series.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        (x0, x1, y0, y1) = (x0.min(x), x1.max(x), y0.min(y), y1.max(y));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let px = |x: f64| m as f64 + (x - x0) / (x1 - x0) * (w - 2 * m) as f64;
    let py = |y: f64| (h - m) as f64 - (y - y0) / (y1 - y0) * (h - 2 * m) as f64;
    fill_rect(&mut img, m, h - m, w - 2 * m, 1, AXIS);
    fill_rect(&mut img, m, m, 1, h - 2 * m, AXIS);
    for (k, s) in series.iter().enumerate() {
        let colour = colormap(k as f64 / series.len().max(2) as f64 * 0.8);
        for pair in s.windows(2) {
            let (ax, ay, bx, by) = (px(pair[0].0), py(pair[0].1), px(pair[1].0), py(pair[1].1));
            let steps = ((bx - ax).abs().max((by - ay).abs()).ceil() as usize).max(1);
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                let (x, y) = (ax + t * (bx - ax), ay + t * (by - ay));
                fill_rect(&mut img, x.round() as u32, y.round() as u32, 2, 2, colour);
            }
        }
        for &(x, y) in s {
            fill_rect(&mut img, px(x).round() as u32 - 3, py(y).round() as u32 - 3, 7, 7, colour);
        }
    }
    save(&img, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), Rgb([68, 1, 84]));
        assert_eq!(colormap(1.0), Rgb([253, 231, 37]));
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn plots_write_png_files() {
        let dir = tempfile::tempdir().unwrap();
        heatmap_grid(&[vec![Some(0.2), None], vec![Some(0.9)]], 8, &dir.path().join("h.png")).unwrap();
        bar_chart(&[1, 5, 0, 3], &dir.path().join("b.png")).unwrap();
        line_chart(&[vec![(1.0, 0.5), (2.0, 0.7), (3.0, 0.6)]], &dir.path().join("l.png")).unwrap();
        line_chart(&[vec![(1.0, 0.5)]], &dir.path().join("one.png")).unwrap();
        for f in ["h.png", "b.png", "l.png", "one.png"] {
            let img = image::open(dir.path().join(f)).unwrap();
            assert!(img.width() > 0);
        }
    }
}
