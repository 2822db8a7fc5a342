//! PNG artifacts: PR curve, score trace with threshold, per-channel heat strip.

use std::path::Path;

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;
use ndarray::Array2;
use tevae::metrics::PrCurve;

use crate::error::Result;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const TRACE: Rgb<u8> = Rgb([31, 119, 180]);
const THRESHOLD: Rgb<u8> = Rgb([214, 39, 40]);
const ONSET: Rgb<u8> = Rgb([44, 160, 44]);

/// Pixel box of a plot area.
struct Frame {
    x0: f32,
    y0: f32,
    width: f32,
    height: f32,
}

impl Frame {
    fn px(&self, fx: f64, fy: f64) -> (f32, f32) {
        (
            self.x0 + fx.clamp(0.0, 1.0) as f32 * self.width,
            self.y0 + (1.0 - fy.clamp(0.0, 1.0) as f32) * self.height,
        )
    }

    fn draw_axes(&self, img: &mut RgbImage, grid: usize) {
        for k in 1..grid {
            let f = k as f64 / grid as f64;
            draw_line_segment_mut(img, self.px(f, 0.0), self.px(f, 1.0), GRID);
            draw_line_segment_mut(img, self.px(0.0, f), self.px(1.0, f), GRID);
        }
        draw_hollow_rect_mut(
            img,
            Rect::at(self.x0 as i32, self.y0 as i32).of_size(self.width as u32 + 1, self.height as u32 + 1),
            AXIS,
        );
    }
}

fn polyline(img: &mut RgbImage, pts: &[(f32, f32)], color: Rgb<u8>) {
    for p in pts.windows(2) {
        draw_line_segment_mut(img, p[0], p[1], color);
    }
}

/// Precision against recall, both on [0, 1].
pub fn pr_curve_png(path: &Path, curve: &PrCurve) -> Result<()> {
    let mut img = RgbImage::from_pixel(420, 420, WHITE);
    let frame = Frame {
        x0: 30.0,
        y0: 20.0,
        width: 370.0,
        height: 370.0,
    };
    frame.draw_axes(&mut img, 10);
    let pts: Vec<(f32, f32)> = curve.points.iter().map(|p| frame.px(p.recall, p.precision)).collect();
    polyline(&mut img, &pts, TRACE);
    for &(x, y) in &pts {
        draw_filled_rect_mut(&mut img, Rect::at(x as i32 - 2, y as i32 - 2).of_size(5, 5), TRACE);
    }
    let (bx, by) = frame.px(curve.best_f1.recall, curve.best_f1.precision);
    draw_hollow_rect_mut(
        &mut img,
        Rect::at(bx as i32 - 5, by as i32 - 5).of_size(11, 11),
        THRESHOLD,
    );
    img.save(path)?;
    Ok(())
}

/// Blue-to-red ramp for `v` in [0, 1].
fn heat(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v.min(0.5) * 2.0) as u8;
    let b = (255.0 * (1.0 - v).min(0.5) * 2.0) as u8;
    let g = (255.0 * (1.0 - (2.0 * v - 1.0).abs()) * 0.6) as u8;
    Rgb([r, g, b])
}

/// Score trace with the threshold line (and the anomaly onset when known)
/// above a per-channel heat strip, one row per channel.
pub fn score_png(path: &Path, s: &[f64], per_channel: &Array2<f64>, tau: f64, onset: Option<usize>) -> Result<()> {
    let len = s.len().max(2);
    let channels = per_channel.ncols();
    let width = 800u32;
    let row_h = 8u32;
    let trace_h = 240u32;
    let height = 20 + trace_h + 20 + row_h * channels as u32 + 10;
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    let frame = Frame {
        x0: 30.0,
        y0: 20.0,
        width: (width - 50) as f32,
        height: trace_h as f32,
    };
    frame.draw_axes(&mut img, 5);

    let finite = s.iter().copied().chain([tau]).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let fy = |v: f64| (v - lo) / span;
    let fx = |t: usize| t as f64 / (len - 1) as f64;

    let pts: Vec<(f32, f32)> = s.iter().enumerate().map(|(t, &v)| frame.px(fx(t), fy(v))).collect();
    polyline(&mut img, &pts, TRACE);
    draw_line_segment_mut(&mut img, frame.px(0.0, fy(tau)), frame.px(1.0, fy(tau)), THRESHOLD);
    if let Some(t) = onset {
        draw_line_segment_mut(&mut img, frame.px(fx(t), 0.0), frame.px(fx(t), 1.0), ONSET);
    }

    let strip_y = (20 + trace_h + 20) as i32;
    for j in 0..channels {
        let col = per_channel.column(j);
        let (clo, chi) = col
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let cspan = if chi > clo { chi - clo } else { 1.0 };
        for (t, &v) in col.iter().enumerate() {
            let x0 = frame.x0 as i32 + (fx(t) * frame.width as f64) as i32;
            let x1 = frame.x0 as i32 + (fx(t + 1) * frame.width as f64).ceil() as i32;
            let rect = Rect::at(x0, strip_y + (j as u32 * row_h) as i32).of_size((x1 - x0).max(1) as u32, row_h);
            draw_filled_rect_mut(&mut img, rect, heat((v - clo) / cspan));
        }
    }
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tevae::metrics::PrPoint;

    #[test]
    fn writes_decodable_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let p = |r, pr| PrPoint {
            threshold: 1.0,
            precision: pr,
            recall: r,
        };
        let curve = PrCurve {
            points: vec![p(0.0, 1.0), p(0.5, 0.8), p(1.0, 0.5)],
            best_f1: p(0.5, 0.8),
            closest_to_ideal: p(0.5, 0.8),
            auc_pr: 0.775,
        };
        pr_curve_png(&dir.path().join("pr.png"), &curve).unwrap();
        let s: Vec<f64> = (0..50).map(|t| (t as f64 * 0.3).sin()).collect();
        let pc = Array2::from_shape_fn((50, 3), |(t, c)| (t * (c + 1)) as f64);
        score_png(&dir.path().join("s.png"), &s, &pc, 0.5, Some(20)).unwrap();
        let img = image::open(dir.path().join("s.png")).unwrap();
        assert_eq!(img.width(), 800);
        assert!(image::open(dir.path().join("pr.png")).is_ok());
    }
}
