//! Procedurally drawn handwritten-style digits, 28x28 grayscale.
//!
//! Each class is a fixed set of pen strokes in a unit box. Every sample
//! jitters the control points, applies a random rotation, scale, shear and
//! shift, then rasterises the strokes with a random pen width and a one
//! pixel anti-aliased edge.

use alloc::vec;
use alloc::vec::Vec;

use super::image::ImageSet;
use crate::{math, Result, RngState, Tensor};

pub const SIDE: usize = 28;
const BOX: f64 = 18.0;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = (((to_deg - from_deg).abs() / 15.0) as usize).max(2);
    (0..=steps)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64).to_radians();
            (cx + rx * math::cos(t), cy + ry * math::sin(t))
        })
        .collect()
}

fn line(points: &[(f64, f64)]) -> Stroke {
    points.to_vec()
}

fn template(digit: usize) -> Vec<Stroke> {
    // y grows downwards, so angle 270 is the top of an arc.
    match digit {
        0 => vec![arc(0.5, 0.5, 0.32, 0.45, 0.0, 360.0)],
        1 => vec![line(&[(0.32, 0.22), (0.52, 0.05), (0.52, 0.95)])],
        2 => {
            let mut s = arc(0.5, 0.32, 0.3, 0.27, 180.0, 390.0);
            s.extend([(0.18, 0.95), (0.85, 0.95)]);
            vec![s]
        }
        3 => vec![arc(0.5, 0.28, 0.3, 0.23, 200.0, 450.0), arc(0.5, 0.72, 0.33, 0.24, 270.0, 510.0)],
        4 => vec![line(&[(0.65, 0.05), (0.15, 0.65), (0.88, 0.65)]), line(&[(0.65, 0.05), (0.65, 0.95)])],
        5 => {
            let mut s = line(&[(0.8, 0.05), (0.27, 0.05), (0.24, 0.47)]);
            s.extend(arc(0.5, 0.68, 0.32, 0.27, 225.0, 500.0));
            vec![s]
        }
        6 => vec![line(&[(0.72, 0.05), (0.42, 0.28), (0.23, 0.62)]), arc(0.5, 0.7, 0.28, 0.25, 0.0, 360.0)],
        7 => vec![line(&[(0.15, 0.05), (0.85, 0.05), (0.4, 0.95)])],
        8 => vec![arc(0.5, 0.27, 0.25, 0.22, 0.0, 360.0), arc(0.5, 0.72, 0.3, 0.24, 0.0, 360.0)],
        _ => vec![arc(0.5, 0.3, 0.28, 0.25, 0.0, 360.0), line(&[(0.78, 0.3), (0.7, 0.95)])],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    math::sqrt(qx * qx + qy * qy)
}

/// Draws one `SIDE x SIDE` image of `digit` into `out` (row-major).
pub fn render_digit(digit: usize, rng: &mut RngState, out: &mut [f64]) {
    let angle = rng.uniform(-0.22, 0.22);
    let scale = rng.uniform(0.8, 1.05);
    let shear = rng.uniform(-0.25, 0.25);
    let (tx, ty) = (rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    let half_width = rng.uniform(0.9, 1.9);
    let (c, s) = (math::cos(angle), math::sin(angle));
    let centre = SIDE as f64 / 2.0;

    let mut segments = Vec::new();
    for stroke in template(digit % 10) {
        let pts: Vec<(f64, f64)> = stroke
            .iter()
            .map(|&(x, y)| {
                let (x, y) = (x + rng.uniform(-0.03, 0.03) - 0.5, y + rng.uniform(-0.03, 0.03) - 0.5);
                let x = x + shear * y;
                let (x, y) = (c * x - s * y, s * x + c * y);
                (centre + tx + BOX * scale * x, centre + ty + BOX * scale * y)
            })
            .collect();
        segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
    }

    for py in 0..SIDE {
        for px in 0..SIDE {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let d = segments
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            out[py * SIDE + px] = (half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
}

/// `n` digits with seeded, roughly balanced labels.
pub fn synth_digits(n: usize, seed: u64) -> Result<ImageSet> {
    let mut rng = RngState::new(seed);
    let mut data = vec![0.0; n * SIDE * SIDE];
    let mut labels = Vec::with_capacity(n);
    for (i, img) in data.chunks_mut(SIDE * SIDE).enumerate() {
        let label = if i % 10 == 0 { rng.below(10) } else { (labels[i - 1] + 1 + rng.below(9)) % 10 };
        render_digit(label, &mut rng, img);
        labels.push(label);
    }
    ImageSet::new(Tensor::new(vec![n, SIDE, SIDE, 1], data)?, labels)
}
