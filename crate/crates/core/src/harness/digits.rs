//! Procedural handwritten-style digits and the 16×16 binary preprocessing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::idx::ImageSet;

pub const SIDE: usize = 28;
pub const BINARY_SIDE: usize = 16;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let n = 24;
    (0..=n)
        .map(|k| {
            let a = (from_deg + (to_deg - from_deg) * k as f64 / n as f64).to_radians();
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Stroke skeletons in unit coordinates, y pointing down.
fn template(d: u8) -> Vec<Stroke> {
    match d {
        0 => vec![arc(0.5, 0.5, 0.19, 0.31, 0.0, 360.0)],
        1 => vec![vec![(0.42, 0.27), (0.52, 0.17), (0.52, 0.83)]],
        2 => {
            let mut s = arc(0.5, 0.34, 0.18, 0.17, 180.0, 405.0);
            s.extend([(0.29, 0.82), (0.73, 0.82)]);
            vec![s]
        }
        3 => vec![
            arc(0.49, 0.33, 0.17, 0.16, 200.0, 450.0),
            arc(0.49, 0.66, 0.19, 0.17, 270.0, 520.0),
        ],
        4 => vec![vec![(0.62, 0.83), (0.62, 0.17), (0.27, 0.62), (0.75, 0.62)]],
        5 => {
            let mut s = vec![(0.71, 0.18), (0.36, 0.18), (0.34, 0.46)];
            s.extend(arc(0.5, 0.62, 0.19, 0.2, 220.0, 520.0));
            vec![s]
        }
        6 => vec![
            vec![(0.64, 0.17), (0.35, 0.55)],
            arc(0.51, 0.64, 0.18, 0.19, 0.0, 360.0),
        ],
        7 => vec![vec![(0.27, 0.18), (0.73, 0.18), (0.43, 0.83)]],
        8 => vec![
            arc(0.5, 0.33, 0.15, 0.15, 0.0, 360.0),
            arc(0.5, 0.66, 0.18, 0.17, 0.0, 360.0),
        ],
        9 => vec![
            arc(0.49, 0.36, 0.17, 0.17, 0.0, 360.0),
            vec![(0.66, 0.38), (0.6, 0.83)],
        ],
        _ => panic!("digit {d} out of range"),
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Renders digit `d` at 28×28 with random slant, scale, offset and pen
/// width.
pub fn render_digit<R: Rng + ?Sized>(d: u8, rng: &mut R) -> Vec<u8> {
    let rot = rng.gen_range(-12f64..12.0).to_radians();
    let shear = rng.gen_range(-0.2..0.2);
    let sx = rng.gen_range(0.85..1.1);
    let sy = rng.gen_range(0.88..1.08);
    let tx = rng.gen_range(-0.05..0.05);
    let ty = rng.gen_range(-0.05..0.05);
    let pen = rng.gen_range(1.1..2.0);
    let (c, s) = (rot.cos(), rot.sin());
    let strokes: Vec<Stroke> = template(d)
        .into_iter()
        .map(|st| {
            st.into_iter()
                .map(|(x, y)| {
                    let (x, y) = ((x - 0.5) * sx + shear * (y - 0.5), (y - 0.5) * sy);
                    let (x, y) = (c * x - s * y + 0.5 + tx, s * x + c * y + 0.5 + ty);
                    (x * SIDE as f64, y * SIDE as f64)
                })
                .collect()
        })
        .collect();
    let mut px = vec![0u8; SIDE * SIDE];
    for r in 0..SIDE {
        for col in 0..SIDE {
            let p = (col as f64 + 0.5, r as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|st| st.windows(2).map(move |w| seg_dist(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = (pen + 0.5 - d).clamp(0.0, 1.0);
            px[r * SIDE + col] = (v * 255.0).round() as u8;
        }
    }
    px
}

/// `per_digit` images of each digit 0..=9, interleaved by digit.
pub fn synthetic_set(per_digit: usize, seed: u64) -> (ImageSet, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(per_digit * 10);
    let mut labels = Vec::with_capacity(per_digit * 10);
    for _ in 0..per_digit {
        for d in 0..10u8 {
            pixels.push(render_digit(d, &mut rng));
            labels.push(d);
        }
    }
    (
        ImageSet {
            rows: SIDE,
            cols: SIDE,
            pixels,
        },
        labels,
    )
}

/// Thresholds at half the image's own maximum.
pub fn binarize(px: &[u8]) -> Vec<bool> {
    let max = px.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![false; px.len()];
    }
    px.iter().map(|&v| 2 * v as u16 >= max as u16).collect()
}

pub fn resize_nearest(bits: &[bool], from: (usize, usize), to: (usize, usize)) -> Vec<bool> {
    let mut out = Vec::with_capacity(to.0 * to.1);
    for r in 0..to.0 {
        let sr = ((r as f64 + 0.5) * from.0 as f64 / to.0 as f64) as usize;
        for c in 0..to.1 {
            let sc = ((c as f64 + 0.5) * from.1 as f64 / to.1 as f64) as usize;
            out.push(bits[sr.min(from.0 - 1) * from.1 + sc.min(from.1 - 1)]);
        }
    }
    out
}

/// Binarize then shrink to 16×16.
pub fn preprocess(px: &[u8], rows: usize, cols: usize) -> Vec<bool> {
    resize_nearest(&binarize(px), (rows, cols), (BINARY_SIDE, BINARY_SIDE))
}
