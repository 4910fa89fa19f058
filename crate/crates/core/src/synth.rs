//! Procedural desk-scale datasets: two visually distinct domains and a
//! message set, written as PNG trees in the layout [`DataConfig`] expects.
//!
//! - X ("warm blobs"): soft red/orange/yellow blobs on a warm gradient.
//! - Y ("cool petals"): a radial flower in blue/cyan/violet on dark teal.
//! - Messages: a seven-segment digit in a bright colour on black.
//!
//! [`DataConfig`]: crate::config::DataConfig

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::Result;
use crate::imagedata::{save_image, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub image_size: (usize, usize),
    pub message_size: (usize, usize),
    pub train_per_domain: usize,
    pub test_per_domain: usize,
    pub train_messages: usize,
    pub test_messages: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            image_size: (64, 64),
            message_size: (32, 32),
            train_per_domain: 64,
            test_per_domain: 32,
            train_messages: 40,
            test_messages: 20,
        }
    }
}

fn planar(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Image {
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = f(y, x);
            for c in 0..3 {
                data[(c * h + y) * w + x] = (px[c] * 2.0 - 1.0).clamp(-1.0, 1.0);
            }
        }
    }
    Image::new(h, w, data).expect("sized buffer")
}

/// Domain X sample; colours in `[0, 1]` before mapping to `[-1, 1]`.
pub fn warm_blobs(size: (usize, usize), rng: &mut impl Rng) -> Image {
    let (h, w) = size;
    let base = [rng.random_range(0.55..0.8), rng.random_range(0.25..0.45), rng.random_range(0.1..0.25)];
    let tilt: f32 = rng.random_range(-0.25..0.25);
    let blobs: Vec<([f32; 2], f32, [f32; 3])> = (0..rng.random_range(2..5))
        .map(|_| {
            let centre = [rng.random_range(0.0..h as f32), rng.random_range(0.0..w as f32)];
            let radius = rng.random_range(0.12..0.3) * h.min(w) as f32;
            let colour = [rng.random_range(0.85..1.0), rng.random_range(0.3..0.85), rng.random_range(0.0..0.3)];
            (centre, radius, colour)
        })
        .collect();
    planar(h, w, |y, x| {
        let t = y as f32 / h as f32 - 0.5;
        let mut px = [base[0] + tilt * t, base[1] + 0.5 * tilt * t, base[2]];
        for (c, r, col) in &blobs {
            let d2 = ((y as f32 - c[0]).powi(2) + (x as f32 - c[1]).powi(2)) / (r * r);
            let a = (-d2).exp();
            for k in 0..3 {
                px[k] = px[k] * (1.0 - a) + col[k] * a;
            }
        }
        px
    })
}

/// Domain Y sample.
pub fn cool_petals(size: (usize, usize), rng: &mut impl Rng) -> Image {
    let (h, w) = size;
    let bg = [rng.random_range(0.0..0.1), rng.random_range(0.15..0.3), rng.random_range(0.25..0.4)];
    let centre = [
        rng.random_range(0.3..0.7) * h as f32,
        rng.random_range(0.3..0.7) * w as f32,
    ];
    let petals = rng.random_range(5..9) as f32;
    let phase: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let radius = rng.random_range(0.28..0.42) * h.min(w) as f32;
    let petal = [rng.random_range(0.2..0.6), rng.random_range(0.5..0.9), rng.random_range(0.85..1.0)];
    let heart = [rng.random_range(0.6..0.9), rng.random_range(0.7..1.0), rng.random_range(0.9..1.0)];
    planar(h, w, |y, x| {
        let dy = y as f32 - centre[0];
        let dx = x as f32 - centre[1];
        let r = (dy * dy + dx * dx).sqrt() / radius;
        let theta = dy.atan2(dx);
        let edge = 0.55 + 0.45 * (petals * theta + phase).cos().abs();
        let on_petal = ((edge - r) * 8.0).clamp(0.0, 1.0);
        let on_heart = ((0.22 - r) * 20.0).clamp(0.0, 1.0);
        let mut px = bg;
        for k in 0..3 {
            px[k] = px[k] * (1.0 - on_petal) + petal[k] * (0.6 + 0.4 * r.min(1.0)) * on_petal;
            px[k] = px[k] * (1.0 - on_heart) + heart[k] * on_heart;
        }
        px
    })
}

// Segments a..g as (top, left, bottom, right) in a unit box.
const SEGMENTS: [[f32; 4]; 7] = [
    [0.10, 0.25, 0.18, 0.75],
    [0.10, 0.67, 0.50, 0.75],
    [0.50, 0.67, 0.90, 0.75],
    [0.82, 0.25, 0.90, 0.75],
    [0.50, 0.25, 0.90, 0.33],
    [0.10, 0.25, 0.50, 0.33],
    [0.46, 0.25, 0.54, 0.75],
];

const DIGITS: [[bool; 7]; 10] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// A seven-segment `digit` in `colour` (components in `[0, 1]`) on black.
pub fn digit_message(digit: usize, colour: [f32; 3], size: (usize, usize)) -> Image {
    let (h, w) = size;
    let lit = DIGITS[digit % 10];
    planar(h, w, |y, x| {
        let (u, v) = ((y as f32 + 0.5) / h as f32, (x as f32 + 0.5) / w as f32);
        let on = SEGMENTS
            .iter()
            .zip(lit)
            .any(|(s, l)| l && u >= s[0] && u <= s[2] && v >= s[1] && v <= s[3]);
        if on {
            colour
        } else {
            [0.0; 3]
        }
    })
}

pub fn random_message(size: (usize, usize), rng: &mut impl Rng) -> Image {
    let digit = rng.random_range(0..10);
    let mut colour = [rng.random_range(0.6..1.0), rng.random_range(0.6..1.0), rng.random_range(0.6..1.0)];
    colour[rng.random_range(0..3)] = 1.0;
    digit_message(digit, colour, size)
}

/// Writes the full train/test tree under `root` and returns a data config
/// pointing at it.
pub fn write_desk_dataset(root: &Path, spec: &SynthSpec, seed: u64) -> Result<DataConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DataConfig {
        message_size: spec.message_size,
        ..DataConfig::default()
    }
    .rooted(root);
    let sets = [
        (&data.x_train, spec.train_per_domain, 0),
        (&data.y_train, spec.train_per_domain, 1),
        (&data.messages_train, spec.train_messages, 2),
        (&data.x_test, spec.test_per_domain, 0),
        (&data.y_test, spec.test_per_domain, 1),
        (&data.messages_test, spec.test_messages, 2),
    ];
    for (dir, n, kind) in sets {
        for i in 0..n {
            let img = match kind {
                0 => warm_blobs(spec.image_size, &mut rng),
                1 => cool_petals(spec.image_size, &mut rng),
                _ => random_message(spec.message_size, &mut rng),
            };
            save_image(&img, &dir.join(format!("{i:04}.png")))?;
        }
    }
    Ok(data)
}
