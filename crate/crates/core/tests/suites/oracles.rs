//! Metric and resampling values checked against reference libraries.
//! Frozen numbers were produced with scikit-image (SSIM) and torch
//! (`interpolate`, bilinear, `align_corners=True`) on the same integer
//! patterns generated here.

use encryptgan::imagedata::{load_image, Image};
use encryptgan::metrics::{frechet_distance, perceptual_distance, ssim, KeyFeatureBackend, PixelBackend};
use encryptgan::networks::{ArchConfig, FeatureTaps, Networks};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn pattern(kind: u32, h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * h * w);
    for c in 0..3usize {
        for y in 0..h {
            for x in 0..w {
                let checker = ((x / 4 + y / 4 + c) % 2) * 200 + 20;
                let v = match kind {
                    0 => (x * 7 + y * 13 + c * 29) % 256,
                    1 => (x * x * 3 + y * 5 + c * 41 + x * y) % 256,
                    2 => checker,
                    3 => (x * 11 + y * 3 + c * 17 + (x * y) % 7 * 9) % 256,
                    4 => (checker + (x * y + c) % 9 * 4).min(255),
                    _ => (checker + (x * 5 + y * 3 + c) % 11).saturating_sub(5).min(255),
                };
                out.push(v as f64);
            }
        }
    }
    out
}

fn image(kind: u32, h: usize, w: usize) -> Image {
    let data = pattern(kind, h, w).into_iter().map(|v| (v / 127.5 - 1.0) as f32).collect();
    Image::new(h, w, data).unwrap()
}

pub fn ssim_matches_scikit_image() {
    let cases = [
        (0, 1, 32, 32, 0.014522345447216803),
        (0, 3, 32, 32, 0.11284060478620588),
        (2, 0, 16, 24, -0.034386654807340905),
        (1, 3, 20, 20, 0.023371755286845698),
        (2, 2, 12, 12, 1.0),
        (2, 4, 24, 24, 0.9872589522309477),
        (2, 5, 24, 24, 0.9994712202526418),
    ];
    for (ka, kb, h, w, expected) in cases {
        let got = ssim(&image(ka, h, w), &image(kb, h, w)).unwrap();
        assert!((got - expected).abs() <= 1e-3, "ssim({ka},{kb},{h}x{w}) = {got}, reference {expected}");
    }
}

fn gaussian_samples(n: usize, means: &[f64], stds: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<Normal<f64>> = means.iter().zip(stds).map(|(&m, &s)| Normal::new(m, s).unwrap()).collect();
    (0..n).map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect()).collect()
}

pub fn frechet_of_unit_gaussians_one_apart() {
    let a = gaussian_samples(100_000, &[0.0], &[1.0], 1);
    let b = gaussian_samples(100_000, &[1.0], &[1.0], 2);
    let d = frechet_distance(&a, &b).unwrap();
    assert!((d - 1.0).abs() <= 0.05, "Frechet distance {d}");
}

pub fn frechet_matches_closed_form_for_diagonal_covariances() {
    // tr(Ca + Cb − 2·sqrt(Ca·Cb)) with Ca = diag(1, 4), Cb = diag(4, 1) is 2
    let a = gaussian_samples(100_000, &[0.0, 0.0], &[1.0, 2.0], 3);
    let b = gaussian_samples(100_000, &[0.0, 0.0], &[2.0, 1.0], 4);
    let d = frechet_distance(&a, &b).unwrap();
    assert!((d - 2.0).abs() <= 0.1, "Frechet distance {d}");
}

fn noisy(img: &Image, sigma: f32, seed: u64) -> Image {
    encryptgan::imagedata::add_gaussian_noise(img, sigma, seed).unwrap()
}

pub fn perceptual_distance_grows_with_distortion() {
    let base = image(3, 64, 64);
    let nets = Networks::init(&ArchConfig::default(), 5).unwrap();
    let key_features = KeyFeatureBackend {
        k: &nets.k,
        taps: FeatureTaps::default(),
    };
    for backend in [&PixelBackend as &dyn encryptgan::metrics::PerceptualBackend, &key_features] {
        assert_eq!(perceptual_distance(backend, &base, &base).unwrap(), 0.0);
        let ds: Vec<f64> = [0.05, 0.1, 0.2, 0.4, 0.8]
            .iter()
            .map(|&s| perceptual_distance(backend, &base, &noisy(&base, s, 9)).unwrap())
            .collect();
        assert!(ds.windows(2).all(|w| w[1] > w[0]), "{}: {ds:?}", backend.name());
    }
}

fn write_png(path: &std::path::Path, data: &[f64], h: usize, w: usize) {
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|c| data[(c * h + y) * w + x] as u8);
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).unwrap();
}

pub fn bilinear_resize_matches_reference() {
    // (x² · 3 + y · 17 + c · 41 + x · y · 5) mod 256 on an 8×12 grid
    let (h, w) = (8, 12);
    let mut src = Vec::new();
    for c in 0..3usize {
        for y in 0..h {
            for x in 0..w {
                src.push(((x * x * 3 + y * 17 + c * 41 + x * y * 5) % 256) as f64);
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.png");
    write_png(&path, &src, h, w);
    let cases: [((usize, usize), f64, [((usize, usize, usize), f64); 6]); 2] = [
        (
            (16, 20),
            123390.82105263157,
            [
                ((0, 0, 0), 0.0),
                ((0, 3, 5), 69.48421052631579),
                ((1, 15, 19), 140.0),
                ((2, 8, 6), 158.32982456140348),
                ((1, 1, 18), 143.7754385964913),
                ((2, 14, 1), 213.7157894736842),
            ],
        ),
        (
            (5, 7),
            13516.916666666668,
            [
                ((0, 0, 0), 0.0),
                ((0, 3, 5), 70.37499999999996),
                ((1, 4, 6), 140.0),
                ((2, 2, 2), 161.33333333333337),
                ((1, 1, 5), 147.45833333333331),
                ((2, 3, 1), 176.54166666666666),
            ],
        ),
    ];
    for ((oh, ow), sum, points) in cases {
        let img = load_image(&path, (oh, ow)).unwrap();
        let to_255 = |v: f32| (v as f64 + 1.0) * 127.5;
        let total: f64 = img.data().iter().map(|&v| to_255(v)).sum();
        assert!((total - sum).abs() / sum < 1e-5, "{oh}x{ow} sum {total} vs {sum}");
        for ((c, y, x), expected) in points {
            let got = to_255(img.data()[(c * oh + y) * ow + x]);
            assert!((got - expected).abs() < 1e-3, "{oh}x{ow} ({c},{y},{x}) {got} vs {expected}");
        }
    }
}
