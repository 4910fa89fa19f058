//! Images, placements, composites and on-disk datasets.
//!
//! Pixels live in `[-1, 1]` internally and in `[0, 255]` on disk. Every
//! resize in the crate goes through the same corner-aligned bilinear kernel.

use std::fmt;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{resize_planes, Tensor};

pub const CHANNELS: usize = 3;

/// A 3-channel image with values in `[-1, 1]`, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pixels: Tensor,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let pixels = Tensor::new(vec![CHANNELS, height, width], data)?;
        Ok(Self { pixels })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            pixels: Tensor::full(&[CHANNELS, height, width], value),
        }
    }

    /// Wrap a `[3, H, W]` or `[1, 3, H, W]` tensor.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let shape = t.shape().to_vec();
        let pixels = match shape.as_slice() {
            [CHANNELS, _, _] => t,
            [1, CHANNELS, h, w] => t.reshape(&[CHANNELS, *h, *w])?,
            _ => {
                return Err(Error::Shape(format!(
                    "expected a 3-channel image, got {shape:?}"
                )))
            }
        };
        Ok(Self { pixels })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn data(&self) -> &[f32] {
        self.pixels.data()
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        self.pixels.data_mut()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.pixels
    }

    /// `[1, 3, H, W]` copy for network input.
    pub fn to_batch(&self) -> Tensor {
        self.pixels
            .clone()
            .reshape(&[1, CHANNELS, self.height(), self.width()])
            .expect("same element count")
    }

    /// Stack images of equal size into `[N, 3, H, W]`.
    pub fn stack(images: &[&Image]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero images".into()))?;
        let (h, w) = first.size();
        let mut data = Vec::with_capacity(images.len() * CHANNELS * h * w);
        for img in images {
            if img.size() != (h, w) {
                return Err(Error::Shape(format!(
                    "stacking {}x{} with {}x{}",
                    h,
                    w,
                    img.height(),
                    img.width()
                )));
            }
            data.extend_from_slice(img.data());
        }
        Tensor::new(vec![images.len(), CHANNELS, h, w], data)
    }

    /// Split `[N, 3, H, W]` back into images.
    pub fn unstack(t: &Tensor) -> Result<Vec<Image>> {
        let (n, c, _, _) = t.dims4();
        if c != CHANNELS {
            return Err(Error::Shape(format!("expected 3 channels, got {c}")));
        }
        (0..n)
            .map(|i| Image::from_tensor(t.batch_slice(i, 1)))
            .collect()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Checks the range invariant.
    pub fn in_range(&self) -> bool {
        let (lo, hi) = self.min_max();
        lo >= -1.0 && hi <= 1.0
    }

    pub fn clamped(&self) -> Image {
        Image {
            pixels: self.pixels.map(|v| v.clamp(-1.0, 1.0)),
        }
    }

    /// Bilinear, corner-aligned.
    pub fn resized(&self, height: usize, width: usize) -> Image {
        if self.size() == (height, width) {
            return self.clone();
        }
        let data = resize_planes(
            self.data(),
            CHANNELS,
            self.height(),
            self.width(),
            height,
            width,
        );
        Image::new(height, width, data).expect("resize keeps channel count")
    }

    /// Pixel values mapped from `[-1, 1]` to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f32> {
        self.data().iter().map(|v| (v + 1.0) * 0.5).collect()
    }
}

/// Rectangle inside a host image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Placement {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self {
            top,
            left,
            height,
            width,
        }
    }

    pub fn full(size: (usize, usize)) -> Self {
        Self::new(0, 0, size.0, size.1)
    }

    pub fn check_within(&self, host: (usize, usize)) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Bounds(format!("empty placement {self}")));
        }
        if self.top + self.height > host.0 || self.left + self.width > host.1 {
            return Err(Error::Bounds(format!(
                "placement {self} outside {}x{} image",
                host.0, host.1
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}@({},{})",
            self.height, self.width, self.top, self.left
        )
    }
}

/// Cover image with a message pasted at a recorded placement.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeImage {
    pub image: Image,
    pub placement: Placement,
    pub message_id: String,
}

pub fn paste_message(cover: &Image, message: &Image, placement: Placement) -> Result<CompositeImage> {
    paste_message_with_id(cover, message, placement, "")
}

pub fn paste_message_with_id(
    cover: &Image,
    message: &Image,
    placement: Placement,
    message_id: &str,
) -> Result<CompositeImage> {
    if message.size() != (placement.height, placement.width) {
        return Err(Error::Shape(format!(
            "message is {}x{} but placement is {}",
            message.height(),
            message.width(),
            placement
        )));
    }
    placement.check_within(cover.size())?;
    let mut image = cover.clone();
    let (h, w) = cover.size();
    let (mh, mw) = message.size();
    let dst = image.data_mut();
    for c in 0..CHANNELS {
        for y in 0..mh {
            let d = (c * h + placement.top + y) * w + placement.left;
            let s = (c * mh + y) * mw;
            dst[d..d + mw].copy_from_slice(&message.data()[s..s + mw]);
        }
    }
    Ok(CompositeImage {
        image,
        placement,
        message_id: message_id.to_string(),
    })
}

pub fn crop_region(img: &Image, placement: Placement) -> Result<Image> {
    placement.check_within(img.size())?;
    let (h, w) = img.size();
    let mut out = Vec::with_capacity(CHANNELS * placement.height * placement.width);
    for c in 0..CHANNELS {
        for y in 0..placement.height {
            let s = (c * h + placement.top + y) * w + placement.left;
            out.extend_from_slice(&img.data()[s..s + placement.width]);
        }
    }
    Image::new(placement.height, placement.width, out)
}

/// `clamp(img + n, -1, 1)` with `n ~ N(0, sigma²)` i.i.d., seeded.
pub fn add_gaussian_noise(img: &Image, sigma: f32, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_gaussian_noise_rng(img, sigma, &mut rng)
}

pub fn add_gaussian_noise_rng(img: &Image, sigma: f32, rng: &mut impl Rng) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0f32, sigma).expect("finite positive sigma");
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v + normal.sample(rng)).clamp(-1.0, 1.0);
    }
    Ok(out)
}

/// Uniform top-left corner such that the message fits.
pub fn sample_placement(
    cover_size: (usize, usize),
    message_size: (usize, usize),
    rng: &mut impl Rng,
) -> Result<Placement> {
    let (ch, cw) = cover_size;
    let (mh, mw) = message_size;
    if mh == 0 || mw == 0 || mh > ch || mw > cw {
        return Err(Error::Shape(format!(
            "message {mh}x{mw} does not fit inside cover {ch}x{cw}"
        )));
    }
    Ok(Placement::new(
        rng.random_range(0..=ch - mh),
        rng.random_range(0..=cw - mw),
        mh,
        mw,
    ))
}

/// Reads an 8-bit RGB raster, resizes it, maps to `[-1, 1]`.
pub fn load_image(path: &Path, target_size: (usize, usize)) -> Result<Image> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let decoded = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let rgb = match decoded {
        image::DynamicImage::ImageRgb8(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected 8-bit RGB, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut planar = vec![0.0f32; CHANNELS * h * w];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..CHANNELS {
            planar[(c * h + y as usize) * w + x as usize] = px.0[c] as f32;
        }
    }
    let resized = if (h, w) == target_size {
        planar
    } else {
        resize_planes(&planar, CHANNELS, h, w, target_size.0, target_size.1)
    };
    let data = resized.into_iter().map(|v| v / 127.5 - 1.0).collect();
    Image::new(target_size.0, target_size.1, data)
}

/// Quantizes `[-1, 1]` to 8 bits with round-half-up, so 0.0 becomes 128.
pub fn quantize(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5 + 0.5).floor().min(255.0) as u8
}

pub fn to_rgb8(img: &Image) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let (h, w) = img.size();
    let d = img.data();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([
            quantize(d[y * w + x]),
            quantize(d[(h + y) * w + x]),
            quantize(d[(2 * h + y) * w + x]),
        ])
    })
}

/// Writes a PNG (lossless).
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(other.to_string()),
            },
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainLabel {
    X,
    Y,
    Message,
}

impl DomainLabel {
    /// Class index used by the key generator's domain classifier.
    pub fn class_index(self) -> Result<usize> {
        match self {
            DomainLabel::X => Ok(0),
            DomainLabel::Y => Ok(1),
            DomainLabel::Message => Err(Error::Argument(
                "message images carry no domain class".into(),
            )),
        }
    }
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "ppm", "tif", "tiff"];

/// All images of one domain, loaded and normalized up front.
#[derive(Clone, Debug)]
pub struct DomainDataset {
    pub root: PathBuf,
    pub domain_label: DomainLabel,
    pub image_size: (usize, usize),
    index: Vec<PathBuf>,
    images: Vec<Image>,
}

impl DomainDataset {
    pub fn open(root: &Path, domain_label: DomainLabel, image_size: (usize, usize)) -> Result<Self> {
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut index = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(root, e))?.path();
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if path.is_file() && is_image {
                index.push(path);
            }
        }
        index.sort();
        let images = index
            .iter()
            .map(|p| load_image(p, image_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root: root.to_path_buf(),
            domain_label,
            image_size,
            index,
            images,
        })
    }

    /// In-memory dataset, used by tests and generated corpora.
    pub fn from_images(domain_label: DomainLabel, images: Vec<Image>) -> Result<Self> {
        let image_size = images
            .first()
            .map(Image::size)
            .ok_or_else(|| Error::Config("dataset is empty".into()))?;
        if images.iter().any(|i| i.size() != image_size) {
            return Err(Error::Shape("dataset images differ in size".into()));
        }
        let index = (0..images.len())
            .map(|i| PathBuf::from(format!("mem:{i}")))
            .collect();
        Ok(Self {
            root: PathBuf::new(),
            domain_label,
            image_size,
            index,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, i: usize) -> &Image {
        &self.images[i]
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn path(&self, i: usize) -> &Path {
        &self.index[i]
    }

    /// Stable identifier for item `i` (file stem or in-memory index).
    pub fn id(&self, i: usize) -> String {
        self.index[i]
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{i}"))
    }

    /// Seeded permutation of item indices, one epoch.
    pub fn epoch_order(&self, seed: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    /// Endless seeded iterator over images, reshuffled each epoch.
    pub fn iter_seeded(&self, seed: u64) -> DatasetIter<'_> {
        DatasetIter {
            dataset: self,
            seed,
            epoch: 0,
            order: self.epoch_order(seed),
            pos: 0,
        }
    }

    /// Split into the first `n` items and the rest.
    pub fn split_at(&self, n: usize) -> (DomainDataset, DomainDataset) {
        let n = n.min(self.len());
        let mk = |r: std::ops::Range<usize>| DomainDataset {
            root: self.root.clone(),
            domain_label: self.domain_label,
            image_size: self.image_size,
            index: self.index[r.clone()].to_vec(),
            images: self.images[r].to_vec(),
        };
        (mk(0..n), mk(n..self.len()))
    }
}

pub struct DatasetIter<'a> {
    dataset: &'a DomainDataset,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> Iterator for DatasetIter<'a> {
    type Item = (usize, &'a Image);

    fn next(&mut self) -> Option<Self::Item> {
        if self.order.is_empty() {
            return None;
        }
        if self.pos == self.order.len() {
            self.epoch += 1;
            self.order = self
                .dataset
                .epoch_order(self.seed.wrapping_add(self.epoch.wrapping_mul(0x9E37_79B9)));
            self.pos = 0;
        }
        let i = self.order[self.pos];
        self.pos += 1;
        Some((i, self.dataset.get(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, (0..3 * h * w).map(|_| rng.random_range(-1.0..=1.0)).collect()).unwrap()
    }

    fn write_rgb(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
        ImageBuffer::from_fn(w, h, |x, y| Rgb(f(x, y))).save(path).unwrap();
    }

    #[test]
    fn black_and_white_files_map_to_range_ends() {
        let dir = tempfile::tempdir().unwrap();
        let black = dir.path().join("black.png");
        let white = dir.path().join("white.png");
        write_rgb(&black, 80, 80, |_, _| [0, 0, 0]);
        write_rgb(&white, 80, 80, |_, _| [255, 255, 255]);
        let b = load_image(&black, (64, 64)).unwrap();
        assert_eq!(b.size(), (64, 64));
        assert!(b.data().iter().all(|&v| v == -1.0));
        let w = load_image(&white, (64, 64)).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_split_downsample_has_narrow_transition() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.png");
        write_rgb(&p, 128, 128, |x, _| if x < 64 { [0; 3] } else { [255; 3] });
        let img = load_image(&p, (64, 64)).unwrap();
        // Columns strictly inside either half must sit at the range ends.
        let row: Vec<f32> = (0..64).map(|x| img.data()[10 * 64 + x]).collect();
        let transition = row.iter().filter(|&&v| v > -0.99 && v < 0.99).count();
        assert!(transition <= 2, "transition band {transition}: {row:?}");
        assert!(row[..31].iter().all(|&v| v == -1.0));
        assert!(row[33..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn load_errors_are_classified() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_image(&dir.path().join("nope.png"), (8, 8));
        assert!(matches!(missing, Err(Error::NotFound(_))));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(load_image(&junk, (8, 8)), Err(Error::Format(_))));
        let gray = dir.path().join("gray.png");
        image::GrayImage::from_pixel(4, 4, image::Luma([7])).save(&gray).unwrap();
        assert!(matches!(load_image(&gray, (4, 4)), Err(Error::Format(_))));
    }

    #[test]
    fn zero_saves_as_128_and_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("zero.png");
        save_image(&Image::filled(8, 8, 0.0), &p).unwrap();
        let raw = image::open(&p).unwrap().to_rgb8();
        assert!(raw.pixels().all(|px| px.0 == [128, 128, 128]));

        let img = random_image(16, 12, 9);
        let q = dir.path().join("rand.png");
        save_image(&img, &q).unwrap();
        let back = load_image(&q, (16, 12)).unwrap();
        let err = img.tensor().max_abs_diff(back.tensor());
        assert!(err <= 2.0 / 255.0 + 1e-6, "round-trip error {err}");
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let r = save_image(&Image::filled(4, 4, 0.0), &blocker.join("sub").join("a.png"));
        assert!(matches!(r, Err(Error::Io { .. })), "{r:?}");
    }

    #[test]
    fn paste_places_message_exactly() {
        let cover = Image::filled(4, 4, -1.0);
        let msg = Image::filled(2, 2, 1.0);
        let comp = paste_message(&cover, &msg, Placement::new(1, 1, 2, 2)).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let want = if (1..=2).contains(&y) && (1..=2).contains(&x) { 1.0 } else { -1.0 };
                    assert_eq!(comp.image.data()[(c * 4 + y) * 4 + x], want);
                }
            }
        }
        assert_eq!(cover, Image::filled(4, 4, -1.0));
    }

    #[test]
    fn pasting_the_covered_region_is_identity() {
        let cover = random_image(8, 8, 3);
        let p = Placement::new(2, 3, 4, 4);
        let region = crop_region(&cover, p).unwrap();
        assert_eq!(paste_message(&cover, &region, p).unwrap().image, cover);
    }

    #[test]
    fn paste_and_crop_reject_bad_geometry() {
        let cover = Image::filled(4, 4, 0.0);
        let msg = Image::filled(2, 2, 0.0);
        assert!(matches!(
            paste_message(&cover, &msg, Placement::new(3, 3, 2, 2)),
            Err(Error::Bounds(_))
        ));
        assert!(matches!(
            paste_message(&cover, &msg, Placement::new(0, 0, 3, 2)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            crop_region(&cover, Placement::new(0, 0, 5, 1)),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn crop_full_and_corner() {
        let img = random_image(6, 5, 4);
        assert_eq!(crop_region(&img, Placement::full(img.size())).unwrap(), img);
        let px = crop_region(&img, Placement::new(0, 0, 1, 1)).unwrap();
        assert_eq!(px.data(), &[img.data()[0], img.data()[30], img.data()[60]]);
    }

    #[test]
    fn noise_contract() {
        let img = random_image(8, 8, 5);
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);
        let a = add_gaussian_noise(&img, 0.2, 42).unwrap();
        let b = add_gaussian_noise(&img, 0.2, 42).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.in_range());
        assert!(matches!(add_gaussian_noise(&img, -0.1, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn noise_sample_std_matches_sigma() {
        // 3 * 578 * 577 ≈ 1.0e6 samples around a constant-0 image.
        let img = Image::filled(578, 577, 0.0);
        let noisy = add_gaussian_noise(&img, 0.1, 7).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = noisy.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((0.098..=0.102).contains(&std), "std {std}");
    }

    #[test]
    fn placement_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            assert_eq!(
                sample_placement((16, 16), (16, 16), &mut rng).unwrap(),
                Placement::new(0, 0, 16, 16)
            );
        }
        assert!(matches!(
            sample_placement((64, 64), (65, 65), &mut rng),
            Err(Error::Shape(_))
        ));
        // Uniform{0..32}: mean 16, std sqrt((33²-1)/12) ≈ 9.52; 3σ of the
        // mean over 1e4 draws is 3·9.52/100 ≈ 0.286.
        let n = 10_000;
        let (mut st, mut sl) = (0.0, 0.0);
        for _ in 0..n {
            let p = sample_placement((64, 64), (32, 32), &mut rng).unwrap();
            assert!(p.top <= 32 && p.left <= 32);
            st += p.top as f64;
            sl += p.left as f64;
        }
        let sd = ((33.0f64 * 33.0 - 1.0) / 12.0).sqrt();
        let bound = 3.0 * sd / (n as f64).sqrt();
        assert!((st / n as f64 - 16.0).abs() < bound);
        assert!((sl / n as f64 - 16.0).abs() < bound);
    }

    #[test]
    fn dataset_iteration_is_seed_deterministic() {
        let images: Vec<Image> = (0..5).map(|i| random_image(4, 4, i)).collect();
        let ds = DomainDataset::from_images(DomainLabel::X, images).unwrap();
        let a: Vec<usize> = ds.iter_seeded(3).take(17).map(|(i, _)| i).collect();
        let b: Vec<usize> = ds.iter_seeded(3).take(17).map(|(i, _)| i).collect();
        assert_eq!(a, b);
        let mut first_epoch = a[..5].to_vec();
        first_epoch.sort();
        assert_eq!(first_epoch, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dataset_loads_sorted_directory() {
        let dir = tempfile::tempdir().unwrap();
        for (i, name) in ["b.png", "a.png", "c.png"].iter().enumerate() {
            let v = (i * 100) as u8;
            write_rgb(&dir.path().join(name), 10, 10, move |_, _| [v, v, v]);
        }
        std::fs::write(dir.path().join("notes.txt"), "skip me").unwrap();
        let ds = DomainDataset::open(dir.path(), DomainLabel::Y, (8, 8)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.id(0), "a");
        assert!(ds.images().iter().all(|i| i.size() == (8, 8) && i.in_range()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn crop_inverts_paste(
            ch in 1usize..12, cw in 1usize..12,
            fh in 0.0f64..1.0, fw in 0.0f64..1.0, ft in 0.0f64..1.0, fl in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let mh = 1 + ((ch - 1) as f64 * fh) as usize;
            let mw = 1 + ((cw - 1) as f64 * fw) as usize;
            let top = ((ch - mh) as f64 * ft) as usize;
            let left = ((cw - mw) as f64 * fl) as usize;
            let cover = random_image(ch, cw, seed);
            let msg = random_image(mh, mw, seed ^ 0xABCD);
            let p = Placement::new(top, left, mh, mw);
            let comp = paste_message(&cover, &msg, p).unwrap();
            prop_assert_eq!(crop_region(&comp.image, p).unwrap(), msg);
            // Outside pixels untouched.
            for c in 0..3 {
                for y in 0..ch {
                    for x in 0..cw {
                        let inside = y >= top && y < top + mh && x >= left && x < left + mw;
                        if !inside {
                            let i = (c * ch + y) * cw + x;
                            prop_assert_eq!(comp.image.data()[i], cover.data()[i]);
                        }
                    }
                }
            }
        }
    }
}
