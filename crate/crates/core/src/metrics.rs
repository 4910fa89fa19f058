//! Image-quality metrics, perceptual and Fréchet distances, and the
//! evaluation sweep.
//!
//! Pixel metrics map images from `[-1, 1]` to `[0, 1]` first (peak 1) and
//! are computed per image; aggregates are means of per-image values.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::config::{Config, EvalConfig};
use crate::error::{Error, Result};
use crate::imagedata::{crop_region, paste_message_with_id, sample_placement, CompositeImage, Image, Placement};
use crate::networks::{generator_forward, FeatureTaps, KeyGeneratorParams, Networks, KEY_LAYERS};
use crate::tensor::Tensor;
use crate::training::TrainingData;

pub const PSNR_CAP: f64 = 100.0;
const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.size(), b.size())));
    }
    Ok(())
}

fn unit(v: f32) -> f64 {
    (v as f64 + 1.0) * 0.5
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (unit(x) - unit(y)).powi(2))
        .sum();
    Ok(s / a.data().len() as f64)
}

pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    mse(a, b).map(f64::sqrt)
}

pub fn psnr_from_mse(mse: f64, cap: f64) -> f64 {
    if mse <= 0.0 {
        cap
    } else {
        (10.0 * (1.0 / mse).log10()).min(cap)
    }
}

pub fn psnr(a: &Image, b: &Image, cap: f64) -> Result<f64> {
    mse(a, b).map(|m| psnr_from_mse(m, cap))
}

fn gaussian_window() -> Vec<f64> {
    let w: Vec<f64> = (0..=2 * SSIM_RADIUS)
        .map(|i| {
            let d = i as f64 - SSIM_RADIUS as f64;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

// Separable Gaussian filter evaluated only where the window fits.
fn filter_valid(src: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| win[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| win[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity: 11×11 Gaussian window (σ = 1.5), population
/// statistics, data range 1, averaged over valid windows and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w) = a.size();
    let k = 2 * SSIM_RADIUS + 1;
    if h < k || w < k {
        return Err(Error::Argument(format!(
            "SSIM needs at least {k}x{k} pixels, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let n = h * w;
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.data()[c * n..(c + 1) * n].iter().map(|&v| unit(v)).collect();
        let pb: Vec<f64> = b.data()[c * n..(c + 1) * n].iter().map(|&v| unit(v)).collect();
        let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { pa.iter().zip(&pb).map(|(&x, &y)| f(x, y)).collect() };
        let mu_a = filter_valid(&pa, h, w, &win);
        let mu_b = filter_valid(&pb, h, w, &win);
        let aa = filter_valid(&prod(&|x, _| x * x), h, w, &win);
        let bb = filter_valid(&prod(&|_, y| y * y), h, w, &win);
        let ab = filter_valid(&prod(&|x, y| x * y), h, w, &win);
        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

/// Feature extractor behind the perceptual distance.
pub trait PerceptualBackend {
    fn name(&self) -> &str;
    /// One `[C, h, w]` feature map per layer.
    fn features(&self, img: &Image) -> Result<Vec<Tensor>>;
}

/// Raw pixels as a single three-channel layer.
pub struct PixelBackend;

impl PerceptualBackend for PixelBackend {
    fn name(&self) -> &str {
        "pixels"
    }

    fn features(&self, img: &Image) -> Result<Vec<Tensor>> {
        Ok(vec![img.tensor().clone()])
    }
}

/// Tapped key-generator activations. Inputs of another size are resized to
/// the key generator's input size first.
pub struct KeyFeatureBackend<'a> {
    pub k: &'a KeyGeneratorParams,
    pub taps: FeatureTaps,
}

impl KeyFeatureBackend<'_> {
    fn layers(&self, img: &Image) -> Result<Vec<Tensor>> {
        let (h, w) = self.k.image_size;
        let img = if img.size() == (h, w) {
            img.clone()
        } else {
            img.resized(h, w)
        };
        let mut g = Graph::new();
        let vars = self.k.params.bind(&mut g, false);
        let x = g.constant(img.to_batch());
        let out = self.k.forward_graph(&mut g, &vars, x)?;
        Ok(out
            .layers
            .iter()
            .map(|&v| {
                let t = g.value(v).clone();
                let s = t.shape()[1..].to_vec();
                t.reshape(&s).expect("unit batch")
            })
            .collect())
    }
}

impl PerceptualBackend for KeyFeatureBackend<'_> {
    fn name(&self) -> &str {
        "keygen_taps"
    }

    fn features(&self, img: &Image) -> Result<Vec<Tensor>> {
        let all = self.layers(img)?;
        Ok(self.taps.layers().iter().map(|&l| all[l - 1].clone()).collect())
    }
}

/// Fixed-length embedding used by the Fréchet distance.
pub trait FeatureExtractor {
    fn embed(&self, img: &Image) -> Result<Vec<f64>>;
}

/// Layer-6 key-generator activations averaged over the four spatial
/// quadrants. A full spatial mean would be constant after instance norm.
impl FeatureExtractor for KeyFeatureBackend<'_> {
    fn embed(&self, img: &Image) -> Result<Vec<f64>> {
        let l6 = &self.layers(img)?[KEY_LAYERS - 1];
        let (c, h, w) = (l6.shape()[0], l6.shape()[1], l6.shape()[2]);
        let halves = |n: usize| [0..n.div_ceil(2), n / 2..n];
        let mut out = Vec::with_capacity(c * 4);
        for ch in 0..c {
            let plane = &l6.data()[ch * h * w..(ch + 1) * h * w];
            for rows in halves(h) {
                for cols in halves(w) {
                    let n = rows.len() * cols.len();
                    let sum: f64 = rows.clone().flat_map(|y| cols.clone().map(move |x| plane[y * w + x] as f64)).sum();
                    out.push(sum / n as f64);
                }
            }
        }
        Ok(out)
    }
}

// Per-position unit normalization across channels.
fn normalize_channels(t: &Tensor) -> Vec<f64> {
    let (c, hw) = (t.shape()[0], t.shape()[1..].iter().product::<usize>());
    let mut out = vec![0.0; c * hw];
    for p in 0..hw {
        let norm = (0..c).map(|i| (t.data()[i * hw + p] as f64).powi(2)).sum::<f64>().sqrt() + 1e-10;
        for i in 0..c {
            out[i * hw + p] = t.data()[i * hw + p] as f64 / norm;
        }
    }
    out
}

/// Squared distance of unit-normalized features, summed over channels,
/// averaged over positions, then averaged over layers with equal weights.
pub fn perceptual_distance(backend: &dyn PerceptualBackend, a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let fa = backend.features(a)?;
    let fb = backend.features(b)?;
    if fa.is_empty() || fa.len() != fb.len() {
        return Err(Error::Config(format!("backend `{}` produced no comparable layers", backend.name())));
    }
    let mut total = 0.0;
    for (x, y) in fa.iter().zip(&fb) {
        let hw: usize = x.shape()[1..].iter().product();
        let (nx, ny) = (normalize_channels(x), normalize_channels(y));
        let d: f64 = nx.iter().zip(&ny).map(|(p, q)| (p - q).powi(2)).sum();
        total += d / hw as f64;
    }
    Ok(total / fa.len() as f64)
}

fn moments(set: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if set.len() < 2 {
        return Err(Error::Argument("Fréchet distance needs at least 2 vectors per set".into()));
    }
    let d = set[0].len();
    if d == 0 || set.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("feature vectors differ in dimension".into()));
    }
    let n = set.len() as f64;
    let mut mean = DVector::zeros(d);
    for v in set {
        mean += DVector::from_column_slice(v);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let c = DVector::from_column_slice(v) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    Ok((mean, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.amax().max(1.0);
    let eig = SymmetricEigen::try_new(sym, 1e-12, 10_000)
        .ok_or_else(|| Error::Numerical { term: "frechet_sqrt".into() })?;
    if eig.eigenvalues.iter().any(|&l| !l.is_finite() || l < -1e-6 * scale) {
        return Err(Error::Numerical { term: "frechet_sqrt".into() });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `|μa − μb|² + Tr(Ca + Cb − 2 (Ca Cb)^{1/2})`, with the trace of the
/// cross term taken as `Tr((Ca^{1/2} Cb Ca^{1/2})^{1/2})`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (ma, ca) = moments(a)?;
    let (mb, cb) = moments(b)?;
    if ma.len() != mb.len() {
        return Err(Error::Shape(format!("dimension {} vs {}", ma.len(), mb.len())));
    }
    let ra = psd_sqrt(&ca)?;
    let cross = psd_sqrt(&(&ra * &cb * &ra))?;
    let d = (&ma - &mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross.trace();
    Ok(d.max(0.0))
}

/// `(perceptual, mse)` between the message regions of ciphertext and
/// composite; higher means the message is better hidden.
pub fn encryption_score(backend: &dyn PerceptualBackend, encrypted: &Image, composite: &CompositeImage) -> Result<(f64, f64)> {
    let a = crop_region(encrypted, composite.placement)?;
    let b = crop_region(&composite.image, composite.placement)?;
    Ok((perceptual_distance(backend, &a, &b)?, mse(&a, &b)?))
}

/// The model as seen by the evaluation protocol.
pub trait StegoModel {
    fn key(&self, img: &Image) -> Result<Image>;
    fn encrypt(&self, composite: &Image, public_key: &Image) -> Result<Image>;
    fn decrypt(&self, encrypted: &Image, private_key: &Image) -> Result<Image>;
}

impl StegoModel for Networks {
    fn key(&self, img: &Image) -> Result<Image> {
        crate::networks::keygen_forward(&self.k, img).map(|o| o.key)
    }

    fn encrypt(&self, composite: &Image, public_key: &Image) -> Result<Image> {
        generator_forward(&self.f, composite, public_key)
    }

    fn decrypt(&self, encrypted: &Image, private_key: &Image) -> Result<Image> {
        generator_forward(&self.g, encrypted, private_key)
    }
}

/// Indices into a test set describing one evaluation sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub cover: usize,
    pub disguise: usize,
    pub message: usize,
    pub placement: Placement,
    /// Distinct covers other than `cover`, whose keys act as wrong keys.
    pub wrong_covers: Vec<usize>,
}

pub fn sample_trials(test: &TrainingData, n: usize, n_wrong: usize, seed: u64) -> Result<Vec<Trial>> {
    test.check()?;
    if n_wrong >= test.x.len() {
        return Err(Error::Config(format!(
            "{n_wrong} wrong keys need at least {} test covers, found {}",
            n_wrong + 1,
            test.x.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|index| {
            let cover = rng.random_range(0..test.x.len());
            let disguise = rng.random_range(0..test.y.len());
            let message = rng.random_range(0..test.messages.len());
            let msg = test.messages.get(message);
            let placement = sample_placement(test.x.get(cover).size(), msg.size(), &mut rng)?;
            let others: Vec<usize> = (0..test.x.len()).filter(|&i| i != cover).collect();
            let wrong_covers = rand::seq::index::sample(&mut rng, others.len(), n_wrong)
                .into_iter()
                .map(|i| others[i])
                .collect();
            Ok(Trial {
                index,
                cover,
                disguise,
                message,
                placement,
                wrong_covers,
            })
        })
        .collect()
}

/// Everything produced while running one trial through a model.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub composite: CompositeImage,
    pub message: Image,
    pub cover: Image,
    pub public_key: Image,
    pub private_key: Image,
    pub encrypted: Image,
    pub decrypted: Image,
    pub wrong_decrypts: Vec<Image>,
}

impl TrialRun {
    pub fn decoded_message(&self) -> Result<Image> {
        crop_region(&self.decrypted, self.composite.placement)
    }

    pub fn message_psnr(&self, cap: f64) -> Result<f64> {
        psnr(&self.decoded_message()?, &self.message, cap)
    }
}

pub fn run_trial(model: &dyn StegoModel, test: &TrainingData, trial: &Trial) -> Result<TrialRun> {
    run_trial_at(model, test, trial, trial.placement)
}

/// Like [`run_trial`] with the message moved to `placement`.
pub fn run_trial_at(model: &dyn StegoModel, test: &TrainingData, trial: &Trial, placement: Placement) -> Result<TrialRun> {
    let cover = test.x.get(trial.cover).clone();
    let message = test.messages.get(trial.message).clone();
    let composite = paste_message_with_id(&cover, &message, placement, &test.messages.id(trial.message))?;
    let public_key = model.key(test.y.get(trial.disguise))?;
    let private_key = model.key(&cover)?;
    let encrypted = model.encrypt(&composite.image, &public_key)?;
    let decrypted = model.decrypt(&encrypted, &private_key)?;
    let wrong_decrypts = trial
        .wrong_covers
        .iter()
        .map(|&k| model.decrypt(&encrypted, &model.key(test.x.get(k))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialRun {
        composite,
        message,
        cover,
        public_key,
        private_key,
        encrypted,
        decrypted,
        wrong_decrypts,
    })
}

/// Mean `(perceptual, mse)` between the true message and wrong-key decodes.
pub fn security_score(
    model: &dyn StegoModel,
    backend: &dyn PerceptualBackend,
    test: &TrainingData,
    trials: &[Trial],
) -> Result<(f64, f64)> {
    if trials.is_empty() || trials.iter().any(|t| t.wrong_covers.is_empty()) {
        return Err(Error::Argument("security score needs at least one wrong key".into()));
    }
    let (mut lp, mut ms, mut n) = (0.0, 0.0, 0usize);
    for t in trials {
        let run = run_trial(model, test, t)?;
        for wrong in &run.wrong_decrypts {
            let crop = crop_region(wrong, run.composite.placement)?;
            lp += perceptual_distance(backend, &crop, &run.message)?;
            ms += mse(&crop, &run.message)?;
            n += 1;
        }
    }
    Ok((lp / n as f64, ms / n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Whole,
    MessageRegion,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::MessageRegion => "message_region",
        }
    }
}

/// Reconstruction quality of one decode against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub trial: usize,
    pub cover_id: String,
    pub message_id: String,
    pub region: Region,
    pub mse: f64,
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: f64,
}

impl MetricRecord {
    pub fn compute(
        backend: &dyn PerceptualBackend,
        decoded: &Image,
        reference: &Image,
        cap: f64,
        ids: (usize, &str, &str),
        region: Region,
    ) -> Result<Self> {
        let m = mse(decoded, reference)?;
        Ok(Self {
            trial: ids.0,
            cover_id: ids.1.to_string(),
            message_id: ids.2.to_string(),
            region,
            mse: m,
            rmse: m.sqrt(),
            psnr: psnr_from_mse(m, cap),
            ssim: ssim(decoded, reference)?,
            lpips: perceptual_distance(backend, decoded, reference)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub lpips: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: Vec<MetricRecord>,
    /// `region.metric` → mean over that region's records.
    pub aggregates: BTreeMap<String, f64>,
    pub encryption: ScorePair,
    pub security: ScorePair,
    pub wrong_key_message_psnr: f64,
    pub frechet: f64,
    pub trials: usize,
    pub wrong_keys: usize,
    pub config: Config,
    #[serde(default)]
    pub checkpoint_hash: Option<String>,
}

impl MetricsReport {
    pub fn aggregate(&self, region: Region, metric: &str) -> Option<f64> {
        self.aggregates.get(&format!("{}.{metric}", region.as_str())).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    /// One CSV row per record.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        write_file(path, &bytes)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn aggregate_records(records: &[MetricRecord]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        for (name, v) in [
            ("mse", r.mse),
            ("rmse", r.rmse),
            ("psnr", r.psnr),
            ("ssim", r.ssim),
            ("lpips", r.lpips),
        ] {
            let e = sums.entry(format!("{}.{name}", r.region.as_str())).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Runs the full metric battery over sampled test trials.
pub fn evaluate(
    model: &dyn StegoModel,
    backend: &dyn PerceptualBackend,
    features: &dyn FeatureExtractor,
    test: &TrainingData,
    config: &Config,
) -> Result<MetricsReport> {
    let ev: &EvalConfig = &config.eval;
    if test.x.is_empty() || test.y.is_empty() || test.messages.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let trials = sample_trials(test, ev.trials, ev.wrong_keys, ev.seed)?;
    let mut records = Vec::new();
    let (mut enc, mut sec) = (ScorePair::default(), ScorePair::default());
    let (mut wrong_psnr, mut n_wrong) = (0.0, 0usize);
    let mut fake_feats = Vec::new();
    for t in &trials {
        let run = run_trial(model, test, t)?;
        let ids = (t.index, test.x.id(t.cover), run.composite.message_id.clone());
        let decoded = run.decoded_message()?;
        records.push(MetricRecord::compute(
            backend,
            &decoded,
            &run.message,
            ev.psnr_cap,
            (ids.0, &ids.1, &ids.2),
            Region::MessageRegion,
        )?);
        records.push(MetricRecord::compute(
            backend,
            &run.decrypted,
            &run.composite.image,
            ev.psnr_cap,
            (ids.0, &ids.1, &ids.2),
            Region::Whole,
        )?);
        let (lp, ms) = encryption_score(backend, &run.encrypted, &run.composite)?;
        enc.lpips += lp;
        enc.mse += ms;
        for wrong in &run.wrong_decrypts {
            let crop = crop_region(wrong, run.composite.placement)?;
            let m = mse(&crop, &run.message)?;
            sec.lpips += perceptual_distance(backend, &crop, &run.message)?;
            sec.mse += m;
            wrong_psnr += psnr_from_mse(m, ev.psnr_cap);
            n_wrong += 1;
        }
        fake_feats.push(features.embed(&run.encrypted)?);
    }
    let n = trials.len() as f64;
    enc.lpips /= n;
    enc.mse /= n;
    if n_wrong > 0 {
        sec.lpips /= n_wrong as f64;
        sec.mse /= n_wrong as f64;
        wrong_psnr /= n_wrong as f64;
    }
    let real_feats = test
        .y
        .images()
        .iter()
        .map(|i| features.embed(i))
        .collect::<Result<Vec<_>>>()?;
    let frechet = if real_feats.len() >= 2 && fake_feats.len() >= 2 {
        frechet_distance(&real_feats, &fake_feats)?
    } else {
        f64::NAN
    };
    Ok(MetricsReport {
        aggregates: aggregate_records(&records),
        records,
        encryption: enc,
        security: sec,
        wrong_key_message_psnr: wrong_psnr,
        frechet,
        trials: trials.len(),
        wrong_keys: ev.wrong_keys,
        config: config.clone(),
        checkpoint_hash: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v01: f32) -> Image {
        Image::filled(16, 16, v01 * 2.0 - 1.0)
    }

    #[test]
    fn mse_rmse_examples() {
        let a = constant(0.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!((mse(&a, &constant(1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((rmse(&a, &constant(1.0)).unwrap() - 1.0).abs() < 1e-12);
        let mut half = constant(0.5);
        let n = half.data().len();
        for v in &mut half.data_mut()[..n / 2] {
            *v += 0.4; // +0.2 in unit range
        }
        let m = mse(&constant(0.5), &half).unwrap();
        assert!((m - 0.02).abs() < 1e-7, "{m}");
        assert!((rmse(&constant(0.5), &half).unwrap() - 0.02f64.sqrt()).abs() < 1e-6);
        assert!(matches!(mse(&a, &Image::filled(8, 8, 0.0)), Err(Error::Shape(_))));
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(0.01, PSNR_CAP) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.0139, PSNR_CAP) - 18.5699).abs() < 1e-3);
        let a = constant(0.3);
        assert_eq!(psnr(&a, &a, PSNR_CAP).unwrap(), 100.0);
    }

    #[test]
    fn ssim_identity_symmetry_and_size_check() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let a = Image::new(16, 16, (0..768).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let b = Image::new(16, 16, (0..768).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(matches!(
            ssim(&Image::filled(8, 8, 0.0), &Image::filled(8, 8, 0.0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn frechet_identity_symmetry_and_errors() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| r.random::<f64>()).collect()).collect();
        let b: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| r.random::<f64>() * 2.0).collect()).collect();
        assert!(frechet_distance(&a, &a).unwrap() <= 1e-6);
        let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-9 && ab > 0.0);
        assert!(matches!(frechet_distance(&a, &[vec![0.0; 3], vec![1.0; 3]]), Err(Error::Shape(_))));
        assert!(frechet_distance(&a[..1], &b).is_err());
    }

    #[test]
    fn key_embedding_varies_between_images() {
        let arch = crate::networks::ArchConfig { image_size: (32, 32), ..Default::default() };
        let k = KeyGeneratorParams::init(&arch, &mut ChaCha8Rng::seed_from_u64(5));
        let backend = KeyFeatureBackend { k: &k, taps: arch.taps().unwrap() };
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let set: Vec<_> = (0..8).map(|_| backend.embed(&crate::synth::warm_blobs((32, 32), &mut r)).unwrap()).collect();
        assert_eq!(set[0].len(), 4 * 4 * arch.key_channels);
        let spread: f64 = set[0].iter().zip(&set[1]).map(|(a, b)| (a - b).abs()).sum();
        assert!(spread > 1e-3, "{spread}");
        let shifted: Vec<Vec<f64>> = set.iter().map(|v| v.iter().map(|x| x + 0.5).collect()).collect();
        let d = frechet_distance(&set, &shifted).unwrap();
        assert!((d - 0.25 * set[0].len() as f64).abs() < 1e-6 * d, "{d}");
    }

    #[test]
    fn perceptual_distance_basics() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let a = Image::new(16, 16, (0..768).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let b = Image::new(16, 16, (0..768).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        assert_eq!(perceptual_distance(&PixelBackend, &a, &a).unwrap(), 0.0);
        let d1 = perceptual_distance(&PixelBackend, &a, &b).unwrap();
        let d2 = perceptual_distance(&PixelBackend, &b, &a).unwrap();
        assert!((d1 - d2).abs() < 1e-9 && d1 > 0.0);
    }
}
