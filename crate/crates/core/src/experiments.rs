//! Scripted studies over trained checkpoints.
//!
//! Every run writes into one output directory:
//!
//! ```text
//! <out>/spec.snapshot      experiment spec, config and checkpoint hash (TOML)
//! <out>/tables/*.csv
//! <out>/curves/*.csv
//! <out>/figures/*.png
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::imagedata::{add_gaussian_noise, crop_region, save_image, Image, Placement, CHANNELS};
use crate::metrics::{
    self, evaluate, psnr, run_trial, run_trial_at, sample_trials, write_file, KeyFeatureBackend, MetricsReport,
    Region, StegoModel, Trial,
};
use crate::networks::{generator_activations, FeatureTaps, Networks};
use crate::training::{load_checkpoint, save_checkpoint, train, Checkpoint, ModelState, Trainer, TrainingData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Evaluation,
    Ablation,
    KeySensitivity,
    Robustness,
    PositionSweep,
    Activations,
    WrongKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "values")]
pub enum ParameterGrid {
    None,
    LayerSets(Vec<FeatureTaps>),
    Sigmas(Vec<f32>),
    Placements(Vec<Placement>),
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub grid: ParameterGrid,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = match &self.grid {
            ParameterGrid::None => false,
            ParameterGrid::LayerSets(v) => v.is_empty(),
            ParameterGrid::Sigmas(v) => {
                if v.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::Argument(format!("sigma grid {v:?} has negative entries")));
                }
                v.is_empty()
            }
            ParameterGrid::Placements(v) => v.is_empty(),
            ParameterGrid::Count(n) => *n == 0,
        };
        if empty {
            return Err(Error::Argument(format!("{:?} grid is empty", self.kind)));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Snapshot<'a> {
    spec: &'a ExperimentSpec,
    checkpoint_hash: &'a str,
    config: &'a Config,
}

/// Output directory with the standard layout.
pub struct ExperimentOutput {
    pub root: PathBuf,
}

impl ExperimentOutput {
    pub fn create(spec: &ExperimentSpec, config: &Config, checkpoint_hash: &str) -> Result<Self> {
        spec.validate()?;
        let root = spec.out_dir.clone();
        for sub in ["tables", "curves", "figures"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let snap = Snapshot {
            spec,
            checkpoint_hash,
            config,
        };
        let text = toml::to_string_pretty(&snap).map_err(|e| Error::Format(e.to_string()))?;
        write_file(&root.join("spec.snapshot"), text.as_bytes())?;
        Ok(Self { root })
    }

    pub fn table(&self, name: &str) -> PathBuf {
        self.root.join("tables").join(format!("{name}.csv"))
    }

    pub fn curve(&self, name: &str) -> PathBuf {
        self.root.join("curves").join(format!("{name}.csv"))
    }

    pub fn figure(&self, name: &str) -> PathBuf {
        self.root.join("figures").join(format!("{name}.png"))
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, &bytes)
}

/// Spearman rank correlation with a two-sided p-value from the
/// t-approximation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Argument("Spearman needs at least 3 paired values".into()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, 1.0));
    }
    let rho = sxy / (sxx * syy).sqrt();
    if rho.abs() >= 1.0 {
        return Ok((rho.signum(), 0.0));
    }
    let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 2.0).map_err(|e| Error::Argument(e.to_string()))?;
    Ok((rho, 2.0 * (1.0 - dist.cdf(t.abs()))))
}

// Average ranks, ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            out[*k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub layers: String,
    pub default_row: bool,
    pub status: String,
    pub message_mse: f64,
    pub message_rmse: f64,
    pub message_psnr: f64,
    pub message_ssim: f64,
    pub message_lpips: f64,
    pub encryption_mse: f64,
    pub security_mse: f64,
    pub checkpoint_hash: String,
}

/// The Table 2 grid; the last row is the default tap set.
pub fn default_ablation_grid() -> Vec<FeatureTaps> {
    [vec![1, 2, 3], vec![3, 4, 5], vec![4, 5, 6], vec![6], vec![5, 6], vec![3, 5, 6]]
        .into_iter()
        .map(|l| FeatureTaps::new(l).expect("valid taps"))
        .collect()
}

/// Trains and evaluates one model per tap set with shared seed and budget.
/// `trained` may supply already-trained checkpoints; one is reused when its
/// config equals the row's config exactly. Trained rows are saved under
/// `out_dir/checkpoints/` and picked up again by a later run.
pub fn run_ablation(
    layer_sets: &[FeatureTaps],
    base: &Config,
    train_data: &TrainingData,
    test: &TrainingData,
    out_dir: &Path,
    trained: &[&Checkpoint],
) -> Result<Vec<(AblationRow, Option<MetricsReport>)>> {
    let spec = ExperimentSpec {
        kind: ExperimentKind::Ablation,
        grid: ParameterGrid::LayerSets(layer_sets.to_vec()),
        checkpoint: None,
        out_dir: out_dir.to_path_buf(),
        seed: base.train.seed,
    };
    let out = ExperimentOutput::create(&spec, base, "")?;
    let mut rows = Vec::new();
    for taps in layer_sets {
        let mut cfg = base.clone();
        cfg.model.key_tap_layers = taps.layers().to_vec();
        let label = taps.label();
        let result = (|| -> Result<(MetricsReport, String)> {
            let saved = out.root.join("checkpoints").join(format!("{label}.egan"));
            let ckpt = match trained.iter().find(|c| c.config == cfg) {
                Some(c) => (*c).clone(),
                None => match load_checkpoint(&saved) {
                    Ok(c) if c.config == cfg && c.state.step == cfg.train.total_steps => c,
                    _ => {
                        let mut t = Trainer::new(&cfg, train_data, ModelState::init(&cfg)?)?;
                        t.run_until(cfg.train.total_steps, |_, _| Ok(()))?;
                        let c = Checkpoint {
                            config: cfg.clone(),
                            state: t.state,
                        };
                        save_checkpoint(&c, &saved)?;
                        c
                    }
                },
            };
            let hash = crate::training::checkpoint_digest(&ckpt);
            let backend = KeyFeatureBackend {
                k: &ckpt.state.nets.k,
                taps: cfg.model.taps()?,
            };
            let mut report = evaluate(&ckpt.state.nets, &backend, &backend, test, &cfg)?;
            report.checkpoint_hash = Some(hash.clone());
            Ok((report, hash))
        })();
        let default_row = taps == &FeatureTaps::default();
        match result {
            Ok((report, hash)) => {
                let a = |m| report.aggregate(Region::MessageRegion, m).unwrap_or(f64::NAN);
                rows.push((
                    AblationRow {
                        layers: label,
                        default_row,
                        status: "ok".into(),
                        message_mse: a("mse"),
                        message_rmse: a("rmse"),
                        message_psnr: a("psnr"),
                        message_ssim: a("ssim"),
                        message_lpips: a("lpips"),
                        encryption_mse: report.encryption.mse,
                        security_mse: report.security.mse,
                        checkpoint_hash: hash,
                    },
                    Some(report),
                ));
            }
            Err(e) => {
                log::warn!("ablation row {label} failed: {e}");
                rows.push((
                    AblationRow {
                        layers: label,
                        default_row,
                        status: format!("failed: {e}"),
                        message_mse: f64::NAN,
                        message_rmse: f64::NAN,
                        message_psnr: f64::NAN,
                        message_ssim: f64::NAN,
                        message_lpips: f64::NAN,
                        encryption_mse: f64::NAN,
                        security_mse: f64::NAN,
                        checkpoint_hash: String::new(),
                    },
                    None,
                ));
            }
        }
    }
    let table: Vec<&AblationRow> = rows.iter().map(|(r, _)| r).collect();
    write_csv(&out.table("ablation"), &table)?;
    Ok(rows)
}

/// Where private-key noise is injected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Perturb the cover, then regenerate the key.
    NoiseOnSourceImage,
    /// Perturb the key image directly.
    NoiseOnKey,
    /// Perturb the ciphertext before decryption.
    NoiseOnCiphertext,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::NoiseOnSourceImage => "noise_on_source_image",
            NoiseMode::NoiseOnKey => "noise_on_key",
            NoiseMode::NoiseOnCiphertext => "noise_on_ciphertext",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sigma: f32,
    pub repeat: usize,
    pub trial: usize,
    pub message_psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurve {
    pub mode: NoiseMode,
    pub points: Vec<CurvePoint>,
    /// Mean PSNR per sigma, in grid order.
    pub mean_psnr: Vec<(f32, f64)>,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    /// Full-scale reference threshold, reported for context only.
    pub reference_sigma: Option<f32>,
}

impl NoiseCurve {
    pub fn baseline(&self) -> Option<f64> {
        self.mean_psnr.iter().find(|(s, _)| *s == 0.0).map(|p| p.1)
    }
}

fn noise_seed(seed: u64, repeat: usize, sigma_idx: usize) -> u64 {
    seed ^ ((repeat as u64) << 32) ^ (sigma_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Message PSNR after perturbing the private key (or the ciphertext) at
/// each sigma, over `repeats` sampled trials.
pub fn run_noise_sweep(
    nets: &Networks,
    test: &TrainingData,
    sigmas: &[f32],
    mode: NoiseMode,
    repeats: usize,
    seed: u64,
    out: Option<&ExperimentOutput>,
) -> Result<NoiseCurve> {
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Argument(format!("invalid sigma grid {sigmas:?}")));
    }
    let trials = sample_trials(test, repeats, 0, seed)?;
    let mut points = Vec::new();
    for (r, t) in trials.iter().enumerate() {
        let run = run_trial(nets, test, t)?;
        for (si, &sigma) in sigmas.iter().enumerate() {
            let ns = noise_seed(seed, r, si);
            let decoded = match mode {
                NoiseMode::NoiseOnSourceImage => {
                    let key = nets.key(&add_gaussian_noise(&run.cover, sigma, ns)?)?;
                    if r == 0 {
                        if let Some(o) = out {
                            save_image(&difference_map(&key, &run.private_key), &o.figure(&format!("{}_keydiff_sigma{sigma}", mode.as_str())))?;
                        }
                    }
                    nets.decrypt(&run.encrypted, &key)?
                }
                NoiseMode::NoiseOnKey => {
                    let key = add_gaussian_noise(&run.private_key, sigma, ns)?;
                    if r == 0 {
                        if let Some(o) = out {
                            save_image(&difference_map(&key, &run.private_key), &o.figure(&format!("{}_keydiff_sigma{sigma}", mode.as_str())))?;
                        }
                    }
                    nets.decrypt(&run.encrypted, &key)?
                }
                NoiseMode::NoiseOnCiphertext => {
                    let enc = add_gaussian_noise(&run.encrypted, sigma, ns)?;
                    nets.decrypt(&enc, &run.private_key)?
                }
            };
            let crop = crop_region(&decoded, run.composite.placement)?;
            points.push(CurvePoint {
                sigma,
                repeat: r,
                trial: t.index,
                message_psnr: psnr(&crop, &run.message, metrics::PSNR_CAP)?,
            });
        }
    }
    let mean_psnr = sigmas
        .iter()
        .map(|&s| {
            let v: Vec<f64> = points.iter().filter(|p| p.sigma == s).map(|p| p.message_psnr).collect();
            (s, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.sigma as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.message_psnr).collect();
    let (rho, p) = if sigmas.len() > 1 && xs.len() >= 3 {
        spearman(&xs, &ys)?
    } else {
        (0.0, 1.0)
    };
    let curve = NoiseCurve {
        mode,
        points,
        mean_psnr,
        spearman_rho: rho,
        spearman_p: p,
        reference_sigma: match mode {
            NoiseMode::NoiseOnCiphertext => Some(0.015),
            _ => Some(0.012),
        },
    };
    if let Some(o) = out {
        write_csv(&o.curve(mode.as_str()), &curve.points)?;
        #[derive(Serialize)]
        struct Summary {
            sigma: f32,
            mean_psnr: f64,
            spearman_rho: f64,
            spearman_p: f64,
            reference_sigma: f32,
        }
        let rows: Vec<Summary> = curve
            .mean_psnr
            .iter()
            .map(|&(sigma, mean_psnr)| Summary {
                sigma,
                mean_psnr,
                spearman_rho: rho,
                spearman_p: p,
                reference_sigma: curve.reference_sigma.unwrap_or(f32::NAN),
            })
            .collect();
        write_csv(&o.table(&format!("{}_summary", mode.as_str())), &rows)?;
    }
    Ok(curve)
}

pub fn run_key_sensitivity(
    nets: &Networks,
    test: &TrainingData,
    sigmas: &[f32],
    mode: NoiseMode,
    repeats: usize,
    seed: u64,
    out: Option<&ExperimentOutput>,
) -> Result<NoiseCurve> {
    if mode == NoiseMode::NoiseOnCiphertext {
        return Err(Error::Argument("key sensitivity perturbs the source image or the key".into()));
    }
    run_noise_sweep(nets, test, sigmas, mode, repeats, seed, out)
}

pub fn run_robustness(
    nets: &Networks,
    test: &TrainingData,
    sigmas: &[f32],
    repeats: usize,
    seed: u64,
    out: Option<&ExperimentOutput>,
) -> Result<NoiseCurve> {
    run_noise_sweep(nets, test, sigmas, NoiseMode::NoiseOnCiphertext, repeats, seed, out)
}

/// `|a − b|` averaged over channels, scaled so the largest value is white.
pub fn difference_map(a: &Image, b: &Image) -> Image {
    let (h, w) = a.size();
    let n = h * w;
    let mut d = vec![0.0f32; n];
    for c in 0..CHANNELS {
        for i in 0..n {
            d[i] += (a.data()[c * n + i] - b.data()[c * n + i]).abs() / CHANNELS as f32;
        }
    }
    gray_panel(&d, h, w)
}

fn gray_panel(v: &[f32], h: usize, w: usize) -> Image {
    let (lo, hi) = v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, u), &x| (l.min(x), u.max(x)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plane: Vec<f32> = v.iter().map(|&x| (x - lo) / span * 2.0 - 1.0).collect();
    let mut data = plane.clone();
    data.extend_from_slice(&plane);
    data.extend_from_slice(&plane);
    Image::new(h, w, data).expect("sized panel")
}

/// Grid of equally sized panels with `pad` pixels of mid-grey between them.
pub fn montage(panels: &[Image], cols: usize, pad: usize) -> Result<Image> {
    if panels.is_empty() || cols == 0 {
        return Err(Error::Argument("montage needs panels and columns".into()));
    }
    let (ph, pw) = panels[0].size();
    if panels.iter().any(|p| p.size() != (ph, pw)) {
        return Err(Error::Shape("montage panels differ in size".into()));
    }
    let rows = panels.len().div_ceil(cols);
    let (h, w) = (rows * ph + (rows + 1) * pad, cols * pw + (cols + 1) * pad);
    let mut out = Image::filled(h, w, 0.0);
    for (i, p) in panels.iter().enumerate() {
        let (top, left) = ((i / cols) * (ph + pad) + pad, (i % cols) * (pw + pad) + pad);
        for c in 0..CHANNELS {
            for y in 0..ph {
                let src = &p.data()[(c * ph + y) * pw..(c * ph + y + 1) * pw];
                let dst = (c * h + top + y) * w + left;
                out.data_mut()[dst..dst + pw].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationPanel {
    pub network: String,
    pub layer: String,
    /// Mean |activation| inside the message region over the whole-map mean.
    pub message_energy_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationReport {
    pub panels: Vec<ActivationPanel>,
    pub montage: Image,
    /// Late-over-early message energy of the decoder's residual blocks; a
    /// labelled stand-in for the qualitative late-block observation.
    pub decoder_late_early_ratio: f64,
}

/// Channel-mean absolute activations of every encoder, residual and
/// decoder layer of both generators for one trial.
pub fn visualize_activations(nets: &Networks, test: &TrainingData, trial: &Trial, out: Option<&ExperimentOutput>) -> Result<ActivationReport> {
    let run = run_trial(nets, test, trial)?;
    let (h, w) = run.cover.size();
    let p = run.composite.placement;
    let mut panels = Vec::new();
    let mut images = Vec::new();
    let mut g_res = Vec::new();
    for (name, params, input, key) in [
        ("F", &nets.f, &run.composite.image, &run.public_key),
        ("G", &nets.g, &run.encrypted, &run.private_key),
    ] {
        for (layer, t) in generator_activations(params, input, key)? {
            let (_, c, lh, lw) = t.dims4();
            let mut heat = vec![0.0f32; lh * lw];
            for ch in 0..c {
                for i in 0..lh * lw {
                    heat[i] += t.data()[ch * lh * lw + i].abs() / c as f32;
                }
            }
            // message rectangle mapped onto this resolution
            let (sy, sx) = (lh as f64 / h as f64, lw as f64 / w as f64);
            let (t0, t1) = ((p.top as f64 * sy) as usize, (((p.top + p.height) as f64 * sy).ceil() as usize).min(lh));
            let (l0, l1) = ((p.left as f64 * sx) as usize, (((p.left + p.width) as f64 * sx).ceil() as usize).min(lw));
            let mut inside = 0.0;
            let mut n_in = 0usize;
            for y in t0..t1 {
                for x in l0..l1 {
                    inside += heat[y * lw + x] as f64;
                    n_in += 1;
                }
            }
            let all = heat.iter().map(|&v| v as f64).sum::<f64>() / heat.len() as f64;
            let ratio = if n_in > 0 && all > 0.0 { inside / n_in as f64 / all } else { f64::NAN };
            if name == "G" && layer.starts_with('R') {
                g_res.push(ratio);
            }
            images.push(gray_panel(&heat, lh, lw).resized(h, w));
            panels.push(ActivationPanel {
                network: name.to_string(),
                layer,
                message_energy_ratio: ratio,
            });
        }
    }
    let half = g_res.len() / 2;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let late_early = if half > 0 { mean(&g_res[g_res.len() - half..]) / mean(&g_res[..half]) } else { f64::NAN };
    let per_net = panels.len() / 2;
    let montage = montage(&images, per_net, 2)?;
    if let Some(o) = out {
        save_image(&montage, &o.figure("activations"))?;
        write_csv(&o.table("activations"), &panels)?;
    }
    Ok(ActivationReport {
        panels,
        montage,
        decoder_late_early_ratio: late_early,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub key: String,
    pub correct: bool,
    pub message_psnr: f64,
    pub cover_psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WrongKeyGallery {
    pub entries: Vec<GalleryEntry>,
    pub montage: Image,
}

/// Decrypts one ciphertext with the true key and `n_keys` wrong keys.
pub fn run_wrong_key_gallery(
    nets: &Networks,
    test: &TrainingData,
    n_keys: usize,
    seed: u64,
    out: Option<&ExperimentOutput>,
) -> Result<WrongKeyGallery> {
    if n_keys < 1 {
        return Err(Error::Argument("wrong-key gallery needs n_keys >= 1".into()));
    }
    let trial = sample_trials(test, 1, n_keys, seed)?.remove(0);
    let run = run_trial(nets, test, &trial)?;
    let p = run.composite.placement;
    let mut entries = Vec::new();
    let mut panels = vec![run.composite.image.clone(), run.encrypted.clone(), run.decrypted.clone()];
    let score = |img: &Image| -> Result<(f64, f64)> {
        Ok((
            psnr(&crop_region(img, p)?, &run.message, metrics::PSNR_CAP)?,
            psnr(img, &run.cover, metrics::PSNR_CAP)?,
        ))
    };
    let (mp, cp) = score(&run.decrypted)?;
    entries.push(GalleryEntry {
        key: test.x.id(trial.cover),
        correct: true,
        message_psnr: mp,
        cover_psnr: cp,
    });
    for (k, img) in trial.wrong_covers.iter().zip(&run.wrong_decrypts) {
        let (mp, cp) = score(img)?;
        entries.push(GalleryEntry {
            key: test.x.id(*k),
            correct: false,
            message_psnr: mp,
            cover_psnr: cp,
        });
        panels.push(img.clone());
    }
    let montage = montage(&panels, panels.len().min(8), 2)?;
    if let Some(o) = out {
        save_image(&montage, &o.figure("wrong_key_gallery"))?;
        write_csv(&o.table("wrong_key_gallery"), &entries)?;
    }
    Ok(WrongKeyGallery { entries, montage })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub top: usize,
    pub left: usize,
    pub mean_message_psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionSweep {
    pub rows: Vec<PositionRow>,
    /// Population standard deviation of the per-position means.
    pub psnr_std: f64,
}

/// Evenly spaced `n × n` placements of a message inside an image.
pub fn position_grid(image: (usize, usize), message: (usize, usize), n: usize) -> Result<Vec<Placement>> {
    if n == 0 || message.0 > image.0 || message.1 > image.1 {
        return Err(Error::Argument("invalid position grid".into()));
    }
    let at = |span: usize, i: usize| if n == 1 { span / 2 } else { span * i / (n - 1) };
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            out.push(Placement::new(
                at(image.0 - message.0, i),
                at(image.1 - message.1, j),
                message.0,
                message.1,
            ));
        }
    }
    Ok(out)
}

/// Mean message PSNR at each placement over `repeats` sampled trials.
pub fn run_position_sweep(
    nets: &Networks,
    test: &TrainingData,
    grid: &[Placement],
    repeats: usize,
    seed: u64,
    out: Option<&ExperimentOutput>,
) -> Result<PositionSweep> {
    if grid.is_empty() {
        return Err(Error::Argument("position grid is empty".into()));
    }
    let trials = sample_trials(test, repeats, 0, seed)?;
    let mut rows = Vec::new();
    for &p in grid {
        let mut acc = 0.0;
        for t in &trials {
            let run = run_trial_at(nets, test, t, p)?;
            acc += run.message_psnr(metrics::PSNR_CAP)?;
        }
        rows.push(PositionRow {
            top: p.top,
            left: p.left,
            mean_message_psnr: acc / trials.len() as f64,
        });
    }
    let m = rows.iter().map(|r| r.mean_message_psnr).sum::<f64>() / rows.len() as f64;
    let var = rows.iter().map(|r| (r.mean_message_psnr - m).powi(2)).sum::<f64>() / rows.len() as f64;
    if let Some(o) = out {
        write_csv(&o.table("positions"), &rows)?;
    }
    Ok(PositionSweep { rows, psnr_std: var.sqrt() })
}

/// Full training run followed by evaluation, used by the CLI and examples.
pub fn train_and_evaluate(config: &Config, out_dir: &Path) -> Result<(Checkpoint, MetricsReport)> {
    let ckpt = train(config, out_dir, None)?;
    let test = TrainingData::open_test(config)?;
    let backend = KeyFeatureBackend {
        k: &ckpt.state.nets.k,
        taps: config.model.taps()?,
    };
    let mut report = evaluate(&ckpt.state.nets, &backend, &backend, &test, config)?;
    report.checkpoint_hash = Some(crate::training::checkpoint_digest(&ckpt));
    Ok((ckpt, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_matches_closed_forms() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (r, p) = spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r, -1.0);
        assert_eq!(p, 0.0);
        let (r, _) = spearman(&x, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        // 1 − 6·Σd²/(n(n²−1)) with Σd² = 4
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn grids_and_montage() {
        let g = position_grid((64, 64), (32, 32), 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!((g[0].top, g[0].left), (0, 0));
        assert_eq!((g[4].top, g[4].left), (16, 16));
        assert_eq!((g[8].top, g[8].left), (32, 32));
        let m = montage(&[Image::filled(4, 4, 1.0), Image::filled(4, 4, -1.0)], 2, 1).unwrap();
        assert_eq!(m.size(), (6, 11));
        assert!(montage(&[], 2, 1).is_err());
    }

    #[test]
    fn spec_grids_are_validated() {
        let spec = |grid| ExperimentSpec {
            kind: ExperimentKind::Robustness,
            grid,
            checkpoint: None,
            out_dir: PathBuf::from("x"),
            seed: 0,
        };
        assert!(spec(ParameterGrid::Sigmas(vec![])).validate().is_err());
        assert!(spec(ParameterGrid::Sigmas(vec![-0.1])).validate().is_err());
        assert!(spec(ParameterGrid::Count(0)).validate().is_err());
        assert!(spec(ParameterGrid::Sigmas(vec![0.0, 0.01])).validate().is_ok());
    }
}
