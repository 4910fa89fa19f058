//! Alternating adversarial optimization and checkpoint persistence.
//!
//! # Checkpoint layout
//!
//! All integers little-endian.
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 8 | magic `b"EGANCKPT"` |
//! | 8 | 4 | format version (`u32`) |
//! | 12 | 8 | header length `H` (`u64`) |
//! | 20 | H | UTF-8 JSON header: config, step, tensor directory |
//! | 20+H | 4·N | `f32` payload, tensors in directory order |
//! | end−32 | 32 | SHA-256 of every preceding byte |
//!
//! The directory lists, for each network in the order F, G, Dx, Dy, K, its
//! parameters followed by the Adam first and second moments, each with name
//! and shape.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Graph, Var};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::imagedata::{
    add_gaussian_noise_rng, paste_message_with_id, sample_placement, CompositeImage, DomainDataset, DomainLabel,
    Image,
};
use crate::losses::{self, LossComponents, LossReport};
use crate::networks::{KeyGeneratorParams, Networks, ParamSet};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EGANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const ADAM_EPS: f32 = 1e-8;

/// Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = ParamSet::from_entries(
            params
                .entries()
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        );
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Tensor], lr: f32, betas: (f32, f32)) {
        self.t += 1;
        let (b1, b2) = betas;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = lr * c2.sqrt() / c1;
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i).data_mut();
            let m = self.m.get_mut(i).data_mut();
            let v = self.v.get_mut(i).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                p[j] -= step * m[j] / (v[j].sqrt() + ADAM_EPS * c2.sqrt());
            }
        }
    }
}

/// Network parameters, optimizer state and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub nets: Networks,
    /// Optimizers in network order F, G, Dx, Dy, K.
    pub optim: Vec<AdamState>,
    pub step: u64,
}

impl ModelState {
    pub fn new(nets: Networks) -> Self {
        let optim = nets.sets().iter().map(|(_, p)| AdamState::new(p)).collect();
        Self { nets, optim, step: 0 }
    }

    pub fn init(config: &Config) -> Result<Self> {
        config.validate()?;
        Ok(Self::new(Networks::init(&config.model, config.train.seed)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub state: ModelState,
}

/// Training images for the two domains plus the message pool.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub x: DomainDataset,
    pub y: DomainDataset,
    pub messages: DomainDataset,
}

impl TrainingData {
    pub fn open_train(config: &Config) -> Result<Self> {
        let d = &config.data;
        Self::open(config, &d.x_train, &d.y_train, &d.messages_train)
    }

    pub fn open_test(config: &Config) -> Result<Self> {
        let d = &config.data;
        Self::open(config, &d.x_test, &d.y_test, &d.messages_test)
    }

    fn open(config: &Config, x: &Path, y: &Path, m: &Path) -> Result<Self> {
        let size = config.model.image_size;
        let data = Self {
            x: DomainDataset::open(x, DomainLabel::X, size)?,
            y: DomainDataset::open(y, DomainLabel::Y, size)?,
            messages: DomainDataset::open(m, DomainLabel::Message, config.data.message_size)?,
        };
        data.check()?;
        Ok(data)
    }

    pub fn check(&self) -> Result<()> {
        for (name, d) in [("x", &self.x), ("y", &self.y), ("messages", &self.messages)] {
            if d.is_empty() {
                return Err(Error::Config(format!("{name} dataset is empty")));
            }
        }
        Ok(())
    }
}

/// One training example: both composites and the decoy cover for the
/// incorrect-key branch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub cover: Image,
    pub composite_x: CompositeImage,
    pub disguise: Image,
    pub composite_y: CompositeImage,
    pub wrong_cover: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub samples: Vec<TrainSample>,
}

/// Per-step random source, a pure function of `(seed, step)` so that a
/// resumed run replays the same stream as an uninterrupted one.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(step);
    r
}

pub fn sample_key_correctness(rng: &mut impl Rng, p_correct: f64) -> bool {
    rng.random_bool(p_correct.clamp(0.0, 1.0))
}

/// Draws a batch. The decoy cover is uniform over every other cover.
pub fn sample_batch(data: &TrainingData, batch_size: usize, rng: &mut impl Rng) -> Result<TrainBatch> {
    data.check()?;
    if data.x.len() < 2 {
        return Err(Error::Config(
            "the x dataset needs at least two images to draw incorrect keys".into(),
        ));
    }
    let mut samples = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let i = rng.random_range(0..data.x.len());
        let mut k = rng.random_range(0..data.x.len() - 1);
        if k >= i {
            k += 1;
        }
        let j = rng.random_range(0..data.y.len());
        let mx = rng.random_range(0..data.messages.len());
        let my = rng.random_range(0..data.messages.len());
        let cover = data.x.get(i).clone();
        let disguise = data.y.get(j).clone();
        let (msg_x, msg_y) = (data.messages.get(mx), data.messages.get(my));
        let px = sample_placement(cover.size(), msg_x.size(), rng)?;
        let py = sample_placement(disguise.size(), msg_y.size(), rng)?;
        samples.push(TrainSample {
            composite_x: paste_message_with_id(&cover, msg_x, px, &data.messages.id(mx))?,
            composite_y: paste_message_with_id(&disguise, msg_y, py, &data.messages.id(my))?,
            cover,
            disguise,
            wrong_cover: data.x.get(k).clone(),
        });
    }
    Ok(TrainBatch { samples })
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical { term: term.into() })
    }
}

fn grads_for(g: &Graph, vars: &[Var], grads: &mut crate::autograd::Gradients, term: &str) -> Result<Vec<Tensor>> {
    vars.iter()
        .map(|&v| {
            let t = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(g.value(v).shape()));
            if t.is_finite() {
                Ok(t)
            } else {
                Err(Error::Numerical { term: term.into() })
            }
        })
        .collect()
}

/// Key images and key-generator activations for a batch, with no gradient.
pub(crate) fn keygen_eval(k: &KeyGeneratorParams, images: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = k.params.bind(&mut g, false);
    let x = g.constant(images.clone());
    let out = k.forward_graph(&mut g, &vars, x)?;
    let layers = out.layers.iter().map(|&v| g.value(v).clone()).collect();
    Ok((g.value(out.key).clone(), layers))
}

fn noisy_stack<'i>(imgs: impl Iterator<Item = &'i Image>, sigma: f32, rng: &mut impl Rng) -> Result<Tensor> {
    let v = imgs
        .map(|i| add_gaussian_noise_rng(i, sigma, rng))
        .collect::<Result<Vec<_>>>()?;
    Image::stack(&v.iter().collect::<Vec<_>>())
}

fn noise_like(t: &Tensor, sigma: f32, rng: &mut impl Rng) -> Tensor {
    if sigma == 0.0 {
        return Tensor::zeros(t.shape());
    }
    let n = Normal::new(0.0f32, sigma).expect("sigma checked");
    Tensor::new(t.shape().to_vec(), (0..t.numel()).map(|_| n.sample(rng)).collect()).expect("shape")
}

/// The three parameter updates inside one training step, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubStep {
    Discriminators,
    Generators,
    KeyGenerator,
}

/// One alternating update: discriminators, then generators against the
/// updated discriminators, then the key generator's classification step.
pub fn train_step(state: &mut ModelState, batch: &TrainBatch, config: &Config, rng: &mut impl Rng) -> Result<LossReport> {
    train_step_observed(state, batch, config, rng, &mut |_, _| {})
}

/// [`train_step`] that shows the state to `observe` after each sub-step.
pub fn train_step_observed(
    state: &mut ModelState,
    batch: &TrainBatch,
    config: &Config,
    rng: &mut impl Rng,
    observe: &mut dyn FnMut(SubStep, &ModelState),
) -> Result<LossReport> {
    let tc = &config.train;
    let w = &config.loss;
    let taps = config.model.taps()?;
    let key_correct = sample_key_correctness(rng, tc.key_correct_probability);
    let sigma = tc.input_noise_sigma;

    let s = &batch.samples;
    let covers = Image::stack(&s.iter().map(|b| &b.cover).collect::<Vec<_>>())?;
    let disguises = Image::stack(&s.iter().map(|b| &b.disguise).collect::<Vec<_>>())?;
    let decoys = Image::stack(&s.iter().map(|b| &b.wrong_cover).collect::<Vec<_>>())?;
    let comp_x = Image::stack(&s.iter().map(|b| &b.composite_x.image).collect::<Vec<_>>())?;
    let comp_y = Image::stack(&s.iter().map(|b| &b.composite_y.image).collect::<Vec<_>>())?;
    let in_x = noisy_stack(s.iter().map(|b| &b.composite_x.image), sigma, rng)?;
    let in_y = noisy_stack(s.iter().map(|b| &b.composite_y.image), sigma, rng)?;
    // All samples in a batch share the placement of the first sample; with
    // the default batch size of one this is exact.
    let px = s[0].composite_x.placement;
    let py = s[0].composite_y.placement;

    let nets = &state.nets;
    let (private, _) = keygen_eval(&nets.k, &covers)?;
    let (public, _) = keygen_eval(&nets.k, &disguises)?;
    let (decoy_key, _) = keygen_eval(&nets.k, &decoys)?;
    let (_, acts_x) = keygen_eval(&nets.k, &comp_x)?;
    let (_, acts_y) = keygen_eval(&nets.k, &comp_y)?;

    // Generator forward passes.
    let mut g = Graph::new();
    let fv = nets.f.params.bind(&mut g, true);
    let gv = nets.g.params.bind(&mut g, true);
    let x_in = g.constant(in_x);
    let y_in = g.constant(in_y);
    let x_target = g.constant(comp_x);
    let y_target = g.constant(comp_y);
    let pub_k = g.constant(public);
    let priv_k = g.constant(private);

    let y_fake = nets.f.forward_graph(&mut g, &fv, x_in, pub_k)?;
    let n = g.constant(noise_like(g.value(y_fake), sigma, rng));
    let y_fake_in = g.add(y_fake, n)?;
    let x_rec = nets.g.forward_graph(&mut g, &gv, y_fake_in, priv_k)?;
    let x_fake = nets.g.forward_graph(&mut g, &gv, y_in, priv_k)?;
    let n = g.constant(noise_like(g.value(x_fake), sigma, rng));
    let x_fake_in = g.add(x_fake, n)?;
    let y_rec = nets.f.forward_graph(&mut g, &fv, x_fake_in, pub_k)?;
    let x_wrong = if key_correct {
        None
    } else {
        let dk = g.constant(decoy_key);
        Some(nets.g.forward_graph(&mut g, &gv, y_fake_in, dk)?)
    };

    // Discriminator step on detached fakes.
    let (disc_x, disc_y) = {
        let mut dg = Graph::new();
        let dxv = nets.dx.params.bind(&mut dg, true);
        let dyv = nets.dy.params.bind(&mut dg, true);
        let real_x = dg.constant(covers.clone());
        let real_y = dg.constant(disguises.clone());
        let fake_y = dg.constant(g.value(y_fake).clone());
        let fake_x = dg.constant(g.value(x_fake).clone());
        let sr = nets.dy.forward_graph(&mut dg, &dyv, real_y)?;
        let sf = nets.dy.forward_graph(&mut dg, &dyv, fake_y)?;
        let ly = losses::graph::lsgan_discriminator(&mut dg, sr, sf)?;
        let sr = nets.dx.forward_graph(&mut dg, &dxv, real_x)?;
        let sf = nets.dx.forward_graph(&mut dg, &dxv, fake_x)?;
        let mut lx = losses::graph::lsgan_discriminator(&mut dg, sr, sf)?;
        if let Some(xw) = x_wrong {
            let fw = dg.constant(g.value(xw).clone());
            let sw = nets.dx.forward_graph(&mut dg, &dxv, fw)?;
            let lw = losses::graph::lsgan_discriminator(&mut dg, sr, sw)?;
            lx = dg.weighted_sum(&[(lx, 0.5), (lw, 0.5)])?;
        }
        let total = dg.weighted_sum(&[(lx, 1.0), (ly, 1.0)])?;
        let vx = finite("discriminator_x", dg.value(lx).item() as f64)?;
        let vy = finite("discriminator_y", dg.value(ly).item() as f64)?;
        let mut grads = dg.backward(total);
        let gx = grads_for(&dg, &dxv, &mut grads, "discriminator_x")?;
        let gy = grads_for(&dg, &dyv, &mut grads, "discriminator_y")?;
        state.optim[2].update(&mut state.nets.dx.params, &gx, tc.learning_rate, tc.adam_betas);
        state.optim[3].update(&mut state.nets.dy.params, &gy, tc.learning_rate, tc.adam_betas);
        (vx, vy)
    };
    observe(SubStep::Discriminators, state);
    let nets = &state.nets;

    // Generator objective against the updated discriminators.
    let dxv = nets.dx.params.bind(&mut g, false);
    let dyv = nets.dy.params.bind(&mut g, false);
    let kv = nets.k.params.bind(&mut g, false);
    let s_y = nets.dy.forward_graph(&mut g, &dyv, y_fake)?;
    let s_x = nets.dx.forward_graph(&mut g, &dxv, x_fake)?;
    let mut adv_terms = vec![
        (losses::graph::lsgan_generator(&mut g, s_y), 1.0),
        (losses::graph::lsgan_generator(&mut g, s_x), 1.0),
    ];
    if let Some(xw) = x_wrong {
        let s_w = nets.dx.forward_graph(&mut g, &dxv, xw)?;
        adv_terms.push((losses::graph::lsgan_generator(&mut g, s_w), 1.0));
    }
    let adv = g.weighted_sum(&adv_terms)?;
    let cyc = losses::graph::cycle(&mut g, x_target, x_rec, y_target, y_rec)?;
    let ix = losses::graph::information_side(&mut g, x_rec, x_target, px)?;
    let iy = losses::graph::information_side(&mut g, y_rec, y_target, py)?;
    let info = g.weighted_sum(&[(ix, 1.0), (iy, 1.0)])?;
    let rec_x_k = nets.k.forward_graph(&mut g, &kv, x_rec)?;
    let rec_y_k = nets.k.forward_graph(&mut g, &kv, y_rec)?;
    let orig_x: Vec<Var> = acts_x.into_iter().map(|t| g.constant(t)).collect();
    let orig_y: Vec<Var> = acts_y.into_iter().map(|t| g.constant(t)).collect();
    let key = losses::graph::key_matching(&mut g, &taps, &orig_x, &rec_x_k.layers, &orig_y, &rec_y_k.layers)?;

    let mut terms = vec![(adv, w.w_adv), (key, w.w_key), (info, w.w_info)];
    if key_correct {
        terms.push((cyc, w.w_cyc));
    }
    let total = g.weighted_sum(&terms)?;
    let components = LossComponents {
        cyc: finite("cycle", g.value(cyc).item() as f64)?,
        adv: finite("adversarial", g.value(adv).item() as f64)?,
        key: finite("key_matching", g.value(key).item() as f64)?,
        info: finite("information", g.value(info).item() as f64)?,
    };
    finite("total", g.value(total).item() as f64)?;
    let mut grads = g.backward(total);
    let gf = grads_for(&g, &fv, &mut grads, "total")?;
    let gg = grads_for(&g, &gv, &mut grads, "total")?;
    drop(g);
    state.optim[0].update(&mut state.nets.f.params, &gf, tc.learning_rate, tc.adam_betas);
    state.optim[1].update(&mut state.nets.g.params, &gg, tc.learning_rate, tc.adam_betas);
    observe(SubStep::Generators, state);
    let nets = &state.nets;

    // Key generator: domain classification on clean images.
    let keygen = if tc.train_keygen {
        let mut kg = Graph::new();
        let kv = nets.k.params.bind(&mut kg, true);
        let both = Tensor::cat_batch(&[&covers, &disguises])?;
        let xin = kg.constant(both);
        let out = nets.k.forward_graph(&mut kg, &kv, xin)?;
        let mut labels = vec![DomainLabel::X; s.len()];
        labels.extend(vec![DomainLabel::Y; s.len()]);
        let ce = losses::graph::keygen_classification(&mut kg, out.logits, &labels)?;
        let v = finite("keygen", kg.value(ce).item() as f64)?;
        let mut grads = kg.backward(ce);
        let gk = grads_for(&kg, &kv, &mut grads, "keygen")?;
        state.optim[4].update(&mut state.nets.k.params, &gk, tc.learning_rate, tc.adam_betas);
        v
    } else {
        0.0
    };
    observe(SubStep::KeyGenerator, state);

    state.step += 1;
    let report = LossReport {
        step: state.step,
        key_correct,
        cycle: key_correct.then_some(components.cyc),
        adversarial: components.adv,
        key_matching: components.key,
        information: components.info,
        total: losses::total_generator_objective(&components, w, key_correct),
        discriminator_x: disc_x,
        discriminator_y: disc_y,
        keygen,
    };
    Ok(report)
}

/// Drives [`train_step`] over in-memory data.
pub struct Trainer<'a> {
    pub config: &'a Config,
    pub data: &'a TrainingData,
    pub state: ModelState,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a Config, data: &'a TrainingData, state: ModelState) -> Result<Self> {
        config.validate()?;
        data.check()?;
        Ok(Self { config, data, state })
    }

    pub fn step(&mut self) -> Result<LossReport> {
        let mut rng = step_rng(self.config.train.seed, self.state.step);
        let batch = sample_batch(self.data, self.config.train.batch_size, &mut rng)?;
        train_step(&mut self.state, &batch, self.config, &mut rng)
    }

    /// Runs until `state.step == total`, handing every report to `sink`.
    pub fn run_until(&mut self, total: u64, mut sink: impl FnMut(&ModelState, &LossReport) -> Result<()>) -> Result<()> {
        while self.state.step < total {
            let report = self.step()?;
            sink(&self.state, &report)?;
        }
        Ok(())
    }
}

/// File names written by [`train`] inside its output directory.
pub const LOSS_LOG: &str = "loss_log.jsonl";
pub const FINAL_CHECKPOINT: &str = "checkpoint.egan";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.egan";

pub fn periodic_checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("step_{step:07}.egan"))
}

/// Trains from scratch, or from `resume` when given, writing the loss log
/// and checkpoints under `out_dir`.
pub fn train(config: &Config, out_dir: &Path, resume: Option<Checkpoint>) -> Result<Checkpoint> {
    config.validate()?;
    let data = TrainingData::open_train(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let state = match resume {
        Some(c) => c.state,
        None => ModelState::init(config)?,
    };
    let log_path = out_dir.join(LOSS_LOG);
    truncate_log(&log_path, state.step)?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let mut trainer = Trainer::new(config, &data, state)?;
    let total = config.train.total_steps;
    let interval = config.train.checkpoint_interval;
    let mut last_good = trainer.state.clone();
    let result = trainer.run_until(total, |state, report| {
        let line = serde_json::to_string(report).expect("report serializes");
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        if report.step % 100 == 0 {
            log::info!("step {} total {:.4}", report.step, report.total);
        }
        if interval > 0 && state.step % interval == 0 {
            save_checkpoint(
                &Checkpoint {
                    config: config.clone(),
                    state: state.clone(),
                },
                &periodic_checkpoint_path(out_dir, state.step),
            )?;
        }
        last_good = state.clone();
        Ok(())
    });
    if let Err(e) = result {
        save_checkpoint(
            &Checkpoint {
                config: config.clone(),
                state: last_good,
            },
            &out_dir.join(LAST_GOOD_CHECKPOINT),
        )?;
        return Err(e);
    }
    let ckpt = Checkpoint {
        config: config.clone(),
        state: trainer.state,
    };
    save_checkpoint(&ckpt, &out_dir.join(FINAL_CHECKPOINT))?;
    Ok(ckpt)
}

// Drops log rows past `step` so a resumed run appends cleanly.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    if step == 0 {
        return std::fs::write(path, "").map_err(|e| Error::io(path, e));
    }
    // raw lines are kept; a parse/serialize round trip can perturb the last digit
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let r: LossReport =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if r.step <= step {
            out.push_str(line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossReport>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| {
            let l = l.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&l).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct NetworkEntry {
    name: String,
    adam_t: u64,
    params: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: Config,
    step: u64,
    networks: Vec<NetworkEntry>,
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let sets = ckpt.state.nets.sets();
    let header = Header {
        config: ckpt.config.clone(),
        step: ckpt.state.step,
        networks: sets
            .iter()
            .zip(&ckpt.state.optim)
            .map(|((name, p), opt)| NetworkEntry {
                name: name.to_string(),
                adam_t: opt.t,
                params: p
                    .entries()
                    .iter()
                    .map(|(n, t)| TensorEntry {
                        name: n.clone(),
                        shape: t.shape().to_vec(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for ((_, p), opt) in sets.iter().zip(&ckpt.state.optim) {
        for set in [*p, &opt.m, &opt.v] {
            for t in set.tensors() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, checkpoint_bytes(ckpt)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fmt("not a checkpoint (bad magic or truncated)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 20 + 32 {
        return Err(fmt("truncated checkpoint"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(fmt("checksum mismatch (corrupt or truncated)"));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let hend = 20usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| fmt("bad header length"))?;
    let header: Header = serde_json::from_slice(&body[20..hend]).map_err(|e| fmt(&format!("header: {e}")))?;
    let mut payload = body[hend..].chunks_exact(4);
    if payload.remainder().len() != 0 {
        return Err(fmt("payload is not a whole number of f32 values"));
    }

    let mut nets = Networks::init(&header.config.model, 0)?;
    let mut optim = Vec::new();
    {
        let mut sets = nets.sets_mut();
        if header.networks.len() != sets.len() {
            return Err(fmt("wrong number of networks"));
        }
        for ((name, set), entry) in sets.iter_mut().zip(&header.networks) {
            if *name != entry.name {
                return Err(fmt(&format!("expected network {name}, found {}", entry.name)));
            }
            let mut read = |entries: &[TensorEntry]| -> Result<ParamSet> {
                let mut out = Vec::with_capacity(entries.len());
                for e in entries {
                    let n: usize = e.shape.iter().product();
                    let mut data = Vec::with_capacity(n);
                    for _ in 0..n {
                        let c = payload.next().ok_or_else(|| fmt("payload truncated"))?;
                        data.push(f32::from_le_bytes(c.try_into().expect("4 bytes")));
                    }
                    out.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
                }
                Ok(ParamSet::from_entries(out))
            };
            let p = read(&entry.params)?;
            let m = read(&entry.params)?;
            let v = read(&entry.params)?;
            set.load_from(&p)?;
            optim.push(AdamState { m, v, t: entry.adam_t });
        }
    }
    if payload.next().is_some() {
        return Err(fmt("trailing payload data"));
    }
    Ok(Checkpoint {
        config: header.config,
        state: ModelState {
            nets,
            optim,
            step: header.step,
        },
    })
}

/// Hex SHA-256 of a checkpoint file, used for provenance in reports.
/// Same digest as [`checkpoint_hash`] without touching the filesystem.
pub fn checkpoint_digest(ckpt: &Checkpoint) -> String {
    hex::encode(Sha256::digest(checkpoint_bytes(ckpt)))
}

pub fn checkpoint_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_correctness_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let hits = (0..n).filter(|_| sample_key_correctness(&mut rng, 0.5)).count();
        let frac = hits as f64 / n as f64;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
        assert!((0..1000).all(|_| sample_key_correctness(&mut rng, 1.0)));
        let a: Vec<bool> = {
            let mut r = step_rng(3, 9);
            (0..50).map(|_| sample_key_correctness(&mut r, 0.5)).collect()
        };
        let b: Vec<bool> = {
            let mut r = step_rng(3, 9);
            (0..50).map(|_| sample_key_correctness(&mut r, 0.5)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = ParamSet::from_entries(vec![("w".into(), Tensor::new(vec![2], vec![1.0, -1.0]).unwrap())]);
        let mut opt = AdamState::new(&p);
        opt.update(&mut p, &[Tensor::new(vec![2], vec![3.0, -0.5]).unwrap()], 0.1, (0.9, 0.999));
        // The bias-corrected first step is lr · sign(g).
        let d = p.get(0).data();
        assert!((d[0] - 0.9).abs() < 1e-5 && (d[1] + 0.9).abs() < 1e-5, "{d:?}");
    }

    #[test]
    fn checkpoint_bytes_round_trip_and_corruption() {
        let config = Config::default();
        let state = ModelState::init(&config).unwrap();
        let ckpt = Checkpoint { config, state };
        let bytes = checkpoint_bytes(&ckpt);
        assert_eq!(checkpoint_from_bytes(&bytes).unwrap(), ckpt);
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Format(_))
        ));
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 100;
        flipped[mid] ^= 1;
        assert!(matches!(checkpoint_from_bytes(&flipped), Err(Error::Format(_))));
        let mut other = bytes;
        other[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            checkpoint_from_bytes(&other),
            Err(Error::Version { found: 7, expected: 1 })
        ));
    }
}
