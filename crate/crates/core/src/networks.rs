//! Generators, patch discriminators and the key generator.
//!
//! Every network keeps its weights in a [`ParamSet`], an ordered list of
//! named tensors. A forward pass binds the set into a [`Graph`] and the
//! builder functions consume the bound handles in declaration order, so the
//! order in `init` and `forward` must agree.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::imagedata::{Image, CHANNELS};
use crate::tensor::Tensor;

pub const KEY_LAYERS: usize = 6;
const KEY_KERNEL: usize = 4;
const INIT_STD: f32 = 0.02;
const LEAKY_SLOPE: f32 = 0.2;

/// Order of the two non-linear stages inside each key-generator module.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyModuleOrder {
    /// Convolution → ReLU → InstanceNorm.
    #[default]
    ConvReluNorm,
    /// Convolution → InstanceNorm → ReLU.
    ConvNormRelu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// `(height, width)` of every domain image.
    pub image_size: (usize, usize),
    pub residual_blocks: usize,
    /// Width of the first generator stage; doubles at each downsampling.
    pub base_channels: usize,
    pub disc_channels: usize,
    pub key_channels: usize,
    /// Key-generator layers (1-based) compared by the key-matching loss.
    pub key_tap_layers: Vec<usize>,
    pub key_module_order: KeyModuleOrder,
    /// The key generator stops downsampling once a stride-2 step would take
    /// the feature map below this size; later modules keep stride 1.
    pub key_min_spatial: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            image_size: (64, 64),
            residual_blocks: 6,
            base_channels: 8,
            disc_channels: 16,
            key_channels: 8,
            key_tap_layers: vec![3, 5, 6],
            key_module_order: KeyModuleOrder::ConvReluNorm,
            key_min_spatial: 4,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Config(format!(
                "image size {h}x{w} must be a positive multiple of 4"
            )));
        }
        if h < 16 || w < 16 {
            return Err(Error::Config(format!(
                "image size {h}x{w} is below the 16x16 minimum of the discriminator"
            )));
        }
        if self.residual_blocks == 0 {
            return Err(Error::Config("residual_blocks must be >= 1".into()));
        }
        if self.base_channels == 0 || self.disc_channels == 0 || self.key_channels == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.key_min_spatial == 0 {
            return Err(Error::Config("key_min_spatial must be >= 1".into()));
        }
        FeatureTaps::new(self.key_tap_layers.clone())?;
        Ok(())
    }

    pub fn taps(&self) -> Result<FeatureTaps> {
        FeatureTaps::new(self.key_tap_layers.clone())
    }

    /// Stride of each key-generator module for this image size.
    pub fn key_strides(&self) -> [usize; KEY_LAYERS] {
        let mut size = self.image_size.0.min(self.image_size.1);
        let mut strides = [1; KEY_LAYERS];
        for s in &mut strides {
            if size / 2 >= self.key_min_spatial && size >= 2 {
                *s = 2;
                size /= 2;
            }
        }
        strides
    }

    /// Spatial size of each key-generator activation.
    pub fn key_feature_sizes(&self) -> [(usize, usize); KEY_LAYERS] {
        let (mut h, mut w) = self.image_size;
        let mut out = [(0, 0); KEY_LAYERS];
        for (i, s) in self.key_strides().iter().enumerate() {
            h /= s;
            w /= s;
            out[i] = (h, w);
        }
        out
    }

    fn key_widths(&self) -> [usize; KEY_LAYERS] {
        let k = self.key_channels;
        [k, 2 * k, 4 * k, 4 * k, 4 * k, 4 * k]
    }
}

/// Ordered, non-empty subset of key-generator layers `1..=6`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FeatureTaps(Vec<usize>);

impl FeatureTaps {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("feature taps must not be empty".into()));
        }
        if layers.iter().any(|&l| l == 0 || l > KEY_LAYERS) {
            return Err(Error::Argument(format!(
                "feature taps {layers:?} must lie within 1..={KEY_LAYERS}"
            )));
        }
        if layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!(
                "feature taps {layers:?} must be strictly increasing"
            )));
        }
        Ok(Self(layers))
    }

    pub fn layers(&self) -> &[usize] {
        &self.0
    }

    /// `L3L5L6`-style label.
    pub fn label(&self) -> String {
        self.0.iter().map(|l| format!("L{l}")).collect()
    }
}

impl Default for FeatureTaps {
    fn default() -> Self {
        Self(vec![3, 5, 6])
    }
}

impl TryFrom<Vec<usize>> for FeatureTaps {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FeatureTaps> for Vec<usize> {
    fn from(t: FeatureTaps) -> Self {
        t.0
    }
}

/// Ordered named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    fn normal(&mut self, name: &str, shape: &[usize], std: f32, rng: &mut ChaCha8Rng) {
        let dist = Normal::new(0.0f32, std).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        self.push(name, Tensor::new(shape.to_vec(), data).expect("shape"));
    }

    fn zeros(&mut self, name: &str, shape: &[usize]) {
        self.push(name, Tensor::zeros(shape));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Replace all tensors, checking names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Format(format!(
                "parameter count mismatch: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((n, t), (on, ot)) in self.entries.iter_mut().zip(&other.entries) {
            if n != on || t.shape() != ot.shape() {
                return Err(Error::Format(format!(
                    "parameter {n}{:?} does not match {on}{:?}",
                    t.shape(),
                    ot.shape()
                )));
            }
            *t = ot.clone();
        }
        Ok(())
    }

    pub(crate) fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    /// Insert every tensor as a graph leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), trainable))
            .collect()
    }
}

struct Cursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(vars: &'a [Var]) -> Self {
        Self { vars, pos: 0 }
    }

    fn next(&mut self) -> Var {
        let v = self.vars[self.pos];
        self.pos += 1;
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Domain X → Y (encryption).
    F,
    /// Domain Y → X (decryption).
    G,
}

/// Encoder–residual bottleneck–decoder generator over image ⊕ key.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub direction: Direction,
    pub residual_blocks: usize,
    pub params: ParamSet,
}

/// Names of the activations [`GeneratorParams::forward_traced`] records,
/// in network order.
pub fn generator_layer_names(residual_blocks: usize) -> Vec<String> {
    let mut names = vec!["enc".to_string(), "down1".into(), "down2".into()];
    names.extend((1..=residual_blocks).map(|i| format!("R{i}")));
    names.extend(["up1".to_string(), "up2".into(), "out".into()]);
    names
}

impl GeneratorParams {
    pub fn init(arch: &ArchConfig, direction: Direction, rng: &mut ChaCha8Rng) -> Self {
        let c = arch.base_channels;
        let mut p = ParamSet::default();
        p.normal("enc.w", &[c, 2 * CHANNELS, 7, 7], INIT_STD, rng);
        p.normal("down1.w", &[2 * c, c, 3, 3], INIT_STD, rng);
        p.normal("down2.w", &[4 * c, 2 * c, 3, 3], INIT_STD, rng);
        for i in 1..=arch.residual_blocks {
            p.normal(&format!("R{i}.conv1.w"), &[4 * c, 4 * c, 3, 3], INIT_STD, rng);
            p.normal(&format!("R{i}.conv2.w"), &[4 * c, 4 * c, 3, 3], INIT_STD, rng);
        }
        p.normal("up1.w", &[4 * c, 2 * c, 3, 3], INIT_STD, rng);
        p.normal("up2.w", &[2 * c, c, 3, 3], INIT_STD, rng);
        p.normal("out.w", &[CHANNELS, c, 7, 7], INIT_STD, rng);
        p.zeros("out.b", &[CHANNELS]);
        Self {
            direction,
            residual_blocks: arch.residual_blocks,
            params: p,
        }
    }

    /// Builds the forward pass; `image` and `key` are `[N, 3, H, W]` and
    /// `[N, 3, h, w]`, the key is resized to `H×W` before concatenation.
    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], image: Var, key: Var) -> Result<Var> {
        self.forward_traced(g, vars, image, key, None)
    }

    pub fn forward_traced(
        &self,
        g: &mut Graph,
        vars: &[Var],
        image: Var,
        key: Var,
        mut trace: Option<&mut Vec<(String, Var)>>,
    ) -> Result<Var> {
        let s = g.value(image).shape().to_vec();
        if s.len() != 4 || s[1] != CHANNELS {
            return Err(Error::Shape(format!("generator input {s:?} is not [N,3,H,W]")));
        }
        let ks = g.value(key).shape().to_vec();
        if ks.len() != 4 || ks[1] != CHANNELS || ks[0] != s[0] {
            return Err(Error::Shape(format!("generator key {ks:?} does not match input {s:?}")));
        }
        if s[2] % 4 != 0 || s[3] % 4 != 0 {
            return Err(Error::Shape(format!(
                "generator input {}x{} must be a multiple of 4",
                s[2], s[3]
            )));
        }
        let key = g.resize(key, s[2], s[3])?;
        let mut record = |name: &str, v: Var| {
            if let Some(t) = trace.as_deref_mut() {
                t.push((name.to_string(), v));
            }
        };
        let mut cur = Cursor::new(vars);
        let x = g.concat_channels(image, key)?;

        let x = g.reflect_pad(x, 3)?;
        let x = g.conv2d(x, cur.next(), None, 1, 0, 0)?;
        let x = g.instance_norm(x)?;
        let x = g.relu(x);
        record("enc", x);
        let x = g.conv2d(x, cur.next(), None, 2, 1, 1)?;
        let x = g.instance_norm(x)?;
        let x = g.relu(x);
        record("down1", x);
        let x = g.conv2d(x, cur.next(), None, 2, 1, 1)?;
        let x = g.instance_norm(x)?;
        let mut x = g.relu(x);
        record("down2", x);
        for i in 1..=self.residual_blocks {
            let h = g.reflect_pad(x, 1)?;
            let h = g.conv2d(h, cur.next(), None, 1, 0, 0)?;
            let h = g.instance_norm(h)?;
            let h = g.relu(h);
            let h = g.reflect_pad(h, 1)?;
            let h = g.conv2d(h, cur.next(), None, 1, 0, 0)?;
            let h = g.instance_norm(h)?;
            x = g.add(x, h)?;
            record(&format!("R{i}"), x);
        }
        let x = g.conv_transpose2d(x, cur.next(), None, 2, 1, 1)?;
        let x = g.instance_norm(x)?;
        let x = g.relu(x);
        record("up1", x);
        let x = g.conv_transpose2d(x, cur.next(), None, 2, 1, 1)?;
        let x = g.instance_norm(x)?;
        let x = g.relu(x);
        record("up2", x);
        let x = g.reflect_pad(x, 3)?;
        let (w, b) = (cur.next(), cur.next());
        let x = g.conv2d(x, w, Some(b), 1, 0, 0)?;
        let x = g.tanh(x);
        record("out", x);
        Ok(x)
    }
}

/// Patch classifier: four stride-2 convolutions ending in a 1-channel map.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub domain: crate::imagedata::DomainLabel,
    pub params: ParamSet,
}

impl DiscriminatorParams {
    pub fn init(arch: &ArchConfig, domain: crate::imagedata::DomainLabel, rng: &mut ChaCha8Rng) -> Self {
        let c = arch.disc_channels;
        let mut p = ParamSet::default();
        p.normal("c1.w", &[c, CHANNELS, 4, 4], INIT_STD, rng);
        p.zeros("c1.b", &[c]);
        p.normal("c2.w", &[2 * c, c, 4, 4], INIT_STD, rng);
        p.normal("c3.w", &[4 * c, 2 * c, 4, 4], INIT_STD, rng);
        p.normal("c4.w", &[1, 4 * c, 4, 4], INIT_STD, rng);
        p.zeros("c4.b", &[1]);
        Self { domain, params: p }
    }

    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], image: Var) -> Result<Var> {
        let s = g.value(image).shape();
        if s.len() != 4 || s[1] != CHANNELS {
            return Err(Error::Shape(format!("discriminator input {s:?} is not [N,3,H,W]")));
        }
        let mut cur = Cursor::new(vars);
        let (w, b) = (cur.next(), cur.next());
        let x = g.conv2d(image, w, Some(b), 2, 1, 1)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let x = g.conv2d(x, cur.next(), None, 2, 1, 1)?;
        let x = g.instance_norm(x)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let x = g.conv2d(x, cur.next(), None, 2, 1, 1)?;
        let x = g.instance_norm(x)?;
        let x = g.leaky_relu(x, LEAKY_SLOPE);
        let (w, b) = (cur.next(), cur.next());
        g.conv2d(x, w, Some(b), 2, 1, 1)
    }
}

/// Raw patch scores `[N, 1, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap(pub Tensor);

/// Six convolutional modules with a key head and a domain classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyGeneratorParams {
    pub strides: [usize; KEY_LAYERS],
    pub order: KeyModuleOrder,
    pub image_size: (usize, usize),
    pub params: ParamSet,
}

/// Graph handles produced by [`KeyGeneratorParams::forward_graph`].
pub struct KeyGraph {
    /// Full-resolution key image.
    pub key: Var,
    /// Key at the native resolution of layer 6.
    pub raw_key: Var,
    /// Activations of layers 1..=6 (index 0 holds layer 1).
    pub layers: Vec<Var>,
    pub logits: Var,
}

impl KeyGeneratorParams {
    pub fn init(arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let widths = arch.key_widths();
        let mut p = ParamSet::default();
        let mut cin = CHANNELS;
        for (i, &c) in widths.iter().enumerate() {
            p.normal(&format!("L{}.w", i + 1), &[c, cin, KEY_KERNEL, KEY_KERNEL], INIT_STD, rng);
            p.zeros(&format!("L{}.b", i + 1), &[c]);
            cin = c;
        }
        // The key head is never trained; a unit-gain projection keeps key
        // values spread across the tanh range instead of collapsing near 0.
        p.normal("key.w", &[CHANNELS, cin, 1, 1], 1.0 / (cin as f32).sqrt(), rng);
        p.zeros("key.b", &[CHANNELS]);
        let (h6, w6) = arch.key_feature_sizes()[KEY_LAYERS - 1];
        p.normal("cls.w", &[2, cin * h6 * w6], INIT_STD, rng);
        p.zeros("cls.b", &[2]);
        Self {
            strides: arch.key_strides(),
            order: arch.key_module_order,
            image_size: arch.image_size,
            params: p,
        }
    }

    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], image: Var) -> Result<KeyGraph> {
        let s = g.value(image).shape().to_vec();
        if s.len() != 4 || s[1] != CHANNELS || (s[2], s[3]) != self.image_size {
            return Err(Error::Shape(format!(
                "key generator expects [N,3,{},{}], got {s:?}",
                self.image_size.0, self.image_size.1
            )));
        }
        let mut cur = Cursor::new(vars);
        let mut x = image;
        let mut layers = Vec::with_capacity(KEY_LAYERS);
        for &stride in &self.strides {
            let (w, b) = (cur.next(), cur.next());
            // kernel 4: stride 2 with pad 1 halves the map, stride 1 with
            // pad (1, 2) keeps it.
            let pad_hi = if stride == 2 { 1 } else { 2 };
            x = g.conv2d(x, w, Some(b), stride, 1, pad_hi)?;
            x = match self.order {
                KeyModuleOrder::ConvReluNorm => {
                    let r = g.relu(x);
                    g.instance_norm(r)?
                }
                KeyModuleOrder::ConvNormRelu => {
                    let n = g.instance_norm(x)?;
                    g.relu(n)
                }
            };
            layers.push(x);
        }
        let (w, b) = (cur.next(), cur.next());
        let raw = g.conv2d(x, w, Some(b), 1, 0, 0)?;
        let raw_key = g.tanh(raw);
        let key = g.resize(raw_key, s[2], s[3])?;
        let (w, b) = (cur.next(), cur.next());
        let logits = g.linear(x, w, b)?;
        Ok(KeyGraph {
            key,
            raw_key,
            layers,
            logits,
        })
    }
}

/// Result of running the key generator on one image.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyOutput {
    pub key: Image,
    pub raw_key: Tensor,
    /// Layer index (1-based) → `[C, h, w]` activation.
    pub activations: BTreeMap<usize, Tensor>,
    pub logits: [f32; 2],
}

pub fn generator_forward(params: &GeneratorParams, image: &Image, key: &Image) -> Result<Image> {
    let mut g = Graph::new();
    let vars = params.params.bind(&mut g, false);
    let x = g.constant(image.to_batch());
    let k = g.constant(key.to_batch());
    let y = params.forward_graph(&mut g, &vars, x, k)?;
    Image::from_tensor(g.value(y).clone())
}

/// Generator output together with every recorded intermediate activation.
pub fn generator_activations(
    params: &GeneratorParams,
    image: &Image,
    key: &Image,
) -> Result<Vec<(String, Tensor)>> {
    let mut g = Graph::new();
    let vars = params.params.bind(&mut g, false);
    let x = g.constant(image.to_batch());
    let k = g.constant(key.to_batch());
    let mut trace = Vec::new();
    params.forward_traced(&mut g, &vars, x, k, Some(&mut trace))?;
    Ok(trace
        .into_iter()
        .map(|(n, v)| (n, g.value(v).clone()))
        .collect())
}

pub fn discriminator_forward(params: &DiscriminatorParams, image: &Image) -> Result<ScoreMap> {
    let mut g = Graph::new();
    let vars = params.params.bind(&mut g, false);
    let x = g.constant(image.to_batch());
    let y = params.forward_graph(&mut g, &vars, x)?;
    Ok(ScoreMap(g.value(y).clone()))
}

pub fn keygen_forward(params: &KeyGeneratorParams, image: &Image) -> Result<KeyOutput> {
    keygen_forward_batch(params, &[image]).map(|mut v| v.remove(0))
}

pub fn keygen_forward_batch(params: &KeyGeneratorParams, images: &[&Image]) -> Result<Vec<KeyOutput>> {
    let mut g = Graph::new();
    let vars = params.params.bind(&mut g, false);
    let x = g.constant(Image::stack(images)?);
    let out = params.forward_graph(&mut g, &vars, x)?;
    let keys = Image::unstack(g.value(out.key))?;
    let logits = g.value(out.logits).data().to_vec();
    Ok(keys
        .into_iter()
        .enumerate()
        .map(|(i, key)| KeyOutput {
            key,
            raw_key: squeeze(g.value(out.raw_key).batch_slice(i, 1)),
            activations: out
                .layers
                .iter()
                .enumerate()
                .map(|(l, &v)| (l + 1, squeeze(g.value(v).batch_slice(i, 1))))
                .collect(),
            logits: [logits[2 * i], logits[2 * i + 1]],
        })
        .collect())
}

fn squeeze(t: Tensor) -> Tensor {
    let shape = t.shape()[1..].to_vec();
    t.reshape(&shape).expect("drop unit batch axis")
}

/// All five networks of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub arch: ArchConfig,
    pub f: GeneratorParams,
    pub g: GeneratorParams,
    pub dx: DiscriminatorParams,
    pub dy: DiscriminatorParams,
    pub k: KeyGeneratorParams,
}

impl Networks {
    /// Deterministic initialization from a seed; each network draws from
    /// its own stream so adding blocks to one leaves the others unchanged.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let stream = |i: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i);
            r
        };
        use crate::imagedata::DomainLabel;
        Ok(Self {
            arch: arch.clone(),
            f: GeneratorParams::init(arch, Direction::F, &mut stream(1)),
            g: GeneratorParams::init(arch, Direction::G, &mut stream(2)),
            dx: DiscriminatorParams::init(arch, DomainLabel::X, &mut stream(3)),
            dy: DiscriminatorParams::init(arch, DomainLabel::Y, &mut stream(4)),
            k: KeyGeneratorParams::init(arch, &mut stream(5)),
        })
    }

    pub fn parameter_count(&self) -> usize {
        [
            &self.f.params,
            &self.g.params,
            &self.dx.params,
            &self.dy.params,
            &self.k.params,
        ]
        .iter()
        .map(|p| p.parameter_count())
        .sum()
    }

    /// `(name, set)` for every network, in checkpoint order.
    pub fn sets(&self) -> [(&'static str, &ParamSet); 5] {
        [
            ("F", &self.f.params),
            ("G", &self.g.params),
            ("Dx", &self.dx.params),
            ("Dy", &self.dy.params),
            ("K", &self.k.params),
        ]
    }

    pub fn sets_mut(&mut self) -> [(&'static str, &mut ParamSet); 5] {
        [
            ("F", &mut self.f.params),
            ("G", &mut self.g.params),
            ("Dx", &mut self.dx.params),
            ("Dy", &mut self.dy.params),
            ("K", &mut self.k.params),
        ]
    }
}
