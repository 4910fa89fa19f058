//! Training objectives.
//!
//! Each loss exists twice: a plain evaluation over images and score maps
//! (accumulated in `f64`, used for reporting and as a reference in tests)
//! and a graph builder used by the training loop. All L1 terms are
//! per-element means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::imagedata::{crop_region, CompositeImage, DomainLabel, Image};
use crate::networks::{FeatureTaps, ScoreMap};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_cyc: f32,
    pub w_adv: f32,
    pub w_key: f32,
    pub w_info: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_cyc: 10.0,
            w_adv: 1.0,
            w_key: 1.0,
            w_info: 10.0,
        }
    }
}

impl LossWeights {
    pub fn unit() -> Self {
        Self {
            w_cyc: 1.0,
            w_adv: 1.0,
            w_key: 1.0,
            w_info: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_cyc, self.w_adv, self.w_key, self.w_info];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Unweighted generator-side loss terms for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub cyc: f64,
    pub adv: f64,
    pub key: f64,
    pub info: f64,
}

/// One row of the training loss log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub key_correct: bool,
    /// Absent on incorrect-key steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<f64>,
    pub adversarial: f64,
    pub key_matching: f64,
    pub information: f64,
    pub total: f64,
    pub discriminator_x: f64,
    pub discriminator_y: f64,
    pub keygen: f64,
}

impl LossReport {
    /// Recomputes the weighted generator objective from the stored terms.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        let components = LossComponents {
            cyc: self.cycle.unwrap_or(0.0),
            adv: self.adversarial,
            key: self.key_matching,
            info: self.information,
        };
        total_generator_objective(&components, w, self.key_correct)
    }

    /// Named generator-side terms that were active this step.
    pub fn terms(&self) -> BTreeMap<&'static str, f64> {
        let mut m = BTreeMap::new();
        if let Some(c) = self.cycle {
            m.insert("cycle", c);
        }
        m.insert("adversarial", self.adversarial);
        m.insert("key_matching", self.key_matching);
        m.insert("information", self.information);
        m
    }
}

fn shape_check(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn mean_abs(a: &Tensor, b: &Tensor) -> f64 {
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    s / a.numel().max(1) as f64
}

fn mean_sq_offset(t: &Tensor, target: f64) -> f64 {
    let s: f64 = t.data().iter().map(|&v| (v as f64 - target).powi(2)).sum();
    s / t.numel().max(1) as f64
}

pub fn cycle_loss(x: &Image, x_rec: &Image, y: &Image, y_rec: &Image) -> Result<f64> {
    shape_check(x.tensor(), x_rec.tensor(), "cycle x")?;
    shape_check(y.tensor(), y_rec.tensor(), "cycle y")?;
    Ok(mean_abs(x.tensor(), x_rec.tensor()) + mean_abs(y.tensor(), y_rec.tensor()))
}

pub fn lsgan_discriminator_loss(real: &ScoreMap, fake: &ScoreMap) -> Result<f64> {
    shape_check(&real.0, &fake.0, "score maps")?;
    Ok(mean_sq_offset(&real.0, 1.0) + mean_sq_offset(&fake.0, 0.0))
}

pub fn lsgan_generator_loss(fake: &ScoreMap) -> f64 {
    mean_sq_offset(&fake.0, 1.0)
}

/// Key-generator activations keyed by 1-based layer index.
pub type Activations = BTreeMap<usize, Tensor>;

fn tapped<'a>(acts: &'a Activations, layer: usize, side: &str) -> Result<&'a Tensor> {
    acts.get(&layer)
        .ok_or_else(|| Error::Argument(format!("{side} activations lack tapped layer L{layer}")))
}

pub fn key_matching_loss(
    taps: &FeatureTaps,
    orig_x: &Activations,
    rec_x: &Activations,
    orig_y: &Activations,
    rec_y: &Activations,
) -> Result<f64> {
    let mut total = 0.0;
    for &l in taps.layers() {
        let (ox, rx) = (tapped(orig_x, l, "x")?, tapped(rec_x, l, "recovered x")?);
        let (oy, ry) = (tapped(orig_y, l, "y")?, tapped(rec_y, l, "recovered y")?);
        shape_check(ox, rx, "key matching x")?;
        shape_check(oy, ry, "key matching y")?;
        total += mean_abs(ox, rx) + mean_abs(oy, ry);
    }
    Ok(total)
}

pub fn information_loss(
    recovered_x: &Image,
    composite_x: &CompositeImage,
    recovered_y: &Image,
    composite_y: &CompositeImage,
) -> Result<f64> {
    let side = |rec: &Image, comp: &CompositeImage| -> Result<f64> {
        let a = crop_region(rec, comp.placement)?;
        let b = crop_region(&comp.image, comp.placement)?;
        Ok(mean_abs(a.tensor(), b.tensor()))
    };
    Ok(side(recovered_x, composite_x)? + side(recovered_y, composite_y)?)
}

/// Weighted security branch: the cycle term only counts with the correct key.
pub fn security_loss(key_correct: bool, cyc: f64, adv: f64, w: &LossWeights) -> f64 {
    let adv = w.w_adv as f64 * adv;
    if key_correct {
        w.w_cyc as f64 * cyc + adv
    } else {
        adv
    }
}

pub fn keygen_classification_loss(logits: &[[f32; 2]], labels: &[DomainLabel]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit pairs vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (l, label) in logits.iter().zip(labels) {
        let c = label.class_index()?;
        let (a, b) = (l[0] as f64, l[1] as f64);
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        total += lse - [a, b][c];
    }
    Ok(total / logits.len() as f64)
}

pub fn total_generator_objective(c: &LossComponents, w: &LossWeights, key_correct: bool) -> f64 {
    security_loss(key_correct, c.cyc, c.adv, w) + w.w_key as f64 * c.key + w.w_info as f64 * c.info
}

/// Graph builders mirroring the plain losses above.
pub mod graph {
    use super::*;

    pub fn cycle(g: &mut Graph, x: Var, x_rec: Var, y: Var, y_rec: Var) -> Result<Var> {
        let a = g.mean_abs_diff(x_rec, x)?;
        let b = g.mean_abs_diff(y_rec, y)?;
        g.weighted_sum(&[(a, 1.0), (b, 1.0)])
    }

    pub fn lsgan_discriminator(g: &mut Graph, real: Var, fake: Var) -> Result<Var> {
        if g.value(real).shape() != g.value(fake).shape() {
            return Err(Error::Shape("score maps differ in shape".into()));
        }
        let r = g.mean_squared_offset(real, 1.0);
        let f = g.mean_squared_offset(fake, 0.0);
        g.weighted_sum(&[(r, 1.0), (f, 1.0)])
    }

    pub fn lsgan_generator(g: &mut Graph, fake: Var) -> Var {
        g.mean_squared_offset(fake, 1.0)
    }

    /// `layers_*` hold activations for layers 1..=6 in order.
    pub fn key_matching(
        g: &mut Graph,
        taps: &FeatureTaps,
        orig_x: &[Var],
        rec_x: &[Var],
        orig_y: &[Var],
        rec_y: &[Var],
    ) -> Result<Var> {
        let mut terms = Vec::new();
        for &l in taps.layers() {
            let pick = |v: &[Var]| {
                v.get(l - 1)
                    .copied()
                    .ok_or_else(|| Error::Argument(format!("activations lack tapped layer L{l}")))
            };
            terms.push((g.mean_abs_diff(pick(rec_x)?, pick(orig_x)?)?, 1.0));
            terms.push((g.mean_abs_diff(pick(rec_y)?, pick(orig_y)?)?, 1.0));
        }
        g.weighted_sum(&terms)
    }

    /// Message-region L1 between a recovered batch-of-one and its composite.
    pub fn information_side(g: &mut Graph, recovered: Var, composite: Var, p: crate::imagedata::Placement) -> Result<Var> {
        let a = g.crop(recovered, p.top, p.left, p.height, p.width)?;
        let b = g.crop(composite, p.top, p.left, p.height, p.width)?;
        g.mean_abs_diff(a, b)
    }

    pub fn keygen_classification(g: &mut Graph, logits: Var, labels: &[DomainLabel]) -> Result<Var> {
        let idx = labels
            .iter()
            .map(|l| l.class_index())
            .collect::<Result<Vec<_>>>()?;
        g.cross_entropy(logits, &idx)
    }
}
