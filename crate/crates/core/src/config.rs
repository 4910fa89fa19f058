//! The single structured config file and its dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::networks::ArchConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub adam_betas: (f32, f32),
    /// Samples whose gradients are averaged per update.
    pub batch_size: usize,
    pub total_steps: u64,
    pub input_noise_sigma: f32,
    pub key_correct_probability: f64,
    pub seed: u64,
    /// Steps between periodic checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    /// When false the key generator keeps its initial weights.
    pub train_keygen: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            adam_betas: (0.5, 0.999),
            batch_size: 1,
            total_steps: 2000,
            input_noise_sigma: 0.01,
            key_correct_probability: 0.5,
            seed: 0,
            checkpoint_interval: 500,
            train_keygen: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config(format!("adam_betas {:?} outside [0, 1)", self.adam_betas)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.input_noise_sigma >= 0.0 && self.input_noise_sigma.is_finite()) {
            return Err(Error::Config("input_noise_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.key_correct_probability) {
            return Err(Error::Config("key_correct_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub x_train: PathBuf,
    pub y_train: PathBuf,
    pub messages_train: PathBuf,
    pub x_test: PathBuf,
    pub y_test: PathBuf,
    pub messages_test: PathBuf,
    pub message_size: (usize, usize),
}

impl Default for DataConfig {
    fn default() -> Self {
        let d = |s: &str| PathBuf::from("data").join(s);
        Self {
            x_train: d("train/x"),
            y_train: d("train/y"),
            messages_train: d("train/messages"),
            x_test: d("test/x"),
            y_test: d("test/y"),
            messages_test: d("test/messages"),
            message_size: (32, 32),
        }
    }
}

impl DataConfig {
    /// Resolves relative paths against `base`.
    pub fn rooted(&self, base: &Path) -> Self {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        Self {
            x_train: r(&self.x_train),
            y_train: r(&self.y_train),
            messages_train: r(&self.messages_train),
            x_test: r(&self.x_test),
            y_test: r(&self.y_test),
            messages_test: r(&self.messages_test),
            message_size: self.message_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    pub wrong_keys: usize,
    pub psnr_cap: f64,
    pub verify_threshold_db: f64,
    pub sensitivity_sigmas: Vec<f32>,
    pub robustness_sigmas: Vec<f32>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            wrong_keys: 5,
            psnr_cap: 100.0,
            verify_threshold_db: 14.0,
            sensitivity_sigmas: vec![0.0, 0.005, 0.01, 0.02, 0.05],
            robustness_sigmas: vec![0.0, 0.005, 0.01, 0.02, 0.05],
            repeats: 10,
            seed: 1234,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ArchConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        let (mh, mw) = self.data.message_size;
        let (h, w) = self.model.image_size;
        if mh == 0 || mw == 0 || mh > h || mw > w {
            return Err(Error::Config(format!(
                "message size {mh}x{mw} must fit inside images of {h}x{w}"
            )));
        }
        if self.eval.trials == 0 || self.eval.repeats == 0 {
            return Err(Error::Config("eval.trials and eval.repeats must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            c.data = c.data.rooted(dir);
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    /// Applies `section.key=value` overrides. Values parse as TOML literals
    /// and fall back to bare strings; the result is re-validated against the
    /// schema before being returned.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("override `{o}` is not key=value")))?;
            let value = parse_literal(raw.trim());
            set_dotted(&mut tree, key.trim(), value)?;
        }
        let c: Config = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_dotted(tree: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = tree;
    for (i, p) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{p}` is not inside a table")))?;
        let slot = table
            .get_mut(*p)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = coerce(slot, value);
            return Ok(());
        }
        cur = slot;
    }
    Err(Error::Config(format!("empty config key `{key}`")))
}

// An integer literal assigned to a float field should stay a float.
fn coerce(old: &toml::Value, new: toml::Value) -> toml::Value {
    match (old, &new) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
        _ => new,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = Config::default();
        let back = Config::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn overrides_are_type_checked() {
        let c = Config::default();
        let o = c
            .with_overrides(&["train.total_steps=0", "loss.w_info=5", "model.key_tap_layers=[1,2,3]"])
            .unwrap();
        assert_eq!(o.train.total_steps, 0);
        assert_eq!(o.loss.w_info, 5.0);
        assert_eq!(o.model.key_tap_layers, vec![1, 2, 3]);
        assert!(matches!(
            c.with_overrides(&["train.total_steps=abc"]),
            Err(Error::Config(_))
        ));
        assert!(matches!(c.with_overrides(&["train.nope=1"]), Err(Error::Config(_))));
        assert!(matches!(c.with_overrides(&["train"]), Err(Error::Argument(_))));
        assert!(c.with_overrides(&["model.key_tap_layers=[5,3]"]).is_err());
        assert!(c.with_overrides(&["train.learning_rate=0"]).is_err());
    }

    #[test]
    fn unknown_keys_rejected_in_files() {
        assert!(matches!(
            Config::from_toml_str("[train]\nbogus = 1\n"),
            Err(Error::Config(_))
        ));
        let partial = Config::from_toml_str("[train]\ntotal_steps = 7\n").unwrap();
        assert_eq!(partial.train.total_steps, 7);
        assert_eq!(partial.model, ArchConfig::default());
    }
}
