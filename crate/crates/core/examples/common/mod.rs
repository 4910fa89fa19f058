//! Shared setup for the examples: a synthetic desk dataset under
//! `target/examples-data` and a model to run against.
//!
//! Pass a checkpoint path as the first argument to use your own model;
//! otherwise a short run is trained once and cached next to the data.

#![allow(dead_code)]

use std::path::PathBuf;

use encryptgan::config::Config;
use encryptgan::synth::{write_desk_dataset, SynthSpec};
use encryptgan::training::{load_checkpoint, train, Checkpoint, TrainingData, FINAL_CHECKPOINT};
use encryptgan::Result;

/// Steps for the cached demo model; far short of a desk run.
pub const QUICK_STEPS: u64 = 300;

pub fn workdir() -> PathBuf {
    let base = std::env::var_os("CARGO_TARGET_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("target"));
    base.join("examples-data")
}

pub fn out_dir(example: &str) -> PathBuf {
    workdir().join("out").join(example)
}

/// Default config pointed at the synthetic dataset, writing it if needed.
pub fn desk_config() -> Result<Config> {
    let root = workdir();
    let mut c = Config::default();
    c.data = c.data.rooted(&root);
    if !c.data.x_test.exists() {
        println!("writing synthetic dataset to {}", root.join("data").display());
        c.data = write_desk_dataset(&root, &SynthSpec::default(), 7)?;
    }
    Ok(c)
}

pub fn checkpoint() -> Result<Checkpoint> {
    if let Some(path) = std::env::args_os().nth(1) {
        return load_checkpoint(&PathBuf::from(path));
    }
    let mut config = desk_config()?;
    config.train.total_steps = QUICK_STEPS;
    config.train.checkpoint_interval = 0;
    let run = workdir().join("quick");
    match load_checkpoint(&run.join(FINAL_CHECKPOINT)) {
        Ok(c) if c.config == config => Ok(c),
        _ => {
            println!("training a {QUICK_STEPS}-step demo model in {}", run.display());
            train(&config, &run, None)
        }
    }
}

/// Checkpoint plus the test split it should be evaluated on.
pub fn model_and_test() -> Result<(Checkpoint, TrainingData)> {
    let ckpt = checkpoint()?;
    let mut config = desk_config()?;
    config.model = ckpt.config.model.clone();
    config.data.message_size = ckpt.config.data.message_size;
    let test = TrainingData::open_test(&config)?;
    Ok((ckpt, test))
}
