//! Trains all five networks on the synthetic data and prints the loss log
//! as it grows.
//!
//! ```text
//! cargo run --release --example train -- [steps]
//! ```

mod common;

use encryptgan::training::{save_checkpoint, Checkpoint, ModelState, Trainer, TrainingData};

fn main() -> encryptgan::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let mut config = common::desk_config()?;
    config.train.total_steps = steps;
    let data = TrainingData::open_train(&config)?;
    let mut trainer = Trainer::new(&config, &data, ModelState::init(&config)?)?;
    trainer.run_until(steps, |_, r| {
        if r.step % 25 == 0 {
            println!(
                "step {:>5} total {:.3} adv {:.3} key {:.3} info {:.3} cycle {}",
                r.step,
                r.total,
                r.adversarial,
                r.key_matching,
                r.information,
                r.cycle.map_or("-".into(), |c| format!("{c:.3}"))
            );
        }
        Ok(())
    })?;
    let path = common::out_dir("train").join("checkpoint.egan");
    let state = trainer.state;
    save_checkpoint(&Checkpoint { config: config.clone(), state }, &path)?;
    println!("checkpoint {}", path.display());
    Ok(())
}
