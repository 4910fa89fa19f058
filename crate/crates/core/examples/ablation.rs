//! Trains one model per key-matching tap set and compares their message
//! reconstruction. Rows are short runs unless a step count is given.
//!
//! ```text
//! cargo run --release --example ablation -- [steps]
//! ```

mod common;

use encryptgan::experiments::run_ablation;
use encryptgan::networks::FeatureTaps;
use encryptgan::training::TrainingData;

fn main() -> encryptgan::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(common::QUICK_STEPS);
    let mut config = common::desk_config()?;
    config.train.total_steps = steps;
    config.eval.trials = 20;
    let sets = [vec![1, 2, 3], vec![6], vec![3, 5, 6]]
        .into_iter()
        .map(FeatureTaps::new)
        .collect::<encryptgan::Result<Vec<_>>>()?;
    let train = TrainingData::open_train(&config)?;
    let test = TrainingData::open_test(&config)?;
    let out = common::out_dir("ablation");
    let rows = run_ablation(&sets, &config, &train, &test, &out, &[])?;
    println!("layers     message mse  psnr    ssim   encryption mse  security mse");
    for (r, _) in &rows {
        println!(
            "{:<10} {:.5}     {:6.2}  {:.3}  {:.5}         {:.5}  {}",
            r.layers, r.message_mse, r.message_psnr, r.message_ssim, r.encryption_mse, r.security_mse, r.status
        );
    }
    println!("table {}", out.join("tables/ablation.csv").display());
    Ok(())
}
