//! Full metric battery over the test split: reconstruction quality,
//! hiding, wrong-key security and the Frechet distance.
//!
//! ```text
//! cargo run --release --example evaluate -- [checkpoint]
//! ```

mod common;

use encryptgan::metrics::{evaluate, KeyFeatureBackend, Region};

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let mut config = ckpt.config.clone();
    config.eval.trials = 20;
    let backend = KeyFeatureBackend {
        k: &ckpt.state.nets.k,
        taps: config.model.taps()?,
    };
    let report = evaluate(&ckpt.state.nets, &backend, &backend, &test, &config)?;
    for region in [Region::MessageRegion, Region::Whole] {
        let a = |m| report.aggregate(region, m).unwrap_or(f64::NAN);
        println!(
            "{:<15} mse {:.4} psnr {:6.2} ssim {:.3} lpips {:.4}",
            region.as_str(),
            a("mse"),
            a("psnr"),
            a("ssim"),
            a("lpips")
        );
    }
    println!("encryption  mse {:.4} lpips {:.4}", report.encryption.mse, report.encryption.lpips);
    println!("security    mse {:.4} lpips {:.4}", report.security.mse, report.security.lpips);
    println!("wrong-key message PSNR {:.2} dB", report.wrong_key_message_psnr);
    println!("Frechet distance {:.4}", report.frechet);
    let out = common::out_dir("evaluate");
    std::fs::create_dir_all(&out).ok();
    report.write_json(&out.join("metrics.json"))?;
    report.write_csv(&out.join("metrics.csv"))?;
    println!("report in {}", out.display());
    Ok(())
}
