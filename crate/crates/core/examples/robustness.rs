//! Message PSNR as Gaussian noise is added to the ciphertext in transit.
//!
//! ```text
//! cargo run --release --example robustness -- [checkpoint]
//! ```

mod common;

use encryptgan::experiments::run_robustness;

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let curve = run_robustness(&ckpt.state.nets, &test, &[0.0, 0.005, 0.01, 0.02, 0.05, 0.1], 5, 3, None)?;
    let base = curve.baseline().unwrap_or(f64::NAN);
    for (s, p) in &curve.mean_psnr {
        println!("sigma {s:<5} {p:6.2} dB ({:+.2})", p - base);
    }
    println!("Spearman rho {:.3}, p {:.3}", curve.spearman_rho, curve.spearman_p);
    Ok(())
}
