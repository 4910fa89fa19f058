//! Message PSNR as Gaussian noise is added to the private key, either on the
//! cover before key generation or on the key itself.
//!
//! ```text
//! cargo run --release --example key_sensitivity -- [checkpoint]
//! ```

mod common;

use encryptgan::experiments::{run_key_sensitivity, ExperimentKind, ExperimentOutput, ExperimentSpec, NoiseMode, ParameterGrid};
use encryptgan::training::checkpoint_digest;

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let sigmas = vec![0.0, 0.005, 0.01, 0.02, 0.05];
    let spec = ExperimentSpec {
        kind: ExperimentKind::KeySensitivity,
        grid: ParameterGrid::Sigmas(sigmas.clone()),
        checkpoint: None,
        out_dir: common::out_dir("key_sensitivity"),
        seed: 3,
    };
    let out = ExperimentOutput::create(&spec, &ckpt.config, &checkpoint_digest(&ckpt))?;
    for mode in [NoiseMode::NoiseOnSourceImage, NoiseMode::NoiseOnKey] {
        let curve = run_key_sensitivity(&ckpt.state.nets, &test, &sigmas, mode, 5, spec.seed, Some(&out))?;
        println!("{}: Spearman rho {:.3}, p {:.3}", mode.as_str(), curve.spearman_rho, curve.spearman_p);
        for (s, p) in &curve.mean_psnr {
            println!("  sigma {s:<6} {p:6.2} dB");
        }
    }
    println!("curves and key difference maps in {}", out.root.display());
    Ok(())
}
