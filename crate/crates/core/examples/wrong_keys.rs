//! Decrypts one ciphertext with the true private key and with keys made
//! from other covers, and saves the decrypts side by side.
//!
//! ```text
//! cargo run --release --example wrong_keys -- [checkpoint]
//! ```

mod common;

use encryptgan::experiments::{run_wrong_key_gallery, ExperimentKind, ExperimentOutput, ExperimentSpec, ParameterGrid};
use encryptgan::training::checkpoint_digest;

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let spec = ExperimentSpec {
        kind: ExperimentKind::WrongKey,
        grid: ParameterGrid::Count(5),
        checkpoint: None,
        out_dir: common::out_dir("wrong_keys"),
        seed: 11,
    };
    let out = ExperimentOutput::create(&spec, &ckpt.config, &checkpoint_digest(&ckpt))?;
    let gallery = run_wrong_key_gallery(&ckpt.state.nets, &test, 5, spec.seed, Some(&out))?;
    for e in &gallery.entries {
        let tag = if e.correct { "private key" } else { "wrong key" };
        println!("{:<10} {tag:<11} message {:6.2} dB  cover {:6.2} dB", e.key, e.message_psnr, e.cover_psnr);
    }
    println!("gallery {}", out.figure("wrong_key_gallery").display());
    Ok(())
}
