//! Channel-mean activation maps of both generators for one sample, plus how
//! much of each map's energy sits on the message region.
//!
//! ```text
//! cargo run --release --example activations -- [checkpoint]
//! ```

mod common;

use encryptgan::experiments::{visualize_activations, ExperimentKind, ExperimentOutput, ExperimentSpec, ParameterGrid};
use encryptgan::metrics::sample_trials;
use encryptgan::training::checkpoint_digest;

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let spec = ExperimentSpec {
        kind: ExperimentKind::Activations,
        grid: ParameterGrid::None,
        checkpoint: None,
        out_dir: common::out_dir("activations"),
        seed: 5,
    };
    let out = ExperimentOutput::create(&spec, &ckpt.config, &checkpoint_digest(&ckpt))?;
    let trial = sample_trials(&test, 1, 0, spec.seed)?.remove(0);
    let report = visualize_activations(&ckpt.state.nets, &test, &trial, Some(&out))?;
    for p in &report.panels {
        println!("{} {:<10} message energy ratio {:.3}", p.network, p.layer, p.message_energy_ratio);
    }
    println!("decoder late/early ratio {:.3}", report.decoder_late_early_ratio);
    println!("montage {}", out.figure("activations").display());
    Ok(())
}
