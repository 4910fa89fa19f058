//! Message PSNR for the same messages pasted at each point of a 3×3 grid.
//!
//! ```text
//! cargo run --release --example positions -- [checkpoint]
//! ```

mod common;

use encryptgan::experiments::{position_grid, run_position_sweep};

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let grid = position_grid(ckpt.config.model.image_size, ckpt.config.data.message_size, 3)?;
    let sweep = run_position_sweep(&ckpt.state.nets, &test, &grid, 5, 3, None)?;
    for r in &sweep.rows {
        println!("top {:>2} left {:>2}  {:6.2} dB", r.top, r.left, r.mean_message_psnr);
    }
    println!("std across placements {:.3} dB", sweep.psnr_std);
    Ok(())
}
