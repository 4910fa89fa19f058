//! Signs a shared reference image with a private key and checks it against
//! the matching public key, then tries a forgery made with another key.
//!
//! ```text
//! cargo run --release --example sign_verify -- [checkpoint]
//! ```

mod common;

use encryptgan::keys::{generate_key_pair, sign, verification_psnr, verify};
use encryptgan::metrics::StegoModel;

const THRESHOLD_DB: f64 = 14.0;

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let nets = &ckpt.state.nets;
    let pair = generate_key_pair(&nets.k, test.x.get(0), test.y.get(0), "x/0000", "y/0000")?;
    let secret = test.y.get(1);

    let genuine = sign(&nets.g, secret, "y/0001", &pair.private_key)?;
    let forged = sign(&nets.g, secret, "y/0001", &nets.key(test.x.get(2))?)?;
    for (who, bundle) in [("genuine", &genuine), ("forged", &forged)] {
        let db = verification_psnr(&nets.f, bundle, &pair.public_key, secret)?;
        let ok = verify(&nets.f, bundle, &pair.public_key, secret, THRESHOLD_DB);
        println!("{who:<8} {db:6.2} dB -> {}", if ok { "accepted" } else { "rejected" });
    }
    Ok(())
}
