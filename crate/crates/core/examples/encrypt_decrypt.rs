//! Key generation, encryption and decryption of one message, with the
//! correct private key and with a key made from another cover.
//!
//! ```text
//! cargo run --release --example encrypt_decrypt -- [checkpoint]
//! ```

mod common;

use encryptgan::imagedata::{crop_region, paste_message, save_image, Placement};
use encryptgan::keys::{decrypt, encrypt, generate_key_pair};
use encryptgan::metrics::{psnr, StegoModel};

fn main() -> encryptgan::Result<()> {
    let (ckpt, test) = common::model_and_test()?;
    let nets = &ckpt.state.nets;
    let (cover, disguise, message) = (test.x.get(0), test.y.get(0), test.messages.get(0));
    let pair = generate_key_pair(&nets.k, cover, disguise, "x/0000", "y/0000")?;

    let (mh, mw) = message.size();
    let placement = Placement::new(16, 8, mh, mw);
    let composite = paste_message(cover, message, placement)?;
    let cipher = encrypt(&nets.f, &composite, &pair.public_key)?;
    let recovered = decrypt(&nets.g, &cipher, &pair.private_key)?;
    let wrong = decrypt(&nets.g, &cipher, &nets.key(test.x.get(1))?)?;

    let out = common::out_dir("encrypt_decrypt");
    pair.save(&out)?;
    for (name, img) in [("composite", &composite.image), ("encrypted", &cipher), ("decrypted", &recovered), ("wrong_key", &wrong)] {
        save_image(img, &out.join(format!("{name}.png")))?;
    }
    let db = |img| -> encryptgan::Result<f64> { psnr(&crop_region(img, placement)?, message, 100.0) };
    println!("message PSNR with the private key {:.2} dB", db(&recovered)?);
    println!("message PSNR with a wrong key     {:.2} dB", db(&wrong)?);
    println!("message PSNR left in ciphertext   {:.2} dB", db(&cipher)?);
    println!("images in {}", out.display());
    Ok(())
}
