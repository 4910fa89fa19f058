//! Key images and the encrypt / decrypt / sign / verify protocol.
//!
//! Key files are lossless PNGs with a JSON sidecar next to them
//! (`public_key.png` + `public_key.json`) recording where the key came from.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imagedata::{load_image, save_image, CompositeImage, Image};
use crate::metrics;
use crate::networks::{generator_forward, keygen_forward, GeneratorParams, KeyGeneratorParams};

/// Public key `K(disguise)` and private key `K(cover)` with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyPair {
    pub public_key: Image,
    pub private_key: Image,
    pub cover_ref: String,
    pub disguise_ref: String,
    pub keygen_checkpoint: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyRole {
    Public,
    Private,
}

/// Sidecar record stored next to each key image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyMetadata {
    pub role: KeyRole,
    pub cover_ref: String,
    pub disguise_ref: String,
    pub keygen_checkpoint: String,
    pub image_size: (usize, usize),
}

/// Short content tag of the key generator's weights.
pub fn keygen_tag(k: &KeyGeneratorParams) -> String {
    let mut h = Sha256::new();
    for (name, t) in k.params.entries() {
        h.update(name.as_bytes());
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

pub fn generate_key_pair(
    k: &KeyGeneratorParams,
    cover: &Image,
    disguise: &Image,
    cover_ref: &str,
    disguise_ref: &str,
) -> Result<KeyPair> {
    Ok(KeyPair {
        public_key: keygen_forward(k, disguise)?.key,
        private_key: keygen_forward(k, cover)?.key,
        cover_ref: cover_ref.to_string(),
        disguise_ref: disguise_ref.to_string(),
        keygen_checkpoint: keygen_tag(k),
    })
}

impl KeyPair {
    pub fn metadata(&self, role: KeyRole) -> KeyMetadata {
        KeyMetadata {
            role,
            cover_ref: self.cover_ref.clone(),
            disguise_ref: self.disguise_ref.clone(),
            keygen_checkpoint: self.keygen_checkpoint.clone(),
            image_size: self.public_key.size(),
        }
    }

    /// Writes `public_key.{png,json}` and `private_key.{png,json}` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let public = dir.join("public_key.png");
        let private = dir.join("private_key.png");
        save_key(&self.public_key, &self.metadata(KeyRole::Public), &public)?;
        save_key(&self.private_key, &self.metadata(KeyRole::Private), &private)?;
        Ok((public, private))
    }
}

pub fn sidecar_path(key_png: &Path) -> PathBuf {
    key_png.with_extension("json")
}

pub fn save_key(key: &Image, meta: &KeyMetadata, path: &Path) -> Result<()> {
    save_image(key, path)?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Loads a key image and, when present, its sidecar.
pub fn load_key(path: &Path) -> Result<(Image, Option<KeyMetadata>)> {
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Some(serde_json::from_str::<KeyMetadata>(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?)
    } else {
        None
    };
    let size = match &meta {
        Some(m) => m.image_size,
        None => {
            let (w, h) = image::image_dimensions(path).map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Format(format!("{}: {other}", path.display())),
            })?;
            (h as usize, w as usize)
        }
    };
    Ok((load_image(path, size)?, meta))
}

/// Ciphertext `F(composite ⊕ public_key)`.
pub fn encrypt(f: &GeneratorParams, composite: &CompositeImage, public_key: &Image) -> Result<Image> {
    generator_forward(f, &composite.image, public_key)
}

/// Recovered composite `G(encrypted ⊕ private_key)`.
pub fn decrypt(g: &GeneratorParams, encrypted: &Image, private_key: &Image) -> Result<Image> {
    generator_forward(g, encrypted, private_key)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignatureBundle {
    pub signature_image: Image,
    pub secret_ref: String,
}

/// `G(secret ⊕ private_key)`.
pub fn sign(g: &GeneratorParams, secret: &Image, secret_ref: &str, private_key: &Image) -> Result<SignatureBundle> {
    Ok(SignatureBundle {
        signature_image: generator_forward(g, secret, private_key)?,
        secret_ref: secret_ref.to_string(),
    })
}

/// PSNR in dB between `F(signature ⊕ public_key)` and the expected secret.
pub fn verification_psnr(f: &GeneratorParams, bundle: &SignatureBundle, public_key: &Image, expected_secret: &Image) -> Result<f64> {
    let recovered = generator_forward(f, &bundle.signature_image, public_key)?;
    metrics::psnr(&recovered, expected_secret, metrics::PSNR_CAP)
}

/// True when the recovered secret reaches `threshold_db`; any failure to
/// evaluate also counts as a mismatch.
pub fn verify(
    f: &GeneratorParams,
    bundle: &SignatureBundle,
    public_key: &Image,
    expected_secret: &Image,
    threshold_db: f64,
) -> bool {
    verification_psnr(f, bundle, public_key, expected_secret)
        .map(|p| p >= threshold_db)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagedata::{paste_message, Placement};
    use crate::networks::{ArchConfig, Networks};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_img(seed: u64) -> Image {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Image::new(64, 64, (0..3 * 64 * 64).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn key_pairs_are_deterministic_and_role_specific() {
        let nets = Networks::init(&ArchConfig::default(), 3).unwrap();
        let (c1, c2, d) = (rand_img(1), rand_img(2), rand_img(3));
        let a = generate_key_pair(&nets.k, &c1, &d, "c1", "d").unwrap();
        assert_eq!(a, generate_key_pair(&nets.k, &c1, &d, "c1", "d").unwrap());
        let b = generate_key_pair(&nets.k, &c2, &d, "c2", "d").unwrap();
        assert_eq!(a.public_key, b.public_key);
        assert_ne!(a.private_key, b.private_key);
    }

    #[test]
    fn key_files_round_trip_with_sidecar() {
        let nets = Networks::init(&ArchConfig::default(), 3).unwrap();
        let pair = generate_key_pair(&nets.k, &rand_img(1), &rand_img(2), "cover.png", "flower.png").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (public, private) = pair.save(dir.path()).unwrap();
        let (pk, meta) = load_key(&public).unwrap();
        let meta = meta.unwrap();
        assert_eq!(meta.role, KeyRole::Public);
        assert_eq!(meta.cover_ref, "cover.png");
        assert_eq!(meta.keygen_checkpoint, keygen_tag(&nets.k));
        assert!(pk.tensor().max_abs_diff(pair.public_key.tensor()) <= 1.0 / 127.5 + 1e-6);
        let (_, meta) = load_key(&private).unwrap();
        assert_eq!(meta.unwrap().role, KeyRole::Private);
    }

    #[test]
    fn protocol_is_pure_and_zero_threshold_always_verifies() {
        let nets = Networks::init(&ArchConfig::default(), 3).unwrap();
        let pair = generate_key_pair(&nets.k, &rand_img(1), &rand_img(2), "", "").unwrap();
        let msg = Image::filled(32, 32, 1.0);
        let comp = paste_message(&rand_img(1), &msg, Placement::new(8, 8, 32, 32)).unwrap();
        let e1 = encrypt(&nets.f, &comp, &pair.public_key).unwrap();
        assert_eq!(e1, encrypt(&nets.f, &comp, &pair.public_key).unwrap());
        let d1 = decrypt(&nets.g, &e1, &pair.private_key).unwrap();
        assert_eq!(d1, decrypt(&nets.g, &e1, &pair.private_key).unwrap());
        let secret = rand_img(9);
        let s = sign(&nets.g, &secret, "s", &pair.private_key).unwrap();
        assert_eq!(s, sign(&nets.g, &secret, "s", &pair.private_key).unwrap());
        assert!(verify(&nets.f, &s, &pair.public_key, &secret, 0.0));
    }
}
