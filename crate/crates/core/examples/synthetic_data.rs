//! Writes the synthetic two-domain dataset and a config file pointing at it.
//!
//! ```text
//! cargo run --release --example synthetic_data
//! ```

mod common;

fn main() -> encryptgan::Result<()> {
    let config = common::desk_config()?;
    let path = common::workdir().join("config.toml");
    config.save(&path)?;
    println!("config {}", path.display());
    println!("domain X (warm blobs)   {}", config.data.x_train.display());
    println!("domain Y (cool petals)  {}", config.data.y_train.display());
    println!("messages                {}", config.data.messages_train.display());
    println!("train with: encryptgan --config {} --out run train", path.display());
    Ok(())
}
