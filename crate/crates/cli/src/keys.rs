//! Key material on disk: the grid operator's signing key and the three
//! server keys, one file each.

use std::path::{Path, PathBuf};

use rand::{CryptoRng, RngCore};

use plem::dso::{DsoPublicKey, DsoSigningKey, ServerKey};
use plem::Result;

pub const DSO_SECRET: &str = "dso.pem";
pub const DSO_PUBLIC: &str = "dso.pub";

/// File of the key of server `index` (1-based, as on the command line).
pub fn server_key_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("server-{index}.key"))
}

pub fn generate<R: RngCore + CryptoRng>(dir: &Path, rng: &mut R) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let sk = DsoSigningKey::generate(rng)?;
    std::fs::write(dir.join(DSO_SECRET), sk.to_pem()?)?;
    std::fs::write(dir.join(DSO_PUBLIC), sk.public().to_pem()?)?;
    for i in 1..=3 {
        ServerKey::random(rng).save(&server_key_file(dir, i))?;
    }
    Ok(())
}

pub fn load_signing(dir: &Path) -> Result<DsoSigningKey> {
    DsoSigningKey::from_pem(&std::fs::read_to_string(dir.join(DSO_SECRET))?)
}

pub fn load_public(dir: &Path) -> Result<DsoPublicKey> {
    DsoPublicKey::load(&dir.join(DSO_PUBLIC))
}

pub fn load_server_keys(dir: &Path) -> Result<[ServerKey; 3]> {
    Ok([ServerKey::load(&server_key_file(dir, 1))?, ServerKey::load(&server_key_file(dir, 2))?, ServerKey::load(&server_key_file(dir, 3))?])
}
