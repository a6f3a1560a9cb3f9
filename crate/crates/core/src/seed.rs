//! Seed derivation.
//!
//! A master seed fans out into independent ChaCha streams keyed by a counter
//! (episode index, sample hash, ...). Results therefore do not depend on the
//! order in which parallel workers consume their streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stream `index` of the generator rooted at `master`.
pub fn stream(master: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Stable 64-bit key for an arbitrary label, e.g. a sample id.
pub fn key(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Stream keyed by a string label under `master`.
pub fn keyed(master: u64, label: &str) -> Rng {
    stream(master, key(label))
}

/// Mixes a sub-seed out of a parent so sibling subsystems do not share
/// streams (splitmix64 finalizer).
pub fn derive(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
