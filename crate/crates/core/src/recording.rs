//! Canonical request hashing for recorded transcripts.
//!
//! Search and model transcripts are JSON files keyed by the SHA-256 of the
//! request. Each part is length-prefixed before hashing so that
//! `("ab", "c")` and `("a", "bc")` never collide.

use sha2::{Digest, Sha256};

pub fn request_hash(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}
