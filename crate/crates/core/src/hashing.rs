use sha2::{Digest, Sha256};

/// First 16 bytes of SHA-256, hex encoded.
pub fn short_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..16])
}

/// Stable key for a premise text.
pub fn premise_key(text: &str) -> String {
    short_digest(text.as_bytes())
}

/// 64-bit seed derived from labelled parts.
pub fn seed_from(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
