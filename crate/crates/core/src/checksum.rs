use sha2::{Digest, Sha256};

/// First eight bytes of the SHA-256 digest, little-endian.
pub(crate) fn checksum64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub(crate) fn checksum_f64s<'a>(blocks: impl IntoIterator<Item = &'a [f64]>) -> u64 {
    let mut hasher = Sha256::new();
    for block in blocks {
        for v in block {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}
