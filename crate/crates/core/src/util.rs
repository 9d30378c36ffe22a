use sha2::{Digest, Sha256};

/// Formats a float with 17 significant digits so that parsing it back yields
/// the identical bit pattern.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // normalizes -0.0 as well
        return "0".to_string();
    }
    format!("{x:.16e}")
}

/// SplitMix64 finalizer; used to derive independent per-stage seeds.
pub(crate) fn mix_seed(seed: u64, tag: &str) -> u64 {
    let mut z = seed;
    for b in tag.bytes() {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(u64::from(b));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
