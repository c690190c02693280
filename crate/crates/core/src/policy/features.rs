use crate::environment::corpus::tokenize;

/// Width of the hashed bag-of-words feature vector.
pub const FEATURE_DIM: usize = 256;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercase word tokens hashed into [`FEATURE_DIM`] bins, counts
/// L2-normalised. Empty text maps to the zero vector.
pub fn featurize(query: &str) -> Vec<f64> {
    let mut x = vec![0.0; FEATURE_DIM];
    for token in tokenize(query) {
        x[(fnv1a(token.as_bytes()) % FEATURE_DIM as u64) as usize] += 1.0;
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}
