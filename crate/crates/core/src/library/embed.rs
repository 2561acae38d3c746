// SPDX-License-Identifier: Apache-2.0

/// Bumped whenever the embedding function changes; embeddings are never
/// persisted, so a bump only affects freshly computed vectors.
pub const EMBEDDING_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn normalize(text: &str) -> Vec<char> {
    let lowered = text.to_lowercase();
    let mut out = Vec::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Hashed bag of lowercase character trigrams, L2-normalized.
///
/// Text is lowercased and whitespace runs collapse to one space. Texts
/// shorter than three characters contribute themselves as a single gram.
/// The empty text maps to the zero vector.
pub fn embed(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let chars = normalize(text);
    if chars.is_empty() || dim == 0 {
        return v;
    }
    let mut buf = [0u8; 12];
    let mut bump = |gram: &[char]| {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        v[(fnv1a(&buf[..len]) % dim as u64) as usize] += 1.0;
    };
    if chars.len() < 3 {
        bump(&chars);
    } else {
        chars.windows(3).for_each(&mut bump);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero_vector() {
        assert!(embed("", 16).iter().all(|&x| x == 0.0));
        assert!(embed("   ", 16).iter().all(|&x| x == 0.0));
        assert_eq!(cosine(&embed("", 16), &embed("abc", 16)), 0.0);
    }

    #[test]
    fn deterministic_and_normalized() {
        let a = embed("Systolic Array  4x4", 512);
        assert_eq!(a, embed("systolic array 4x4", 512));
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_text_is_one_gram() {
        let v = embed("ab", 32);
        assert_eq!(v.iter().filter(|&&x| x > 0.0).count(), 1);
    }
}
