// SPDX-License-Identifier: Apache-2.0

//! Symbolic-token noise for diversifying repair prompts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const DEFAULT_ALPHABET: [&str; 6] = ["@#", "$%", "^~", "|:", ";&", "?!"];

/// Number of noise tokens for `pct` percent of `code_tokens`.
pub fn noise_budget(pct: f64, code_tokens: usize) -> usize {
    (pct * code_tokens as f64 / 100.0).floor() as usize
}

/// Byte range of the first fenced block's body, or the whole prompt.
fn code_section(prompt: &str) -> (usize, usize) {
    if let Some(open) = prompt.find("```") {
        let body = match prompt[open..].find('\n') {
            Some(nl) => open + nl + 1,
            None => return (0, prompt.len()),
        };
        if let Some(close) = prompt[body..].find("```") {
            return (body, body + close);
        }
    }
    (0, prompt.len())
}

/// Inserts `floor(pct/100 * code_tokens)` symbols from `alphabet` as
/// standalone words at seeded positions between the words of the prompt's
/// code section. Returns the new prompt and the number inserted.
pub fn inject_noise(
    prompt: &str,
    code_tokens: usize,
    pct: f64,
    alphabet: &[String],
    seed: u64,
) -> (String, usize) {
    let n = noise_budget(pct, code_tokens);
    if n == 0 || alphabet.is_empty() {
        return (prompt.to_string(), 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (start, end) = code_section(prompt);
    let section = &prompt[start..end];
    // insertion points: section start and every whitespace run end
    let mut slots = vec![0usize];
    let mut prev_ws = false;
    for (i, c) in section.char_indices() {
        if c.is_whitespace() {
            prev_ws = true;
        } else if prev_ws {
            slots.push(i);
            prev_ws = false;
        }
    }
    let mut inserts: Vec<(usize, &str)> = (0..n)
        .map(|_| {
            let slot = slots[rng.gen_range(0..slots.len())];
            (slot, alphabet[rng.gen_range(0..alphabet.len())].as_str())
        })
        .collect();
    inserts.sort_by_key(|&(slot, _)| slot);
    let mut out = String::with_capacity(prompt.len() + n * 3);
    out.push_str(&prompt[..start]);
    let mut cursor = 0;
    for (slot, sym) in inserts {
        out.push_str(&section[cursor..slot]);
        cursor = slot;
        out.push_str(sym);
        out.push(' ');
    }
    out.push_str(&section[cursor..]);
    out.push_str(&prompt[end..]);
    (out, n)
}

/// Seed for one thread of one repair iteration.
pub fn derive_seed(global: u64, module: &str, iteration: u32, thread: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(module.as_bytes());
    h.update([0]);
    h.update(iteration.to_le_bytes());
    h.update((thread as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> Vec<String> {
        DEFAULT_ALPHABET.iter().map(|s| s.to_string()).collect()
    }

    fn symbol_words(s: &str) -> usize {
        s.split_whitespace()
            .filter(|w| DEFAULT_ALPHABET.contains(w))
            .count()
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(noise_budget(30.0, 10), 3);
        assert_eq!(noise_budget(0.0, 1000), 0);
        assert_eq!(noise_budget(100.0, 7), 7);
        assert_eq!(noise_budget(10.0, 9), 0);
    }

    #[test]
    fn inserts_only_in_code_section() {
        let prompt = "Fix this:\n```verilog\nassign y = a & b;\n```\nLog: FAIL: c1";
        let (noisy, n) = inject_noise(prompt, 10, 30.0, &alphabet(), 7);
        assert_eq!(n, 3);
        assert_eq!(symbol_words(&noisy), 3);
        assert!(noisy.starts_with("Fix this:\n```verilog\n"));
        assert!(noisy.ends_with("\n```\nLog: FAIL: c1"));
        let stripped: Vec<_> = noisy
            .split_whitespace()
            .filter(|w| !DEFAULT_ALPHABET.contains(w))
            .collect();
        assert_eq!(stripped, prompt.split_whitespace().collect::<Vec<_>>());
    }

    #[test]
    fn zero_percent_is_identity_and_seed_is_stable() {
        let prompt = "```\nmodule m; endmodule\n```";
        assert_eq!(
            inject_noise(prompt, 5, 0.0, &alphabet(), 1),
            (prompt.to_string(), 0)
        );
        assert_eq!(
            inject_noise(prompt, 5, 60.0, &alphabet(), 9),
            inject_noise(prompt, 5, 60.0, &alphabet(), 9)
        );
        assert_ne!(derive_seed(1, "m", 1, 0), derive_seed(1, "m", 1, 1));
    }
}
