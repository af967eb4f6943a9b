//! Small string helpers shared by prompt builders and mocks.

/// Lowercased alphanumeric word tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Collapses every whitespace run (including newlines) to a single space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keeps the first `max_tokens` whitespace tokens, cutting at a whitespace
/// boundary of the original text. Returns the text unchanged when it fits.
pub fn truncate_words(text: &str, max_tokens: usize) -> &str {
    let trimmed = text.trim();
    let mut count = 0;
    let mut in_word = false;
    for (idx, ch) in trimmed.char_indices() {
        if ch.is_whitespace() {
            if in_word {
                in_word = false;
                if count == max_tokens {
                    return &trimmed[..idx];
                }
            }
        } else if !in_word {
            in_word = true;
            count += 1;
            if count > max_tokens {
                return trimmed[..idx].trim_end();
            }
        }
    }
    trimmed
}

pub fn whitespace_len(text: &str) -> usize {
    text.split_whitespace().count()
}

/// 64-bit FNV-1a over `bytes`, mixed with a seed. Stable across platforms and
/// releases, unlike `std`'s default hasher.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
