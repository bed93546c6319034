//! Synthetic corpora for the benchmarks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Zipf-ish random text over a small alphabet, one document per line.
/// Skewed character frequencies keep the vocabulary cutoff realistic.
pub fn synthetic_text(n_chars: usize, alphabet: usize, line_len: usize, seed: u64) -> String {
    assert!((1..=36).contains(&alphabet));
    let chars: Vec<char> = ('a'..='z').chain('0'..='9').take(alphabet).collect();
    let weights: Vec<f64> = (0..alphabet).map(|r| 1.0 / (r + 1) as f64).collect();
    let dist = rand::distributions::WeightedIndex::new(&weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::with_capacity(n_chars + n_chars / line_len + 1);
    for i in 0..n_chars {
        text.push(chars[dist.sample(&mut rng)]);
        if (i + 1) % line_len == 0 {
            text.push('\n');
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_text_has_requested_shape() {
        let text = synthetic_text(1000, 10, 40, 1);
        assert_eq!(text.chars().filter(|&c| c != '\n').count(), 1000);
        assert_eq!(text, synthetic_text(1000, 10, 40, 1));
    }
}
