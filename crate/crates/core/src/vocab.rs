//! Character n-gram counting and the top-`M` vocabulary.
//!
//! Counting is exact (hash map, no sketch): the corpus is sharded across
//! rayon workers by document and the partial tables are merged. The
//! vocabulary keeps the `M` most frequent n-grams of length `1..=n_max`,
//! with ties at the cutoff broken by length, then code-point order, so the
//! result is deterministic regardless of hash-map iteration order.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tsv::{escape_field, unescape_field};

/// Exact n-gram occurrence counts.
pub type FreqTable = HashMap<String, u64>;

/// Counts every character n-gram with `1 <= n <= n_max` occurring inside a
/// document. Spans obey the corpus boundary policy, so a document of length
/// `L` contributes `sum over n of max(0, L - n + 1)` positions.
pub fn count_ngrams(corpus: &Corpus, n_max: usize) -> FreqTable {
    assert!(n_max >= 1, "n_max must be at least 1");
    let merged = (0..corpus.n_docs())
        .into_par_iter()
        .fold(HashMap::<Vec<char>, u64>::new, |mut acc, doc| {
            let (start, end) = corpus.doc_range(doc);
            let chars = corpus.slice(start, end);
            for i in 0..chars.len() {
                let longest = n_max.min(chars.len() - i);
                for n in 1..=longest {
                    let window = &chars[i..i + n];
                    match acc.get_mut(window) {
                        Some(count) => *count += 1,
                        None => {
                            acc.insert(window.to_vec(), 1);
                        }
                    }
                }
            }
            acc
        })
        .reduce(HashMap::new, |a, b| {
            if a.len() < b.len() {
                return merge_into(b, a);
            }
            merge_into(a, b)
        });
    merged
        .into_iter()
        .map(|(k, v)| (k.into_iter().collect::<String>(), v))
        .collect()
}

fn merge_into(mut big: HashMap<Vec<char>, u64>, small: HashMap<Vec<char>, u64>) -> HashMap<Vec<char>, u64> {
    for (k, v) in small {
        *big.entry(k).or_insert(0) += v;
    }
    big
}

/// One vocabulary entry: the n-gram and its corpus frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub ngram: String,
    pub freq: u64,
}

/// The `M`-most-frequent character n-grams with `n <= n_max`.
///
/// Ids run `0..len()` in order of decreasing frequency (ties: shorter
/// length first, then code-point order). `index` is a bijection between
/// n-gram strings and ids.
#[derive(Debug, Clone)]
pub struct Vocab {
    entries: Vec<VocabEntry>,
    index: HashMap<String, usize>,
    n_max: usize,
    capacity: usize,
}

/// Keeps the top `m` entries of a frequency table.
///
/// Entries longer than `n_max` characters are ignored. The result is
/// invariant under permutation of the table's iteration order.
pub fn build_vocab(freqs: &FreqTable, m: usize, n_max: usize) -> Vocab {
    assert!(m >= 1, "vocabulary capacity must be at least 1");
    assert!(n_max >= 1, "n_max must be at least 1");
    let mut entries: Vec<VocabEntry> = freqs
        .iter()
        .filter(|(g, _)| {
            let len = g.chars().count();
            len >= 1 && len <= n_max
        })
        .map(|(g, &f)| VocabEntry {
            ngram: g.clone(),
            freq: f,
        })
        .collect();
    if entries.len() > m {
        entries.select_nth_unstable_by(m - 1, vocab_order);
        entries.truncate(m);
    }
    entries.sort_unstable_by(vocab_order);
    Vocab::from_entries(entries, m, n_max)
}

/// Total order on vocabulary entries: frequency descending, then length
/// ascending, then lexicographic code-point order.
fn vocab_order(a: &VocabEntry, b: &VocabEntry) -> std::cmp::Ordering {
    b.freq
        .cmp(&a.freq)
        .then_with(|| a.ngram.chars().count().cmp(&b.ngram.chars().count()))
        .then_with(|| a.ngram.cmp(&b.ngram))
}

impl Vocab {
    /// Reconstructs a vocabulary from persisted entries, keeping their
    /// stored id order.
    pub(crate) fn from_stored(entries: Vec<VocabEntry>, capacity: usize, n_max: usize) -> Vocab {
        Vocab::from_entries(entries, capacity, n_max)
    }

    fn from_entries(entries: Vec<VocabEntry>, capacity: usize, n_max: usize) -> Vocab {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.ngram.clone(), i))
            .collect();
        Vocab {
            entries,
            index,
            n_max,
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Maximum n-gram length in characters.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Requested capacity `M` (the actual size may be smaller).
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn ngram(&self, id: usize) -> &str {
        &self.entries[id].ngram
    }

    pub fn freq(&self, id: usize) -> u64 {
        self.entries[id].freq
    }

    /// Id of `s` if it is in the vocabulary. Matching is exact after NFC
    /// normalization; the empty string is never a member.
    pub fn lookup(&self, s: &str) -> Option<usize> {
        match is_nfc_quick(s.chars()) {
            IsNormalized::Yes => self.index.get(s).copied(),
            _ => {
                let normalized: String = s.nfc().collect();
                self.index.get(normalized.as_str()).copied()
            }
        }
    }

    /// Lookup for probes already known to be NFC (corpus slices).
    pub(crate) fn lookup_raw(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Writes the vocabulary as TSV: a `#scne-vocab v1` header followed by
    /// `ngram \t freq` rows in id order, with tabs, newlines and
    /// backslashes escaped inside n-grams.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#scne-vocab v1\tM={}\tn_max={}", self.capacity, self.n_max)?;
        for e in &self.entries {
            writeln!(w, "{}\t{}", escape_field(&e.ngram), e.freq)?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("write to Vec cannot fail");
        fs::write(path, buf).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_tsv(path: &Path) -> Result<Vocab> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Vocab::parse_tsv(&text)
    }

    pub fn parse_tsv(text: &str) -> Result<Vocab> {
        // Rows are split on raw newlines; newlines inside n-grams are escaped.
        let mut lines = text.split('\n');
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty vocabulary file".into()))?;
        let mut fields = header.split('\t');
        if fields.next() != Some("#scne-vocab v1") {
            return Err(Error::Format("missing #scne-vocab v1 header".into()));
        }
        let capacity = parse_header_field(fields.next(), "M")?;
        let n_max = parse_header_field(fields.next(), "n_max")?;
        if n_max < 1 || capacity < 1 {
            return Err(Error::Format("M and n_max must be at least 1".into()));
        }

        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (raw_ngram, raw_freq) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("row {}: expected `ngram\\tfreq`", lineno + 2))
            })?;
            let ngram = unescape_field(raw_ngram)?;
            let len = ngram.chars().count();
            if len < 1 || len > n_max {
                return Err(Error::Format(format!(
                    "row {}: n-gram length {} outside 1..={}",
                    lineno + 2,
                    len,
                    n_max
                )));
            }
            let freq: u64 = raw_freq.parse().map_err(|_| {
                Error::Format(format!("row {}: bad frequency `{raw_freq}`", lineno + 2))
            })?;
            entries.push(VocabEntry { ngram, freq });
        }
        if entries.len() > capacity {
            return Err(Error::Format(format!(
                "{} rows exceed declared capacity M={}",
                entries.len(),
                capacity
            )));
        }
        if entries.windows(2).any(|w| w[0].freq < w[1].freq) {
            return Err(Error::Format("rows are not sorted by frequency".into()));
        }
        let vocab = Vocab::from_entries(entries, capacity, n_max);
        if vocab.index.len() != vocab.entries.len() {
            return Err(Error::Format("duplicate n-gram rows".into()));
        }
        Ok(vocab)
    }
}

fn parse_header_field(field: Option<&str>, key: &str) -> Result<usize> {
    let field = field.ok_or_else(|| Error::Format(format!("missing {key}= header field")))?;
    let value = field
        .strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .ok_or_else(|| Error::Format(format!("expected {key}=<int>, got `{field}`")))?;
    value
        .parse()
        .map_err(|_| Error::Format(format!("bad {key} value `{value}`")))
}

/// Negative-sampling distribution `P_neg(id) ∝ freq(id)^alpha` with an
/// owned, seedable draw stream. Each training worker forks its own sampler;
/// the underlying distribution is shared.
#[derive(Debug, Clone)]
pub struct NegSampler {
    probs: Arc<Vec<f64>>,
    dist: Arc<WeightedIndex<f64>>,
    alpha: f64,
    rng: ChaCha8Rng,
}

impl NegSampler {
    /// Builds the distribution from vocabulary frequencies. Errors if the
    /// vocabulary is empty or all frequencies are zero.
    pub fn new(vocab: &Vocab, alpha: f64, seed: u64) -> Result<NegSampler> {
        if vocab.is_empty() {
            return Err(Error::Invalid(
                "cannot sample from an empty vocabulary".into(),
            ));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Invalid(format!(
                "negative-sampling exponent must be finite and >= 0, got {alpha}"
            )));
        }
        let weights: Vec<f64> = vocab
            .entries()
            .iter()
            .map(|e| (e.freq as f64).powf(alpha))
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Invalid(
                "negative-sampling weights sum to zero (are all frequencies zero?)".into(),
            ));
        }
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::Invalid(format!("bad sampling weights: {e}")))?;
        let probs = weights.iter().map(|w| w / total).collect();
        Ok(NegSampler {
            probs: Arc::new(probs),
            dist: Arc::new(dist),
            alpha,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Same distribution, independent draw stream.
    pub fn fork(&self, seed: u64) -> NegSampler {
        NegSampler {
            probs: Arc::clone(&self.probs),
            dist: Arc::clone(&self.dist),
            alpha: self.alpha,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Exact probability of drawing `id`.
    pub fn prob(&self, id: usize) -> f64 {
        self.probs[id]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Draws `k` independent ids from `P_neg`.
    pub fn sample_negatives(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        self.sample_into(k, &mut out);
        out
    }

    pub(crate) fn sample_into(&mut self, k: usize, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..k {
            out.push(self.rng.sample(&*self.dist));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BoundaryPolicy;

    fn corpus(text: &str) -> Corpus {
        Corpus::from_text(text, &BoundaryPolicy::default()).unwrap()
    }

    fn table(pairs: &[(&str, u64)]) -> FreqTable {
        pairs.iter().map(|(g, f)| (g.to_string(), *f)).collect()
    }

    #[test]
    fn counts_abcab() {
        let got = count_ngrams(&corpus("abcab"), 2);
        let want = table(&[("a", 2), ("b", 2), ("c", 1), ("ab", 2), ("bc", 1), ("ca", 1)]);
        assert_eq!(got, want);
    }

    #[test]
    fn counts_aaa() {
        let got = count_ngrams(&corpus("aaa"), 2);
        assert_eq!(got, table(&[("a", 3), ("aa", 2)]));
    }

    #[test]
    fn counting_respects_document_boundaries() {
        let got = count_ngrams(&corpus("ab\ncd"), 2);
        let want = table(&[("a", 1), ("b", 1), ("c", 1), ("d", 1), ("ab", 1), ("cd", 1)]);
        assert_eq!(got, want);
        assert!(!got.contains_key("bc"));
    }

    #[test]
    fn position_total_matches_formula() {
        let c = corpus("abcde\nxy");
        let n_max = 3;
        let total: u64 = count_ngrams(&c, n_max).values().sum();
        // per document of length L: sum over n of max(0, L - n + 1)
        let expect: u64 = [5usize, 2]
            .iter()
            .map(|&l| (1..=n_max).map(|n| l.saturating_sub(n - 1) as u64).sum::<u64>())
            .sum();
        assert_eq!(total, expect);
    }

    #[test]
    fn top_m_tie_break_is_deterministic() {
        let v = build_vocab(&table(&[("x", 5), ("y", 3), ("z", 3)]), 2, 2);
        let kept: Vec<&str> = v.entries().iter().map(|e| e.ngram.as_str()).collect();
        assert_eq!(kept, vec!["x", "y"]);
    }

    #[test]
    fn m_larger_than_distinct_keeps_all() {
        let v = build_vocab(
            &table(&[("a", 2), ("b", 2), ("c", 1), ("ab", 2), ("bc", 1), ("ca", 1)]),
            10,
            2,
        );
        assert_eq!(v.len(), 6);
        // top-M property: min kept freq >= max excluded freq (nothing excluded)
        assert_eq!(v.capacity(), 10);
    }

    #[test]
    fn singleton_vocab() {
        let v = build_vocab(&table(&[("a", 1)]), 1, 1);
        assert_eq!(v.len(), 1);
        assert_eq!(v.lookup("a"), Some(0));
    }

    #[test]
    fn vocab_order_is_freq_then_length_then_lex() {
        let v = build_vocab(
            &table(&[("b", 4), ("aa", 4), ("a", 4), ("c", 7)]),
            10,
            2,
        );
        let order: Vec<&str> = v.entries().iter().map(|e| e.ngram.as_str()).collect();
        assert_eq!(order, vec!["c", "a", "b", "aa"]);
        // index is a bijection onto 0..len
        for (i, e) in v.entries().iter().enumerate() {
            assert_eq!(v.lookup(&e.ngram), Some(i));
        }
    }

    #[test]
    fn build_is_invariant_under_iteration_order() {
        let c = corpus("abracadabra\nbanana");
        let freqs = count_ngrams(&c, 3);
        let a = build_vocab(&freqs, 8, 3);
        // rebuild from a re-hashed copy of the table
        let reshuffled: FreqTable = freqs.into_iter().collect();
        let b = build_vocab(&reshuffled, 8, 3);
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn lookup_misses() {
        let v = build_vocab(&table(&[("a", 2), ("b", 1), ("ab", 1)]), 10, 2);
        assert_eq!(v.lookup("zz"), None);
        assert_eq!(v.lookup(""), None);
        assert_eq!(v.lookup("ab"), Some(v.lookup("ab").unwrap()));
    }

    #[test]
    fn lookup_normalizes_nfc() {
        let v = build_vocab(&table(&[("が", 3)]), 10, 1);
        assert_eq!(v.lookup("か\u{3099}"), Some(0));
    }

    #[test]
    fn entries_longer_than_n_max_are_ignored() {
        let v = build_vocab(&table(&[("abc", 9), ("a", 1)]), 10, 2);
        assert_eq!(v.len(), 1);
        assert_eq!(v.ngram(0), "a");
    }

    #[test]
    fn sampler_probability_is_exact_for_alpha_one() {
        let v = build_vocab(
            &table(&[("a", 2), ("b", 2), ("c", 1), ("ab", 2), ("bc", 1), ("ca", 1)]),
            10,
            2,
        );
        let s = NegSampler::new(&v, 1.0, 0).unwrap();
        let id = v.lookup("ab").unwrap();
        assert!((s.prob(id) - 2.0 / 9.0).abs() < 1e-12);
        let total: f64 = s.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for (i, e) in v.entries().iter().enumerate() {
            assert!((s.prob(i) - e.freq as f64 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_alpha_exponent() {
        let v = build_vocab(&table(&[("a", 4), ("b", 1)]), 10, 1);
        let s = NegSampler::new(&v, 0.75, 0).unwrap();
        let wa = 4f64.powf(0.75);
        assert!((s.prob(0) - wa / (wa + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sampler_single_entry_always_draws_it() {
        let v = build_vocab(&table(&[("a", 1)]), 1, 1);
        let mut s = NegSampler::new(&v, 1.0, 7).unwrap();
        assert_eq!(s.sample_negatives(20), vec![0; 20]);
    }

    #[test]
    fn sampler_is_reproducible_and_forkable() {
        let v = build_vocab(&table(&[("a", 5), ("b", 3), ("c", 2)]), 10, 1);
        let mut s1 = NegSampler::new(&v, 1.0, 123).unwrap();
        let mut s2 = NegSampler::new(&v, 1.0, 123).unwrap();
        assert_eq!(s1.sample_negatives(50), s2.sample_negatives(50));
        let mut f1 = s1.fork(9);
        let mut f2 = s2.fork(9);
        assert_eq!(f1.sample_negatives(50), f2.sample_negatives(50));
    }

    #[test]
    fn sampler_rejects_zero_weights() {
        let v = build_vocab(&table(&[("a", 0), ("b", 0)]), 10, 1);
        assert!(NegSampler::new(&v, 1.0, 0).is_err());
    }

    #[test]
    fn tsv_round_trip_with_escapes() {
        let v = build_vocab(
            &table(&[("a\tb", 5), ("x", 4), ("\\", 3), ("a\nc", 2), ("y", 2)]),
            4,
            3,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save_tsv(&path).unwrap();
        let loaded = Vocab::load_tsv(&path).unwrap();
        assert_eq!(loaded.entries(), v.entries());
        assert_eq!(loaded.n_max(), v.n_max());
        assert_eq!(loaded.capacity(), v.capacity());
    }

    #[test]
    fn tsv_rejects_garbage() {
        assert!(Vocab::parse_tsv("nonsense\n").is_err());
        assert!(Vocab::parse_tsv("#scne-vocab v1\tM=2\tn_max=2\nab\n").is_err());
        assert!(Vocab::parse_tsv("#scne-vocab v1\tM=1\tn_max=2\na\t1\nb\t1\n").is_err());
        // unsorted frequencies
        assert!(Vocab::parse_tsv("#scne-vocab v1\tM=5\tn_max=2\na\t1\nb\t2\n").is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_corpus_text() -> impl Strategy<Value = String> {
            proptest::collection::vec(
                prop_oneof![prop::sample::select(vec!['a', 'b', 'c', 'd', 'e']), Just('\n')],
                1..50,
            )
            .prop_map(|v| v.into_iter().collect())
        }

        #[allow(clippy::int_plus_one)] // span length is j - i + 1
        fn brute_force_counts(c: &Corpus, n_max: usize) -> FreqTable {
            let mut out = FreqTable::new();
            for d in 0..c.n_docs() {
                let (s, e) = c.doc_range(d);
                for i in s..=e {
                    for j in i..=e {
                        if j - i + 1 <= n_max {
                            *out.entry(c.substring(i, j).unwrap()).or_insert(0) += 1;
                        }
                    }
                }
            }
            out
        }

        proptest! {
            #[test]
            fn counting_matches_brute_force(text in arb_corpus_text(), n_max in 1usize..4) {
                let Ok(c) = Corpus::from_text(&text, &BoundaryPolicy::default()) else {
                    return Ok(()); // all-newline input
                };
                prop_assert_eq!(count_ngrams(&c, n_max), brute_force_counts(&c, n_max));
            }

            // top-M property: nothing kept is rarer than anything excluded
            #[test]
            fn top_m_property(freqs in proptest::collection::hash_map("[a-e]{1,3}", 1u64..50, 1..30), m in 1usize..10) {
                let table: FreqTable = freqs.into_iter().collect();
                let v = build_vocab(&table, m, 3);
                prop_assert_eq!(v.len(), m.min(table.len()));
                let kept_min = v.entries().iter().map(|e| e.freq).min().unwrap();
                let excluded_max = table
                    .iter()
                    .filter(|(g, _)| v.lookup(g).is_none())
                    .map(|(_, &f)| f)
                    .max()
                    .unwrap_or(0);
                prop_assert!(kept_min >= excluded_max);
            }

            #[test]
            #[allow(clippy::needless_range_loop)]
            fn empirical_frequency_tracks_probs(seed in 0u64..20) {
                let v = build_vocab(
                    &[("a", 6), ("b", 3), ("c", 1)]
                        .iter()
                        .map(|(g, f)| (g.to_string(), *f))
                        .collect(),
                    10,
                    1,
                );
                let mut s = NegSampler::new(&v, 1.0, seed).unwrap();
                let draws = s.sample_negatives(20_000);
                let mut counts = [0usize; 3];
                for d in draws {
                    counts[d] += 1;
                }
                for id in 0..3 {
                    let emp = counts[id] as f64 / 20_000.0;
                    prop_assert!((emp - s.prob(id)).abs() < 0.02);
                }
            }
        }
    }
}
