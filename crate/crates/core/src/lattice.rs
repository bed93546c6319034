//! Enumeration of target spans, their in-vocabulary sub-n-grams, adjacent
//! contexts, and the adjacent-pair stream over the frequent n-gram lattice.
//!
//! Everything here is pure given an immutable [`Corpus`] and [`Vocab`], so
//! streams can be partitioned by document ranges across workers. No yielded
//! span ever crosses a document boundary.

use std::ops::Range;

use crate::corpus::Corpus;
use crate::error::Result;
use crate::vocab::Vocab;

/// A target span `t = (i, j)`: 1-based inclusive character offsets within a
/// single document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    /// Length in characters (a span always covers at least one character).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Ids of every in-vocabulary sub-span of `span`, one entry per occurrence.
///
/// A sub-span is any `(i', j')` with `span.start <= i' <= j' <= span.end`
/// and `j' - i' + 1 <= vocab.n_max()`; the span's own string counts when it
/// is in the vocabulary. The same string occurring at two positions
/// contributes twice: the set is over index pairs, not strings.
pub fn subgrams(corpus: &Corpus, span: Span, vocab: &Vocab) -> Result<Vec<usize>> {
    corpus.validate_range(span.start, span.end)?;
    let mut out = Vec::new();
    let mut buf = String::new();
    subgrams_into(corpus, span, vocab, &mut buf, &mut out);
    Ok(out)
}

pub(crate) fn subgrams_into(
    corpus: &Corpus,
    span: Span,
    vocab: &Vocab,
    buf: &mut String,
    out: &mut Vec<usize>,
) {
    out.clear();
    let chars = corpus.slice(span.start, span.end);
    let n_max = vocab.n_max();
    for a in 0..chars.len() {
        buf.clear();
        let longest = n_max.min(chars.len() - a);
        for n in 1..=longest {
            buf.push(chars[a + n - 1]);
            if let Some(id) = vocab.lookup_raw(buf) {
                out.push(id);
            }
        }
    }
}

/// Ids of every in-vocabulary span of length `<= n_max` immediately
/// adjacent to `span`: ending exactly at `span.start - 1` or starting
/// exactly at `span.end + 1`, clipped to the document.
pub fn contexts(corpus: &Corpus, span: Span, vocab: &Vocab, n_max: usize) -> Result<Vec<usize>> {
    corpus.validate_range(span.start, span.end)?;
    let mut out = Vec::new();
    let mut buf = String::new();
    contexts_into(corpus, span, vocab, n_max, &mut buf, &mut out);
    Ok(out)
}

pub(crate) fn contexts_into(
    corpus: &Corpus,
    span: Span,
    vocab: &Vocab,
    n_max: usize,
    buf: &mut String,
    out: &mut Vec<usize>,
) {
    out.clear();
    let doc = corpus.doc_of(span.start);
    let (doc_start, doc_end) = corpus.doc_range(doc);
    if span.start > doc_start {
        let end = span.start - 1;
        for n in 1..=n_max {
            if end + 1 < doc_start + n {
                break; // left neighbour would start before the document
            }
            let slice = corpus.slice(end + 1 - n, end);
            buf.clear();
            buf.extend(slice.iter());
            if let Some(id) = vocab.lookup_raw(buf) {
                out.push(id);
            }
        }
    }
    if span.end < doc_end {
        let start = span.end + 1;
        for n in 1..=n_max {
            let end = start + n - 1;
            if end > doc_end {
                break;
            }
            let slice = corpus.slice(start, end);
            buf.clear();
            buf.extend(slice.iter());
            if let Some(id) = vocab.lookup_raw(buf) {
                out.push(id);
            }
        }
    }
}

/// Iterator over the target set `D`: every span of length `<= n_target`
/// inside a document, in document order (per document, all spans of length
/// 1 first, then length 2, and so on).
#[derive(Debug, Clone)]
pub struct TargetStream<'a> {
    corpus: &'a Corpus,
    n_target: usize,
    docs: Range<usize>,
    doc: usize,
    n: usize,
    next_start: usize,
}

/// Streams `D` over the whole corpus.
pub fn stream_targets(corpus: &Corpus, n_target: usize) -> TargetStream<'_> {
    stream_targets_docs(corpus, n_target, 0..corpus.n_docs())
}

/// Streams the targets of a contiguous document range (worker partition).
pub(crate) fn stream_targets_docs(
    corpus: &Corpus,
    n_target: usize,
    docs: Range<usize>,
) -> TargetStream<'_> {
    assert!(n_target >= 1, "n_target must be at least 1");
    let doc = docs.start;
    let next_start = if docs.is_empty() {
        0
    } else {
        corpus.doc_range(doc).0
    };
    TargetStream {
        corpus,
        n_target,
        docs,
        doc,
        n: 1,
        next_start,
    }
}

impl Iterator for TargetStream<'_> {
    type Item = Span;

    fn next(&mut self) -> Option<Span> {
        while self.doc < self.docs.end {
            let (doc_start, doc_end) = self.corpus.doc_range(self.doc);
            let len = doc_end - doc_start + 1;
            if self.n <= self.n_target && self.n <= len {
                let start = self.next_start;
                let end = start + self.n - 1;
                if end <= doc_end {
                    self.next_start += 1;
                    return Some(Span::new(start, end));
                }
                // exhausted this length; move to the next
                self.n += 1;
                self.next_start = doc_start;
                continue;
            }
            self.doc += 1;
            self.n = 1;
            if self.doc < self.docs.end {
                self.next_start = self.corpus.doc_range(self.doc).0;
            }
        }
        None
    }
}

/// `|D|` without iterating: per document of length `L`, spans of length
/// `n <= n_target` number `max(0, L - n + 1)`.
pub fn target_count(corpus: &Corpus, n_target: usize) -> u64 {
    target_count_docs(corpus, n_target, 0..corpus.n_docs())
}

pub(crate) fn target_count_docs(corpus: &Corpus, n_target: usize, docs: Range<usize>) -> u64 {
    let mut total = 0u64;
    for doc in docs {
        let (start, end) = corpus.doc_range(doc);
        let len = end - start + 1;
        for n in 1..=n_target.min(len) {
            total += (len - n + 1) as u64;
        }
    }
    total
}

/// Iterator over sembei's target-context pairs: for every two in-vocabulary
/// spans `A` ending at offset `p` and `B` starting at `p + 1` (same
/// document), yields both `(A, B)` and `(B, A)` as vocabulary-id pairs.
#[derive(Debug, Clone)]
pub struct SembeiPairs<'a> {
    corpus: &'a Corpus,
    vocab: &'a Vocab,
    docs: Range<usize>,
    doc: usize,
    cut: usize, // adjacency between offsets `cut` and `cut + 1`
    enders: Vec<usize>,
    starters: Vec<usize>,
    a_idx: usize,
    b_idx: usize,
    flipped: bool,
    buf: String,
}

/// Streams adjacent-pair co-occurrences of the frequent n-gram lattice.
pub fn sembei_pairs<'a>(corpus: &'a Corpus, vocab: &'a Vocab) -> SembeiPairs<'a> {
    sembei_pairs_docs(corpus, vocab, 0..corpus.n_docs())
}

pub(crate) fn sembei_pairs_docs<'a>(
    corpus: &'a Corpus,
    vocab: &'a Vocab,
    docs: Range<usize>,
) -> SembeiPairs<'a> {
    let doc = docs.start;
    let cut = if docs.is_empty() {
        0
    } else {
        corpus.doc_range(doc).0
    };
    SembeiPairs {
        corpus,
        vocab,
        docs,
        doc,
        cut,
        enders: Vec::new(),
        starters: Vec::new(),
        a_idx: 0,
        b_idx: 0,
        flipped: false,
        buf: String::new(),
    }
}

/// In-vocabulary spans ending exactly at `end` (shortest first).
fn spans_ending_at(
    corpus: &Corpus,
    vocab: &Vocab,
    doc_start: usize,
    end: usize,
    buf: &mut String,
    out: &mut Vec<usize>,
) {
    out.clear();
    for n in 1..=vocab.n_max() {
        if end + 1 < doc_start + n {
            break;
        }
        buf.clear();
        buf.extend(corpus.slice(end + 1 - n, end).iter());
        if let Some(id) = vocab.lookup_raw(buf) {
            out.push(id);
        }
    }
}

/// In-vocabulary spans starting exactly at `start` (shortest first).
fn spans_starting_at(
    corpus: &Corpus,
    vocab: &Vocab,
    doc_end: usize,
    start: usize,
    buf: &mut String,
    out: &mut Vec<usize>,
) {
    out.clear();
    for n in 1..=vocab.n_max() {
        let end = start + n - 1;
        if end > doc_end {
            break;
        }
        buf.clear();
        buf.extend(corpus.slice(start, end).iter());
        if let Some(id) = vocab.lookup_raw(buf) {
            out.push(id);
        }
    }
}

impl Iterator for SembeiPairs<'_> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        loop {
            if self.a_idx < self.enders.len() && self.b_idx < self.starters.len() {
                let a = self.enders[self.a_idx];
                let b = self.starters[self.b_idx];
                if !self.flipped {
                    self.flipped = true;
                    return Some((a, b));
                }
                self.flipped = false;
                self.b_idx += 1;
                if self.b_idx == self.starters.len() {
                    self.b_idx = 0;
                    self.a_idx += 1;
                }
                return Some((b, a));
            }

            // advance to the next cut with work
            if self.doc >= self.docs.end {
                return None;
            }
            let (doc_start, doc_end) = self.corpus.doc_range(self.doc);
            if self.cut >= doc_end {
                self.doc += 1;
                if self.doc < self.docs.end {
                    self.cut = self.corpus.doc_range(self.doc).0;
                }
                continue;
            }
            let cut = self.cut;
            self.cut += 1;
            spans_ending_at(
                self.corpus,
                self.vocab,
                doc_start,
                cut,
                &mut self.buf,
                &mut self.enders,
            );
            if self.enders.is_empty() {
                continue;
            }
            spans_starting_at(
                self.corpus,
                self.vocab,
                doc_end,
                cut + 1,
                &mut self.buf,
                &mut self.starters,
            );
            self.a_idx = 0;
            self.b_idx = 0;
            self.flipped = false;
        }
    }
}

/// Exact pair totals needed to schedule the learning-rate decay: per-epoch
/// positive pair count, plus how many targets train (non-empty sub-n-gram
/// set) and how many are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct ScneSchedule {
    pub pairs: u64,
    pub trained_targets: u64,
    pub skipped_targets: u64,
}

/// One pass over a document range computing, for every target with a
/// non-empty sub-n-gram set, how many adjacent contexts it has.
pub(crate) fn scne_schedule_docs(
    corpus: &Corpus,
    vocab: &Vocab,
    n_target: usize,
    docs: Range<usize>,
) -> ScneSchedule {
    let n_max = vocab.n_max();
    let mut schedule = ScneSchedule::default();
    let mut buf = String::new();
    // reused per document: context counts per position and the shortest
    // in-vocabulary span ending at each position (usize::MAX if none)
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut min_end_len = Vec::new();
    for doc in docs {
        let (doc_start, doc_end) = corpus.doc_range(doc);
        let len = doc_end - doc_start + 1;
        left.clear();
        right.clear();
        min_end_len.clear();
        left.resize(len, 0u32);
        right.resize(len, 0u32);
        min_end_len.resize(len, usize::MAX);
        for p in doc_start..=doc_end {
            let rel = p - doc_start;
            for n in 1..=n_max {
                if p + 1 >= doc_start + n {
                    buf.clear();
                    buf.extend(corpus.slice(p + 1 - n, p).iter());
                    if vocab.lookup_raw(&buf).is_some() {
                        left[rel] += 1;
                        if min_end_len[rel] == usize::MAX {
                            min_end_len[rel] = n;
                        }
                    }
                }
                if p + n - 1 <= doc_end {
                    buf.clear();
                    buf.extend(corpus.slice(p, p + n - 1).iter());
                    if vocab.lookup_raw(&buf).is_some() {
                        right[rel] += 1;
                    }
                }
            }
        }
        for i in doc_start..=doc_end {
            let mut composable = false;
            for j in i..=doc_end.min(i + n_target - 1) {
                let rel_j = j - doc_start;
                composable = composable || min_end_len[rel_j] <= j - i + 1;
                if composable {
                    let left_count = if i > doc_start { left[i - 1 - doc_start] } else { 0 };
                    let right_count = if j < doc_end { right[j + 1 - doc_start] } else { 0 };
                    schedule.pairs += (left_count + right_count) as u64;
                    schedule.trained_targets += 1;
                } else {
                    schedule.skipped_targets += 1;
                }
            }
        }
    }
    schedule
}

/// Per-epoch sembei pair count over a document range.
pub(crate) fn sembei_pair_count_docs(corpus: &Corpus, vocab: &Vocab, docs: Range<usize>) -> u64 {
    let mut buf = String::new();
    let mut enders = Vec::new();
    let mut starters = Vec::new();
    let mut total = 0u64;
    for doc in docs {
        let (doc_start, doc_end) = corpus.doc_range(doc);
        for cut in doc_start..doc_end {
            spans_ending_at(corpus, vocab, doc_start, cut, &mut buf, &mut enders);
            if enders.is_empty() {
                continue;
            }
            spans_starting_at(corpus, vocab, doc_end, cut + 1, &mut buf, &mut starters);
            total += 2 * (enders.len() as u64) * (starters.len() as u64);
        }
    }
    total
}
