//! Raw-text ingestion into an indexed character sequence.
//!
//! A [`Corpus`] is a flat array of Unicode scalar values plus the offsets at
//! which documents start. All span math is 1-based and inclusive, and spans
//! never cross a document boundary. The corpus is immutable once built, so
//! any number of workers may read it concurrently.

use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// How raw text is split into documents at ingest time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Every input line is its own document. The default: co-occurrence
    /// across lines is noise for line-delimited corpora such as tweets or
    /// reviews.
    Newline,
    /// The whole input is a single document.
    None,
    /// Documents are delimited by the given character, which is removed
    /// from the character stream.
    Custom(char),
}

/// Document-boundary policy applied by [`Corpus::from_text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryPolicy {
    pub mode: BoundaryMode,
    /// Drop U+0020 space characters from the character stream. Off by
    /// default: spaces carry boundary signal in languages that have them.
    pub strip_spaces: bool,
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        BoundaryPolicy {
            mode: BoundaryMode::Newline,
            strip_spaces: false,
        }
    }
}

/// An in-memory corpus: characters `x_1 ... x_N` and document starts.
///
/// Offsets are character offsets, never byte offsets; a corpus of three
/// multi-byte CJK characters has `n_chars() == 3`.
#[derive(Debug, Clone)]
pub struct Corpus {
    chars: Vec<char>,
    /// 1-based offsets at which documents start; strictly increasing and
    /// beginning at 1. Empty documents are dropped at ingest.
    doc_starts: Vec<usize>,
}

impl Corpus {
    /// Reads a UTF-8 text file and ingests it under `policy`.
    pub fn from_file(path: &Path, policy: &BoundaryPolicy) -> Result<Corpus> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 {
            path: path.to_path_buf(),
            offset: e.utf8_error().valid_up_to(),
        })?;
        Corpus::from_text(&text, policy)
    }

    /// Ingests already-decoded text: NFC-normalizes it, splits it into
    /// documents per `policy`, and drops delimiter characters (and spaces
    /// when `strip_spaces` is set). Empty documents are skipped.
    pub fn from_text(text: &str, policy: &BoundaryPolicy) -> Result<Corpus> {
        let delimiter = match policy.mode {
            BoundaryMode::Newline => Some('\n'),
            BoundaryMode::None => None,
            BoundaryMode::Custom(c) => Some(c),
        };

        let mut chars = Vec::with_capacity(text.len());
        let mut doc_starts = Vec::new();
        let mut at_doc_start = true;
        for ch in text.nfc() {
            if Some(ch) == delimiter {
                at_doc_start = true;
                continue;
            }
            if policy.strip_spaces && ch == ' ' {
                continue;
            }
            if at_doc_start {
                doc_starts.push(chars.len() + 1);
                at_doc_start = false;
            }
            chars.push(ch);
        }
        if chars.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { chars, doc_starts })
    }

    /// Total character count `N`.
    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn n_docs(&self) -> usize {
        self.doc_starts.len()
    }

    /// 1-based offsets at which documents start.
    pub fn doc_starts(&self) -> &[usize] {
        &self.doc_starts
    }

    /// The character at a 1-based offset.
    pub fn char_at(&self, offset: usize) -> char {
        self.chars[offset - 1]
    }

    /// Index of the document containing a 1-based offset.
    pub fn doc_of(&self, offset: usize) -> usize {
        debug_assert!(offset >= 1 && offset <= self.chars.len());
        self.doc_starts.partition_point(|&s| s <= offset) - 1
    }

    /// 1-based inclusive `(start, end)` offsets of document `doc`.
    pub fn doc_range(&self, doc: usize) -> (usize, usize) {
        let start = self.doc_starts[doc];
        let end = match self.doc_starts.get(doc + 1) {
            Some(&next) => next - 1,
            None => self.chars.len(),
        };
        (start, end)
    }

    /// Checks that `start..=end` is a valid in-document range.
    pub fn validate_range(&self, start: usize, end: usize) -> Result<()> {
        if start < 1 || end < start || end > self.chars.len() {
            return Err(Error::SpanOutOfRange {
                start,
                end,
                len: self.chars.len(),
            });
        }
        if self.doc_of(start) != self.doc_of(end) {
            return Err(Error::SpanCrossesBoundary { start, end });
        }
        Ok(())
    }

    /// The substring `x_start ... x_end` (1-based inclusive offsets).
    pub fn substring(&self, start: usize, end: usize) -> Result<String> {
        self.validate_range(start, end)?;
        Ok(self.chars[start - 1..end].iter().collect())
    }

    /// Zero-copy view of a range the caller already knows to be valid.
    pub(crate) fn slice(&self, start: usize, end: usize) -> &[char] {
        &self.chars[start - 1..end]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn newline() -> BoundaryPolicy {
        BoundaryPolicy::default()
    }

    #[test]
    fn newline_breaks_split_documents() {
        let c = Corpus::from_text("ab\ncd", &newline()).unwrap();
        assert_eq!(c.chars, vec!['a', 'b', 'c', 'd']);
        assert_eq!(c.doc_starts(), &[1, 3]);
        assert_eq!(c.n_chars(), 4);
    }

    #[test]
    fn no_breaks_keeps_newline_as_character() {
        let policy = BoundaryPolicy {
            mode: BoundaryMode::None,
            ..Default::default()
        };
        let c = Corpus::from_text("ab\ncd", &policy).unwrap();
        assert_eq!(c.chars, vec!['a', 'b', '\n', 'c', 'd']);
        assert_eq!(c.doc_starts(), &[1]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = Corpus::from_text("", &newline()).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        let err = Corpus::from_text("\n\n", &newline()).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn empty_documents_are_dropped() {
        let c = Corpus::from_text("ab\n\ncd\n", &newline()).unwrap();
        assert_eq!(c.doc_starts(), &[1, 3]);
        assert_eq!(c.n_docs(), 2);
    }

    #[test]
    fn custom_delimiter_is_removed() {
        let policy = BoundaryPolicy {
            mode: BoundaryMode::Custom('|'),
            ..Default::default()
        };
        let c = Corpus::from_text("ab|cd\ne", &policy).unwrap();
        assert_eq!(c.chars, vec!['a', 'b', 'c', 'd', '\n', 'e']);
        assert_eq!(c.doc_starts(), &[1, 3]);
    }

    #[test]
    fn strip_spaces_drops_spaces_only_when_asked() {
        let keep = Corpus::from_text("a b", &newline()).unwrap();
        assert_eq!(keep.n_chars(), 3);
        let policy = BoundaryPolicy {
            strip_spaces: true,
            ..Default::default()
        };
        let strip = Corpus::from_text("a b", &policy).unwrap();
        assert_eq!(strip.chars, vec!['a', 'b']);
    }

    #[test]
    fn substring_basics() {
        let c = Corpus::from_text("abcd", &newline()).unwrap();
        assert_eq!(c.substring(2, 3).unwrap(), "bc");
        assert_eq!(c.substring(1, 1).unwrap(), "a");
        assert!(matches!(
            c.substring(3, 5),
            Err(Error::SpanOutOfRange { .. })
        ));
        assert!(matches!(
            c.substring(0, 1),
            Err(Error::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn substring_rejects_cross_document_spans() {
        let c = Corpus::from_text("ab\ncd", &newline()).unwrap();
        assert!(matches!(
            c.substring(2, 3),
            Err(Error::SpanCrossesBoundary { .. })
        ));
        assert_eq!(c.substring(3, 4).unwrap(), "cd");
    }

    #[test]
    fn offsets_are_characters_not_bytes() {
        let c = Corpus::from_text("日本語", &newline()).unwrap();
        assert_eq!(c.n_chars(), 3);
        assert_eq!(c.substring(2, 3).unwrap(), "本語");
    }

    #[test]
    fn ingest_applies_nfc() {
        // Decomposed "か" + combining dakuten composes to "が".
        let c = Corpus::from_text("か\u{3099}", &newline()).unwrap();
        assert_eq!(c.chars, vec!['が']);
        assert_eq!(c.n_chars(), 1);
    }

    #[test]
    fn invalid_utf8_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, [0x61, 0x62, 0xFF, 0x63]).unwrap();
        match Corpus::from_file(&path, &newline()) {
            Err(Error::InvalidUtf8 { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected InvalidUtf8, got {other:?}"),
        }
    }

    #[test]
    fn doc_of_and_ranges() {
        let c = Corpus::from_text("ab\ncde\nf", &newline()).unwrap();
        assert_eq!(c.doc_of(1), 0);
        assert_eq!(c.doc_of(2), 0);
        assert_eq!(c.doc_of(3), 1);
        assert_eq!(c.doc_of(6), 2);
        assert_eq!(c.doc_range(0), (1, 2));
        assert_eq!(c.doc_range(1), (3, 5));
        assert_eq!(c.doc_range(2), (6, 6));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_text() -> impl Strategy<Value = String> {
            proptest::collection::vec(
                prop_oneof![
                    prop::sample::select(vec!['a', 'b', 'c', ' ', 'x']),
                    Just('\n'),
                ],
                0..60,
            )
            .prop_map(|v| v.into_iter().collect())
        }

        proptest! {
            // Concatenating the per-document substrings reproduces the
            // input minus delimiter (and stripped-space) characters.
            #[test]
            fn ingest_round_trips(text in arb_text(), strip in any::<bool>(), mode_newline in any::<bool>()) {
                let policy = BoundaryPolicy {
                    mode: if mode_newline { BoundaryMode::Newline } else { BoundaryMode::None },
                    strip_spaces: strip,
                };
                let mut expected: String = text.clone();
                if mode_newline {
                    expected.retain(|c| c != '\n');
                }
                if strip {
                    expected.retain(|c| c != ' ');
                }
                match Corpus::from_text(&text, &policy) {
                    Err(Error::EmptyCorpus) => prop_assert!(expected.is_empty()),
                    Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
                    Ok(c) => {
                        let mut joined = String::new();
                        for d in 0..c.n_docs() {
                            let (s, e) = c.doc_range(d);
                            joined.push_str(&c.substring(s, e).unwrap());
                        }
                        prop_assert_eq!(joined, expected);
                        // doc_starts strictly increasing, beginning at 1
                        prop_assert_eq!(c.doc_starts()[0], 1);
                        prop_assert!(c.doc_starts().windows(2).all(|w| w[0] < w[1]));
                    }
                }
            }
        }
    }
}
