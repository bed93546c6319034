//! Learned parameters and composition of vectors for arbitrary strings.
//!
//! The model holds two `|V| x d` matrices: the sub-n-gram embeddings that
//! composition sums over, and the context ("output") embeddings used only
//! during training. A string of any length — word, phrase or sentence — is
//! represented by the sum of the embeddings of its in-vocabulary sub-spans,
//! one addend per occurrence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lattice::Span;
use crate::tsv::{escape_field, unescape_field};
use crate::vocab::{Vocab, VocabEntry};

const MAGIC: &[u8; 5] = b"SCNE1";
const TEXT_HEADER: &str = "#scne-model v1";

/// Output format for [`EmbeddingModel::save`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    /// Bit-exact round trip; stores both matrices.
    Binary,
    /// Word2vec-style tab-delimited text; stores the sub-n-gram matrix only.
    Text,
}

/// Result of composing a string: the summed vector and how many
/// in-vocabulary sub-spans contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pub vector: Vec<f32>,
    pub matched: usize,
}

impl Composed {
    /// True when no sub-span was in the vocabulary (the null-vector case).
    pub fn is_empty(&self) -> bool {
        self.matched == 0
    }
}

/// The two dense parameter matrices plus the vocabulary they index.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    vocab: Vocab,
    dim: usize,
    embeddings: Vec<f32>,
    context_embeddings: Vec<f32>,
}

/// Shape information readable without loading the matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ModelHeader {
    pub vocab_size: usize,
    pub dim: usize,
    pub n_max: usize,
}

impl EmbeddingModel {
    /// Fresh model: sub-n-gram embeddings i.i.d. uniform on
    /// `[-0.5/d, +0.5/d]`, context embeddings all zero. Reproducible for a
    /// fixed seed.
    pub fn init(vocab: Vocab, dim: usize, seed: u64) -> EmbeddingModel {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f32;
        let uniform = Uniform::new_inclusive(-bound, bound);
        let n = vocab.len() * dim;
        let embeddings = (0..n).map(|_| uniform.sample(&mut rng)).collect();
        EmbeddingModel {
            vocab,
            dim,
            embeddings,
            context_embeddings: vec![0.0; n],
        }
    }

    /// Assembles a model from row-major `|V| x dim` matrices.
    pub fn from_parts(
        vocab: Vocab,
        dim: usize,
        embeddings: Vec<f32>,
        context_embeddings: Vec<f32>,
    ) -> EmbeddingModel {
        assert_eq!(embeddings.len(), vocab.len() * dim);
        assert_eq!(context_embeddings.len(), vocab.len() * dim);
        EmbeddingModel {
            vocab,
            dim,
            embeddings,
            context_embeddings,
        }
    }

    /// The inverse of [`EmbeddingModel::from_parts`].
    pub fn into_parts(self) -> (Vocab, usize, Vec<f32>, Vec<f32>) {
        (
            self.vocab,
            self.dim,
            self.embeddings,
            self.context_embeddings,
        )
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            vocab_size: self.vocab.len(),
            dim: self.dim,
            n_max: self.vocab.n_max(),
        }
    }

    /// Sub-n-gram embedding row for a vocabulary id.
    pub fn embedding(&self, id: usize) -> &[f32] {
        &self.embeddings[id * self.dim..(id + 1) * self.dim]
    }

    /// Context ("output") embedding row for a vocabulary id.
    pub fn context_embedding(&self, id: usize) -> &[f32] {
        &self.context_embeddings[id * self.dim..(id + 1) * self.dim]
    }

    /// True if every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.embeddings.iter().all(|v| v.is_finite())
            && self.context_embeddings.iter().all(|v| v.is_finite())
    }

    /// Composes a vector for an arbitrary string by summing the embeddings
    /// of its in-vocabulary sub-spans (per occurrence, sub-span length up to
    /// the vocabulary's `n_max`). Strings longer than the training target
    /// length are fine: sentences compose the same way words do. When no
    /// sub-span is in the vocabulary the zero vector is returned with
    /// `matched == 0`.
    pub fn compose(&self, s: &str) -> Composed {
        let chars: Vec<char> = s.nfc().collect();
        let mut vector = vec![0.0f32; self.dim];
        let mut matched = 0usize;
        let mut buf = String::new();
        let n_max = self.vocab.n_max();
        for a in 0..chars.len() {
            buf.clear();
            let longest = n_max.min(chars.len() - a);
            for n in 1..=longest {
                buf.push(chars[a + n - 1]);
                if let Some(id) = self.vocab.lookup_raw(&buf) {
                    let row = self.embedding(id);
                    for (acc, &x) in vector.iter_mut().zip(row) {
                        *acc += x;
                    }
                    matched += 1;
                }
            }
        }
        Composed { vector, matched }
    }

    /// Composes the substring under a corpus span; equals
    /// `compose(corpus.substring(span))` exactly.
    pub fn compose_span(&self, corpus: &Corpus, span: Span) -> Result<Composed> {
        let s = corpus.substring(span.start, span.end)?;
        Ok(self.compose(&s))
    }

    /// Ranks `candidates` by cosine similarity to the composed query.
    /// Candidates that compose to nothing are ranked last with similarity
    /// reported as 0; exact similarity ties break lexicographically.
    pub fn nearest_neighbors(
        &self,
        query: &str,
        k: usize,
        candidates: &[String],
    ) -> Result<Vec<(String, f64)>> {
        if k < 1 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if candidates.is_empty() {
            return Err(Error::Invalid("candidate list is empty".into()));
        }
        let q = self.compose(query);
        if q.is_empty() {
            return Err(Error::UncomposableQuery);
        }
        let mut scored: Vec<(String, f64, bool)> = candidates
            .iter()
            .map(|cand| {
                let c = self.compose(cand);
                if c.is_empty() {
                    (cand.clone(), 0.0, true)
                } else {
                    (cand.clone(), cosine(&q.vector, &c.vector), false)
                }
            })
            .collect();
        scored.sort_by(|a, b| {
            a.2.cmp(&b.2) // composed candidates before empty ones
                .then_with(|| b.1.total_cmp(&a.1))
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(s, c, _)| (s, c)).collect())
    }

    pub fn save(&self, path: &Path, format: ModelFormat) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        let result = match format {
            ModelFormat::Binary => self.write_binary(&mut w),
            ModelFormat::Text => self.write_text(&mut w),
        };
        result.and_then(|_| w.flush()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads a model saved in either format, sniffing the leading magic.
    pub fn load(path: &Path) -> Result<EmbeddingModel> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 5];
        read_exact(&mut r, &mut magic)?;
        if &magic == MAGIC {
            return Self::read_binary(&mut r);
        }
        drop(r);
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if text.starts_with(TEXT_HEADER) {
            return Self::parse_text(&text);
        }
        Err(Error::CorruptModel("unrecognized magic header".into()))
    }

    /// Reads only the shape header of a saved model.
    pub fn read_header(path: &Path) -> Result<ModelHeader> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 5];
        read_exact(&mut r, &mut magic)?;
        if &magic == MAGIC {
            let vocab_size = read_u64(&mut r)? as usize;
            let dim = read_u64(&mut r)? as usize;
            let n_max = read_u64(&mut r)? as usize;
            return Ok(ModelHeader {
                vocab_size,
                dim,
                n_max,
            });
        }
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let header = text
            .split('\n')
            .next()
            .ok_or_else(|| Error::CorruptModel("empty file".into()))?;
        parse_text_header(header)
    }

    /// Little-endian layout: magic `SCNE1`; `|V|`, `d`, `n_max` as u64; the
    /// vocabulary block (requested capacity `M` as u64, then per entry a u32
    /// byte length, the UTF-8 bytes, and the u64 frequency); then the raw
    /// f32 sub-n-gram matrix followed by the context matrix.
    fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.vocab.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.vocab.n_max() as u64).to_le_bytes())?;
        w.write_all(&(self.vocab.capacity() as u64).to_le_bytes())?;
        for e in self.vocab.entries() {
            let bytes = e.ngram.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&e.freq.to_le_bytes())?;
        }
        for &x in &self.embeddings {
            w.write_all(&x.to_le_bytes())?;
        }
        for &x in &self.context_embeddings {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    fn read_binary<R: Read>(r: &mut R) -> Result<EmbeddingModel> {
        let vocab_size = read_u64(r)? as usize;
        let dim = read_u64(r)? as usize;
        let n_max = read_u64(r)? as usize;
        let capacity = read_u64(r)? as usize;
        if dim < 1 || n_max < 1 || capacity < vocab_size {
            return Err(Error::CorruptModel("implausible header values".into()));
        }
        let mut entries = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let len = read_u32(r)? as usize;
            let mut bytes = vec![0u8; len];
            read_exact(r, &mut bytes)?;
            let ngram = String::from_utf8(bytes)
                .map_err(|_| Error::CorruptModel("vocab entry is not UTF-8".into()))?;
            let freq = read_u64(r)?;
            entries.push(VocabEntry { ngram, freq });
        }
        let vocab = rebuild_vocab(entries, capacity, n_max)?;
        let embeddings = read_f32_matrix(r, vocab_size * dim)?;
        let context_embeddings = read_f32_matrix(r, vocab_size * dim)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(io_as_corrupt)? != 0 {
            return Err(Error::CorruptModel("trailing data after matrices".into()));
        }
        Ok(EmbeddingModel {
            vocab,
            dim,
            embeddings,
            context_embeddings,
        })
    }

    /// Text layout: `#scne-model v1 \t |V| \t d \t n_max` then one
    /// `ngram \t f1 f2 ... fd` row per sub-n-gram embedding, 9 significant
    /// digits per value (enough to round-trip f32 exactly). Context
    /// embeddings and frequencies are not stored: the text export feeds
    /// downstream consumers of the composable matrix.
    fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{TEXT_HEADER}\t{}\t{}\t{}",
            self.vocab.len(),
            self.dim,
            self.vocab.n_max()
        )?;
        for (id, e) in self.vocab.entries().iter().enumerate() {
            write!(w, "{}\t", escape_field(&e.ngram))?;
            let row = self.embedding(id);
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{x:.8e}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn parse_text(text: &str) -> Result<EmbeddingModel> {
        let mut lines = text.split('\n');
        let header = parse_text_header(
            lines
                .next()
                .ok_or_else(|| Error::CorruptModel("empty file".into()))?,
        )?;
        let mut entries = Vec::with_capacity(header.vocab_size);
        let mut embeddings = Vec::with_capacity(header.vocab_size * header.dim);
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (raw_ngram, floats) = line
                .split_once('\t')
                .ok_or_else(|| Error::CorruptModel("row without tab separator".into()))?;
            let ngram = unescape_field(raw_ngram)
                .map_err(|e| Error::CorruptModel(format!("bad n-gram field: {e}")))?;
            let mut n = 0usize;
            for tok in floats.split(' ') {
                let x: f32 = tok
                    .parse()
                    .map_err(|_| Error::CorruptModel(format!("bad float `{tok}`")))?;
                embeddings.push(x);
                n += 1;
            }
            if n != header.dim {
                return Err(Error::CorruptModel(format!(
                    "row has {n} values, expected {}",
                    header.dim
                )));
            }
            // frequencies are not stored in the text format
            entries.push(VocabEntry { ngram, freq: 0 });
        }
        if entries.len() != header.vocab_size {
            return Err(Error::CorruptModel(format!(
                "{} rows, header declares {}",
                entries.len(),
                header.vocab_size
            )));
        }
        let vocab = rebuild_vocab(entries, header.vocab_size, header.n_max)?;
        let n = vocab.len() * header.dim;
        Ok(EmbeddingModel {
            vocab,
            dim: header.dim,
            embeddings,
            context_embeddings: vec![0.0; n],
        })
    }
}

/// Cosine similarity accumulated in f64; zero-norm inputs score 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn rebuild_vocab(entries: Vec<VocabEntry>, capacity: usize, n_max: usize) -> Result<Vocab> {
    let mut table = crate::vocab::FreqTable::new();
    for e in &entries {
        if table.insert(e.ngram.clone(), e.freq).is_some() {
            return Err(Error::CorruptModel(format!(
                "duplicate vocabulary entry `{}`",
                escape_field(&e.ngram)
            )));
        }
    }
    // Rebuilding through build_vocab would re-sort by frequency, which the
    // text format does not preserve; reconstruct in stored id order instead.
    Ok(Vocab::from_stored(entries, capacity, n_max))
}

fn parse_text_header(line: &str) -> Result<ModelHeader> {
    let mut fields = line.split('\t');
    if fields.next() != Some(TEXT_HEADER) {
        return Err(Error::CorruptModel("missing text header".into()));
    }
    let mut next_int = |name: &str| -> Result<usize> {
        fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::CorruptModel(format!("bad {name} in header")))
    };
    let vocab_size = next_int("vocab size")?;
    let dim = next_int("dimension")?;
    let n_max = next_int("n_max")?;
    Ok(ModelHeader {
        vocab_size,
        dim,
        n_max,
    })
}

fn io_as_corrupt(e: std::io::Error) -> Error {
    Error::CorruptModel(format!("read failed: {e}"))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CorruptModel("truncated file".into())
        } else {
            io_as_corrupt(e)
        }
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32_matrix<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
