//! Corpus ingestion and normalization, and masked training instances.

mod rewrite;
pub mod toy;

pub use rewrite::{canonical_source, fresh_name, rewrite_identifiers};

use crate::features::{extract_all, FeatureSet, FeatureSpace, FeatureVector};
use crate::kcl::{compile, render_source, CompileError, KernelAst};
use crate::tokenizer::{TokenizerError, Vocabulary, END, ENDHOLE, HOLE, PAD, START};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;
use walkdir::WalkDir;

pub const DEFAULT_MAX_HOLE_FRACTION: f64 = 0.9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("kernel has no maskable token")]
    KernelTooShort,
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub source: String,
    /// `[START] tokens [END]` padded with `[PAD]` to the configured length.
    /// Empty until the corpus is tokenized.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_ids: Vec<u32>,
    pub features: FeatureSet,
}

impl CorpusEntry {
    /// Normalizes a checked kernel into an entry.
    pub fn from_ast(ast: &KernelAst) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(&canonical_source(ast)));
        let renamed = rewrite_identifiers(ast, &mut rng);
        let source = render_source(&renamed);
        CorpusEntry {
            id: hash_hex(&source),
            features: extract_all(&renamed),
            source,
            token_ids: Vec::new(),
        }
    }

    /// Token ids between `[START]` and `[END]`.
    pub fn content(&self) -> &[u32] {
        content_of(&self.token_ids)
    }
}

/// Strips `[START]`, `[END]` and padding from a model sequence.
pub fn content_of(ids: &[u32]) -> &[u32] {
    let start = usize::from(ids.first() == Some(&START));
    let end = ids[start..]
        .iter()
        .position(|&t| t == END || t == PAD)
        .map_or(ids.len(), |p| p + start);
    &ids[start..end]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub path: String,
    pub reason: String,
}

pub fn hash_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_u64(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Compiles, normalizes and deduplicates every file under `path`. Output is
/// sorted by id; per-file failures become rejections, not errors.
pub fn ingest_dir(path: &Path) -> Result<(Vec<CorpusEntry>, Vec<Rejection>), CorpusError> {
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            e.into_io_error()
                .unwrap_or_else(|| std::io::Error::other("directory walk failed"))
        })?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    let mut sources = Vec::with_capacity(files.len());
    for f in files {
        let bytes = std::fs::read(&f)?;
        sources.push((f.display().to_string(), bytes));
    }
    Ok(ingest_sources(
        sources.iter().map(|(p, b)| (p.as_str(), b.as_slice())),
    ))
}

/// As `ingest_dir`, over in-memory (name, bytes) pairs.
pub fn ingest_sources<'a>(
    sources: impl IntoIterator<Item = (&'a str, &'a [u8])>,
) -> (Vec<CorpusEntry>, Vec<Rejection>) {
    let mut entries: Vec<CorpusEntry> = Vec::new();
    let mut rejections = Vec::new();
    for (name, bytes) in sources {
        let text = match std::str::from_utf8(bytes) {
            Ok(t) => t,
            Err(_) => {
                rejections.push(Rejection {
                    path: name.to_string(),
                    reason: "not UTF-8".into(),
                });
                continue;
            }
        };
        match compile(text) {
            Ok(ast) => entries.push(CorpusEntry::from_ast(&ast)),
            Err(e) => rejections.push(Rejection {
                path: name.to_string(),
                reason: e.to_string(),
            }),
        }
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    entries.dedup_by(|a, b| a.id == b.id);
    (entries, rejections)
}

/// `[START] ids [END]` then padding to `max_seq_len`. Returns `None` when the
/// content does not fit.
pub fn frame_sequence(content: &[u32], max_seq_len: usize) -> Option<Vec<u32>> {
    if content.len() + 2 > max_seq_len {
        return None;
    }
    let mut out = Vec::with_capacity(max_seq_len);
    out.push(START);
    out.extend_from_slice(content);
    out.push(END);
    out.resize(max_seq_len, PAD);
    Some(out)
}

/// Encodes every entry to a framed sequence. Kernels that do not fit are
/// truncated at a token boundary and re-checked; a truncation that no longer
/// compiles is dropped with a rejection record.
pub fn tokenize_corpus(
    entries: Vec<CorpusEntry>,
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<(Vec<CorpusEntry>, Vec<Rejection>), CorpusError> {
    let mut kept = Vec::with_capacity(entries.len());
    let mut rejected = Vec::new();
    let budget = max_seq_len.saturating_sub(2);
    for mut e in entries {
        let ids = vocab.encode(&e.source)?;
        if ids.len() <= budget {
            e.token_ids = frame_sequence(&ids, max_seq_len).expect("fits");
            kept.push(e);
            continue;
        }
        let cut = vocab.decode(&ids[..budget])?;
        match compile(&cut) {
            Ok(ast) => {
                let source = render_source(&ast);
                let ids = vocab.encode(&source)?;
                match frame_sequence(&ids, max_seq_len) {
                    Some(seq) => {
                        kept.push(CorpusEntry {
                            id: hash_hex(&source),
                            features: extract_all(&ast),
                            source,
                            token_ids: seq,
                        });
                    }
                    None => rejected.push(Rejection {
                        path: e.id,
                        reason: "truncated kernel re-encodes past max_seq_len".into(),
                    }),
                }
            }
            Err(err) => rejected.push(Rejection {
                path: e.id,
                reason: format!(
                    "longer than {max_seq_len} tokens; truncation does not compile ({})",
                    short(&err)
                ),
            }),
        }
    }
    Ok((kept, rejected))
}

fn short(e: &CompileError) -> String {
    match e {
        CompileError::Parse(_) => "parse".into(),
        CompileError::Semantic(s) => s.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedInstance {
    /// `[START] prefix [HOLE] suffix [END]`, unpadded.
    pub input_ids: Vec<u32>,
    pub hole_index: usize,
    pub hidden_length: usize,
    /// The tokens the hole replaced.
    pub hidden: Vec<u32>,
    pub target_id: u32,
    pub features: FeatureVector,
    pub space: FeatureSpace,
}

impl MaskedInstance {
    /// Puts the hidden tokens back, giving `[START] content [END]`.
    pub fn reconstruct(&self) -> Vec<u32> {
        let mut out = self.input_ids[..self.hole_index].to_vec();
        out.extend_from_slice(&self.hidden);
        out.extend_from_slice(&self.input_ids[self.hole_index + 1..]);
        out
    }
}

/// Replaces `tokens[index..index + len]` with a single `[HOLE]`.
pub fn insert_hole(tokens: &[u32], index: usize, len: usize) -> (Vec<u32>, Vec<u32>) {
    let mut out = Vec::with_capacity(tokens.len() + 1 - len);
    out.extend_from_slice(&tokens[..index]);
    out.push(HOLE);
    out.extend_from_slice(&tokens[index + len..]);
    (out, tokens[index..index + len].to_vec())
}

/// Draws a hole over `n` content tokens: start uniform over `0..=n`, length
/// uniform over `0..=min(floor(fraction * n), n - start)`.
pub fn draw_hole<R: Rng + ?Sized>(n: usize, max_hole_fraction: f64, rng: &mut R) -> (usize, usize) {
    let index = rng.gen_range(0..=n);
    let bound = ((max_hole_fraction * n as f64).floor() as usize).min(n - index);
    (index, rng.gen_range(0..=bound))
}

/// Places one hole in `content` (tokens without meta framing) and wraps the
/// result as model input.
pub fn mask_content<R: Rng + ?Sized>(
    content: &[u32],
    max_hole_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<u32>, usize, Vec<u32>), CorpusError> {
    if content.is_empty() {
        return Err(CorpusError::KernelTooShort);
    }
    let (index, len) = draw_hole(content.len(), max_hole_fraction, rng);
    let (holed, hidden) = insert_hole(content, index, len);
    let mut input = Vec::with_capacity(holed.len() + 2);
    input.push(START);
    input.extend(holed);
    input.push(END);
    Ok((input, index + 1, hidden))
}

/// One training instance from a tokenized entry. `space` of `None` picks a
/// feature space uniformly.
pub fn make_masked_instance<R: Rng + ?Sized>(
    entry: &CorpusEntry,
    rng: &mut R,
    space: Option<FeatureSpace>,
    max_hole_fraction: f64,
) -> Result<MaskedInstance, CorpusError> {
    let space = space.unwrap_or_else(|| FeatureSpace::ALL[rng.gen_range(0..3)]);
    let (input_ids, hole_index, hidden) = mask_content(entry.content(), max_hole_fraction, rng)?;
    Ok(MaskedInstance {
        target_id: hidden.first().copied().unwrap_or(ENDHOLE),
        hidden_length: hidden.len(),
        hidden,
        input_ids,
        hole_index,
        features: entry.features.get(space).clone(),
        space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::build_vocab;

    #[test]
    fn hole_example() {
        let v = Vocabulary::base();
        let toks = v.encode("kernel void k ( ) { }").unwrap();
        let (holed, hidden) = insert_hole(&toks, 3, 2);
        assert_eq!(v.decode(&holed).unwrap(), "kernel void k [HOLE] { }");
        assert_eq!(hidden[0], v.id("(").unwrap());
        let (_, hidden) = insert_hole(&toks, 5, 0);
        assert!(hidden.is_empty());
    }

    #[test]
    fn ingest_and_dedup() {
        let srcs: Vec<(&str, &[u8])> = vec![
            ("a", b"kernel void k(global int* x){ x[0] = 1; }"),
            ("b", b"kernel void other(global int* y){ y[0] = 1; }"),
            ("c", b"kernel void k(global int* x){ x[0] = ; }"),
        ];
        let (entries, rejected) = ingest_sources(srcs);
        assert_eq!(entries.len(), 1);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].path, "c");
    }

    #[test]
    fn instances_respect_bounds_and_reconstruct() {
        let (entries, _) = ingest_sources([(
            "a",
            b"kernel void k(global int* a){ int i = get_global_id(0); a[i] = a[i] + 1; }".as_slice(),
        )]);
        let vocab = build_vocab(&[&entries[0].source], 1).unwrap();
        let (entries, _) = tokenize_corpus(entries, &vocab, 64).unwrap();
        let e = &entries[0];
        let n = e.content().len();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let m = make_masked_instance(e, &mut rng, None, DEFAULT_MAX_HOLE_FRACTION).unwrap();
            assert!(m.hidden_length <= (0.9 * n as f64).floor() as usize);
            assert_eq!(m.input_ids.iter().filter(|&&t| t == HOLE).count(), 1);
            assert_eq!(content_of(&m.reconstruct()), e.content());
            if m.hidden_length == 0 {
                assert_eq!(m.target_id, ENDHOLE);
            }
        }
    }

    #[test]
    fn overlong_kernels_are_dropped() {
        let (entries, _) = ingest_sources([(
            "a",
            b"kernel void k(global int* a){ int i = get_global_id(0); a[i] = a[i] + 1; }".as_slice(),
        )]);
        let (kept, rejected) = tokenize_corpus(entries, &Vocabulary::base(), 10).unwrap();
        assert!(kept.is_empty());
        assert_eq!(rejected.len(), 1);
    }
}
