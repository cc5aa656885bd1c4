//! Vocabulary construction and lossless encode/decode of KCL text.
//!
//! Keywords and punctuation are always whole tokens. Identifiers that occur
//! at least `word_freq_threshold` times in the corpus become whole tokens,
//! everything else (including every literal) is spelled character by
//! character. Decoding targets whitespace-normalized text: lexemes joined by
//! single spaces.

use crate::kcl::lexer::{lex, TokenKind, KEYWORDS, PUNCTUATION};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const START: u32 = 0;
pub const END: u32 = 1;
pub const PAD: u32 = 2;
pub const HOLE: u32 = 3;
pub const ENDHOLE: u32 = 4;

pub const META_TOKENS: [&str; 5] = ["[START]", "[END]", "[PAD]", "[HOLE]", "[ENDHOLE]"];

/// Characters that may appear inside identifiers and literals.
pub const WORD_ALPHABET: &str =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.";

pub const DEFAULT_WORD_FREQ_THRESHOLD: usize = 10;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unencodable byte {byte:?} at offset {offset}")]
    UnknownByte { byte: char, offset: usize },
    #[error("token id {0} out of range")]
    BadId(u32),
    #[error("malformed vocabulary line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Meta tokens, keywords, punctuation and the word alphabet, with no
    /// corpus-derived words.
    pub fn base() -> Self {
        let mut v = Vocabulary {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
        };
        for t in META_TOKENS {
            v.push(t);
        }
        for t in KEYWORDS.iter().chain(PUNCTUATION) {
            v.push(t);
        }
        for c in WORD_ALPHABET.chars() {
            v.push(&c.to_string());
        }
        v
    }

    fn push(&mut self, token: &str) {
        if !self.token_to_id.contains_key(token) {
            self.token_to_id
                .insert(token.to_string(), self.id_to_token.len() as u32);
            self.id_to_token.push(token.to_string());
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn is_meta(id: u32) -> bool {
        id <= ENDHOLE
    }

    /// Encodes plain source text. Never produces meta tokens: a `[` is always
    /// the bracket punctuation.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if is_word_char(c) {
                let start = i;
                while i < bytes.len() && is_word_char(bytes[i] as char) {
                    i += 1;
                }
                let word = &text[start..i];
                let whole = if c.is_ascii_digit() || c == '.' {
                    None
                } else {
                    self.id(word)
                };
                match whole {
                    Some(id) => out.push(id),
                    None => {
                        for ch in word.chars() {
                            out.push(self.id(ch.encode_utf8(&mut [0; 4])).expect("alphabet"));
                        }
                    }
                }
            } else {
                let rest = &text[i..];
                match PUNCTUATION.iter().find(|p| rest.starts_with(**p)) {
                    Some(p) => {
                        out.push(self.id(p).expect("punctuation"));
                        i += p.len();
                    }
                    None => {
                        let byte = rest.chars().next().unwrap_or('\u{0}');
                        return Err(TokenizerError::UnknownByte { byte, offset: i });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Like `encode`, but meta token names (`[HOLE]`, ...) written literally
    /// in the text become their meta ids.
    pub fn encode_template(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::new();
        let mut rest = text;
        let mut offset = 0;
        loop {
            let next = META_TOKENS
                .iter()
                .enumerate()
                .filter_map(|(id, m)| rest.find(m).map(|pos| (pos, id, m.len())))
                .min();
            match next {
                Some((pos, id, len)) => {
                    out.extend(self.encode(&rest[..pos]).map_err(|e| shift(e, offset))?);
                    out.push(id as u32);
                    rest = &rest[pos + len..];
                    offset += pos + len;
                }
                None => {
                    out.extend(self.encode(rest).map_err(|e| shift(e, offset))?);
                    return Ok(out);
                }
            }
        }
    }

    /// Renders ids to normalized text. PAD, START and END render as nothing;
    /// HOLE and ENDHOLE render as their names.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        let mut prev_char_piece = false;
        for &id in ids {
            let tok = self.token(id).ok_or(TokenizerError::BadId(id))?;
            if matches!(id, START | END | PAD) {
                continue;
            }
            let char_piece = tok.len() == 1 && tok.chars().all(is_word_char);
            if !out.is_empty() && !(char_piece && prev_char_piece) {
                out.push(' ');
            }
            out.push_str(tok);
            prev_char_piece = char_piece;
        }
        Ok(out)
    }

    /// `id<TAB>token` per line, meta tokens first.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.id_to_token.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{t}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let mut v = Vocabulary {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let bad = |reason: &str| TokenizerError::Format {
                line: n + 1,
                reason: reason.to_string(),
            };
            let (id, tok) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let id: usize = id.parse().map_err(|_| bad("bad id"))?;
            if id != v.id_to_token.len() {
                return Err(bad("ids must be dense and ordered"));
            }
            if v.token_to_id.contains_key(tok) {
                return Err(bad("duplicate token"));
            }
            v.push(tok);
        }
        if v.id_to_token.len() < META_TOKENS.len()
            || META_TOKENS
                .iter()
                .enumerate()
                .any(|(i, m)| v.id_to_token[i] != *m)
        {
            return Err(TokenizerError::Format {
                line: 1,
                reason: "meta tokens must occupy ids 0-4".into(),
            });
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn shift(e: TokenizerError, by: usize) -> TokenizerError {
    match e {
        TokenizerError::UnknownByte { byte, offset } => TokenizerError::UnknownByte {
            byte,
            offset: offset + by,
        },
        other => other,
    }
}

/// Builds the vocabulary over a corpus of kernel texts. Identifiers with at
/// least `word_freq_threshold` occurrences become whole tokens, ordered by
/// descending count then lexicographically. `usize::MAX` disables words.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[S],
    word_freq_threshold: usize,
) -> Result<Vocabulary, TokenizerError> {
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus {
        // Texts that fail to lex contribute no words; encode will still
        // spell them out if their bytes are in the alphabet.
        if let Ok(tokens) = lex(text.as_ref()) {
            for t in tokens {
                if let TokenKind::Ident(name) = t.kind {
                    *counts.entry(name).or_default() += 1;
                }
            }
        }
    }
    let mut v = Vocabulary::base();
    let mut words: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= word_freq_threshold && w.len() > 1)
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (w, _) in words {
        v.push(&w);
    }
    Ok(v)
}

/// Lexemes joined by single spaces: the text `decode(encode(t))` reproduces.
pub fn normalize_whitespace(text: &str) -> Option<String> {
    let tokens = lex(text).ok()?;
    Some(
        tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" "),
    )
}
