//! Maximal-munch lexer for KCL source text.

use std::fmt;

/// Reserved words. Builtins and intrinsics are reserved as well, so they can
/// never be declared as identifiers.
pub const KEYWORDS: &[&str] = &[
    "kernel",
    "void",
    "global",
    "local",
    "int",
    "float",
    "bool",
    "if",
    "else",
    "for",
    "true",
    "false",
    "barrier",
    "atomic_add",
    "get_global_id",
    "get_local_id",
];

/// Operators and punctuation, longest first so maximal munch is a prefix scan.
pub const PUNCTUATION: &[&str] = &[
    "<=", ">=", "==", "!=", "(", ")", "{", "}", "[", "]", ";", ",", "=", "+", "-", "*", "/", "%",
    "<", ">", "&", "!",
];

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(&'static str),
    Ident(String),
    Int(i64),
    Float(f64),
    Punct(&'static str),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "`{k}`"),
            TokenKind::Ident(name) => write!(f, "identifier `{name}`"),
            TokenKind::Int(v) => write!(f, "integer `{v}`"),
            TokenKind::Float(v) => write!(f, "float `{v}`"),
            TokenKind::Punct(p) => write!(f, "`{p}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
    /// The exact source text of the lexeme.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

pub fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `source` into tokens. Whitespace and `//` line comments are skipped.
pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let (tline, tcol) = (line, col);
        let kind = if is_ident_start(c) {
            while i < chars.len() && is_ident_continue(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word),
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                i += 1;
                let frac_start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i == frac_start {
                    return Err(LexError {
                        line: tline,
                        column: tcol,
                        message: "float literal needs digits after `.`".into(),
                    });
                }
            }
            if i < chars.len() && is_ident_start(chars[i]) {
                return Err(LexError {
                    line: tline,
                    column: tcol,
                    message: "malformed numeric literal".into(),
                });
            }
            let text: String = chars[start..i].iter().collect();
            if is_float {
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => TokenKind::Float(v),
                    _ => {
                        return Err(LexError {
                            line: tline,
                            column: tcol,
                            message: format!("float literal out of range: {text}"),
                        })
                    }
                }
            } else {
                match text.parse::<i64>() {
                    Ok(v) => TokenKind::Int(v),
                    Err(_) => {
                        return Err(LexError {
                            line: tline,
                            column: tcol,
                            message: format!("integer literal out of range: {text}"),
                        })
                    }
                }
            }
        } else {
            let rest = &chars[i..];
            let punct = PUNCTUATION.iter().find(|p| {
                let pc: Vec<char> = p.chars().collect();
                rest.len() >= pc.len() && rest[..pc.len()] == pc[..]
            });
            match punct {
                Some(p) => {
                    i += p.len();
                    TokenKind::Punct(p)
                }
                None => {
                    return Err(LexError {
                        line: tline,
                        column: tcol,
                        message: format!("unexpected character {c:?}"),
                    })
                }
            }
        };
        col += i - start;
        tokens.push(Token {
            kind,
            line: tline,
            column: tcol,
            text: chars[start..i].iter().collect(),
        });
    }
    Ok(tokens)
}
