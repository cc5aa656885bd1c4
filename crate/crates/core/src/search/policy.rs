//! Infill policies: the trained model and deterministic stand-ins.

use crate::corpus::CorpusEntry;
use crate::features::FeatureVector;
use crate::kcl::{compile, Stmt};
use crate::kcl::ast::Expr;
use crate::model::{FillOutcome, InfillModel};
use crate::tokenizer::{Vocabulary, END, START};
use crate::Scalar;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Mutex;

pub struct FillRequest<'a> {
    /// `[START] ... [HOLE] ... [END]`.
    pub input: &'a [u32],
    /// Content tokens of the candidate this input was re-holed from.
    pub parent: Option<&'a [u32]>,
    pub target: Option<&'a FeatureVector>,
}

pub trait InfillPolicy {
    fn fill(&self, req: &FillRequest<'_>, rng: &mut ChaCha8Rng) -> FillOutcome;
}

fn framed(content: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(content.len() + 2);
    out.push(START);
    out.extend_from_slice(content);
    out.push(END);
    out
}

/// Samples the model. Failures (bad input shape) count as an unterminated,
/// hence non-compiling, fill.
pub struct ModelPolicy<'m, T: Scalar> {
    pub model: &'m InfillModel<T>,
    pub temperature: f64,
}

impl<T: Scalar> InfillPolicy for ModelPolicy<'_, T> {
    fn fill(&self, req: &FillRequest<'_>, rng: &mut ChaCha8Rng) -> FillOutcome {
        self.model
            .fill_hole(req.input, req.target, self.temperature, rng, None)
            .unwrap_or_else(|_| FillOutcome {
                tokens: req.input.to_vec(),
                terminated: false,
                insertions: 0,
            })
    }
}

/// Always completes to the same content.
pub struct FixedPolicy {
    pub content: Vec<u32>,
}

impl InfillPolicy for FixedPolicy {
    fn fill(&self, _req: &FillRequest<'_>, _rng: &mut ChaCha8Rng) -> FillOutcome {
        FillOutcome {
            tokens: framed(&self.content),
            terminated: true,
            insertions: self.content.len(),
        }
    }
}

/// Returns a uniformly chosen corpus kernel, ignoring the input.
pub struct CorpusReplayPolicy<'c> {
    pub entries: &'c [CorpusEntry],
}

impl InfillPolicy for CorpusReplayPolicy<'_> {
    fn fill(&self, _req: &FillRequest<'_>, rng: &mut ChaCha8Rng) -> FillOutcome {
        let e = &self.entries[rng.gen_range(0..self.entries.len())];
        FillOutcome {
            tokens: framed(e.content()),
            terminated: true,
            insertions: e.content().len(),
        }
    }
}

/// A kernel whose state `(x, y, w)` is stored in three integer literals and
/// whose SYNTAX8 vector is exactly `[x, y, w, 0, 0, 0, 0, 0]`: `x` additions,
/// `y` comparisons and `w` atomics, with no plain memory access.
///
/// Each fill of a parent applies the next move of a fixed cycle: identity,
/// then +1 / -1 on each coordinate (a move below zero acts as identity). The
/// cycle position is tracked per parent, so `7` consecutive fills of one
/// parent cover its whole neighbourhood. Fills with no parent produce `start`.
pub struct LiteralMutationPolicy {
    pub vocab: Vocabulary,
    pub start: [i64; 3],
    calls: Mutex<HashMap<Vec<u32>, usize>>,
}

pub const MUTATION_MOVES: [[i64; 3]; 7] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

impl LiteralMutationPolicy {
    pub fn new(vocab: Vocabulary, start: [i64; 3]) -> Self {
        LiteralMutationPolicy {
            vocab,
            start,
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn render(state: [i64; 3]) -> String {
        let [x, y, w] = state;
        let mut s = format!(
            "kernel void k(global int* a, int n) {{ int cx = {x}; int cy = {y}; int cw = {w}; int t = n"
        );
        for _ in 0..x {
            s.push_str(" + n");
        }
        s.push(';');
        for _ in 0..y {
            s.push_str(" if (n < 1) { t = 0; }");
        }
        for _ in 0..w {
            s.push_str(" atomic_add(&a[0], 1);");
        }
        let _ = write!(s, " }}");
        s
    }

    /// Reads `(x, y, w)` back from a rendered kernel.
    pub fn parse_state(text: &str) -> Option<[i64; 3]> {
        let ast = compile(text).ok()?;
        let mut out = [0i64; 3];
        for (slot, name) in ["cx", "cy", "cw"].iter().enumerate() {
            out[slot] = ast.body.iter().find_map(|s| match s {
                Stmt::Decl {
                    name: n,
                    init: Expr::Int(v),
                    ..
                } if n == name => Some(*v),
                _ => None,
            })?;
        }
        Some(out)
    }

    /// Neighbours of a state under the move cycle, in cycle order.
    pub fn neighbours(state: [i64; 3]) -> Vec<[i64; 3]> {
        MUTATION_MOVES
            .iter()
            .map(|m| {
                let next = [state[0] + m[0], state[1] + m[1], state[2] + m[2]];
                if next.iter().any(|&v| v < 0) {
                    state
                } else {
                    next
                }
            })
            .collect()
    }
}

impl InfillPolicy for LiteralMutationPolicy {
    fn fill(&self, req: &FillRequest<'_>, _rng: &mut ChaCha8Rng) -> FillOutcome {
        let state = match req.parent {
            None => self.start,
            Some(parent) => {
                let text = self.vocab.decode(parent).unwrap_or_default();
                let state = Self::parse_state(&text).unwrap_or(self.start);
                let mut calls = self.calls.lock().expect("unpoisoned");
                let n = calls.entry(parent.to_vec()).or_insert(0);
                let next = Self::neighbours(state)[*n % MUTATION_MOVES.len()];
                *n += 1;
                next
            }
        };
        let content = self
            .vocab
            .encode(&Self::render(state))
            .expect("rendered kernel uses the base alphabet");
        FillOutcome {
            insertions: content.len(),
            tokens: framed(&content),
            terminated: true,
        }
    }
}
