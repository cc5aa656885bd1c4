//! Golden kernels with hand-counted SYNTAX8 vectors, and a scanner that
//! recounts the IR spaces from the printed listing.

use benchsynth::ir::{lower_to_ir, run_dce, IrFunction};
use benchsynth::kcl::compile;
use std::collections::HashSet;

pub const SUITE: [(&str, [f64; 8]); 20] = [
    (
        "kernel void k(global int* a){ int i=get_global_id(0); a[i]=a[i]+1; }",
        [1.0, 0.0, 0.0, 2.0, 0.0, 2.0, 0.5, 1.0],
    ),
    ("kernel void k(){ }", [0.0; 8]),
    (
        "kernel void k(global int* a, int n){ int i = get_global_id(0); if (i < n) { atomic_add(&a[i], 1); } }",
        [0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ),
    (
        "kernel void k(global float* a, global float* b, global float* c){ int i = get_global_id(0); c[i] = a[i] * b[i] + c[i]; }",
        [2.0, 0.0, 0.0, 4.0, 0.0, 4.0, 0.5, 1.0],
    ),
    (
        "kernel void k(global int* a, int n){ for (int i = 0; i < n; i = i + 1) { a[i] = a[i] * 2; } }",
        [2.0, 1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0],
    ),
    (
        "kernel void k(global float* a, local float* t){ int l = get_local_id(0); int g = get_global_id(0); t[l] = a[g]; barrier(); a[g] = t[l] + t[0]; }",
        [1.0, 0.0, 0.0, 5.0, 3.0, 2.0, 0.2, 0.4],
    ),
    (
        "kernel void k(global float* a){ int i = get_global_id(0); float x = -a[i]; a[i] = -2.0 * x; }",
        [2.0, 0.0, 0.0, 2.0, 0.0, 2.0, 1.0, 1.0],
    ),
    (
        "kernel void k(global int* a, global int* b){ int g = get_global_id(0); b[g + 1] = a[g - 1] + a[2 + g]; }",
        [4.0, 0.0, 0.0, 3.0, 0.0, 3.0, 4.0 / 3.0, 1.0],
    ),
    (
        "kernel void k(global int* a){ int g = get_global_id(0); a[g * 2] = a[g * 2 + 1]; }",
        [3.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.5, 0.0],
    ),
    (
        "kernel void k(global int* a, int n){ int g = get_global_id(0); if (g < n) { a[g] = 1; } else { a[0] = 0; } }",
        [0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 0.5],
    ),
    (
        "kernel void k(global float* m, int n){ for (int i = 0; i < n; i = i + 1) { for (int j = 0; j < n; j = j + 1) { m[i * n + j] = 0.0; } } }",
        [4.0, 2.0, 0.0, 1.0, 0.0, 0.0, 4.0, 0.0],
    ),
    (
        "kernel void k(global int* a, int n){ int g = get_global_id(0); int q = g / 4; int r = g % 4; a[g] = q * 4 + r - n; }",
        [5.0, 0.0, 0.0, 1.0, 0.0, 1.0, 5.0, 1.0],
    ),
    (
        "kernel void k(global int* a, int n){ int i = get_global_id(0); i = n; a[i] = 0; }",
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    ),
    (
        "kernel void k(global int* a){ for (int i = get_global_id(0); i < 8; i = i + 1) { a[i] = 0; } }",
        [1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0],
    ),
    (
        "kernel void k(global int* a, int n){ int i = n; if (n > 0) { int i = get_global_id(0); a[i] = 1; } a[i] = 2; }",
        [0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 0.5],
    ),
    (
        "kernel void k(global int* c, global int* a){ int g = get_global_id(0); atomic_add(&c[a[g] % 16], a[g] + 1); }",
        [2.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0, 1.0],
    ),
    (
        "kernel void k(global float* a, global int* b){ int g = get_global_id(0); bool p = b[g] >= 3; if (p) { a[g] = (float)b[g] / 2.0; } }",
        [1.0, 1.0, 0.0, 3.0, 0.0, 3.0, 1.0 / 3.0, 1.0],
    ),
    (
        "kernel void k(global int* a){ int t = 3 + 4; int g = get_global_id(0); a[g] = g; }",
        [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0],
    ),
    (
        "kernel void k(global int* a, int n){ int g = get_global_id(0); if (g == 0) { a[0] = n; } if (g != n) { a[g] = a[n - g]; } }",
        [1.0, 2.0, 0.0, 3.0, 0.0, 1.0, 1.0 / 3.0, 1.0 / 3.0],
    ),
    (
        "kernel void k(global float* in, global float* out, local float* s, global int* cnt, int n){ int l = get_local_id(0); float acc = 0.0; for (int j = 0; j < n; j = j + 1) { acc = acc + in[j * n + l]; } s[l] = acc; barrier(); if (l == 0) { out[get_global_id(0)] = s[0] + s[1]; } atomic_add(&cnt[0], 1); }",
        [5.0, 2.0, 1.0, 5.0, 3.0, 1.0, 1.0, 0.2],
    ),
];

pub const KINDS: [&str; 16] = [
    "add", "sub", "mul", "div", "rem", "cmp", "load", "store", "alloca", "br", "condbr", "phi",
    "call", "ret", "cast", "gep",
];

pub struct Scanned {
    pub kinds: Vec<String>,
    pub blocks: usize,
    pub block_lens: Vec<usize>,
    pub succ1: usize,
    pub succ2: usize,
    pub phi_args: usize,
    pub consts: usize,
}

pub fn is_const(tok: &str) -> bool {
    tok == "true" || tok == "false" || tok.parse::<f64>().is_ok()
}

/// Reads kind, block and operand facts back out of the IR listing.
pub fn scan(text: &str) -> Scanned {
    let mut s = Scanned {
        kinds: Vec::new(),
        blocks: 0,
        block_lens: Vec::new(),
        succ1: 0,
        succ2: 0,
        phi_args: 0,
        consts: 0,
    };
    for line in text.lines() {
        if !line.starts_with(' ') {
            assert!(line.ends_with(':'), "{line}");
            s.blocks += 1;
            s.block_lens.push(0);
            continue;
        }
        *s.block_lens.last_mut().unwrap() += 1;
        let mut body = line.trim();
        if let Some((_, rest)) = body.split_once(" = ") {
            body = rest;
        }
        let (kind, rest) = body.split_once(' ').unwrap_or((body, ""));
        s.kinds.push(kind.to_string());
        let toks: Vec<&str> = rest
            .split([' ', ',', '[', ']', '(', ')'])
            .filter(|t| !t.is_empty())
            .collect();
        match kind {
            "br" => s.succ1 += 1,
            "condbr" => {
                let targets: HashSet<&str> = toks[1..].iter().copied().collect();
                if targets.len() == 2 {
                    s.succ2 += 1;
                } else {
                    s.succ1 += 1;
                }
                s.consts += is_const(toks[0]) as usize;
            }
            "phi" => {
                s.phi_args += toks.len() / 2;
                s.consts += toks.iter().step_by(2).filter(|t| is_const(t)).count();
            }
            "cast" => s.consts += is_const(toks[1]) as usize,
            _ => s.consts += toks.iter().filter(|t| is_const(t)).count(),
        }
    }
    s
}

pub fn oracle_ircount(s: &Scanned) -> Vec<f64> {
    let mut v: Vec<f64> = KINDS
        .iter()
        .map(|k| s.kinds.iter().filter(|x| x == k).count() as f64)
        .collect();
    v.extend([s.kinds.len() as f64, s.blocks as f64, 1.0]);
    v
}

pub fn oracle_irphase(s: &Scanned) -> Vec<f64> {
    let n = |names: &[&str]| s.kinds.iter().filter(|k| names.contains(&k.as_str())).count() as f64;
    vec![
        n(&["phi"]),
        s.phi_args as f64,
        n(&["load", "store"]),
        n(&["br", "condbr"]),
        s.blocks as f64,
        s.succ1 as f64,
        s.succ2 as f64,
        n(&["add", "sub", "mul", "div", "rem"]),
        n(&["cmp"]),
        s.consts as f64,
        s.kinds.len() as f64,
        *s.block_lens.iter().max().unwrap() as f64,
    ]
}

pub fn optimized(src: &str) -> IrFunction {
    run_dce(&lower_to_ir(&compile(src).unwrap()))
}

/// Every pure result in the listing is used somewhere.
pub fn no_dead_values(text: &str) {
    let defined: Vec<String> = text
        .lines()
        .filter_map(|l| l.trim().split_once(" = ").map(|(v, _)| v.to_string()))
        .collect();
    for v in defined {
        let used = text.lines().any(|l| {
            let rhs = l.trim().split_once(" = ").map_or(l.trim(), |(_, r)| r);
            rhs.split([' ', ',', '[', ']', '(', ')']).any(|t| t == v)
        });
        let pure = !text.lines().any(|l| l.trim().starts_with(&format!("{v} = call")));
        assert!(used || !pure, "{v} is dead in\n{text}");
    }
}
