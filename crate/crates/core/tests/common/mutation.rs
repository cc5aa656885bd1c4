//! Breadth-first oracle over the literal-mutation graph.

use benchsynth::features::{FeatureSpace, FeatureVector};
use benchsynth::search::{BeamConfig, LiteralMutationPolicy};
use std::collections::{HashMap, VecDeque};

pub fn syntax_target(state: [i64; 3]) -> FeatureVector {
    let mut v = vec![0.0; 8];
    for i in 0..3 {
        v[i] = state[i] as f64;
    }
    FeatureVector::new(FeatureSpace::Syntax8, v).unwrap()
}

/// Breadth-first depth from `start` to `goal` over the mutation graph.
pub fn bfs_depth(start: [i64; 3], goal: [i64; 3], limit: usize) -> Option<usize> {
    let mut seen = HashMap::from([(start, 0usize)]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let d = seen[&s];
        if s == goal {
            return Some(d);
        }
        if d == limit {
            continue;
        }
        for n in LiteralMutationPolicy::neighbours(s) {
            seen.entry(n).or_insert_with(|| {
                queue.push_back(n);
                d + 1
            });
        }
    }
    None
}

pub fn mutation_cfg(seed: u64) -> BeamConfig {
    BeamConfig {
        workload_size: 27,
        beam_width: 3,
        replace_prob: 0.0,
        max_depth: 10,
        seed,
        ..BeamConfig::default()
    }
}
