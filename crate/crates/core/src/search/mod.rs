//! Feature-targeted beam search over an infill policy.

mod policy;

pub use policy::{
    CorpusReplayPolicy, FillRequest, FixedPolicy, InfillPolicy, LiteralMutationPolicy, ModelPolicy,
    MUTATION_MOVES,
};

use crate::corpus::{content_of, draw_hole, hash_hex, insert_hole, CorpusError, DEFAULT_MAX_HOLE_FRACTION};
use crate::features::{distance, extract, relative_proximity, FeatureError, FeatureVector};
use crate::kcl::compile;
use crate::model::stream_rng;
use crate::tokenizer::{TokenizerError, Vocabulary, END, START};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("no compiling candidate in generation 0 ({} samples)", .workload.len())]
    NoCompilingCandidate { workload: Vec<String> },
    #[error("invalid beam configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub workload_size: usize,
    pub beam_width: usize,
    pub replace_prob: f64,
    pub max_depth: usize,
    pub temperature: f64,
    pub seed_text: String,
    pub max_hole_fraction: f64,
    pub seed: u64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            workload_size: 2048,
            beam_width: 32,
            replace_prob: 0.15,
            max_depth: 50,
            temperature: 0.8,
            seed_text: "kernel void [HOLE]".into(),
            max_hole_fraction: DEFAULT_MAX_HOLE_FRACTION,
            seed: 0,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.into()));
        if self.beam_width == 0 || self.beam_width > self.workload_size {
            return bad("need 1 <= beam_width <= workload_size");
        }
        if !(0.0..=1.0).contains(&self.replace_prob) {
            return bad("replace_prob must lie in [0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.max_hole_fraction > 0.0 && self.max_hole_fraction <= 1.0) {
            return bad("max_hole_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub source: String,
    /// Content tokens, without `[START]` / `[END]`.
    pub token_ids: Vec<u32>,
    pub compiles: bool,
    pub features: Option<FeatureVector>,
    pub distance: Option<f64>,
    pub generation: usize,
    pub parent_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Candidate,
    pub trajectory: Vec<Candidate>,
    pub generations_used: usize,
    pub exact_match: bool,
    /// Global best distance after each generation.
    pub best_per_generation: Vec<f64>,
    pub inferences: usize,
}

fn by_distance(a: &Candidate, b: &Candidate) -> Ordering {
    let da = a.distance.unwrap_or(f64::INFINITY);
    let db = b.distance.unwrap_or(f64::INFINITY);
    da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
}

/// The `k` nearest candidates (ties by id), each slot independently replaced
/// with probability `p` by a uniformly drawn candidate not currently selected.
pub fn select_topk<R: Rng + ?Sized>(
    candidates: &[Candidate],
    k: usize,
    p: f64,
    rng: &mut R,
) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| by_distance(&candidates[a], &candidates[b]));
    if candidates.len() <= k {
        return order.into_iter().map(|i| candidates[i].clone()).collect();
    }
    let (chosen, rest) = order.split_at(k);
    let mut chosen = chosen.to_vec();
    let mut pool = rest.to_vec();
    for slot in 0..k {
        if rng.gen::<f64>() < p && !pool.is_empty() {
            let j = rng.gen_range(0..pool.len());
            std::mem::swap(&mut chosen[slot], &mut pool[j]);
        }
    }
    chosen.into_iter().map(|i| candidates[i].clone()).collect()
}

/// `n_variants` model inputs, each `content` with one random hole.
pub fn place_random_holes<R: Rng + ?Sized>(
    content: &[u32],
    n_variants: usize,
    max_hole_fraction: f64,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>, SearchError> {
    if content.is_empty() {
        return Err(CorpusError::KernelTooShort.into());
    }
    Ok((0..n_variants)
        .map(|_| {
            let (index, len) = draw_hole(content.len(), max_hole_fraction, rng);
            let (holed, _) = insert_hole(content, index, len);
            let mut input = Vec::with_capacity(holed.len() + 2);
            input.push(START);
            input.extend(holed);
            input.push(END);
            input
        })
        .collect())
}

/// Turns a fill into a candidate, compiling and measuring it.
pub fn evaluate_fill(
    vocab: &Vocabulary,
    tokens: &[u32],
    terminated: bool,
    target: &FeatureVector,
    generation: usize,
    index: usize,
    parent_id: Option<String>,
) -> Candidate {
    let content = content_of(tokens).to_vec();
    let source = vocab.decode(&content).unwrap_or_default();
    let ast = if terminated { compile(&source).ok() } else { None };
    let features = ast.map(|a| extract(target.space, &a));
    let distance = features.as_ref().map(|f| distance(f, target).expect("same space"));
    Candidate {
        id: hash_hex(&format!("{generation}/{index}/{source}")),
        source,
        token_ids: content,
        compiles: features.is_some(),
        features,
        distance,
        generation,
        parent_id,
    }
}

/// Runs the search. Fill `i` of generation `g` draws from RNG stream
/// `g * W + i`; selection and hole placement share one further stream.
pub fn run_search<P: InfillPolicy + ?Sized>(
    policy: &P,
    vocab: &Vocabulary,
    target: &FeatureVector,
    cfg: &BeamConfig,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let w = cfg.workload_size;
    let mut control = stream_rng(cfg.seed, u64::MAX);
    let mut seed_input = vec![START];
    seed_input.extend(vocab.encode_template(&cfg.seed_text)?);
    seed_input.push(END);

    // (input, parent content, parent id)
    let mut workload: Vec<(Vec<u32>, Option<Vec<u32>>, Option<String>)> =
        vec![(seed_input, None, None); w];
    let mut best: Option<Candidate> = None;
    let mut trajectory = Vec::new();
    let mut best_per_generation = Vec::new();
    let mut survivors: Vec<Candidate> = Vec::new();
    let mut generations_used = 0;

    for generation in 0..cfg.max_depth {
        generations_used += 1;
        let mut compiled = Vec::new();
        let mut failed = Vec::new();
        for (i, (input, parent, parent_id)) in workload.iter().enumerate() {
            let mut rng = stream_rng(cfg.seed, (generation * w + i) as u64);
            let req = FillRequest {
                input,
                parent: parent.as_deref(),
                target: Some(target),
            };
            let out = policy.fill(&req, &mut rng);
            let cand = evaluate_fill(vocab, &out.tokens, out.terminated, target, generation, i, parent_id.clone());
            if cand.compiles {
                compiled.push(cand);
            } else if generation == 0 {
                failed.push(cand.source);
            }
        }
        if generation == 0 && compiled.is_empty() {
            return Err(SearchError::NoCompilingCandidate { workload: failed });
        }
        for c in &compiled {
            if best.as_ref().map_or(true, |b| c.distance < b.distance) {
                best = Some(c.clone());
            }
        }
        let best_d = best.as_ref().and_then(|b| b.distance).unwrap_or(f64::INFINITY);
        best_per_generation.push(best_d);
        if !compiled.is_empty() {
            survivors = select_topk(&compiled, cfg.beam_width, cfg.replace_prob, &mut control);
        }
        trajectory.extend(compiled);
        if best_d == 0.0 || generation + 1 == cfg.max_depth {
            break;
        }
        // A generation without compiling output re-holes the previous survivors.
        let per = w.div_ceil(survivors.len());
        workload.clear();
        for s in &survivors {
            for input in place_random_holes(&s.token_ids, per, cfg.max_hole_fraction, &mut control)? {
                workload.push((input, Some(s.token_ids.clone()), Some(s.id.clone())));
            }
        }
        workload.truncate(w);
    }

    let best = best.expect("generation 0 produced a compiling candidate");
    Ok(SearchResult {
        exact_match: best.distance == Some(0.0),
        best,
        trajectory,
        inferences: generations_used * w,
        generations_used,
        best_per_generation,
    })
}

/// One JSON record per trajectory candidate, then a summary record.
pub fn result_records(result: &SearchResult, target: &FeatureVector) -> Vec<serde_json::Value> {
    let mut out: Vec<serde_json::Value> = result
        .trajectory
        .iter()
        .map(|c| serde_json::to_value(c).expect("serializable"))
        .collect();
    let proximity = result
        .best
        .features
        .as_ref()
        .and_then(|f| relative_proximity(f, target).ok());
    out.push(json!({
        "summary": {
            "target": target,
            "best_id": result.best.id,
            "best_source": result.best.source,
            "best_distance": result.best.distance,
            "proximity": proximity,
            "generations": result.generations_used,
            "inferences": result.inferences,
            "exact_match": result.exact_match,
            "best_per_generation": result.best_per_generation,
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cand(id: &str, d: f64) -> Candidate {
        Candidate {
            id: id.into(),
            source: String::new(),
            token_ids: vec![],
            compiles: true,
            features: None,
            distance: Some(d),
            generation: 0,
            parent_id: None,
        }
    }

    #[test]
    fn topk_deterministic_at_p0() {
        let cs: Vec<_> = [("e", 3.0), ("b", 1.0), ("a", 1.0), ("c", 0.5), ("d", 9.0)]
            .iter()
            .map(|(i, d)| cand(i, *d))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ids: Vec<_> = select_topk(&cs, 3, 0.0, &mut rng)
            .into_iter()
            .map(|c| c.id)
            .collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(select_topk(&cs[..2], 3, 0.5, &mut rng).len(), 2);
    }

    #[test]
    fn topk_p1_has_no_duplicates() {
        let cs: Vec<_> = (0..20).map(|i| cand(&format!("{i:02}"), i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut ids: Vec<_> = select_topk(&cs, 5, 1.0, &mut rng)
                .into_iter()
                .map(|c| c.id)
                .collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 5);
        }
    }

    #[test]
    fn fixed_policy_matches_at_generation_zero() {
        let vocab = Vocabulary::base();
        let text = "kernel void k(global int* a) { a[get_global_id(0)] = 1; }";
        let target = extract(FeatureSpace::IrCount, &compile(text).unwrap());
        let policy = FixedPolicy {
            content: vocab.encode(text).unwrap(),
        };
        let cfg = BeamConfig {
            workload_size: 4,
            beam_width: 2,
            ..BeamConfig::default()
        };
        let r = run_search(&policy, &vocab, &target, &cfg).unwrap();
        assert!(r.exact_match);
        assert_eq!(r.generations_used, 1);
        assert_eq!(r.inferences, 4);
    }

    #[test]
    fn non_compiling_generation_zero_is_an_error() {
        let vocab = Vocabulary::base();
        let policy = FixedPolicy {
            content: vocab.encode("kernel void").unwrap(),
        };
        let cfg = BeamConfig {
            workload_size: 3,
            beam_width: 1,
            ..BeamConfig::default()
        };
        let target = FeatureVector::zeros(FeatureSpace::Syntax8);
        match run_search(&policy, &vocab, &target, &cfg) {
            Err(SearchError::NoCompilingCandidate { workload }) => assert_eq!(workload.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
