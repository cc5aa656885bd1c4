use benchsynth::corpus::{insert_hole, CorpusEntry};
use benchsynth::features::{distance, extract, FeatureSpace, FeatureVector};
use benchsynth::kcl::compile;
use benchsynth::search::*;
use benchsynth::tokenizer::{Vocabulary, END, HOLE, START};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::mutation::*;

#[test]
fn literal_mutation_reaches_target_in_oracle_generations() {
    let vocab = Vocabulary::base();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10u64 {
        let start = [rng.gen_range(0..5), rng.gen_range(0..5), rng.gen_range(0..5)];
        // a goal exactly three edits away
        let (goal, depth) = loop {
            let mut goal = start;
            for _ in 0..3 {
                let i = rng.gen_range(0..3);
                goal[i] += if rng.gen_bool(0.5) { 1 } else { -1 };
            }
            if goal.iter().all(|&v| v >= 0) && bfs_depth(start, goal, 6) == Some(3) {
                break (goal, 3);
            }
        };
        let policy = LiteralMutationPolicy::new(vocab.clone(), start);
        let r = run_search(&policy, &vocab, &syntax_target(goal), &mutation_cfg(seed)).unwrap();
        assert!(r.exact_match, "seed {seed}: {start:?} -> {goal:?}");
        assert_eq!(r.best.generation, depth, "seed {seed}");
        assert!(r.best.generation <= 3);
    }
}

#[test]
fn replacement_rate_matches_p() {
    let cands: Vec<Candidate> = (0..64)
        .map(|i| Candidate {
            id: format!("{i:03}"),
            source: String::new(),
            token_ids: vec![],
            compiles: true,
            features: None,
            distance: Some(i as f64),
            generation: 0,
            parent_id: None,
        })
        .collect();
    let k = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let trials = 10_000;
    let mut replaced = 0usize;
    for _ in 0..trials {
        let sel = select_topk(&cands, k, 0.15, &mut rng);
        // slot order is preserved, so slot i still holding rank i means kept
        replaced += sel
            .iter()
            .enumerate()
            .filter(|(i, c)| c.id != format!("{i:03}"))
            .count();
    }
    let rate = replaced as f64 / (trials * k) as f64;
    assert!((rate - 0.15).abs() <= 0.01, "rate {rate}");
}

#[test]
fn place_random_holes_contract() {
    let vocab = Vocabulary::base();
    let content = vocab
        .encode("kernel void k(global float* a) { a[get_global_id(0)] = 2.0; }")
        .unwrap();
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    let va = place_random_holes(&content, 20, 0.9, &mut a).unwrap();
    let vb = place_random_holes(&content, 20, 0.9, &mut b).unwrap();
    assert_eq!(va, vb);
    for v in &va {
        assert_eq!(v[0], START);
        assert_eq!(*v.last().unwrap(), END);
        assert_eq!(v.iter().filter(|&&t| t == HOLE).count(), 1);
        let hole = v.iter().position(|&t| t == HOLE).unwrap() - 1;
        let hidden = content.len() + 1 - (v.len() - 2);
        assert!(hidden as f64 <= (0.9 * content.len() as f64).floor());
        let (again, gap) = insert_hole(&content, hole, hidden);
        assert_eq!(&again[..], &v[1..v.len() - 1]);
        let mut rebuilt = v[1..1 + hole].to_vec();
        rebuilt.extend(&gap);
        rebuilt.extend(&v[2 + hole..v.len() - 1]);
        assert_eq!(rebuilt, content);
    }
    assert!(place_random_holes(&[], 1, 0.9, &mut a).is_err());
    let w: usize = 30;
    let k = 4;
    let total: usize = (0..k).map(|_| w.div_ceil(k)).sum();
    assert!(total >= w);
}

fn replay_corpus() -> Vec<CorpusEntry> {
    let vocab = Vocabulary::base();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    (0..40)
        .map(|_| {
            let ast = benchsynth::corpus::toy::random_kernel(&mut rng, &Default::default());
            let mut e = CorpusEntry::from_ast(&ast);
            e.token_ids = vec![START];
            e.token_ids.extend(vocab.encode(&e.source).unwrap());
            e.token_ids.push(END);
            e
        })
        .collect()
}

#[test]
fn search_invariants_with_random_policy() {
    let vocab = Vocabulary::base();
    let corpus = replay_corpus();
    let policy = CorpusReplayPolicy { entries: &corpus };
    let target = extract(
        FeatureSpace::IrPhase,
        &compile("kernel void k(global float* a, int n) { for (int i = 0; i < n; i = i + 1) { a[i] = a[i] * 2.0; } }").unwrap(),
    );
    let cfg = BeamConfig {
        workload_size: 16,
        beam_width: 4,
        replace_prob: 0.15,
        max_depth: 6,
        seed: 21,
        ..BeamConfig::default()
    };
    let r = run_search(&policy, &vocab, &target, &cfg).unwrap();
    assert_eq!(r.inferences, r.generations_used * cfg.workload_size);
    assert_eq!(r.best_per_generation.len(), r.generations_used);
    assert!(r.best_per_generation.windows(2).all(|w| w[1] <= w[0]));
    for c in &r.trajectory {
        assert!(c.compiles);
        let f = extract(target.space, &compile(&c.source).unwrap());
        assert_eq!(c.distance, Some(distance(&f, &target).unwrap()));
        assert!(c.distance.unwrap() >= r.best.distance.unwrap());
        assert_eq!(c.parent_id.is_some(), c.generation > 0);
    }
    let again = run_search(&policy, &vocab, &target, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    let records = result_records(&r, &target);
    assert_eq!(records.len(), r.trajectory.len() + 1);
    assert_eq!(records.last().unwrap()["summary"]["inferences"], r.inferences);
}

#[test]
fn invalid_config_rejected() {
    let vocab = Vocabulary::base();
    let policy = FixedPolicy { content: vec![] };
    let target = FeatureVector::zeros(FeatureSpace::Syntax8);
    for cfg in [
        BeamConfig { beam_width: 0, ..BeamConfig::default() },
        BeamConfig { workload_size: 2, beam_width: 3, ..BeamConfig::default() },
        BeamConfig { replace_prob: 1.5, ..BeamConfig::default() },
        BeamConfig { max_depth: 0, ..BeamConfig::default() },
    ] {
        assert!(matches!(
            run_search(&policy, &vocab, &target, &cfg),
            Err(SearchError::Config(_))
        ));
    }
}
