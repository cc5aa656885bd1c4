//! A 60-kernel toy corpus and an active-learning run over it, driven by
//! corpus replay instead of a trained model.

use benchsynth::active::*;
use benchsynth::corpus::{toy::random_kernel, CorpusEntry};
use benchsynth::downstream::{evaluate, train_tree, Label, LabeledPoint, RuntimeModel};
use benchsynth::features::{relative_proximity, FeatureSpace, FeatureVector};
use benchsynth::search::{run_search, BeamConfig, CorpusReplayPolicy};
use benchsynth::tokenizer::{Vocabulary, END, START};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::Cell;

pub fn s8(a: f64, b: f64) -> FeatureVector {
    let mut v = vec![0.0; 8];
    v[0] = a;
    v[3] = b;
    FeatureVector::new(FeatureSpace::Syntax8, v).unwrap().make_consistent()
}

pub fn lp(fv: FeatureVector, label: Label) -> LabeledPoint {
    LabeledPoint {
        features: fv,
        label,
        t_cpu: 1.0,
        t_gpu: 1.0,
    }
}

pub fn separable_seed() -> Vec<LabeledPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out = Vec::new();
    for _ in 0..5 {
        out.push(lp(s8(rng.gen_range(0..4) as f64, rng.gen_range(0..3) as f64), Label::Cpu));
        out.push(lp(s8(rng.gen_range(18..24) as f64, rng.gen_range(6..10) as f64), Label::Gpu));
    }
    out
}

pub struct Toy {
    pub vocab: Vocabulary,
    pub corpus: Vec<CorpusEntry>,
    pub eval: Vec<LabeledPoint>,
    pub runtime: RuntimeModel,
}

pub fn toy() -> Toy {
    let vocab = Vocabulary::base();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let corpus: Vec<CorpusEntry> = (0..60)
        .map(|_| {
            let mut e = CorpusEntry::from_ast(&random_kernel(&mut rng, &Default::default()));
            e.token_ids = vec![START];
            e.token_ids.extend(vocab.encode(&e.source).unwrap());
            e.token_ids.push(END);
            e
        })
        .collect();
    let runtime = RuntimeModel::default();
    let eval = corpus[40..].iter().map(|e| runtime.label(&e.features.syntax8).unwrap()).collect();
    Toy {
        vocab,
        corpus,
        eval,
        runtime,
    }
}

pub fn run_loop(toy: &Toy, cfg: &AlConfig, searches: &Cell<usize>) -> AlOutcome {
    let seed: Vec<LabeledPoint> = toy.corpus[..10]
        .iter()
        .map(|e| toy.runtime.label(&e.features.syntax8).unwrap())
        .collect();
    let mut committee = Committee::fit_initial(
        &seed,
        CommitteeConfig {
            fit_steps: 100,
            update_steps: 20,
            ..CommitteeConfig::default()
        },
    )
    .unwrap();
    let bounds = query_bounds(FeatureSpace::Syntax8, toy.corpus.iter().map(|e| &e.features.syntax8), 1.5);
    let policy = CorpusReplayPolicy { entries: &toy.corpus[..40] };
    al_loop(
        &mut committee,
        &bounds,
        cfg,
        |target, epoch| {
            searches.set(searches.get() + 1);
            let beam = BeamConfig {
                workload_size: 8,
                beam_width: 2,
                max_depth: 2,
                seed: epoch as u64,
                ..BeamConfig::default()
            };
            let r = run_search(&policy, &toy.vocab, target, &beam).map_err(|e| e.to_string())?;
            Ok::<_, String>(Synthesis {
                features: r.trajectory.iter().filter_map(|c| c.features.clone()).collect(),
                best_proximity: r.best.features.as_ref().and_then(|f| relative_proximity(f, target).ok()),
            })
        },
        |fv| toy.runtime.label(fv).map_err(|e| e.to_string()),
        |data| {
            let tree = train_tree(data, 5).ok()?;
            Some(evaluate(|fv| tree.predict(fv), &toy.eval).speedup)
        },
    )
    .unwrap()
}
