use benchsynth::corpus::toy::random_kernel;
use benchsynth::downstream::*;
use benchsynth::features::{extract_syntax8, FeatureSpace, FeatureVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::tree::*;

fn s8(comp: f64, mem: f64) -> FeatureVector {
    let mut v = vec![0.0; 8];
    v[0] = comp;
    v[3] = mem;
    FeatureVector::new(FeatureSpace::Syntax8, v).unwrap()
}

fn point(label: Label, t_cpu: f64, t_gpu: f64) -> LabeledPoint {
    LabeledPoint {
        features: s8(t_cpu, t_gpu),
        label,
        t_cpu,
        t_gpu,
    }
}

#[test]
fn toy_corpus_label_split_near_seventy_thirty() {
    let model = RuntimeModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 1000;
    let gpu = (0..n)
        .filter(|_| {
            let k = random_kernel(&mut rng, &Default::default());
            model.label(&extract_syntax8(&k)).unwrap().label == Label::Gpu
        })
        .count();
    let frac = gpu as f64 / n as f64;
    assert!((0.65..=0.75).contains(&frac), "gpu fraction {frac}");
}

#[test]
fn confusion_fixture() {
    // GPU-optimal: 0..6, CPU-optimal: 6..10
    let pts: Vec<LabeledPoint> = (0..10)
        .map(|i| {
            if i < 6 {
                point(Label::Gpu, 4.0, 2.0)
            } else {
                point(Label::Cpu, 1.0, 2.0)
            }
        })
        .collect();
    // predicts GPU on points 0..4 and 6, CPU elsewhere
    let guesses = [true, true, true, true, false, false, true, false, false, false];
    // points of one class share features, so tag each with its position
    let keyed: Vec<LabeledPoint> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut q = p.clone();
            q.features.values[7] = i as f64;
            q
        })
        .collect();
    let r = evaluate(|fv| if guesses[fv.values[7] as usize] { Label::Gpu } else { Label::Cpu }, &keyed);
    assert_eq!((r.tp, r.fp, r.tn, r.fn_), (4, 1, 3, 2));
    assert_eq!(r.precision, 4.0 / 5.0);
    assert_eq!(r.recall, 4.0 / 6.0);
    assert_eq!(r.specificity, 3.0 / 4.0);
    // per-point t_gpu / t_chosen: 1 on GPU picks, 0.5 on missed GPU, 2 on CPU hits
    let expected = ((2.0f64.ln() * 3.0 + 0.5f64.ln() * 2.0) / 10.0).exp();
    assert!((r.speedup - expected).abs() < 1e-12);
}

#[test]
fn degenerate_denominators_flagged() {
    let pts: Vec<_> = (0..5).map(|_| point(Label::Gpu, 3.0, 1.0)).collect();
    let r = evaluate(|_| Label::Cpu, &pts);
    assert_eq!(r.recall, 0.0);
    assert!(r.recall_defined);
    assert_eq!(r.specificity, 1.0);
    assert!(!r.specificity_defined);
    assert!(!r.precision_defined);
}

#[test]
fn oracle_predictor_attains_brute_force_optimum() {
    let model = RuntimeModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts: Vec<LabeledPoint> = (0..200)
        .map(|i| {
            let mut fv = s8(rng.gen_range(0..40) as f64, rng.gen_range(0..10) as f64);
            fv.values[7] = i as f64;
            model.label(&fv).unwrap()
        })
        .collect();
    let optimum = (pts.iter().map(|p| (p.t_gpu / p.t_cpu.min(p.t_gpu)).ln()).sum::<f64>() / pts.len() as f64).exp();
    let by_key = |fv: &FeatureVector| pts[fv.values[7] as usize].label;
    let oracle = evaluate(by_key, &pts);
    assert!((oracle.speedup - optimum).abs() < 1e-12);
    assert_eq!(evaluate(|_| Label::Gpu, &pts).speedup, 1.0);
    // every other predictor is no better
    for _ in 0..50 {
        let flips: Vec<bool> = (0..pts.len()).map(|_| rng.gen_bool(0.5)).collect();
        let r = evaluate(|fv| if flips[fv.values[7] as usize] { Label::Gpu } else { Label::Cpu }, &pts);
        assert!(r.speedup <= oracle.speedup + 1e-12);
    }
    let tree = train_tree(&pts, DEFAULT_TREE_DEPTH).unwrap();
    let r = evaluate(|fv| tree.predict(fv), &pts);
    assert!(r.speedup <= oracle.speedup + 1e-12);
    assert!((0.0..=1.0).contains(&r.precision));
}

#[test]
fn tree_matches_exhaustive_split_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut checked = 0;
    while checked < 50 {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.gen_range(0..6) as f64).collect())
            .collect();
        let labels: Vec<Label> = (0..20)
            .map(|_| if rng.gen_bool(0.5) { Label::Gpu } else { Label::Cpu })
            .collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        let depth = rng.gen_range(1..=5);
        let tree = benchsynth::downstream::train_tree(
            &data
                .iter()
                .zip(&labels)
                .map(|(row, &label)| {
                    let mut v = row.clone();
                    v.resize(8, 0.0);
                    LabeledPoint {
                        features: FeatureVector::new(FeatureSpace::Syntax8, v).unwrap(),
                        label,
                        t_cpu: 1.0,
                        t_gpu: 1.0,
                    }
                })
                .collect::<Vec<_>>(),
            depth,
        )
        .unwrap();
        let r = reference(&data, &labels, (0..20).collect(), 0, depth);
        assert!(same_shape(&tree.root, &r, &data));
        for (i, row) in data.iter().enumerate() {
            assert_eq!(tree.predict_row(row), reference_predict(&r, &data, i));
        }
        checked += 1;
    }
}
