use benchsynth::features::{FeatureSpace, FeatureVector};
use benchsynth::model::{InfillModel, Model32, Model64};
use benchsynth::nn::AdamConfig;
use benchsynth::tokenizer::{END, ENDHOLE, HOLE, START};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::tiny::*;

#[test]
fn shape_law() {
    let m = Model32::new(tiny(false)).unwrap();
    let logits = m.forward(&[START, 5, HOLE, 6, END], None).unwrap();
    assert_eq!(logits.dim(), (5, 20));
    assert!(logits.iter().all(|v| v.is_finite()));
}

#[test]
fn hole_row_matches_full_forward() {
    for directed in [false, true] {
        let m = Model64::new(tiny(directed)).unwrap();
        let fv = FeatureVector::new(FeatureSpace::Syntax8, vec![1.0; 8]).unwrap();
        let ids = [START, 5, HOLE, 6, END];
        let full = m.forward(&ids, Some(&fv)).unwrap();
        let one = m.position_logits(&ids, 2, Some(&fv)).unwrap();
        for j in 0..20 {
            assert!((full[(2, j)] - one[(0, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn determinism_and_padding_law() {
    let m = Model32::new(tiny(true)).unwrap();
    let ids = [START, 5, 9, HOLE, 6, END];
    let a = FeatureVector::new(FeatureSpace::IrPhase, vec![2.0; 12]).unwrap();
    let x = m.forward(&ids, Some(&a)).unwrap();
    assert_eq!(x, m.forward(&ids, Some(&a)).unwrap());
    // Changing the active segment changes the output.
    let b = FeatureVector::new(FeatureSpace::IrPhase, vec![3.0; 12]).unwrap();
    assert_ne!(x, m.forward(&ids, Some(&b)).unwrap());
    let undirected = Model32::new(tiny(false)).unwrap();
    assert_eq!(
        undirected.forward(&ids, Some(&a)).unwrap(),
        undirected.forward(&ids, Some(&b)).unwrap()
    );
}

#[test]
fn padded_segments_receive_no_gradient() {
    let m = Model64::new(tiny(true)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b: Vec<_> = (0..4).map(|_| instance(&mut rng, FeatureSpace::IrPhase)).collect();
    let (_, g) = m.loss_and_grads(&b).unwrap();
    let off = FeatureSpace::IrPhase.segment_offset();
    let e = m.cfg.feature_encoder.embed_size;
    for name in ["feat.scale", "feat.shift"] {
        let id = m.params.id(name).unwrap();
        let grad = &g.0[id.0];
        assert!(grad.rows().into_iter().take(off).all(|r| r.iter().all(|&v| v == 0.0)));
        assert!(grad.row(off).iter().any(|&v| v != 0.0));
    }
    let id = m.params.id("feat.reduce.w").unwrap();
    assert!(g.0[id.0].rows().into_iter().take(off * e).all(|r| r.iter().all(|&v| v == 0.0)));
}

#[test]
fn checkpoint_round_trip() {
    let mut m = Model32::new(tiny(true)).unwrap();
    m.train_step(&batch(1, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    m.save(&path).unwrap();
    let back = Model32::load(&path).unwrap();
    assert_eq!(back.params, m.params);
    assert_eq!(back.opt.step, 1);
    assert_eq!(back.opt.m, m.opt.m);
    assert_eq!(back.cfg, m.cfg);
    assert!(Model32::from_bytes(b"nonsense").is_err());
}

#[test]
fn workload_is_reproducible() {
    let m = Model32::new(tiny(false)).unwrap();
    let seed = [START, 5, HOLE, END];
    let a = m.sample_workload(&seed, None, 6, 1.0, 42).unwrap();
    let b = m.sample_workload(&seed, None, 6, 1.0, 42).unwrap();
    assert_eq!(a, b);
    for out in &a {
        assert_eq!(out.terminated, !out.tokens.contains(&HOLE));
    }
    let single = m.sample_workload(&seed, None, 1, 1.0, 42).unwrap();
    assert_eq!(single[0], a[0]);
    let _ = ENDHOLE;
}

#[test]
fn untrained_loss_near_uniform() {
    let mut cfg = tiny(false);
    cfg.init_std = 0.02;
    let m = Model32::new(cfg).unwrap();
    let loss = m.loss(&batch(3, 64)).unwrap();
    let uniform = 20f64.ln();
    assert!((loss - uniform).abs() < 0.05 * uniform, "{loss} vs {uniform}");
}

#[test]
fn finite_difference_gradients() {
    for directed in [false, true] {
        let m = InfillModel::<f64>::new(tiny(directed)).unwrap();
        let b = batch(7, 3);
        let (_, g) = m.loss_and_grads(&b).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for pid in 0..m.params.len() {
            let shape = m.params.values()[pid].dim();
            for i in 0..shape.0 {
                for j in 0..shape.1 {
                    let mut mp = m.clone();
                    mp.params.values_mut()[pid][(i, j)] += h;
                    let mut mm = m.clone();
                    mm.params.values_mut()[pid][(i, j)] -= h;
                    let num = (mp.loss(&b).unwrap() - mm.loss(&b).unwrap()) / (2.0 * h);
                    let ana = g.0[pid][(i, j)];
                    let scale = num.abs().max(ana.abs());
                    if scale > 1e-6 {
                        worst = worst.max((num - ana).abs() / scale);
                    }
                }
            }
        }
        assert!(worst < 1e-3, "directed={directed} worst relative error {worst}");
    }
}

#[test]
fn overfits_one_batch() {
    let mut cfg = tiny(true);
    cfg.hidden_size = 16;
    cfg.init_std = 0.1;
    cfg.adam = AdamConfig {
        peak_lr: 3e-3,
        warmup_steps: 20,
        total_steps: 500,
        ..AdamConfig::default()
    };
    let mut m = Model32::new(cfg).unwrap();
    let b = batch(11, 8);
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        last = m.train_step(&b).unwrap().0;
    }
    let final_loss = m.loss(&b).unwrap();
    assert!(final_loss < 0.1, "loss {final_loss} (last step {last})");
}
