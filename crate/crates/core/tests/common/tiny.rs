//! A tiny model configuration and random single-hole batches for it.

use benchsynth::corpus::MaskedInstance;
use benchsynth::features::{FeatureSpace, FeatureVector};
use benchsynth::model::ModelConfig;
use benchsynth::tokenizer::{END, HOLE, START};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny(directed: bool) -> ModelConfig {
    let mut cfg = ModelConfig {
        vocab_size: 20,
        max_seq_len: 16,
        hidden_size: 8,
        layers: 2,
        heads: 2,
        ff_size: 16,
        directed,
        init_std: 0.3,
        seed: 4,
        ..ModelConfig::default()
    };
    cfg.feature_encoder.embed_size = 4;
    cfg.feature_encoder.fc_width = 8;
    cfg
}

pub fn instance(rng: &mut ChaCha8Rng, space: FeatureSpace) -> MaskedInstance {
    let len = rng.gen_range(3..10);
    let mut ids = vec![START];
    ids.extend((0..len).map(|_| rng.gen_range(5..20u32)));
    ids.push(END);
    let hole_index = rng.gen_range(1..ids.len() - 1);
    ids[hole_index] = HOLE;
    let values = (0..space.dim()).map(|_| rng.gen_range(0.0..4.0)).collect();
    MaskedInstance {
        input_ids: ids,
        hole_index,
        hidden_length: 1,
        hidden: vec![7],
        target_id: rng.gen_range(4..20),
        features: FeatureVector::new(space, values).unwrap(),
        space,
    }
}

pub fn batch(seed: u64, n: usize) -> Vec<MaskedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| instance(&mut rng, FeatureSpace::ALL[i % 3]))
        .collect()
}
