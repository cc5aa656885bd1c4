//! The infilling model: a bidirectional transformer over tokens that predicts
//! the token at a `[HOLE]`, optionally conditioned on a target feature vector
//! through a segmented feature encoder.

mod checkpoint;
mod config;
mod features;

pub use config::{FeatureEncoderConfig, ModelConfig};

use crate::corpus::{make_masked_instance, CorpusEntry, MaskedInstance};
use crate::features::{FeatureVector, TOTAL_WIDTH};
use crate::nn::{c, Adam, EncoderLayer, Grads, LayerCache, LayerNorm, LnCache, Linear, ParamId, ParamStore};
use crate::tokenizer::{END, ENDHOLE, HOLE, PAD, START};
use crate::Scalar;
use features::{FeatCache, FeatureEncoder};
use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InfillError {
    #[error("input has no [HOLE]")]
    NoHole,
    #[error("input has {0} [HOLE] tokens")]
    MultipleHoles(usize),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillOutcome {
    pub tokens: Vec<u32>,
    pub terminated: bool,
    pub insertions: usize,
}

/// Iterative infilling with an arbitrary next-token source: ask for the token
/// at the hole, stop on `[ENDHOLE]`, otherwise insert it before the hole.
/// Stops unterminated after `max_insertions` or when the sequence would grow
/// past `max_len`.
pub fn fill_hole_with(
    ids: &[u32],
    max_len: usize,
    max_insertions: Option<usize>,
    mut next: impl FnMut(&[u32], usize) -> u32,
) -> Result<FillOutcome, InfillError> {
    let mut hole = hole_position(ids)?;
    let mut seq = ids.to_vec();
    let cap = max_insertions.unwrap_or_else(|| max_len.saturating_sub(ids.len()));
    let mut insertions = 0;
    loop {
        if insertions >= cap {
            break;
        }
        let tok = next(&seq, hole);
        if tok == ENDHOLE {
            seq.remove(hole);
            return Ok(FillOutcome {
                tokens: seq,
                terminated: true,
                insertions,
            });
        }
        if seq.len() + 1 > max_len {
            break;
        }
        seq.insert(hole, tok);
        hole += 1;
        insertions += 1;
    }
    Ok(FillOutcome {
        tokens: seq,
        terminated: false,
        insertions,
    })
}

pub fn hole_position(ids: &[u32]) -> Result<usize, InfillError> {
    let mut holes = ids.iter().enumerate().filter(|(_, &t)| t == HOLE);
    let first = holes.next().ok_or(InfillError::NoHole)?.0;
    let extra = holes.count();
    if extra > 0 {
        return Err(InfillError::MultipleHoles(extra + 1));
    }
    Ok(first)
}

/// Drops trailing `[PAD]`s; the model never sees padding.
fn strip_pads(ids: &[u32]) -> &[u32] {
    let n = ids.iter().rposition(|&t| t != PAD).map_or(0, |p| p + 1);
    &ids[..n]
}

#[derive(Debug, Clone)]
pub struct InfillModel<T: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub opt: Adam<T>,
    /// Per encoder position divisor applied to raw feature values.
    pub feature_max: Vec<f64>,
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<EncoderLayer>,
    ln_f: LayerNorm,
    joint: Linear,
    dec: Linear,
    feat: Option<FeatureEncoder<T>>,
}

struct ForwardCache<T> {
    ids: Vec<u32>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    joint_in: Array2<T>,
    joint_pre: Array2<T>,
    joint_out: Array2<T>,
    feat: Option<FeatCache<T>>,
}

impl<T: Scalar> InfillModel<T> {
    pub fn new(cfg: ModelConfig) -> Result<Self, InfillError> {
        cfg.validate().map_err(InfillError::Shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = ParamStore::default();
        let d = cfg.hidden_size;
        let std = cfg.init_std;
        let tok_emb = p.add_normal("tok_emb", (cfg.vocab_size, d), std, &mut rng);
        // learned, but started from the sinusoid table so that neighbouring
        // positions are related from the first step
        let amp = c::<T>(std * 2f64.sqrt());
        let pos_emb = p.add("pos_emb", crate::nn::sinusoid::<T>(cfg.max_seq_len, d).mapv(|v| v * amp));
        let layers = (0..cfg.layers)
            .map(|i| EncoderLayer::new(&mut p, &format!("enc{i}"), d, cfg.ff_size, cfg.heads, std, &mut rng))
            .collect();
        let ln_f = LayerNorm::new(&mut p, "ln_f", d);
        let feat = cfg
            .directed
            .then(|| FeatureEncoder::new(&mut p, &cfg.feature_encoder, d, std, &mut rng));
        let joint_in = if cfg.directed { 2 * d } else { d };
        let joint = Linear::new(&mut p, "joint", joint_in, d, std, &mut rng);
        let dec = Linear::new(&mut p, "dec", d, cfg.vocab_size, std, &mut rng);
        let opt = Adam::new(cfg.adam.clone(), &p);
        Ok(InfillModel {
            feature_max: vec![1.0; TOTAL_WIDTH],
            cfg,
            params: p,
            opt,
            tok_emb,
            pos_emb,
            layers,
            ln_f,
            joint,
            dec,
            feat,
        })
    }

    pub fn is_directed(&self) -> bool {
        self.cfg.directed
    }

    /// Sets the per-position normalization from corpus maxima (1 where a
    /// dimension is always 0).
    pub fn set_feature_normalization(&mut self, entries: &[CorpusEntry]) {
        let mut max = vec![0.0f64; TOTAL_WIDTH];
        for e in entries {
            for space in crate::features::FeatureSpace::ALL {
                let off = space.segment_offset();
                for (j, v) in e.features.get(space).values.iter().enumerate() {
                    max[off + j] = max[off + j].max(*v);
                }
            }
        }
        self.feature_max = max.into_iter().map(|m| if m > 0.0 { m } else { 1.0 }).collect();
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), InfillError> {
        if ids.is_empty() {
            return Err(InfillError::Shape("empty input".into()));
        }
        if ids.len() > self.cfg.max_seq_len {
            return Err(InfillError::Shape(format!(
                "input length {} exceeds max_seq_len {}",
                ids.len(),
                self.cfg.max_seq_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(InfillError::Shape(format!("token id {bad} out of vocabulary")));
        }
        Ok(())
    }

    /// Reduced feature context (1 x hidden), or `None` for undirected models.
    /// A directed model given no target uses the zero context.
    pub fn encode_features(&self, fv: Option<&FeatureVector>) -> Option<Array2<T>> {
        let enc = self.feat.as_ref()?;
        Some(match fv {
            Some(fv) => enc.forward(&self.params, fv, &self.feature_max).0,
            None => Array2::zeros((1, self.cfg.hidden_size)),
        })
    }

    fn forward_cached(
        &self,
        ids: &[u32],
        fv: Option<&FeatureVector>,
        rows: Option<&[usize]>,
        need_cache: bool,
        feat_ctx: Option<&Array2<T>>,
    ) -> (Array2<T>, Option<ForwardCache<T>>) {
        let p = &self.params;
        let n = ids.len();
        let idx: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        let mut x = p.get(self.tok_emb).select(Axis(0), &idx);
        x += &p.get(self.pos_emb).slice(s![..n, ..]);
        let mut caches = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let r = if i == last { rows } else { None };
            let (out, cache) = layer.forward(p, &x, r);
            x = out;
            if need_cache {
                caches.push(cache);
            }
        }
        let (z, lnf) = self.ln_f.forward(p, x.view());
        let (joint_in, feat_cache) = match &self.feat {
            Some(enc) => {
                let (ctx, fc) = match (feat_ctx, fv) {
                    (Some(ctx), _) => (ctx.clone(), None),
                    (None, Some(fv)) => {
                        let (ctx, fc) = enc.forward(p, fv, &self.feature_max);
                        (ctx, Some(fc))
                    }
                    (None, None) => (Array2::zeros((1, self.cfg.hidden_size)), None),
                };
                let tiled = ctx
                    .broadcast((z.nrows(), ctx.ncols()))
                    .expect("1 x d context")
                    .to_owned();
                (concatenate![Axis(1), z, tiled], fc)
            }
            None => (z, None),
        };
        let joint_pre = self.joint.forward(p, joint_in.view());
        let joint_out = crate::nn::gelu(&joint_pre);
        let logits = self.dec.forward(p, joint_out.view());
        let cache = need_cache.then(|| ForwardCache {
            ids: ids.to_vec(),
            layers: caches,
            lnf,
            joint_in,
            joint_pre,
            joint_out,
            feat: feat_cache,
        });
        (logits, cache)
    }

    /// Logits for every position, shape (len, vocab). Trailing pads are
    /// stripped first, so the row count is the unpadded length.
    pub fn forward(&self, ids: &[u32], fv: Option<&FeatureVector>) -> Result<Array2<T>, InfillError> {
        let ids = strip_pads(ids);
        self.check_ids(ids)?;
        Ok(self.forward_cached(ids, fv, None, false, None).0)
    }

    /// Logits at one position only (1 x vocab).
    pub fn position_logits(
        &self,
        ids: &[u32],
        pos: usize,
        fv: Option<&FeatureVector>,
    ) -> Result<Array2<T>, InfillError> {
        self.check_ids(ids)?;
        if pos >= ids.len() {
            return Err(InfillError::Shape(format!("position {pos} out of range")));
        }
        Ok(self.forward_cached(ids, fv, Some(&[pos]), false, None).0)
    }

    fn backward(&self, cache: &ForwardCache<T>, dlogits: &Array2<T>, g: &mut Grads<T>) {
        let p = &self.params;
        let djo = self.dec.backward(p, g, cache.joint_out.view(), dlogits.view());
        let djp = crate::nn::gelu_backward(&cache.joint_pre, &djo);
        let dji = self.joint.backward(p, g, cache.joint_in.view(), djp.view());
        let d = self.cfg.hidden_size;
        let dz = dji.slice(s![.., ..d]).to_owned();
        if let (Some(enc), Some(fc)) = (&self.feat, &cache.feat) {
            let dctx = dji.slice(s![.., d..]).sum_axis(Axis(0)).insert_axis(Axis(0));
            enc.backward(p, g, fc, &dctx);
        }
        let mut dx = self.ln_f.backward(p, g, &cache.lnf, dz.view());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            dx = layer.backward(p, g, lc, &dx);
        }
        let n = cache.ids.len();
        {
            let gp = g.get_mut(self.pos_emb);
            let mut block = gp.slice_mut(s![..n, ..]);
            block += &dx;
        }
        let gt = g.get_mut(self.tok_emb);
        for (i, &t) in cache.ids.iter().enumerate() {
            let mut row = gt.row_mut(t as usize);
            row += &dx.row(i);
        }
    }

    fn instance_features<'a>(&self, inst: &'a MaskedInstance) -> Option<&'a FeatureVector> {
        self.cfg.directed.then_some(&inst.features)
    }

    /// Mean cross-entropy at the hole over a batch, with gradients.
    pub fn loss_and_grads(&self, batch: &[MaskedInstance]) -> Result<(f64, Grads<T>), InfillError> {
        let mut g = self.params.zero_grads();
        let mut total = 0.0;
        for inst in batch {
            self.check_ids(&inst.input_ids)?;
            let (logits, cache) = self.forward_cached(
                &inst.input_ids,
                self.instance_features(inst),
                Some(&[inst.hole_index]),
                true,
                None,
            );
            let (loss, dl) = cross_entropy(&logits, inst.target_id as usize);
            total += loss;
            self.backward(&cache.expect("cache requested"), &dl, &mut g);
        }
        let k = batch.len().max(1) as f64;
        g.scale(c(1.0 / k));
        Ok((total / k, g))
    }

    pub fn loss(&self, batch: &[MaskedInstance]) -> Result<f64, InfillError> {
        let mut total = 0.0;
        for inst in batch {
            self.check_ids(&inst.input_ids)?;
            let logits = self
                .forward_cached(&inst.input_ids, self.instance_features(inst), Some(&[inst.hole_index]), false, None)
                .0;
            total += cross_entropy(&logits, inst.target_id as usize).0;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// One optimizer step; returns (loss before the step, learning rate).
    pub fn train_step(&mut self, batch: &[MaskedInstance]) -> Result<(f64, f64), InfillError> {
        let (loss, mut g) = self.loss_and_grads(batch)?;
        if !loss.is_finite() {
            return Err(InfillError::NonFiniteLoss {
                step: self.opt.step + 1,
                loss,
            });
        }
        let lr = self.opt.update(&mut self.params, &mut g);
        Ok((loss, lr))
    }

    /// Trains on instances drawn on demand from `entries`. `on_step` sees
    /// (step, loss, lr) after every step.
    pub fn train_on_corpus(
        &mut self,
        entries: &[CorpusEntry],
        steps: u64,
        batch_size: usize,
        max_hole_fraction: f64,
        seed: u64,
        mut on_step: impl FnMut(u64, f64, f64),
    ) -> Result<(), InfillError> {
        let usable: Vec<&CorpusEntry> = entries.iter().filter(|e| !e.content().is_empty()).collect();
        if usable.is_empty() {
            return Err(InfillError::Shape("no tokenized corpus entries".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            let batch: Vec<MaskedInstance> = (0..batch_size)
                .map(|_| {
                    let e = usable[rng.gen_range(0..usable.len())];
                    make_masked_instance(e, &mut rng, None, max_hole_fraction).expect("nonempty content")
                })
                .collect();
            let (loss, lr) = self.train_step(&batch)?;
            on_step(self.opt.step, loss, lr);
        }
        Ok(())
    }

    fn sample_token<R: Rng + ?Sized>(&self, logits: &Array2<T>, temperature: f64, rng: &mut R) -> u32 {
        let row = logits.row(0);
        let t = temperature.max(1e-6);
        let mut best = f64::NEG_INFINITY;
        let scaled: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let i = i as u32;
                if matches!(i, START | END | PAD | HOLE) {
                    f64::NEG_INFINITY
                } else {
                    let s = v.to_f64().unwrap_or(f64::NEG_INFINITY) / t;
                    best = best.max(s);
                    s
                }
            })
            .collect();
        let weights: Vec<f64> = scaled.iter().map(|s| (s - best).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                if u < *w {
                    return i as u32;
                }
                u -= w;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(ENDHOLE as usize) as u32
    }

    /// Iterative infilling at the single `[HOLE]` of `ids` by categorical
    /// sampling with temperature. Structural meta tokens are never sampled.
    pub fn fill_hole<R: Rng + ?Sized>(
        &self,
        ids: &[u32],
        target: Option<&FeatureVector>,
        temperature: f64,
        rng: &mut R,
        max_insertions: Option<usize>,
    ) -> Result<FillOutcome, InfillError> {
        let ids = strip_pads(ids);
        self.check_ids(ids)?;
        hole_position(ids)?;
        let ctx = self.encode_features(target);
        fill_hole_with(ids, self.cfg.max_seq_len, max_insertions, |seq, hole| {
            let logits = self
                .forward_cached(seq, None, Some(&[hole]), false, ctx.as_ref())
                .0;
            self.sample_token(&logits, temperature, rng)
        })
    }

    /// `w` independent fills of one input, sample `i` on RNG stream `i`.
    pub fn sample_workload(
        &self,
        seed_input: &[u32],
        target: Option<&FeatureVector>,
        w: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<FillOutcome>, InfillError> {
        (0..w)
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                self.fill_hole(seed_input, target, temperature, &mut rng, None)
            })
            .collect()
    }
}

/// Independent deterministic stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cross-entropy of a 1 x V logit row against `target`, with d/dlogits.
fn cross_entropy<T: Scalar>(logits: &Array2<T>, target: usize) -> (f64, Array2<T>) {
    let mut p = logits.clone();
    crate::nn::softmax_rows(&mut p);
    let pt = p[(0, target)].to_f64().unwrap_or(0.0).max(1e-300);
    p[(0, target)] -= T::one();
    (-pt.ln(), p)
}

pub type Model32 = InfillModel<f32>;
pub type Model64 = InfillModel<f64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_endhole_removes_hole() {
        let out = fill_hole_with(&[START, 7, HOLE, 9, END], 16, None, |_, _| ENDHOLE).unwrap();
        assert_eq!(out.tokens, vec![START, 7, 9, END]);
        assert!(out.terminated);
        assert_eq!(out.insertions, 0);
    }

    #[test]
    fn scripted_tokens_land_at_hole() {
        let mut script = vec![11, 12, ENDHOLE].into_iter();
        let mut seen = Vec::new();
        let out = fill_hole_with(&[START, 7, HOLE, 9, END], 16, None, |seq, hole| {
            seen.push((seq.to_vec(), hole));
            script.next().unwrap()
        })
        .unwrap();
        assert_eq!(out.tokens, vec![START, 7, 11, 12, 9, END]);
        assert_eq!(seen[1], (vec![START, 7, 11, HOLE, 9, END], 3));
        assert!(out.terminated);
    }

    #[test]
    fn cap_leaves_hole_unterminated() {
        let out = fill_hole_with(&[HOLE], 100, Some(3), |_, _| 20).unwrap();
        assert!(!out.terminated);
        assert_eq!(out.tokens, vec![20, 20, 20, HOLE]);
        let out = fill_hole_with(&[START, HOLE, END], 4, None, |_, _| 20).unwrap();
        assert!(!out.terminated);
        assert_eq!(out.tokens.len(), 4);
        assert!(matches!(fill_hole_with(&[1, 2], 8, None, |_, _| 0), Err(InfillError::NoHole)));
        assert!(matches!(
            fill_hole_with(&[HOLE, HOLE], 8, None, |_, _| 0),
            Err(InfillError::MultipleHoles(2))
        ));
    }
}
