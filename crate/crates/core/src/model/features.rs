//! Segmented feature encoder. A vector of one space occupies its segment of
//! the 39-position layout; only those positions are embedded and attended
//! over, and the flattened encoder output (zero in the other segments) is
//! reduced to the model's hidden size.

use super::config::FeatureEncoderConfig;
use crate::features::{FeatureVector, TOTAL_WIDTH};
use crate::nn::{c, sinusoid, EncoderLayer, Grads, LayerCache, Linear, ParamId, ParamStore};
use crate::Scalar;
use ndarray::{s, Array2};
use rand::Rng;

#[derive(Debug, Clone)]
pub(crate) struct FeatureEncoder<T> {
    embed: usize,
    scale: ParamId,
    shift: ParamId,
    pe: Array2<T>,
    layers: Vec<EncoderLayer>,
    reduce: Linear,
}

pub(crate) struct FeatCache<T> {
    offset: usize,
    u: Vec<T>,
    layers: Vec<LayerCache<T>>,
    flat: Array2<T>,
}

impl<T: Scalar> FeatureEncoder<T> {
    pub fn new<R: Rng + ?Sized>(
        p: &mut ParamStore<T>,
        cfg: &FeatureEncoderConfig,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let e = cfg.embed_size;
        FeatureEncoder {
            embed: e,
            scale: p.add_normal("feat.scale", (TOTAL_WIDTH, e), std.max(0.1), rng),
            shift: p.add_normal("feat.shift", (TOTAL_WIDTH, e), std, rng),
            pe: sinusoid(TOTAL_WIDTH, e),
            layers: (0..cfg.layers)
                .map(|i| EncoderLayer::new(p, &format!("feat.enc{i}"), e, cfg.fc_width, cfg.heads, std, rng))
                .collect(),
            reduce: Linear::new(p, "feat.reduce", TOTAL_WIDTH * e, hidden, std, rng),
        }
    }

    pub fn forward(&self, p: &ParamStore<T>, fv: &FeatureVector, feature_max: &[f64]) -> (Array2<T>, FeatCache<T>) {
        let off = fv.space.segment_offset();
        let k = fv.values.len();
        let u: Vec<T> = fv
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| c::<T>(v / feature_max[off + j]))
            .collect();
        let rows = s![off..off + k, ..];
        let mut x = p.get(self.scale).slice(rows).to_owned();
        for (mut row, &uj) in x.rows_mut().into_iter().zip(&u) {
            row.mapv_inplace(|a| a * uj);
        }
        x += &p.get(self.shift).slice(rows);
        x += &self.pe.slice(rows);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(p, &x, None);
            x = out;
            caches.push(cache);
        }
        let flat = x.into_shape_with_order((1, k * self.embed)).expect("contiguous");
        let w = p.get(self.reduce.w).slice(s![off * self.embed..(off + k) * self.embed, ..]);
        let mut ctx = flat.dot(&w);
        ctx += p.get(self.reduce.b);
        (
            ctx,
            FeatCache {
                offset: off,
                u,
                layers: caches,
                flat,
            },
        )
    }

    pub fn backward(&self, p: &ParamStore<T>, g: &mut Grads<T>, cache: &FeatCache<T>, dctx: &Array2<T>) {
        let (off, k, e) = (cache.offset, cache.u.len(), self.embed);
        let block = s![off * e..(off + k) * e, ..];
        {
            let gw = g.get_mut(self.reduce.w);
            let mut gblock = gw.slice_mut(block);
            gblock += &cache.flat.t().dot(dctx);
        }
        *g.get_mut(self.reduce.b) += dctx;
        let dflat = dctx.dot(&p.get(self.reduce.w).slice(block).t());
        let mut dx = dflat.into_shape_with_order((k, e)).expect("contiguous");
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            dx = layer.backward(p, g, lc, &dx);
        }
        {
            let gs = g.get_mut(self.shift);
            let mut rows = gs.slice_mut(s![off..off + k, ..]);
            rows += &dx;
        }
        let gs = g.get_mut(self.scale);
        for (j, &uj) in cache.u.iter().enumerate() {
            let mut row = gs.row_mut(off + j);
            row += &dx.row(j).mapv(|v| v * uj);
        }
    }
}
