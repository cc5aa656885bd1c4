//! Minimal dense layers with hand-written backward passes: linear, layer
//! norm, GELU, multi-head self-attention and a pre-LN encoder layer, plus an
//! Adam optimizer over a flat named parameter store.

mod adam;

pub use adam::{Adam, AdamConfig};

use crate::Scalar;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;

#[inline]
pub(crate) fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named 2-D parameters in insertion order. Vectors are stored as 1 x n.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Array2<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn add(&mut self, name: &str, value: Array2<T>) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn add_normal<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: (usize, usize),
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("valid std");
        let v = Array2::from_shape_simple_fn(shape, || c::<T>(dist.sample(rng)));
        self.add(name, v)
    }

    pub fn add_const(&mut self, name: &str, shape: (usize, usize), value: f64) -> ParamId {
        self.add(name, Array2::from_elem(shape, c::<T>(value)))
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Array2<T>> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Array2<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads(self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradients parallel to a `ParamStore`.
#[derive(Debug, Clone)]
pub struct Grads<T>(pub Vec<Array2<T>>);

impl<T: Scalar> Grads<T> {
    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.0[id.0]
    }

    pub fn scale(&mut self, k: T) {
        for g in &mut self.0 {
            g.mapv_inplace(|x| x * k);
        }
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn global_norm(&self) -> T {
        self.0
            .iter()
            .flat_map(|g| g.iter())
            .fold(T::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        p: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Linear {
            w: p.add_normal(&format!("{name}.w"), (fan_in, fan_out), std, rng),
            b: p.add_const(&format!("{name}.b"), (1, fan_out), 0.0),
        }
    }

    pub fn forward<T: Scalar>(&self, p: &ParamStore<T>, x: ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(p.get(self.w));
        y += p.get(self.b);
        y
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        g: &mut Grads<T>,
        x: ArrayView2<T>,
        dy: ArrayView2<T>,
    ) -> Array2<T> {
        *g.get_mut(self.w) += &x.t().dot(&dy);
        *g.get_mut(self.b) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&p.get(self.w).t())
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct LnCache<T> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

impl LayerNorm {
    pub fn new<T: Scalar>(p: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: p.add_const(&format!("{name}.gamma"), (1, d), 1.0),
            beta: p.add_const(&format!("{name}.beta"), (1, d), 0.0),
        }
    }

    pub fn forward<T: Scalar>(&self, p: &ParamStore<T>, x: ArrayView2<T>) -> (Array2<T>, LnCache<T>) {
        let d = c::<T>(x.ncols() as f64);
        let mut xhat = x.to_owned();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / d;
            *r = T::one() / (var + c(LN_EPS)).sqrt();
            let k = *r;
            row.mapv_inplace(|v| v * k);
        }
        let mut y = &xhat * p.get(self.gamma);
        y += p.get(self.beta);
        (y, LnCache { xhat, rstd })
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        g: &mut Grads<T>,
        cache: &LnCache<T>,
        dy: ArrayView2<T>,
    ) -> Array2<T> {
        *g.get_mut(self.gamma) += &(&dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        *g.get_mut(self.beta) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = &dy * p.get(self.gamma);
        let d = c::<T>(dy.ncols() as f64);
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let xh = cache.xhat.row(i);
            let dh = dxhat.row(i);
            let mean_dh = dh.sum() / d;
            let mean_dh_xh = dh.iter().zip(xh).fold(T::zero(), |a, (&u, &v)| a + u * v) / d;
            let r = cache.rstd[i];
            Zip::from(dx.row_mut(i))
                .and(dh)
                .and(xh)
                .for_each(|o, &u, &v| *o = r * (u - mean_dh - v * mean_dh_xh));
        }
        dx
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let (k, a, half) = (c::<T>(GELU_K), c::<T>(GELU_A), c::<T>(0.5));
    x.mapv(|v| half * v * (T::one() + (k * (v + a * v * v * v)).tanh()))
}

pub fn gelu_backward<T: Scalar>(x: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let (k, a, half, three) = (c::<T>(GELU_K), c::<T>(GELU_A), c::<T>(0.5), c::<T>(3.0));
    let mut out = dy.clone();
    Zip::from(&mut out).and(x).for_each(|o, &v| {
        let t = (k * (v + a * v * v * v)).tanh();
        let d = half * (T::one() + t) + half * v * (T::one() - t * t) * k * (T::one() + three * a * v * v);
        *o = *o * d;
    });
    out
}

/// Row-wise softmax, stable.
pub fn softmax_rows<T: Scalar>(x: &mut Array2<T>) {
    for mut row in x.rows_mut() {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

/// Sinusoidal position table.
pub fn sinusoid<T: Scalar>(len: usize, d: usize) -> Array2<T> {
    Array2::from_shape_fn((len, d), |(pos, i)| {
        let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 * rate;
        c(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Pre-LN transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub heads: usize,
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    rows: Vec<usize>,
    ln1: LnCache<T>,
    a: Array2<T>,
    a_rows: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    o: Array2<T>,
    ln2: LnCache<T>,
    b: Array2<T>,
    u: Array2<T>,
    gu: Array2<T>,
}

impl EncoderLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        p: &mut ParamStore<T>,
        name: &str,
        d: usize,
        ff: usize,
        heads: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(heads >= 1 && d % heads == 0, "hidden size must divide by heads");
        EncoderLayer {
            heads,
            ln1: LayerNorm::new(p, &format!("{name}.ln1"), d),
            q: Linear::new(p, &format!("{name}.q"), d, d, std, rng),
            k: Linear::new(p, &format!("{name}.k"), d, d, std, rng),
            v: Linear::new(p, &format!("{name}.v"), d, d, std, rng),
            o: Linear::new(p, &format!("{name}.o"), d, d, std, rng),
            ln2: LayerNorm::new(p, &format!("{name}.ln2"), d),
            ff1: Linear::new(p, &format!("{name}.ff1"), d, ff, std, rng),
            ff2: Linear::new(p, &format!("{name}.ff2"), ff, d, std, rng),
        }
    }

    /// Full self-attention over `x` (n x d), producing outputs only for
    /// `rows` (all rows when `None`).
    pub fn forward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        x: &Array2<T>,
        rows: Option<&[usize]>,
    ) -> (Array2<T>, LayerCache<T>) {
        let n = x.nrows();
        let d = x.ncols();
        let rows: Vec<usize> = rows.map_or_else(|| (0..n).collect(), <[usize]>::to_vec);
        let (a, ln1) = self.ln1.forward(p, x.view());
        let a_rows = a.select(Axis(0), &rows);
        let q = self.q.forward(p, a_rows.view());
        let k = self.k.forward(p, a.view());
        let v = self.v.forward(p, a.view());
        let dh = d / self.heads;
        let scale = c::<T>(1.0 / (dh as f64).sqrt());
        let mut o = Array2::zeros((rows.len(), d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut sc = q.slice(cols).dot(&k.slice(cols).t());
            sc.mapv_inplace(|z| z * scale);
            softmax_rows(&mut sc);
            o.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
            probs.push(sc);
        }
        let mut h = self.o.forward(p, o.view());
        h += &x.select(Axis(0), &rows);
        let (b, ln2) = self.ln2.forward(p, h.view());
        let u = self.ff1.forward(p, b.view());
        let gu = gelu(&u);
        let mut out = self.ff2.forward(p, gu.view());
        out += &h;
        (
            out,
            LayerCache {
                rows,
                ln1,
                a,
                a_rows,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                b,
                u,
                gu,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        g: &mut Grads<T>,
        cache: &LayerCache<T>,
        dout: &Array2<T>,
    ) -> Array2<T> {
        let d = cache.a.ncols();
        let dh_size = d / self.heads;
        let scale = c::<T>(1.0 / (dh_size as f64).sqrt());

        let dgu = self.ff2.backward(p, g, cache.gu.view(), dout.view());
        let du = gelu_backward(&cache.u, &dgu);
        let db = self.ff1.backward(p, g, cache.b.view(), du.view());
        let mut dh = self.ln2.backward(p, g, &cache.ln2, db.view());
        dh += dout;

        let do_ = self.o.backward(p, g, cache.o.view(), dh.view());
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * dh_size..(h + 1) * dh_size];
            let pr = &cache.probs[h];
            let doh = do_.slice(cols);
            let dp = doh.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&pr.t().dot(&doh));
            let mut ds = &dp * pr;
            let sums = ds.sum_axis(Axis(1));
            Zip::from(ds.rows_mut())
                .and(pr.rows())
                .and(&sums)
                .for_each(|mut dsr, pr_row, &sum| {
                    Zip::from(&mut dsr)
                        .and(pr_row)
                        .for_each(|z, &pv| *z = (*z - pv * sum) * scale);
                });
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let da_rows = self.q.backward(p, g, cache.a_rows.view(), dq.view());
        let mut da = self.k.backward(p, g, cache.a.view(), dk.view());
        da += &self.v.backward(p, g, cache.a.view(), dv.view());
        for (r, &row) in cache.rows.iter().enumerate() {
            let mut target = da.row_mut(row);
            target += &da_rows.row(r);
        }
        let mut dx = self.ln1.backward(p, g, &cache.ln1, da.view());
        for (r, &row) in cache.rows.iter().enumerate() {
            let mut target = dx.row_mut(row);
            target += &dh.row(r);
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of d(sum(out * w))/dx and /dparams.
    fn check_layer(rows: Option<&[usize]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamStore::<f64>::default();
        let layer = EncoderLayer::new(&mut p, "l", 8, 16, 2, 0.3, &mut rng);
        let x = Array2::from_shape_simple_fn((5, 8), || rng.gen_range(-1.0..1.0));
        let (out, _) = layer.forward(&p, &x, rows);
        let w = Array2::from_shape_simple_fn(out.raw_dim(), || rng.gen_range(-1.0..1.0));
        let loss = |p: &ParamStore<f64>, x: &Array2<f64>| (&layer.forward(p, x, rows).0 * &w).sum();

        let (_, cache) = layer.forward(&p, &x, rows);
        let mut g = p.zero_grads();
        let dx = layer.backward(&p, &mut g, &cache, &w);
        let h = 1e-6;
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut xp = x.clone();
                xp[(i, j)] += h;
                let mut xm = x.clone();
                xm[(i, j)] -= h;
                let num = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
                assert!((num - dx[(i, j)]).abs() < 1e-6 * (1.0 + num.abs()), "dx[{i},{j}] {num} vs {}", dx[(i, j)]);
            }
        }
        for pid in 0..p.len() {
            let shape = p.values()[pid].raw_dim();
            for idx in 0..shape[0] * shape[1] {
                let (i, j) = (idx / shape[1], idx % shape[1]);
                let mut pp = p.clone();
                pp.values_mut()[pid][(i, j)] += h;
                let mut pm = p.clone();
                pm.values_mut()[pid][(i, j)] -= h;
                let num = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h);
                let ana = g.0[pid][(i, j)];
                assert!((num - ana).abs() < 1e-6 * (1.0 + num.abs()), "param {pid}[{i},{j}] {num} vs {ana}");
            }
        }
    }

    #[test]
    fn encoder_layer_gradients_all_rows() {
        check_layer(None);
    }

    #[test]
    fn encoder_layer_gradients_single_row() {
        check_layer(Some(&[3]));
    }

    #[test]
    fn row_subset_matches_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = ParamStore::<f64>::default();
        let layer = EncoderLayer::new(&mut p, "l", 8, 16, 4, 0.3, &mut rng);
        let x = Array2::from_shape_simple_fn((6, 8), || rng.gen_range(-1.0..1.0));
        let full = layer.forward(&p, &x, None).0;
        let one = layer.forward(&p, &x, Some(&[2])).0;
        for j in 0..8 {
            assert!((full[(2, j)] - one[(0, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_matches_reference_values() {
        let x = Array2::from_shape_vec((1, 3), vec![-1.0f64, 0.0, 1.0]).unwrap();
        let y = gelu(&x);
        assert!((y[(0, 0)] + 0.158_808).abs() < 1e-5);
        assert_eq!(y[(0, 1)], 0.0);
        assert!((y[(0, 2)] - 0.841_192).abs() < 1e-5);
    }
}
