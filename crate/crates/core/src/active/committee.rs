use super::{ActiveError, Voter};
use crate::downstream::{Label, LabeledPoint};
use crate::features::{FeatureError, FeatureSpace, FeatureVector};
use crate::model::stream_rng;
use crate::nn::{gelu, gelu_backward, softmax_rows, Adam, AdamConfig, Linear, ParamStore};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const COMMITTEE_SIZE: usize = 21;
const PER_FAMILY: usize = 7;
const KNN_K: [usize; PER_FAMILY] = [1, 3, 5, 7, 9, 11, 13];
const KMEANS_K: [usize; PER_FAMILY] = [2, 3, 4, 5, 6, 7, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeConfig {
    /// Full-batch optimizer steps for a fresh fit.
    pub fit_steps: usize,
    /// Steps taken on the grown buffer after each update.
    pub update_steps: usize,
    pub learning_rate: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        CommitteeConfig {
            fit_steps: 300,
            update_steps: 100,
            learning_rate: 0.02,
            kmeans_iters: 50,
            seed: 0,
        }
    }
}

/// One two-layer perceptron: scaled input, GELU hidden layer, two logits.
#[derive(Debug, Clone)]
pub struct Mlp {
    params: ParamStore<f64>,
    l1: Linear,
    l2: Linear,
    opt: Adam<f64>,
}

impl Mlp {
    fn new(d: usize, hidden: usize, lr: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let mut params = ParamStore::default();
        let l1 = Linear::new(&mut params, "l1", d, hidden, (1.0 / d as f64).sqrt(), &mut rng);
        let l2 = Linear::new(&mut params, "l2", hidden, 2, (1.0 / hidden as f64).sqrt(), &mut rng);
        let cfg = AdamConfig {
            peak_lr: lr,
            warmup_steps: 0,
            total_steps: u64::MAX,
            clip_norm: 0.0,
            ..AdamConfig::default()
        };
        let opt = Adam::new(cfg, &params);
        Mlp { params, l1, l2, opt }
    }

    fn logits(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let z = self.l1.forward(&self.params, x.view());
        let h = gelu(&z);
        (self.l2.forward(&self.params, h.view()), z, h)
    }

    fn train(&mut self, x: &Array2<f64>, y: &[Label], steps: usize) {
        let n = x.nrows() as f64;
        for _ in 0..steps {
            let (logits, z, h) = self.logits(x);
            let mut d = logits;
            softmax_rows(&mut d);
            for (i, l) in y.iter().enumerate() {
                d[(i, l.index())] -= 1.0;
            }
            d /= n;
            let mut g = self.params.zero_grads();
            let dh = self.l2.backward(&self.params, &mut g, h.view(), d.view());
            let dz = gelu_backward(&z, &dh);
            self.l1.backward(&self.params, &mut g, x.view(), dz.view());
            self.opt.update(&mut self.params, &mut g);
        }
    }

    fn predict(&self, x: &Array2<f64>) -> Label {
        let (l, _, _) = self.logits(x);
        if l[(0, 1)] >= l[(0, 0)] {
            Label::Gpu
        } else {
            Label::Cpu
        }
    }
}

#[derive(Debug, Clone)]
pub enum Member {
    Mlp(Box<Mlp>),
    Knn { k: usize },
    KMeans {
        clusters: usize,
        centroids: Vec<Vec<f64>>,
        labels: Vec<Label>,
    },
}

/// Seven perceptrons of different widths and seeds, seven nearest-neighbour
/// voters with odd `k` from 1 to 13, and seven k-means voters with 2 to 8
/// clusters, each cluster voting its majority label. All members see inputs
/// divided by the per-dimension maximum of the seed data.
#[derive(Debug, Clone)]
pub struct Committee {
    cfg: CommitteeConfig,
    space: FeatureSpace,
    scale: Vec<f64>,
    buffer: Vec<LabeledPoint>,
    rows: Vec<Vec<f64>>,
    members: Vec<Member>,
    /// Set while the buffer holds a single label; perceptrons then answer it.
    sole_label: Option<Label>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn majority(counts: [usize; 2]) -> Label {
    if counts[0] > counts[1] {
        Label::Cpu
    } else {
        Label::Gpu
    }
}

impl Committee {
    /// Fits every member on `seed_data`. Single-label data is accepted: the
    /// committee is then flagged degenerate and votes unanimously.
    pub fn fit_initial(seed_data: &[LabeledPoint], cfg: CommitteeConfig) -> Result<Self, ActiveError> {
        let first = seed_data.first().ok_or(ActiveError::EmptySeed)?;
        let space = first.features.space;
        for p in seed_data {
            if p.features.space != space {
                return Err(FeatureError::SpaceMismatch(space, p.features.space).into());
            }
        }
        let scale = crate::features::dim_max(space, seed_data.iter().map(|p| &p.features))
            .into_iter()
            .map(|m| if m > 0.0 { m } else { 1.0 })
            .collect();
        let d = space.dim();
        let mut members = Vec::with_capacity(COMMITTEE_SIZE);
        for i in 0..PER_FAMILY {
            let seed = cfg.seed.wrapping_add(i as u64);
            members.push(Member::Mlp(Box::new(Mlp::new(d, 4 + 2 * i, cfg.learning_rate, seed))));
        }
        members.extend(KNN_K.iter().map(|&k| Member::Knn { k }));
        members.extend(KMEANS_K.iter().map(|&clusters| Member::KMeans {
            clusters,
            centroids: Vec::new(),
            labels: Vec::new(),
        }));
        let mut c = Committee {
            cfg,
            space,
            scale,
            buffer: Vec::new(),
            rows: Vec::new(),
            members,
            sole_label: None,
        };
        c.absorb(seed_data);
        c.refit(true);
        Ok(c)
    }

    pub fn space(&self) -> FeatureSpace {
        self.space
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn buffer(&self) -> &[LabeledPoint] {
        &self.buffer
    }

    pub fn is_degenerate(&self) -> bool {
        self.sole_label.is_some()
    }

    fn scaled(&self, x: &FeatureVector) -> Vec<f64> {
        x.values.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    fn absorb(&mut self, points: &[LabeledPoint]) {
        for p in points {
            self.rows.push(self.scaled(&p.features));
            self.buffer.push(p.clone());
        }
    }

    fn label_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for p in &self.buffer {
            c[p.label.index()] += 1;
        }
        c
    }

    /// Appends labeled points; perceptrons continue training on the whole
    /// buffer, the other members are refit from it.
    pub fn update(&mut self, points: &[LabeledPoint]) {
        if points.is_empty() {
            return;
        }
        let was_degenerate = self.is_degenerate();
        self.absorb(points);
        self.refit(was_degenerate);
    }

    fn refit(&mut self, fresh: bool) {
        let counts = self.label_counts();
        self.sole_label = match counts {
            [0, _] => Some(Label::Gpu),
            [_, 0] => Some(Label::Cpu),
            _ => None,
        };
        let x = Array2::from_shape_fn((self.rows.len(), self.space.dim()), |(i, j)| self.rows[i][j]);
        let y: Vec<Label> = self.buffer.iter().map(|p| p.label).collect();
        let steps = if fresh { self.cfg.fit_steps } else { self.cfg.update_steps };
        let fallback = majority(counts);
        for (i, m) in self.members.iter_mut().enumerate() {
            match m {
                Member::Mlp(net) if self.sole_label.is_none() => net.train(&x, &y, steps),
                Member::KMeans {
                    clusters,
                    centroids,
                    labels,
                } => {
                    let mut rng = stream_rng(self.cfg.seed, 1000 + i as u64);
                    *centroids = kmeans(&self.rows, *clusters, self.cfg.kmeans_iters, &mut rng);
                    let mut votes = vec![[0usize; 2]; centroids.len()];
                    for (row, l) in self.rows.iter().zip(&y) {
                        votes[nearest(centroids, row)][l.index()] += 1;
                    }
                    *labels = votes
                        .iter()
                        .map(|c| if c[0] == c[1] { fallback } else { majority(*c) })
                        .collect();
                }
                _ => {}
            }
        }
    }

    fn knn_vote(&self, x: &[f64], k: usize) -> Label {
        let mut order: Vec<(f64, usize)> = self.rows.iter().map(|r| sq_dist(r, x)).zip(0..).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts = [0usize; 2];
        for &(_, i) in order.iter().take(k) {
            counts[self.buffer[i].label.index()] += 1;
        }
        if counts[0] == counts[1] {
            self.buffer[order[0].1].label
        } else {
            majority(counts)
        }
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate() {
        if sq_dist(c, x) < sq_dist(&centroids[best], x) {
            best = i;
        }
    }
    best
}

/// Lloyd's algorithm from a k-means++ start; `k` is capped by the number of
/// distinct rows, and an emptied cluster keeps its centroid.
fn kmeans<R: Rng + ?Sized>(rows: &[Vec<f64>], k: usize, iters: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for r in rows {
        if !distinct.contains(&r) {
            distinct.push(r);
        }
    }
    let k = k.min(distinct.len()).max(1);
    let mut centroids = vec![distinct[rng.gen_range(0..distinct.len())].clone()];
    while centroids.len() < k {
        let w: Vec<f64> = distinct
            .iter()
            .map(|r| centroids.iter().map(|c| sq_dist(c, r)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = w.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        for (i, &v) in w.iter().enumerate() {
            if u < v {
                pick = i;
                break;
            }
            u -= v;
        }
        centroids.push(distinct[pick].clone());
    }
    let mut assign = vec![usize::MAX; rows.len()];
    for _ in 0..iters {
        let next: Vec<usize> = rows.iter().map(|r| nearest(&centroids, r)).collect();
        if next == assign {
            break;
        }
        assign = next;
        for (ci, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows.iter().zip(&assign).filter(|(_, &a)| a == ci).map(|(r, _)| r).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in c.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    centroids
}

impl Voter for Committee {
    fn votes(&self, x: &FeatureVector) -> Vec<Label> {
        let row = self.scaled(x);
        let xa = Array2::from_shape_vec((1, row.len()), row.clone()).expect("row shape");
        self.members
            .iter()
            .map(|m| match m {
                Member::Mlp(net) => self.sole_label.unwrap_or_else(|| net.predict(&xa)),
                Member::Knn { k } => self.knn_vote(&row, *k),
                Member::KMeans { centroids, labels, .. } => labels[nearest(centroids, &row)],
            })
            .collect()
    }
}
