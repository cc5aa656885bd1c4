//! Query-by-committee search of a feature space.

mod committee;

pub use committee::{Committee, CommitteeConfig, Member, COMMITTEE_SIZE};

use crate::downstream::{Label, LabeledPoint};
use crate::features::{FeatureError, FeatureSpace, FeatureVector};
use crate::model::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("seed data is empty")]
    EmptySeed,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
}

/// `-sum p ln p` over the vote fractions; 0 for no votes.
pub fn entropy<L: Ord>(votes: &[L]) -> f64 {
    if votes.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_insert(0) += 1;
    }
    let n = votes.len() as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Anything that casts one label vote per member for a point.
pub trait Voter {
    fn votes(&self, x: &FeatureVector) -> Vec<Label>;

    fn disagreement(&self, x: &FeatureVector) -> f64 {
        entropy(&self.votes(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub points: Vec<FeatureVector>,
    pub entropies: Vec<f64>,
    pub argmax: usize,
}

impl QueryBatch {
    pub fn argmax_point(&self) -> &FeatureVector {
        &self.points[self.argmax]
    }

    pub fn max_entropy(&self) -> f64 {
        self.entropies[self.argmax]
    }
}

/// A point uniform in `[0, bounds[j]]` per dimension, made consistent.
pub fn random_point<R: Rng + ?Sized>(space: FeatureSpace, bounds: &[f64], rng: &mut R) -> FeatureVector {
    let values = bounds.iter().map(|&b| rng.gen::<f64>() * b.max(0.0)).collect();
    FeatureVector { space, values }.make_consistent()
}

/// Scores `n` random points and returns the first entropy maximizer.
pub fn pick_query<V: Voter + ?Sized, R: Rng + ?Sized>(
    voter: &V,
    space: FeatureSpace,
    n: usize,
    bounds: &[f64],
    rng: &mut R,
) -> QueryBatch {
    assert!(n > 0, "need at least one query point");
    let points: Vec<FeatureVector> = (0..n).map(|_| random_point(space, bounds, rng)).collect();
    let entropies: Vec<f64> = points.iter().map(|p| voter.disagreement(p)).collect();
    let mut argmax = 0;
    for (i, &h) in entropies.iter().enumerate() {
        if h > entropies[argmax] {
            argmax = i;
        }
    }
    QueryBatch {
        points,
        entropies,
        argmax,
    }
}

/// The query box: per-dimension corpus maximum times `scale`.
pub fn query_bounds<'a>(
    space: FeatureSpace,
    corpus: impl IntoIterator<Item = &'a FeatureVector>,
    scale: f64,
) -> Vec<f64> {
    crate::features::dim_max(space, corpus)
        .into_iter()
        .map(|m| m * scale)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub epochs: usize,
    pub n_random_points: usize,
    /// Target random box points instead of the entropy maximizer.
    pub passive: bool,
    pub seed: u64,
    pub saturation_threshold: f64,
    /// Consecutive epochs below the threshold that end an active run.
    pub saturation_patience: usize,
}

impl Default for AlConfig {
    fn default() -> Self {
        AlConfig {
            epochs: 10,
            n_random_points: 2048,
            passive: false,
            seed: 0,
            saturation_threshold: 0.05,
            saturation_patience: 2,
        }
    }
}

/// What one targeted search hands back to the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    /// Features of every compiling kernel the search produced.
    pub features: Vec<FeatureVector>,
    pub best_proximity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub target: FeatureVector,
    pub max_entropy: f64,
    pub best_proximity: Option<f64>,
    pub new_points: usize,
    pub dataset_size: usize,
    pub speedup: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,target,max_entropy,best_proximity,dataset_size,speedup";

    pub fn to_csv_row(&self) -> String {
        let target: Vec<String> = self.target.values.iter().map(|v| v.to_string()).collect();
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            self.epoch,
            target.join(" "),
            self.max_entropy,
            opt(self.best_proximity),
            self.dataset_size,
            opt(self.speedup)
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlOutcome {
    pub dataset: Vec<LabeledPoint>,
    pub log: Vec<EpochLog>,
    pub saturated: bool,
}

/// Runs up to `cfg.epochs` rounds of query, targeted synthesis, labeling and
/// committee update. `snapshot` scores the dataset after each epoch.
pub fn al_loop<E>(
    committee: &mut Committee,
    bounds: &[f64],
    cfg: &AlConfig,
    mut synthesize: impl FnMut(&FeatureVector, usize) -> Result<Synthesis, E>,
    mut label: impl FnMut(&FeatureVector) -> Result<LabeledPoint, E>,
    mut snapshot: impl FnMut(&[LabeledPoint]) -> Option<f64>,
) -> Result<AlOutcome, E> {
    let space = committee.space();
    let mut log = Vec::new();
    let mut quiet = 0;
    let mut saturated = false;
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, epoch as u64);
        let (target, max_entropy) = if cfg.passive {
            let t = random_point(space, bounds, &mut rng);
            let h = committee.disagreement(&t);
            (t, h)
        } else {
            let q = pick_query(&*committee, space, cfg.n_random_points.max(1), bounds, &mut rng);
            (q.argmax_point().clone(), q.max_entropy())
        };
        let found = synthesize(&target, epoch)?;
        let new: Vec<LabeledPoint> = found.features.iter().map(&mut label).collect::<Result<_, _>>()?;
        committee.update(&new);
        log.push(EpochLog {
            epoch,
            target,
            max_entropy,
            best_proximity: found.best_proximity,
            new_points: new.len(),
            dataset_size: committee.buffer().len(),
            speedup: snapshot(committee.buffer()),
        });
        if !cfg.passive {
            quiet = if max_entropy < cfg.saturation_threshold { quiet + 1 } else { 0 };
            if quiet >= cfg.saturation_patience.max(1) {
                saturated = true;
                break;
            }
        }
    }
    Ok(AlOutcome {
        dataset: committee.buffer().to_vec(),
        log,
        saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[Label::Gpu; 21]), 0.0);
        let mut split = vec![Label::Gpu; 14];
        split.extend([Label::Cpu; 7]);
        let h = entropy(&split);
        assert!((h - 0.636_514_168_294_813_4).abs() < 1e-12);
        assert!((entropy(&[Label::Gpu, Label::Cpu]) - 2f64.ln()).abs() < 1e-15);
    }
}
