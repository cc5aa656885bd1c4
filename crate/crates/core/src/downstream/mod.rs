//! Device mapping: a synthetic runtime oracle, a CART classifier over SYNTAX8
//! vectors, and speedup / confusion metrics against running everything on
//! the GPU.

mod tree;

pub use tree::{train_tree, DecisionTree, Node, TreeError, DEFAULT_TREE_DEPTH};

use crate::features::{FeatureError, FeatureSpace, FeatureVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Cpu,
    Gpu,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Cpu, Label::Gpu];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Cpu => "CPU",
            Label::Gpu => "GPU",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CPU" => Ok(Label::Cpu),
            "GPU" => Ok(Label::Gpu),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: FeatureVector,
    pub label: Label,
    pub t_cpu: f64,
    pub t_gpu: f64,
}

/// Constants of the synthetic runtime oracle. With `w` the scaled work
/// (computational + memory-access counts times `workload_scale`):
/// `t_cpu = cpu_per_op * w + cpu_launch`,
/// `t_gpu = gpu_per_op * w / gpu_parallelism + gpu_transfer`.
///
/// The defaults were tuned once so that about 70% of the toy corpus maps to
/// the GPU: the per-op costs and parallelism were fixed first, then
/// `gpu_transfer` was set so that kernels with at most 4 units of work
/// stay on the CPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    pub cpu_per_op: f64,
    pub cpu_launch: f64,
    pub gpu_per_op: f64,
    pub gpu_parallelism: f64,
    pub gpu_transfer: f64,
    pub workload_scale: f64,
}

impl Default for RuntimeModel {
    fn default() -> Self {
        RuntimeModel {
            cpu_per_op: 1.0,
            cpu_launch: 0.5,
            gpu_per_op: 4.0,
            gpu_parallelism: 32.0,
            gpu_transfer: 4.5,
            workload_scale: 1.0,
        }
    }
}

impl RuntimeModel {
    /// `(t_cpu, t_gpu)` for a SYNTAX8 vector.
    pub fn runtimes(&self, fv: &FeatureVector) -> Result<(f64, f64), FeatureError> {
        if fv.space != FeatureSpace::Syntax8 {
            return Err(FeatureError::SpaceMismatch(fv.space, FeatureSpace::Syntax8));
        }
        let work = (fv.values[0] + fv.values[3]).max(0.0) * self.workload_scale;
        let t_cpu = self.cpu_per_op * work + self.cpu_launch;
        let t_gpu = self.gpu_per_op * work / self.gpu_parallelism + self.gpu_transfer;
        Ok((t_cpu, t_gpu))
    }

    /// Labels by the faster device; ties go to the CPU.
    pub fn label(&self, fv: &FeatureVector) -> Result<LabeledPoint, FeatureError> {
        let (t_cpu, t_gpu) = self.runtimes(fv)?;
        Ok(LabeledPoint {
            features: fv.clone(),
            label: if t_gpu < t_cpu { Label::Gpu } else { Label::Cpu },
            t_cpu,
            t_gpu,
        })
    }
}

pub fn synthetic_runtime(fv: &FeatureVector, model: &RuntimeModel) -> Result<(f64, f64), FeatureError> {
    model.runtimes(fv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    /// Geometric mean of `t_gpu / t_chosen`.
    pub speedup: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    /// False when the metric's denominator was zero and it was reported as 1.
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub specificity_defined: bool,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n: usize,
}

impl HeuristicReport {
    pub const CSV_HEADER: &'static str = "n,speedup,precision,recall,specificity,tp,fp,tn,fn";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n, self.speedup, self.precision, self.recall, self.specificity, self.tp, self.fp, self.tn, self.fn_
        )
    }
}

fn ratio_or_one(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (1.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

/// Scores `predict` on `eval` with GPU as the positive class. Panics on an
/// empty set.
pub fn evaluate(predict: impl Fn(&FeatureVector) -> Label, eval: &[LabeledPoint]) -> HeuristicReport {
    assert!(!eval.is_empty(), "evaluation set is empty");
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut log_sum = 0.0;
    for p in eval {
        let guess = predict(&p.features);
        let chosen = match guess {
            Label::Gpu => p.t_gpu,
            Label::Cpu => p.t_cpu,
        };
        log_sum += (p.t_gpu / chosen).ln();
        match (guess, p.label) {
            (Label::Gpu, Label::Gpu) => tp += 1,
            (Label::Gpu, Label::Cpu) => fp += 1,
            (Label::Cpu, Label::Cpu) => tn += 1,
            (Label::Cpu, Label::Gpu) => fn_ += 1,
        }
    }
    let (precision, precision_defined) = ratio_or_one(tp, tp + fp);
    let (recall, recall_defined) = ratio_or_one(tp, tp + fn_);
    let (specificity, specificity_defined) = ratio_or_one(tn, tn + fp);
    HeuristicReport {
        speedup: (log_sum / eval.len() as f64).exp(),
        precision,
        recall,
        specificity,
        precision_defined,
        recall_defined,
        specificity_defined,
        tp,
        fp,
        tn,
        fn_,
        n: eval.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(comp: f64, mem: f64) -> FeatureVector {
        let mut v = vec![0.0; 8];
        v[0] = comp;
        v[3] = mem;
        FeatureVector::new(FeatureSpace::Syntax8, v).unwrap()
    }

    #[test]
    fn limiting_cases() {
        let m = RuntimeModel::default();
        let zero = m.label(&fv(0.0, 0.0)).unwrap();
        assert_eq!(zero.label, Label::Cpu);
        assert!(zero.t_cpu > 0.0 && zero.t_gpu > zero.t_cpu);
        assert_eq!(m.label(&fv(500.0, 100.0)).unwrap().label, Label::Gpu);
        assert!(m.runtimes(&FeatureVector::zeros(FeatureSpace::IrCount)).is_err());
    }

    #[test]
    fn static_gpu_is_exactly_one() {
        let m = RuntimeModel::default();
        let pts: Vec<_> = (0..30).map(|i| m.label(&fv(i as f64, (i % 4) as f64)).unwrap()).collect();
        let r = evaluate(|_| Label::Gpu, &pts);
        assert_eq!(r.speedup, 1.0);
    }

    #[test]
    fn label_text() {
        assert_eq!("gpu".parse::<Label>().unwrap(), Label::Gpu);
        assert_eq!(Label::Cpu.to_string(), "CPU");
        assert_eq!(serde_json::to_string(&Label::Gpu).unwrap(), "\"GPU\"");
    }
}
