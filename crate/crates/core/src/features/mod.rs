//! Feature spaces: SYNTAX8 over the syntax tree, IRCOUNT and IRPHASE over the
//! post-DCE IR. All vectors are `f64`.

mod ir;
mod pca;
mod syntax;

pub use ir::{extract_ircount, extract_irphase};
pub use pca::{pca2_project, pca2_project_rows};
pub use syntax::extract_syntax8;

use crate::ir::{lower_to_ir, run_dce, InstKind};
use crate::kcl::KernelAst;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("feature space mismatch: {0} vs {1}")]
    SpaceMismatch(FeatureSpace, FeatureSpace),
    #[error("target vector is the origin; proximity is undefined")]
    ZeroTarget,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("expected {expected} values for {space}, got {found}")]
    BadLength {
        space: FeatureSpace,
        expected: usize,
        found: usize,
    },
    #[error("unknown feature space {0:?}")]
    UnknownSpace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureSpace {
    Syntax8,
    IrCount,
    IrPhase,
}

pub const SYNTAX8_NAMES: [&str; 8] = [
    "computational",
    "relational",
    "atomic",
    "mem_access",
    "local_mem",
    "coalesced",
    "comp_to_mem_ratio",
    "coalesced_to_mem_ratio",
];

pub const IRPHASE_NAMES: [&str; 12] = [
    "phi_count",
    "phi_incoming_args",
    "mem_instr",
    "branches",
    "blocks",
    "blocks_with_1_succ",
    "blocks_with_2_succ",
    "binary_ops",
    "cmp_count",
    "const_operands",
    "total_instructions",
    "max_block_len",
];

/// Width of the concatenated segment layout.
pub const TOTAL_WIDTH: usize = 39;

impl FeatureSpace {
    pub const ALL: [FeatureSpace; 3] = [
        FeatureSpace::Syntax8,
        FeatureSpace::IrCount,
        FeatureSpace::IrPhase,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FeatureSpace::Syntax8 => "SYNTAX8",
            FeatureSpace::IrCount => "IRCOUNT",
            FeatureSpace::IrPhase => "IRPHASE",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FeatureSpace::Syntax8 => 8,
            FeatureSpace::IrCount => 19,
            FeatureSpace::IrPhase => 12,
        }
    }

    pub fn segment_offset(self) -> usize {
        match self {
            FeatureSpace::Syntax8 => 0,
            FeatureSpace::IrCount => 8,
            FeatureSpace::IrPhase => 27,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn names(self) -> Vec<&'static str> {
        match self {
            FeatureSpace::Syntax8 => SYNTAX8_NAMES.to_vec(),
            FeatureSpace::IrCount => InstKind::ALL
                .iter()
                .map(|k| k.name())
                .chain(["total_instructions", "total_blocks", "total_functions"])
                .collect(),
            FeatureSpace::IrPhase => IRPHASE_NAMES.to_vec(),
        }
    }

    /// Dimensions holding ratios rather than counts.
    pub fn ratio_dims(self) -> &'static [usize] {
        match self {
            FeatureSpace::Syntax8 => &[6, 7],
            _ => &[],
        }
    }
}

impl fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureSpace {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureSpace::ALL
            .into_iter()
            .find(|sp| sp.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| FeatureError::UnknownSpace(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub space: FeatureSpace,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(space: FeatureSpace, values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != space.dim() {
            return Err(FeatureError::BadLength {
                space,
                expected: space.dim(),
                found: values.len(),
            });
        }
        Ok(FeatureVector { space, values })
    }

    pub fn zeros(space: FeatureSpace) -> Self {
        FeatureVector {
            space,
            values: vec![0.0; space.dim()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rounds count dimensions to non-negative integers and recomputes ratio
    /// dimensions from them, so the vector is one a kernel could have.
    pub fn make_consistent(&self) -> FeatureVector {
        let mut v: Vec<f64> = self.values.iter().map(|x| x.round().max(0.0)).collect();
        if self.space == FeatureSpace::Syntax8 {
            v[6] = ratio(v[0], v[3]);
            v[7] = ratio(v[5], v[3]);
        }
        FeatureVector {
            space: self.space,
            values: v,
        }
    }
}

pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Features of one kernel in every space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub syntax8: FeatureVector,
    pub ircount: FeatureVector,
    pub irphase: FeatureVector,
}

impl FeatureSet {
    pub fn get(&self, space: FeatureSpace) -> &FeatureVector {
        match space {
            FeatureSpace::Syntax8 => &self.syntax8,
            FeatureSpace::IrCount => &self.ircount,
            FeatureSpace::IrPhase => &self.irphase,
        }
    }
}

/// Extracts all three spaces from a checked kernel.
pub fn extract_all(ast: &KernelAst) -> FeatureSet {
    let ir = run_dce(&lower_to_ir(ast));
    FeatureSet {
        syntax8: extract_syntax8(ast),
        ircount: extract_ircount(&ir),
        irphase: extract_irphase(&ir),
    }
}

pub fn extract(space: FeatureSpace, ast: &KernelAst) -> FeatureVector {
    match space {
        FeatureSpace::Syntax8 => extract_syntax8(ast),
        FeatureSpace::IrCount => extract_ircount(&run_dce(&lower_to_ir(ast))),
        FeatureSpace::IrPhase => extract_irphase(&run_dce(&lower_to_ir(ast))),
    }
}

pub fn distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, FeatureError> {
    if a.space != b.space {
        return Err(FeatureError::SpaceMismatch(a.space, b.space));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `1 - d(c, t) / |t|`, clamped to [0, 1].
pub fn relative_proximity(
    candidate: &FeatureVector,
    target: &FeatureVector,
) -> Result<f64, FeatureError> {
    let d = distance(candidate, target)?;
    let n = target.norm();
    if n == 0.0 {
        return Err(FeatureError::ZeroTarget);
    }
    Ok((1.0 - d / n).clamp(0.0, 1.0))
}

/// Per-dimension maximum over a set of vectors of one space; the
/// normalization box used by the model and the query sampler.
pub fn dim_max<'a>(space: FeatureSpace, vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Vec<f64> {
    let mut max = vec![0.0f64; space.dim()];
    for v in vectors {
        for (m, x) in max.iter_mut().zip(&v.values) {
            *m = m.max(*x);
        }
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: &[f64]) -> FeatureVector {
        let mut v = values.to_vec();
        v.resize(8, 0.0);
        FeatureVector::new(FeatureSpace::Syntax8, v).unwrap()
    }

    #[test]
    fn layout() {
        let widths: usize = FeatureSpace::ALL.iter().map(|s| s.dim()).sum();
        assert_eq!(widths, TOTAL_WIDTH);
        for s in FeatureSpace::ALL {
            assert_eq!(s.names().len(), s.dim());
            assert_eq!(s.tag().parse::<FeatureSpace>().unwrap(), s);
        }
        assert_eq!(FeatureSpace::IrPhase.segment_offset() + 12, TOTAL_WIDTH);
    }

    #[test]
    fn distance_examples() {
        let v = fv(&[1.0, 2.0]);
        assert_eq!(distance(&v, &v).unwrap(), 0.0);
        assert_eq!(distance(&fv(&[3.0, 4.0]), &fv(&[])).unwrap(), 5.0);
        let other = FeatureVector::zeros(FeatureSpace::IrPhase);
        assert!(matches!(
            distance(&v, &other),
            Err(FeatureError::SpaceMismatch(..))
        ));
    }

    #[test]
    fn proximity_examples() {
        let t = fv(&[3.0, 4.0]);
        assert_eq!(relative_proximity(&t, &t).unwrap(), 1.0);
        assert_eq!(relative_proximity(&fv(&[]), &t).unwrap(), 0.0);
        assert!((relative_proximity(&fv(&[3.0, 0.0]), &t).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(
            relative_proximity(&t, &fv(&[])),
            Err(FeatureError::ZeroTarget)
        );
    }

    #[test]
    fn consistency_recomputes_ratios() {
        let v = fv(&[2.6, 0.0, 0.0, 3.9, 0.0, 1.2, 9.0, 9.0]).make_consistent();
        assert_eq!(v.values, vec![3.0, 0.0, 0.0, 4.0, 0.0, 1.0, 0.75, 0.25]);
    }
}
