use super::{Label, LabeledPoint};
use crate::features::FeatureVector;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_TREE_DEPTH: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("training data needs both labels")]
    DegenerateLabels,
    #[error("training data is empty")]
    Empty,
    #[error("bad tree text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        label: Label,
        /// Training counts, indexed by `Label::index`.
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
    pub max_depth: usize,
}

/// Weighted Gini impurity times the node size: `sum over sides 2ab/(a+b)`.
fn side_score(c: [usize; 2]) -> f64 {
    let n = c[0] + c[1];
    if n == 0 {
        0.0
    } else {
        2.0 * c[0] as f64 * c[1] as f64 / n as f64
    }
}

fn majority(c: [usize; 2]) -> Label {
    // ties go to the static choice
    if c[0] > c[1] {
        Label::Cpu
    } else {
        Label::Gpu
    }
}

/// CART with Gini impurity and midpoint thresholds. A node becomes a leaf
/// when it is pure, at `max_depth`, or when no split strictly lowers the
/// impurity. Ties between splits go to the lowest feature, then the lowest
/// threshold.
pub fn fit_rows(rows: &[Vec<f64>], labels: &[Label], max_depth: usize) -> Result<DecisionTree, TreeError> {
    if rows.is_empty() {
        return Err(TreeError::Empty);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(TreeError::DegenerateLabels);
    }
    let idx: Vec<usize> = (0..rows.len()).collect();
    Ok(DecisionTree {
        root: grow(rows, labels, &idx, 0, max_depth),
        max_depth,
    })
}

fn grow(rows: &[Vec<f64>], labels: &[Label], idx: &[usize], depth: usize, max_depth: usize) -> Node {
    let mut counts = [0usize; 2];
    for &i in idx {
        counts[labels[i].index()] += 1;
    }
    let leaf = Node::Leaf {
        label: majority(counts),
        counts,
    };
    if depth >= max_depth || counts[0] == 0 || counts[1] == 0 {
        return leaf;
    }
    let parent = side_score(counts);
    let mut best: Option<(f64, usize, f64)> = None;
    let dims = rows[idx[0]].len();
    for f in 0..dims {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let mut left = [0usize; 2];
        for pos in 0..order.len() - 1 {
            left[labels[order[pos]].index()] += 1;
            let (lo, hi) = (rows[order[pos]][f], rows[order[pos + 1]][f]);
            if lo == hi {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let score = side_score(left) + side_score(right);
            if best.map_or(true, |b| score < b.0) {
                best = Some((score, f, lo + (hi - lo) / 2.0));
            }
        }
    }
    match best {
        Some((score, feature, threshold)) if score < parent => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(rows, labels, &l, depth + 1, max_depth)),
                right: Box::new(grow(rows, labels, &r, depth + 1, max_depth)),
            }
        }
        _ => leaf,
    }
}

pub fn train_tree(data: &[LabeledPoint], max_depth: usize) -> Result<DecisionTree, TreeError> {
    let rows: Vec<Vec<f64>> = data.iter().map(|p| p.features.values.clone()).collect();
    let labels: Vec<Label> = data.iter().map(|p| p.label).collect();
    fit_rows(&rows, &labels, max_depth)
}

impl DecisionTree {
    pub fn predict_row(&self, x: &[f64]) -> Label {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { label, .. } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> Label {
        self.predict_row(&fv.values)
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Indented text, one node per line: `split <feature> <threshold>` followed
    /// by its two children, or `leaf <LABEL> <cpu count> <gpu count>`.
    pub fn to_text(&self) -> String {
        fn emit(n: &Node, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match n {
                Node::Leaf { label, counts } => {
                    let _ = writeln!(out, "{pad}leaf {label} {} {}", counts[0], counts[1]);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(out, "{pad}split {feature} {threshold:?}");
                    emit(left, indent + 1, out);
                    emit(right, indent + 1, out);
                }
            }
        }
        let mut out = format!("max_depth {}\n", self.max_depth);
        emit(&self.root, 0, &mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TreeError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: &str| TreeError::Parse {
            line: line + 1,
            msg: msg.into(),
        };
        let (n0, first) = lines.next().ok_or_else(|| err(0, "empty"))?;
        let max_depth = first
            .strip_prefix("max_depth ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| err(n0, "expected max_depth"))?;
        fn parse<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            err: &impl Fn(usize, &str) -> TreeError,
        ) -> Result<Node, TreeError> {
            let (n, line) = lines.next().ok_or_else(|| err(usize::MAX - 1, "truncated tree"))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["leaf", label, c, g] => Ok(Node::Leaf {
                    label: label.parse().map_err(|e: String| err(n, &e))?,
                    counts: [
                        c.parse().map_err(|_| err(n, "bad count"))?,
                        g.parse().map_err(|_| err(n, "bad count"))?,
                    ],
                }),
                ["split", f, t] => Ok(Node::Split {
                    feature: f.parse().map_err(|_| err(n, "bad feature"))?,
                    threshold: t.parse().map_err(|_| err(n, "bad threshold"))?,
                    left: Box::new(parse(lines, err)?),
                    right: Box::new(parse(lines, err)?),
                }),
                _ => Err(err(n, "expected leaf or split")),
            }
        }
        let root = parse(&mut lines, &err)?;
        if let Some((n, _)) = lines.next() {
            return Err(err(n, "trailing lines"));
        }
        Ok(DecisionTree { root, max_depth })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_separable_gives_one_split() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * 7 % 3) as f64, i as f64]).collect();
        let labels: Vec<Label> = (0..10).map(|i| if i < 4 { Label::Cpu } else { Label::Gpu }).collect();
        let t = fit_rows(&rows, &labels, 5).unwrap();
        assert_eq!(t.depth(), 1);
        match &t.root {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 1);
                assert_eq!(*threshold, 3.5);
            }
            _ => panic!("expected a split"),
        }
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict_row(r), *l);
        }
        assert_eq!(DecisionTree::from_text(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn degenerate_and_empty() {
        assert_eq!(fit_rows(&[vec![1.0]], &[Label::Gpu], 3), Err(TreeError::DegenerateLabels));
        assert_eq!(fit_rows(&[], &[], 3), Err(TreeError::Empty));
    }

    #[test]
    fn depth_zero_is_a_majority_leaf() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let t = fit_rows(&rows, &[Label::Cpu, Label::Gpu, Label::Gpu], 0).unwrap();
        assert_eq!(t.root, Node::Leaf { label: Label::Gpu, counts: [1, 2] });
    }
}
