use benchsynth::downstream::{Label, Node};

/// Reference tree: every observed value of every feature is a candidate
/// threshold, impurity is recomputed from scratch for each candidate by
/// filtering the node's rows.
pub enum RefNode {
    Leaf(Label),
    Split(usize, Box<RefNode>, Box<RefNode>, Vec<usize>),
}

pub fn gini_times_n(rows: &[usize], labels: &[Label]) -> f64 {
    let gpu = rows.iter().filter(|&&i| labels[i] == Label::Gpu).count();
    let cpu = rows.len() - gpu;
    if rows.is_empty() {
        0.0
    } else {
        2.0 * cpu as f64 * gpu as f64 / rows.len() as f64
    }
}

pub fn reference(data: &[Vec<f64>], labels: &[Label], rows: Vec<usize>, depth: usize, max_depth: usize) -> RefNode {
    let gpu = rows.iter().filter(|&&i| labels[i] == Label::Gpu).count();
    let cpu = rows.len() - gpu;
    let leaf = RefNode::Leaf(if cpu > gpu { Label::Cpu } else { Label::Gpu });
    if depth == max_depth || gpu == 0 || cpu == 0 {
        return leaf;
    }
    let parent = gini_times_n(&rows, labels);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..data[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&i| data[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &v in &values[..values.len() - 1] {
            let left: Vec<usize> = rows.iter().copied().filter(|&i| data[i][f] <= v).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&i| data[i][f] > v).collect();
            let score = gini_times_n(&left, labels) + gini_times_n(&right, labels);
            if best.map_or(true, |b| score < b.0) {
                best = Some((score, f, v));
            }
        }
    }
    match best {
        Some((score, f, v)) if score < parent => {
            let left: Vec<usize> = rows.iter().copied().filter(|&i| data[i][f] <= v).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&i| data[i][f] > v).collect();
            let keep = left.clone();
            RefNode::Split(
                f,
                Box::new(reference(data, labels, left, depth + 1, max_depth)),
                Box::new(reference(data, labels, right, depth + 1, max_depth)),
                keep,
            )
        }
        _ => leaf,
    }
}

pub fn same_shape(tree: &Node, r: &RefNode, data: &[Vec<f64>]) -> bool {
    match (tree, r) {
        (Node::Leaf { label, .. }, RefNode::Leaf(l)) => label == l,
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            RefNode::Split(f, rl, rr, left_rows),
        ) => {
            feature == f
                && left_rows.iter().all(|&i| data[i][*f] <= *threshold)
                && same_shape(left, rl, data)
                && same_shape(right, rr, data)
        }
        _ => false,
    }
}

pub fn reference_predict(r: &RefNode, data: &[Vec<f64>], i: usize) -> Label {
    match r {
        RefNode::Leaf(l) => *l,
        RefNode::Split(f, left, right, left_rows) => {
            let goes_left = left_rows
                .iter()
                .any(|&j| data[j][*f] >= data[i][*f]);
            reference_predict(if goes_left { left } else { right }, data, i)
        }
    }
}
