//! Two-component PCA for exporting feature clouds as plottable points.

use super::{FeatureError, FeatureVector};
use nalgebra::{DMatrix, SymmetricEigen};

/// Projects vectors of one space onto their top two principal components.
pub fn pca2_project(vectors: &[FeatureVector]) -> Result<Vec<(f64, f64)>, FeatureError> {
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.space != first.space) {
            return Err(FeatureError::SpaceMismatch(first.space, bad.space));
        }
    }
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    pca2_project_rows(&rows)
}

/// Mean-centred projection onto the two leading eigenvectors of the sample
/// covariance. Each eigenvector is signed so its first non-negligible loading
/// is positive. With one input dimension the second coordinate is 0.
pub fn pca2_project_rows(rows: &[Vec<f64>]) -> Result<Vec<(f64, f64)>, FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::DegenerateData("need at least 2 vectors".into()));
    }
    let n = rows.len();
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(FeatureError::DegenerateData("ragged or empty rows".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(FeatureError::DegenerateData("covariance has rank 0".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let component = |k: usize| -> Vec<f64> {
        let Some(&idx) = order.get(k) else {
            return vec![0.0; d];
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        v
    };
    let (c1, c2) = (component(0), component(1));
    Ok((0..n)
        .map(|i| {
            let row = centered.row(i);
            let p = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            (p(&c1), p(&c2))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_are_degenerate() {
        let rows = vec![vec![1.0, 2.0]; 4];
        assert!(matches!(
            pca2_project_rows(&rows),
            Err(FeatureError::DegenerateData(_))
        ));
    }

    #[test]
    fn two_dim_preserves_distances() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![3.0, 1.0],
            vec![-1.0, 2.0],
            vec![4.0, -2.0],
            vec![0.5, 0.25],
        ];
        let p = pca2_project_rows(&rows).unwrap();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let d0 = ((rows[i][0] - rows[j][0]).powi(2) + (rows[i][1] - rows[j][1]).powi(2)).sqrt();
                let d1 = ((p[i].0 - p[j].0).powi(2) + (p[i].1 - p[j].1).powi(2)).sqrt();
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
        let var = |f: &dyn Fn(&(f64, f64)) -> f64| p.iter().map(|q| f(q).powi(2)).sum::<f64>();
        assert!(var(&|q| q.0) >= var(&|q| q.1));
    }
}
