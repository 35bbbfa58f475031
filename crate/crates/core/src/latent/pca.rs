use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::artifact::LatentSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `r` orthonormal rows of length `d`, by descending explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

/// Top-`r` principal directions of the sample covariance (`n - 1` denominator).
///
/// Component signs are fixed so the largest-magnitude entry is positive.
pub fn pca_fit(latent: &LatentSpace, r: usize) -> Result<PcaModel, ModelError> {
    let (n, d) = (latent.rows(), latent.dims());
    if r == 0 || r > d {
        return Err(ModelError::InvalidParameter(format!(
            "target dimension {r} outside [1, {d}]"
        )));
    }
    if n < r {
        return Err(ModelError::InvalidParameter(format!(
            "{n} items cannot support {r} components"
        )));
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(latent.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, x), m) in centered.iter_mut().zip(latent.row(i)).zip(&mean) {
            *c = x - m;
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if (0..d).all(|a| cov[(a, a)] <= 0.0) {
        return Err(ModelError::Degenerate(
            "latent space has zero variance in every dimension".into(),
        ));
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(r);
    let mut explained_variance = Vec::with_capacity(r);
    for &idx in order.iter().take(r) {
        let mut v: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let pivot = v.iter().enumerate().fold(
            0,
            |best, (j, x)| if x.abs() > v[best].abs() { j } else { best },
        );
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eigen.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn input_dims(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dims(&self) -> usize {
        self.components.len()
    }

    pub fn project_row(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((c, x), m)| c * (x - m))
                    .sum()
            })
            .collect()
    }

    pub fn transform(&self, latent: &LatentSpace) -> Result<LatentSpace, ModelError> {
        if latent.dims() != self.input_dims() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dims(),
                found: latent.dims(),
            });
        }
        let r = self.output_dims();
        let mut data = Vec::with_capacity(latent.rows() * r);
        for i in 0..latent.rows() {
            data.extend(self.project_row(latent.row(i)));
        }
        Ok(LatentSpace::from_flat(latent.rows(), r, data))
    }

    /// Maps projected coordinates back into the input space.
    pub fn reconstruct(&self, projected: &LatentSpace) -> Result<LatentSpace, ModelError> {
        if projected.dims() != self.output_dims() {
            return Err(ModelError::DimensionMismatch {
                expected: self.output_dims(),
                found: projected.dims(),
            });
        }
        let d = self.input_dims();
        let mut data = Vec::with_capacity(projected.rows() * d);
        for i in 0..projected.rows() {
            let z = projected.row(i);
            for j in 0..d {
                data.push(
                    self.mean[j]
                        + self
                            .components
                            .iter()
                            .zip(z)
                            .map(|(c, zk)| c[j] * zk)
                            .sum::<f64>(),
                );
            }
        }
        Ok(LatentSpace::from_flat(projected.rows(), d, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi rotations; returns eigenvalues sorted descending.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn random_latent(rng: &mut ChaCha8Rng, n: usize, d: usize) -> LatentSpace {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        LatentSpace::from_rows(&rows)
    }

    #[test]
    fn line_in_3d() {
        let dir = [2.0, 3.0, -6.0];
        let norm = 7.0;
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 - 3.0).collect();
        let rows: Vec<Vec<f64>> = ts
            .iter()
            .map(|t| dir.iter().map(|c| 1.0 + c * t).collect())
            .collect();
        let model = pca_fit(&LatentSpace::from_rows(&rows), 1).unwrap();
        let c = &model.components[0];
        // largest-magnitude entry must come out positive
        let expected = [-2.0 / norm, -3.0 / norm, 6.0 / norm];
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{c:?}");
        }
        // variance of the projected scalar t * |dir|
        let mean_t = ts.iter().sum::<f64>() / ts.len() as f64;
        let var = ts.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>() / (ts.len() - 1) as f64
            * norm
            * norm;
        assert!((model.explained_variance[0] - var).abs() < 1e-9);
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let latent = random_latent(&mut rng, 40, 6);
        let model = pca_fit(&latent, 6).unwrap();
        let back = model
            .reconstruct(&model.transform(&latent).unwrap())
            .unwrap();
        for (a, b) in latent.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn explained_variance_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let latent = random_latent(&mut rng, 100, 10);
        let model = pca_fit(&latent, 5).unwrap();

        let (n, d) = (100, 10);
        let mean: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| latent.row(i)[j]).sum::<f64>() / n as f64)
            .collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| {
                        (0..n)
                            .map(|i| (latent.row(i)[a] - mean[a]) * (latent.row(i)[b] - mean[b]))
                            .sum::<f64>()
                            / (n - 1) as f64
                    })
                    .collect()
            })
            .collect();
        let oracle = jacobi_eigenvalues(cov);
        for (got, want) in model.explained_variance.iter().zip(&oracle[..5]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn components_orthonormal_with_positive_pivot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let latent = random_latent(&mut rng, 60, 8);
        let model = pca_fit(&latent, 4).unwrap();
        for (a, ca) in model.components.iter().enumerate() {
            for (b, cb) in model.components.iter().enumerate() {
                let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-6);
            }
            let pivot = ca
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
        for w in model.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn reconstruction_error_monotone_in_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let latent = random_latent(&mut rng, 80, 7);
        let mut last = f64::INFINITY;
        for r in 1..=7 {
            let model = pca_fit(&latent, r).unwrap();
            let back = model
                .reconstruct(&model.transform(&latent).unwrap())
                .unwrap();
            let err: f64 = latent
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(err <= last + 1e-9);
            last = err;
        }
    }

    #[test]
    fn constant_input_is_degenerate() {
        let rows = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(
            pca_fit(&LatentSpace::from_rows(&rows), 1),
            Err(ModelError::Degenerate(_))
        ));
    }

    #[test]
    fn bad_rank_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        let latent = LatentSpace::from_rows(&rows);
        assert!(pca_fit(&latent, 0).is_err());
        assert!(pca_fit(&latent, 3).is_err());
    }
}
