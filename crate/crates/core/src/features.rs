//! Per-series temporal PCA. Each channel (or spatial component) gets its own
//! PCA over the time axis; components explaining less than 1% of that
//! series' variance are dropped and the remaining scores are concatenated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance, sym_eig, SymMatrix};
use crate::par;

/// Minimum explained-variance ratio of a retained component (inclusive).
pub const VARIANCE_THRESHOLD: f64 = 0.01;

/// PCA of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPca {
    /// Per-sample training mean (`N_t`).
    pub mean: DVector<f64>,
    /// Orthonormal retained directions (`N_t × k`).
    pub basis: DMatrix<f64>,
    /// Variance of each retained component.
    pub explained_variance: Vec<f64>,
    /// Fraction of the series' total variance per retained component.
    pub explained_ratio: Vec<f64>,
}

impl SeriesPca {
    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPcaModel {
    pub series: Vec<SeriesPca>,
    pub n_times: usize,
}

impl SeriesPcaModel {
    pub fn n_series(&self) -> usize {
        self.series.len()
    }

    /// Total feature count `Σᵢ kᵢ`.
    pub fn n_features(&self) -> usize {
        self.series.iter().map(SeriesPca::n_components).sum()
    }
}

/// Row-major samples (`n × d`) with their class tags (`true` = target).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }
}

fn series_samples(data: &[DMatrix<f64>], i: usize) -> DMatrix<f64> {
    // N_t × n, one observation per column
    let n_t = data[0].ncols();
    DMatrix::from_fn(n_t, data.len(), |t, k| data[k][(i, t)])
}

fn check_stack(data: &[DMatrix<f64>]) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| Error::EmptySet("no samples".into()))?;
    let shape = first.shape();
    if let Some(bad) = data.iter().find(|d| d.shape() != shape) {
        return Err(Error::shape(
            format!("{}x{}", shape.0, shape.1),
            format!("{}x{}", bad.nrows(), bad.ncols()),
        ));
    }
    Ok(shape)
}

/// Independent PCA for each of the `m` series in a stack of `m × N_t`
/// matrices.
pub fn fit_series_pca(train: &[DMatrix<f64>]) -> Result<SeriesPcaModel> {
    fit_series_pca_with(train, VARIANCE_THRESHOLD)
}

pub fn fit_series_pca_with(train: &[DMatrix<f64>], threshold: f64) -> Result<SeriesPcaModel> {
    let (m, n_t) = check_stack(train)?;
    if train.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "PCA needs at least 2 samples, got {}",
            train.len()
        )));
    }
    if train.iter().any(|d| d.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("PCA input has non-finite entries".into()));
    }
    let series = par::map_range(m, |i| fit_one(&series_samples(train, i), threshold, i));
    Ok(SeriesPcaModel {
        series: series.into_iter().collect::<Result<_>>()?,
        n_times: n_t,
    })
}

fn fit_one(samples: &DMatrix<f64>, threshold: f64, index: usize) -> Result<SeriesPca> {
    let n_t = samples.nrows();
    let mean = samples.column_mean();
    let cov: SymMatrix = covariance(samples, true)?;
    let eig = sym_eig(&cov)?;
    let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        log::warn!("series {index} has zero variance and contributes no features");
        return Ok(SeriesPca {
            mean,
            basis: DMatrix::zeros(n_t, 0),
            explained_variance: vec![],
            explained_ratio: vec![],
        });
    }
    let keep: Vec<usize> = (0..n_t)
        .filter(|&j| eig.values[j].max(0.0) / total >= threshold)
        .collect();
    Ok(SeriesPca {
        mean,
        basis: eig.vectors.select_columns(keep.iter()),
        explained_variance: keep.iter().map(|&j| eig.values[j]).collect(),
        explained_ratio: keep.iter().map(|&j| eig.values[j].max(0.0) / total).collect(),
    })
}

/// Projects each series onto its retained basis after subtracting the
/// training mean and concatenates the scores in series order.
pub fn transform_features(model: &SeriesPcaModel, data: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if data.is_empty() {
        return Ok(DMatrix::zeros(0, model.n_features()));
    }
    let (m, n_t) = check_stack(data)?;
    if m != model.n_series() || n_t != model.n_times {
        return Err(Error::shape(
            format!("{}x{}", model.n_series(), model.n_times),
            format!("{m}x{n_t}"),
        ));
    }
    let mut out = DMatrix::zeros(data.len(), model.n_features());
    let mut col = 0;
    for (i, s) in model.series.iter().enumerate() {
        let k = s.n_components();
        if k == 0 {
            continue;
        }
        let mut x = series_samples(data, i);
        for mut c in x.column_iter_mut() {
            c -= &s.mean;
        }
        let scores = x.transpose() * &s.basis;
        out.columns_mut(col, k).copy_from(&scores);
        col += k;
    }
    Ok(out)
}

/// [`transform_features`] plus labels.
pub fn feature_matrix(model: &SeriesPcaModel, data: &[DMatrix<f64>], labels: Vec<bool>) -> Result<FeatureMatrix> {
    if labels.len() != data.len() {
        return Err(Error::shape(format!("{} labels", data.len()), labels.len()));
    }
    Ok(FeatureMatrix {
        values: transform_features(model, data)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn rank_one_series_keeps_one_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wave = [1.0, -2.0, 0.5, 3.0, 0.0];
        let data: Vec<DMatrix<f64>> = (0..30)
            .map(|_| {
                let a = gaussian(&mut rng);
                DMatrix::from_fn(1, 5, |_, t| a * wave[t])
            })
            .collect();
        let model = fit_series_pca(&data).unwrap();
        assert_eq!(model.series[0].n_components(), 1);
        assert_relative_eq!(model.series[0].explained_ratio[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_noise_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<DMatrix<f64>> = (0..20_000)
            .map(|_| DMatrix::from_fn(1, 4, |_, _| gaussian(&mut rng)))
            .collect();
        let model = fit_series_pca(&data).unwrap();
        let ratios = &model.series[0].explained_ratio;
        assert_eq!(ratios.len(), 4);
        for r in ratios {
            assert!((r - 0.25).abs() < 0.02, "{ratios:?}");
        }
    }

    #[test]
    fn constructed_spectrum_drops_minor_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // variances 0.995 / 0.005 along two orthogonal temporal directions
        let (s1, s2) = (0.995f64.sqrt(), 0.005f64.sqrt());
        let data: Vec<DMatrix<f64>> = (0..5000)
            .map(|_| {
                let (a, b) = (gaussian(&mut rng) * s1, gaussian(&mut rng) * s2);
                DMatrix::from_row_slice(1, 2, &[a + b, a - b])
            })
            .collect();
        let model = fit_series_pca(&data).unwrap();
        assert_eq!(model.series[0].n_components(), 1);
    }

    #[test]
    fn training_scores_have_component_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<DMatrix<f64>> = (0..200)
            .map(|_| {
                let base = gaussian(&mut rng);
                DMatrix::from_fn(2, 6, |c, t| base * (t as f64 + 1.0) * (c as f64 + 1.0) + gaussian(&mut rng))
            })
            .collect();
        let model = fit_series_pca(&data).unwrap();
        let scores = transform_features(&model, &data).unwrap();
        assert_eq!(scores.ncols(), model.n_features());
        let mut col = 0;
        for s in &model.series {
            let block = scores.columns(col, s.n_components());
            let mean = block.row_mean();
            let mut centered = block.into_owned();
            for mut r in centered.row_iter_mut() {
                r -= &mean;
            }
            let cov = centered.tr_mul(&centered) / (data.len() as f64 - 1.0);
            for j in 0..s.n_components() {
                assert_relative_eq!(cov[(j, j)], s.explained_variance[j], max_relative = 1e-8);
                for k in 0..j {
                    let corr = cov[(j, k)] / (cov[(j, j)] * cov[(k, k)]).sqrt();
                    assert!(corr.abs() < 1e-6);
                }
            }
            col += s.n_components();
        }
    }

    #[test]
    fn zero_input_maps_to_negative_mean_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<DMatrix<f64>> = (0..50)
            .map(|_| DMatrix::from_fn(1, 3, |_, t| 5.0 + t as f64 + gaussian(&mut rng)))
            .collect();
        let model = fit_series_pca(&data).unwrap();
        let s = &model.series[0];
        let z = transform_features(&model, &[DMatrix::zeros(1, 3)]).unwrap();
        let expected = -(s.basis.transpose() * &s.mean);
        assert_relative_eq!(z.row(0).transpose(), expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_series_contributes_nothing() {
        let data: Vec<DMatrix<f64>> = (0..10)
            .map(|k| DMatrix::from_fn(2, 3, |c, t| if c == 0 { 1.0 } else { (k * t) as f64 }))
            .collect();
        let model = fit_series_pca(&data).unwrap();
        assert_eq!(model.series[0].n_components(), 0);
        assert!(model.series[1].n_components() > 0);
        assert_eq!(transform_features(&model, &data).unwrap().ncols(), model.n_features());
    }

    #[test]
    fn identity_basis_gives_centered_samples() {
        let mean = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let model = SeriesPcaModel {
            series: vec![SeriesPca {
                mean: mean.clone(),
                basis: DMatrix::identity(3, 3),
                explained_variance: vec![1.0; 3],
                explained_ratio: vec![1.0 / 3.0; 3],
            }],
            n_times: 3,
        };
        let x = DMatrix::from_row_slice(1, 3, &[4.0, -1.0, 0.5]);
        let f = transform_features(&model, &[x.clone()]).unwrap();
        assert_eq!(f.row(0).transpose(), x.row(0).transpose() - mean);
    }

    #[test]
    fn errors() {
        assert!(fit_series_pca(&[DMatrix::zeros(2, 3)]).is_err());
        let model = fit_series_pca(&[DMatrix::from_element(1, 3, 1.0), DMatrix::from_element(1, 3, 2.0)]).unwrap();
        assert!(transform_features(&model, &[DMatrix::zeros(2, 3)]).is_err());
    }
}
