//! Dense symmetric linear algebra shared by the filter estimators and
//! classifiers: sample covariance, oracle-approximating shrinkage, and
//! (generalized) symmetric eigenproblems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const EIG_MAX_ITER: usize = 10_000;

/// Floor used when a covariance has zero trace.
pub const DEGENERATE_EPSILON: f64 = 1e-12;

/// A real symmetric matrix. The stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates `m` (square, finite, symmetric within 1e-12 relative) and
    /// stores its symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::shape("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::Data(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Replaces `m` by `(m + mᵀ)/2` without validating it.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square());
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Solves `self · x = b` by Cholesky factorization.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let chol = self
            .0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Definiteness("Cholesky factorization failed".into()))?;
        Ok(chol.solve(b))
    }

    /// Quadratic form `vᵀ·self·v`.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }
}

/// Eigenpairs with eigenvalues sorted in descending order; column `j` of
/// `vectors` belongs to `values[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }
}

/// Sample covariance `(1/(N−1))·D̃·D̃ᵀ` of an `N_c × N` matrix whose columns
/// are observations; rows are centered first when `center` is set.
pub fn covariance(data: &DMatrix<f64>, center: bool) -> Result<SymMatrix> {
    let n = data.ncols();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "covariance needs at least 2 observations, got {n}"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("covariance input has non-finite entries".into()));
    }
    let scatter = if center {
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        &centered * centered.transpose()
    } else {
        data * data.transpose()
    };
    Ok(SymMatrix::symmetrize(scatter / (n as f64 - 1.0)))
}

/// Result of [`shrink_covariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Shrunk {
    pub matrix: SymMatrix,
    /// Shrinkage intensity ρ ∈ [0, 1].
    pub intensity: f64,
    /// Set when the input had zero trace and `ε·I` was returned.
    pub degenerate: bool,
}

/// Oracle-approximating shrinkage toward the scaled identity
/// `(trace(S)/p)·I`, with intensity
///
/// ```text
/// ρ = min(1, ((1 − 2/p)·tr(S²) + tr(S)²) / ((n + 1 − 2/p)·(tr(S²) − tr(S)²/p)))
/// ```
///
/// where `n` is the number of samples behind `S`. The intensity is invariant
/// to the scale of `S`.
pub fn shrink_covariance(s: &SymMatrix, samples: usize) -> Shrunk {
    let p = s.dim() as f64;
    let tr = s.trace();
    if !(tr > 0.0) {
        return Shrunk {
            matrix: SymMatrix(DMatrix::identity(s.dim(), s.dim()) * DEGENERATE_EPSILON),
            intensity: 1.0,
            degenerate: true,
        };
    }
    let tr_sq = s.matrix().norm_squared();
    let n = samples as f64;
    let num = (1.0 - 2.0 / p) * tr_sq + tr * tr;
    let den = (n + 1.0 - 2.0 / p) * (tr_sq - tr * tr / p);
    let rho = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 1.0 };
    let mu = tr / p;
    let mut out = s.matrix() * (1.0 - rho);
    for i in 0..s.dim() {
        out[(i, i)] += rho * mu;
    }
    Shrunk {
        matrix: SymMatrix::symmetrize(out),
        intensity: rho,
        degenerate: false,
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
pub(crate) fn canonical_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0_f64, |best, v| {
            if v.abs() > best.abs() {
                v
            } else {
                best
            }
        });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

fn sorted_descending(values: DVector<f64>, vectors: DMatrix<f64>) -> EigenDecomposition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps the solver's order among exact ties
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));
    let vectors = vectors.select_columns(order.iter());
    EigenDecomposition { values, vectors }
}

/// Full spectral decomposition of a symmetric matrix, eigenvalues
/// descending, unit eigenvectors with canonical signs.
pub fn sym_eig(s: &SymMatrix) -> Result<EigenDecomposition> {
    let eig = SymmetricEigen::try_new(s.matrix().clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut out = sorted_descending(eig.eigenvalues, eig.eigenvectors);
    canonical_signs(&mut out.vectors);
    Ok(out)
}

/// Solves `A·v = λ·B·v` for symmetric `A` and symmetric positive definite
/// `B` by Cholesky whitening. Eigenvectors are B-orthonormal.
pub fn gen_eig(a: &SymMatrix, b: &SymMatrix) -> Result<EigenDecomposition> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            format!("{0}x{0}", a.dim()),
            format!("{0}x{0}", b.dim()),
        ));
    }
    let chol = b
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Definiteness("B in A·v = λ·B·v".into()))?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let left = l
        .solve_lower_triangular(a.matrix())
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let inner = sym_eig(&SymMatrix::symmetrize(c))?;
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&inner.vectors)
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    canonical_signs(&mut vectors);
    Ok(EigenDecomposition {
        values: inner.values,
        vectors,
    })
}

/// Frobenius-normalized cosine between two vectors, ignoring sign.
pub fn abs_cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (a.dot(b) / denom).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let m = random_matrix(dim, dim + 4, rng);
        let mut s = &m * m.transpose();
        for i in 0..dim {
            s[(i, i)] += 0.5;
        }
        SymMatrix::symmetrize(s)
    }

    #[test]
    fn covariance_hand_example() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        let c = covariance(&data, true).unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn covariance_zero_and_errors() {
        let c = covariance(&DMatrix::zeros(3, 10), true).unwrap();
        assert_eq!(c.matrix(), &DMatrix::<f64>::zeros(3, 3));
        assert!(matches!(
            covariance(&DMatrix::zeros(3, 1), true),
            Err(Error::DegenerateInput(_))
        ));
        let mut bad = DMatrix::zeros(2, 4);
        bad[(1, 2)] = f64::NAN;
        assert!(matches!(covariance(&bad, false), Err(Error::Data(_))));
    }

    #[test]
    fn covariance_of_standard_normal_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = covariance(&random_matrix(4, 1000, &mut rng), true).unwrap();
        let diff = c.matrix() - DMatrix::<f64>::identity(4, 4);
        assert!(diff.amax() < 0.15, "max deviation {}", diff.amax());
    }

    #[test]
    fn shrinkage_examples() {
        let id = shrink_covariance(&SymMatrix::identity(5), 3);
        assert_relative_eq!(id.matrix.matrix(), &DMatrix::identity(5, 5), epsilon = 1e-15);

        let singular = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        let out = shrink_covariance(&singular, 2);
        let eig = sym_eig(&out.matrix).unwrap();
        assert!(eig.values[1] > 0.0);

        let zero = shrink_covariance(&SymMatrix::symmetrize(DMatrix::zeros(3, 3)), 10);
        assert!(zero.degenerate);
        assert_eq!(zero.matrix.matrix(), &(DMatrix::identity(3, 3) * 1e-12));
    }

    #[test]
    fn shrinkage_vanishes_with_many_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_spd(6, &mut rng);
        let few = shrink_covariance(&s, 10).intensity;
        let many = shrink_covariance(&s, 1_000_000).intensity;
        assert!(many < few);
        assert!(many < 1e-4);
    }

    #[test]
    fn sym_eig_examples() {
        let d = sym_eig(&SymMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(d.values.as_slice(), &[3.0, 2.0, 1.0]);
        assert_relative_eq!(d.vector(0), DVector::from_column_slice(&[1.0, 0.0, 0.0]));
        assert_relative_eq!(d.vector(1), DVector::from_column_slice(&[0.0, 0.0, 1.0]));

        let i = sym_eig(&SymMatrix::identity(4)).unwrap();
        assert_relative_eq!(i.values, DVector::from_element(4, 1.0), epsilon = 1e-14);

        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = sym_eig(&m).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(abs_cosine(&e.vector(0), &DVector::from_column_slice(&[h, h])), 1.0, epsilon = 1e-12);
        assert_relative_eq!(abs_cosine(&e.vector(1), &DVector::from_column_slice(&[h, -h])), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gen_eig_trivial_cases() {
        let e = gen_eig(&SymMatrix::from_diagonal(&[4.0, 1.0]), &SymMatrix::identity(2)).unwrap();
        assert_relative_eq!(e.values, DVector::from_column_slice(&[4.0, 1.0]), epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_spd(5, &mut rng);
        let e = gen_eig(&b, &b).unwrap();
        assert_relative_eq!(e.values, DVector::from_element(5, 1.0), epsilon = 1e-10);
    }

    #[test]
    fn gen_eig_rejects_indefinite_b() {
        let a = SymMatrix::identity(2);
        let b = SymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(gen_eig(&a, &b), Err(Error::Definiteness(_))));
    }

    #[test]
    fn gen_eig_matches_explicit_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let a = random_spd(8, &mut rng);
        let b = random_spd(8, &mut rng);
        let e = gen_eig(&a, &b).unwrap();
        // oracle: eigenvalues of the nonsymmetric B⁻¹A via real Schur form
        let binv_a = b.matrix().clone().try_inverse().unwrap() * a.matrix();
        let mut oracle: Vec<f64> = binv_a.complex_eigenvalues().iter().map(|z| z.re).collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (got, want) in e.values.iter().zip(&oracle) {
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
        }
        // B-orthonormality and residuals
        let gram = e.vectors.transpose() * b.matrix() * &e.vectors;
        assert_relative_eq!(gram, DMatrix::identity(8, 8), epsilon = 1e-8);
        for j in 0..8 {
            let v = e.vector(j);
            let r = a.matrix() * &v - b.matrix() * &v * e.values[j];
            assert!(r.norm() <= 1e-8 * (a.matrix().norm() + e.values[j].abs() * b.matrix().norm()));
        }
    }

    #[test]
    fn symmetric_constructor_validates() {
        assert!(SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0])).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }
}
