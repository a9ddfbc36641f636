//! Linear scorers: shrinkage-regularized LDA, Bayesian linear regression
//! (MAP ridge with class-balanced regression targets), and L2-regularized
//! logistic regression fitted by damped Newton iterations.
//!
//! Feature matrices are row-major: one sample per row.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{shrink_covariance, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "BLR")]
    Blr,
    #[serde(rename = "LR")]
    Lr,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Lda, ClassifierKind::Blr, ClassifierKind::Lr];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Lda => "LDA",
            ClassifierKind::Blr => "BLR",
            ClassifierKind::Lr => "LR",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierHyper {
    None,
    Blr { alpha: f64, beta: f64 },
    Lr { lambda: f64 },
}

/// `score(x) = wᵀx + b`, passed through the logistic function for LR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ClassifierKind,
    pub weights: DVector<f64>,
    pub bias: f64,
    pub hyper: ClassifierHyper,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Affine decision value `wᵀx + b` for every row of `x`.
    pub fn decision(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape(format!("{} features", self.dim()), format!("{} features", x.ncols())));
        }
        let mut z = x * &self.weights;
        z.add_scalar_mut(self.bias);
        Ok(z)
    }

    /// Scores for every row: `p(x)` for LR, the decision value otherwise.
    pub fn scores(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let z = self.decision(x)?;
        Ok(match self.kind {
            ClassifierKind::Lr => z.map(sigmoid),
            _ => z,
        })
    }
}

/// Score of a single feature vector.
pub fn predict_score(model: &LinearModel, x: &DVector<f64>) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::shape(format!("{} features", model.dim()), format!("{} features", x.len())));
    }
    let z = model.weights.dot(x) + model.bias;
    Ok(match model.kind {
        ClassifierKind::Lr => sigmoid(z),
        _ => z,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_training(x: &DMatrix<f64>, y: &[bool]) -> Result<(usize, usize)> {
    if x.nrows() != y.len() {
        return Err(Error::shape(format!("{} labels", x.nrows()), y.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("features contain non-finite values".into()));
    }
    let n1 = y.iter().filter(|&&t| t).count();
    let n0 = y.len() - n1;
    if n1 == 0 {
        return Err(Error::ClassMissing("target"));
    }
    if n0 == 0 {
        return Err(Error::ClassMissing("standard"));
    }
    Ok((n1, n0))
}

fn class_mean(x: &DMatrix<f64>, y: &[bool], class: bool) -> DVector<f64> {
    let mut sum = DVector::zeros(x.ncols());
    let mut count = 0.0;
    for (row, _) in x.row_iter().zip(y).filter(|(_, &t)| t == class) {
        sum += row.transpose();
        count += 1.0;
    }
    sum / count
}

// ---------------------------------------------------------------------------
// LDA
// ---------------------------------------------------------------------------

/// Shrinkage LDA.
pub fn fit_lda(x: &DMatrix<f64>, y: &[bool]) -> Result<LinearModel> {
    fit_lda_with(x, y, true)
}

/// `w = S_W⁻¹(μ₁ − μ₀)` with the pooled within-class covariance `S_W`
/// (optionally shrunk); the bias puts the threshold at the midpoint of the
/// class means.
pub fn fit_lda_with(x: &DMatrix<f64>, y: &[bool], shrink: bool) -> Result<LinearModel> {
    let (n1, n0) = check_training(x, y)?;
    let mu1 = class_mean(x, y, true);
    let mu0 = class_mean(x, y, false);
    let mut centered = x.clone();
    for (mut row, &t) in centered.row_iter_mut().zip(y) {
        let mu = if t { &mu1 } else { &mu0 };
        row -= mu.transpose();
    }
    let dof = (n1 + n0).saturating_sub(2).max(1) as f64;
    let within = SymMatrix::symmetrize((centered.transpose() * &centered) / dof);
    let within = if shrink {
        shrink_covariance(&within, n1 + n0).matrix
    } else {
        within
    };
    let diff = &mu1 - &mu0;
    let w = within
        .solve(&diff)
        .map_err(|_| Error::Numeric("within-class scatter is singular".into()))?;
    let bias = -w.dot(&((&mu1 + &mu0) * 0.5));
    Ok(LinearModel {
        kind: ClassifierKind::Lda,
        weights: w,
        bias,
        hyper: ClassifierHyper::None,
    })
}

// ---------------------------------------------------------------------------
// BLR
// ---------------------------------------------------------------------------

/// Regression targets `N/N₁` for targets and `−N/N₀` for standards.
pub fn regression_targets(y: &[bool]) -> Result<DVector<f64>> {
    let n1 = y.iter().filter(|&&t| t).count();
    let n0 = y.len() - n1;
    if n1 == 0 {
        return Err(Error::ClassMissing("target"));
    }
    if n0 == 0 {
        return Err(Error::ClassMissing("standard"));
    }
    let n = y.len() as f64;
    Ok(DVector::from_iterator(
        y.len(),
        y.iter().map(|&t| if t { n / n1 as f64 } else { -n / n0 as f64 }),
    ))
}

/// `[1 | X]`.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Normal-equation pieces `X̃ᵀX̃` and `X̃ᵀy` shared by BLR fits that differ
/// only in `α`, `β`.
#[derive(Debug, Clone)]
pub struct BlrSystem {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl BlrSystem {
    pub fn new(x: &DMatrix<f64>, y: &[bool]) -> Result<Self> {
        check_training(x, y)?;
        let xt = with_intercept(x);
        let targets = regression_targets(y)?;
        Ok(BlrSystem {
            gram: xt.transpose() * &xt,
            rhs: xt.tr_mul(&targets),
        })
    }

    /// MAP weights `w = β(βX̃ᵀX̃ + αI)⁻¹X̃ᵀy` (intercept first).
    pub fn solve(&self, alpha: f64, beta: f64) -> Result<LinearModel> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Parameter(format!("BLR needs α, β > 0, got α={alpha}, β={beta}")));
        }
        let dim = self.gram.nrows();
        let mut system = &self.gram * beta;
        for i in 0..dim {
            system[(i, i)] += alpha;
        }
        let rhs = &self.rhs * beta;
        let full = system
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Numeric("BLR system is not positive definite".into()))?;
        Ok(LinearModel {
            kind: ClassifierKind::Blr,
            weights: full.rows(1, dim - 1).into_owned(),
            bias: full[0],
            hyper: ClassifierHyper::Blr { alpha, beta },
        })
    }
}

pub fn fit_blr(x: &DMatrix<f64>, y: &[bool], alpha: f64, beta: f64) -> Result<LinearModel> {
    BlrSystem::new(x, y)?.solve(alpha, beta)
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

/// Gradient-norm stopping tolerance for [`fit_lr`].
pub const LR_TOLERANCE: f64 = 1e-8;
pub const LR_MAX_ITER: usize = 200;

/// `J(w, b) = mean cross-entropy of p = σ(Xw + b) + λ·wᵀw`.
pub fn lr_objective(x: &DMatrix<f64>, y: &[bool], lambda: f64, w: &DVector<f64>, b: f64) -> f64 {
    let m = x.nrows() as f64;
    let z = x * w;
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &t)| {
            let zi = zi + b;
            softplus(zi) - if t { zi } else { 0.0 }
        })
        .sum();
    loss / m + lambda * w.norm_squared()
}

/// Analytic gradient `(∂J/∂w, ∂J/∂b)`.
pub fn lr_gradient(x: &DMatrix<f64>, y: &[bool], lambda: f64, w: &DVector<f64>, b: f64) -> (DVector<f64>, f64) {
    let m = x.nrows() as f64;
    let mut r = x * w;
    for (ri, &t) in r.iter_mut().zip(y) {
        *ri = sigmoid(*ri + b) - if t { 1.0 } else { 0.0 };
    }
    let gw = x.tr_mul(&r) / m + w * (2.0 * lambda);
    (gw, r.sum() / m)
}

/// Per-iteration objective values alongside the fitted model.
#[derive(Debug, Clone)]
pub struct LrTrace {
    pub objective: Vec<f64>,
    pub gradient_norm: f64,
}

pub fn fit_lr(x: &DMatrix<f64>, y: &[bool], lambda: f64) -> Result<LinearModel> {
    fit_lr_traced(x, y, lambda).map(|(m, _)| m)
}

/// Newton's method with step halving on `J`; the bias is unregularized.
pub fn fit_lr_traced(x: &DMatrix<f64>, y: &[bool], lambda: f64) -> Result<(LinearModel, LrTrace)> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("LR needs λ > 0, got {lambda}")));
    }
    check_training(x, y)?;
    let (n, d) = x.shape();
    let m = n as f64;
    let xt = with_intercept(x);
    // θ = (b, w)
    let prior = y.iter().filter(|&&t| t).count() as f64 / m;
    let mut theta = DVector::zeros(d + 1);
    theta[0] = (prior / (1.0 - prior)).ln();
    let split = |theta: &DVector<f64>| (theta.rows(1, d).into_owned(), theta[0]);

    let (w, b) = split(&theta);
    let mut obj = lr_objective(x, y, lambda, &w, b);
    let mut history = vec![obj];
    let mut grad_norm = f64::INFINITY;
    for _ in 0..LR_MAX_ITER {
        let (w, b) = split(&theta);
        let z = &xt * &theta;
        let p = z.map(sigmoid);
        let (gw, gb) = lr_gradient(x, y, lambda, &w, b);
        let grad = DVector::from_iterator(d + 1, std::iter::once(gb).chain(gw.iter().copied()));
        grad_norm = grad.norm();
        if grad_norm < LR_TOLERANCE {
            return Ok((lr_model(&theta, lambda), LrTrace { objective: history, gradient_norm: grad_norm }));
        }
        // H = X̃ᵀ diag(p(1−p)) X̃ / m + 2λ·diag(0, 1, …, 1)
        let mut weighted = xt.clone();
        for (mut row, &pi) in weighted.row_iter_mut().zip(p.iter()) {
            row *= (pi * (1.0 - pi) / m).sqrt();
        }
        let mut hess = weighted.transpose() * &weighted;
        for i in 1..=d {
            hess[(i, i)] += 2.0 * lambda;
        }
        hess[(0, 0)] += 1e-12;
        let step = hess
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or_else(|| Error::Numeric("logistic Hessian is not positive definite".into()))?;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta - &step * t;
            let (cw, cb) = split(&cand);
            let cand_obj = lr_objective(x, y, lambda, &cw, cb);
            if cand_obj <= obj - 1e-4 * t * slope {
                theta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(obj);
        if !accepted {
            // no representable decrease left; accept if the gradient is
            // already at round-off level relative to the problem scale
            let scale = 1.0 + xt.amax();
            if grad_norm < 1e-10 * scale * scale {
                return Ok((lr_model(&theta, lambda), LrTrace { objective: history, gradient_norm: grad_norm }));
            }
            break;
        }
    }
    let (w, b) = split(&theta);
    let (gw, gb) = lr_gradient(x, y, lambda, &w, b);
    let final_norm = (gw.norm_squared() + gb * gb).sqrt();
    if final_norm < LR_TOLERANCE {
        return Ok((lr_model(&theta, lambda), LrTrace { objective: history, gradient_norm: final_norm }));
    }
    Err(Error::Convergence {
        iterations: history.len() - 1,
        gradient_norm: final_norm.min(grad_norm),
    })
}

fn lr_model(theta: &DVector<f64>, lambda: f64) -> LinearModel {
    LinearModel {
        kind: ClassifierKind::Lr,
        weights: theta.rows(1, theta.len() - 1).into_owned(),
        bias: theta[0],
        hyper: ClassifierHyper::Lr { lambda },
    }
}

/// Fits `kind` with its hyperparameters.
pub fn fit_classifier(kind: ClassifierKind, hyper: ClassifierHyper, x: &DMatrix<f64>, y: &[bool]) -> Result<LinearModel> {
    match (kind, hyper) {
        (ClassifierKind::Lda, _) => fit_lda(x, y),
        (ClassifierKind::Blr, ClassifierHyper::Blr { alpha, beta }) => fit_blr(x, y, alpha, beta),
        (ClassifierKind::Lr, ClassifierHyper::Lr { lambda }) => fit_lr(x, y, lambda),
        (kind, hyper) => Err(Error::Parameter(format!("{kind} cannot use hyperparameters {hyper:?}"))),
    }
}
