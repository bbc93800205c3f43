//! Regression over extracted components: ordinary least squares, kernel
//! ridge regression and Gaussian process regression.
//!
//! KRR and GPR share one composite kernel,
//!
//! `k(x1, x2) = (x1 · x2 + σ²) + exp(-‖x1 - x2‖² / (2 l²)) + (δ if same sample)`,
//!
//! whose white-noise term contributes only on the training diagonal and
//! doubles as the ridge regularizer. The two hence differ only in target
//! centering: GPR subtracts the training-target mean and adds it back at
//! prediction, exposing a predictive variance as well.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Base jitter added to the Gram diagonal when a factorization fails,
/// as a multiple of `trace/n`. Escalates tenfold per retry.
const JITTER_FACTOR: f64 = 1e-10;
const JITTER_ATTEMPTS: usize = 3;

/// Hyperparameters of the composite kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Dot-product offset σ².
    pub sigma2: f64,
    /// RBF length scale l.
    pub length_scale: f64,
    /// White-kernel variance δ.
    pub noise: f64,
}

impl KernelParams {
    pub fn new(sigma2: f64, length_scale: f64, noise: f64) -> Result<Self> {
        let p = Self {
            sigma2,
            length_scale,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma2.is_finite() || self.sigma2 < 0.0 {
            return Err(Error::Parameter(format!("sigma2 = {}", self.sigma2)));
        }
        if !self.length_scale.is_finite() || self.length_scale <= 0.0 {
            return Err(Error::Parameter(format!(
                "length_scale = {}",
                self.length_scale
            )));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::Parameter(format!("noise = {}", self.noise)));
        }
        Ok(())
    }
}

/// Evaluates the composite kernel between two feature vectors.
///
/// `same_point` flags identity of sample, not value equality: only the
/// training diagonal receives the white-noise term, so duplicated
/// coordinates in distinct samples get no cross δ.
pub fn kernel_eval(x1: &[f64], x2: &[f64], params: &KernelParams, same_point: bool) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::Shape(format!(
            "kernel inputs of length {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    if x1.iter().chain(x2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite kernel input".into()));
    }
    params.validate()?;
    let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
    let sq_dist: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    let k_d = dot + params.sigma2;
    let k_r = (-sq_dist / (2.0 * params.length_scale * params.length_scale)).exp();
    let k_w = if same_point { params.noise } else { 0.0 };
    Ok(k_d + k_r + k_w)
}

/// Training Gram matrix `K_d + K_r + δ I` over the rows of `z`.
pub fn gram_matrix(z: &DMatrix<f64>, params: &KernelParams) -> DMatrix<f64> {
    let n = z.nrows();
    let dot = z * z.transpose();
    let mut gram = DMatrix::zeros(n, n);
    let two_l2 = 2.0 * params.length_scale * params.length_scale;
    for i in 0..n {
        for j in 0..=i {
            let sq_dist = dot[(i, i)] + dot[(j, j)] - 2.0 * dot[(i, j)];
            let value = dot[(i, j)] + params.sigma2 + (-sq_dist.max(0.0) / two_l2).exp();
            gram[(i, j)] = value;
            gram[(j, i)] = value;
        }
        gram[(i, i)] += params.noise;
    }
    gram
}

/// Cross kernel between test rows and training rows; the white term never
/// applies because a test point is not a training sample.
pub fn cross_kernel(test: &DMatrix<f64>, train: &DMatrix<f64>, params: &KernelParams) -> DMatrix<f64> {
    let m = test.nrows();
    let n = train.nrows();
    let two_l2 = 2.0 * params.length_scale * params.length_scale;
    DMatrix::from_fn(m, n, |i, j| {
        let a = test.row(i);
        let b = train.row(j);
        let dot = a.dot(&b);
        let sq_dist = (a - b).norm_squared();
        dot + params.sigma2 + (-sq_dist / two_l2).exp()
    })
}

/// A fitted regressor. OLSR stores primal coefficients; KRR and GPR store
/// the training features and dual weights.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressionModel {
    Olsr {
        coefficients: DVector<f64>,
        intercept: f64,
    },
    Krr {
        train: DMatrix<f64>,
        dual_weights: DVector<f64>,
        params: KernelParams,
    },
    Gpr {
        train: DMatrix<f64>,
        dual_weights: DVector<f64>,
        params: KernelParams,
        y_mean: f64,
        /// Cholesky factor of the regularized Gram matrix, kept for the
        /// predictive variance.
        chol: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegressMethod {
    Olsr,
    Krr,
    Gpr,
}

impl RegressMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RegressMethod::Olsr => "OLSR",
            RegressMethod::Krr => "KRR",
            RegressMethod::Gpr => "GPR",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OLSR" | "OLS" => Ok(RegressMethod::Olsr),
            "KRR" => Ok(RegressMethod::Krr),
            "GPR" => Ok(RegressMethod::Gpr),
            other => Err(Error::Parameter(format!(
                "unknown regression method {other:?}"
            ))),
        }
    }

    /// Whether the method takes kernel hyperparameters.
    pub fn uses_kernel(&self) -> bool {
        !matches!(self, RegressMethod::Olsr)
    }
}

impl RegressionModel {
    pub fn method(&self) -> RegressMethod {
        match self {
            RegressionModel::Olsr { .. } => RegressMethod::Olsr,
            RegressionModel::Krr { .. } => RegressMethod::Krr,
            RegressionModel::Gpr { .. } => RegressMethod::Gpr,
        }
    }

    fn feature_dim(&self) -> usize {
        match self {
            RegressionModel::Olsr { coefficients, .. } => coefficients.len(),
            RegressionModel::Krr { train, .. } | RegressionModel::Gpr { train, .. } => {
                train.ncols()
            }
        }
    }
}

fn check_training_data(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} targets",
            z.nrows(),
            y.len()
        )));
    }
    if z.nrows() == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if z.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training data".into()));
    }
    Ok(())
}

/// Ordinary least squares with intercept. Solved on centered data through
/// an orthogonal factorization; rank-deficient feature matrices yield the
/// minimum-norm coefficient vector.
pub fn olsr_fit(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionModel> {
    check_training_data(z, y)?;
    let n = z.nrows();
    let z_mean = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.mean()));
    let y_mean = y.mean();
    let mut zc = z.clone();
    for mut row in zc.row_iter_mut() {
        row -= z_mean.transpose();
    }
    let yc = y.map(|v| v - y_mean);
    // SVD-based least squares: minimum-norm solution when rank deficient.
    let svd = zc.svd(true, true);
    let eps = f64::EPSILON * n.max(z.ncols()) as f64 * svd.singular_values.max().max(1.0);
    let coefficients = svd
        .solve(&yc, eps)
        .map_err(|e| Error::Numerical(format!("least squares solve failed: {e}")))?;
    let intercept = y_mean - z_mean.dot(&coefficients);
    Ok(RegressionModel::Olsr {
        coefficients,
        intercept,
    })
}

/// Factors the Gram matrix, retrying with escalating diagonal jitter.
fn factorize_gram(gram: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(chol) = Cholesky::new(gram.clone()) {
        return Ok(chol);
    }
    let n = gram.nrows();
    let mut jitter = JITTER_FACTOR * gram.trace() / n as f64;
    for _ in 0..JITTER_ATTEMPTS {
        let jittered = gram + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "Gram factorization failed after {JITTER_ATTEMPTS} jitter attempts"
    )))
}

/// Kernel ridge regression: dual weights `α = (K_d + K_r + δ I)⁻¹ y`.
/// The white-kernel δ is the ridge term, so it must be positive.
pub fn krr_fit(z: &DMatrix<f64>, y: &DVector<f64>, params: &KernelParams) -> Result<RegressionModel> {
    check_training_data(z, y)?;
    params.validate()?;
    if params.noise <= 0.0 {
        return Err(Error::Parameter(
            "KRR needs noise > 0 as the ridge term".into(),
        ));
    }
    let gram = gram_matrix(z, params);
    let chol = factorize_gram(&gram)?;
    let dual_weights = chol.solve(y);
    Ok(RegressionModel::Krr {
        train: z.clone(),
        dual_weights,
        params: *params,
    })
}

/// Gaussian process regression with a zero mean function on centered
/// targets: `α = (K_d + K_r + δ I)⁻¹ (y - ȳ)` and posterior mean
/// `ȳ + k*ᵀ α`.
pub fn gpr_fit(z: &DMatrix<f64>, y: &DVector<f64>, params: &KernelParams) -> Result<RegressionModel> {
    check_training_data(z, y)?;
    params.validate()?;
    if params.noise <= 0.0 {
        return Err(Error::Parameter("GPR needs noise > 0".into()));
    }
    let y_mean = y.mean();
    let yc = y.map(|v| v - y_mean);
    let gram = gram_matrix(z, params);
    let chol = factorize_gram(&gram)?;
    let dual_weights = chol.solve(&yc);
    Ok(RegressionModel::Gpr {
        train: z.clone(),
        dual_weights,
        params: *params,
        y_mean,
        chol: chol.unpack(),
    })
}

/// Predicts targets for the rows of `z`.
pub fn predict(model: &RegressionModel, z: &DMatrix<f64>) -> Result<DVector<f64>> {
    if z.ncols() != model.feature_dim() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            model.feature_dim(),
            z.ncols()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite prediction input".into()));
    }
    match model {
        RegressionModel::Olsr {
            coefficients,
            intercept,
        } => Ok(z * coefficients + DVector::from_element(z.nrows(), *intercept)),
        RegressionModel::Krr {
            train,
            dual_weights,
            params,
        } => Ok(cross_kernel(z, train, params) * dual_weights),
        RegressionModel::Gpr {
            train,
            dual_weights,
            params,
            y_mean,
            ..
        } => {
            let mean = cross_kernel(z, train, params) * dual_weights;
            Ok(mean.map(|v| v + y_mean))
        }
    }
}

/// GPR predictive variance at each row of `z`:
/// `k(x*, x*) - k*ᵀ (K + δI)⁻¹ k*`, clamped at zero. The self-kernel term
/// includes δ, so this is the variance of a new noisy observation.
pub fn gpr_predictive_variance(model: &RegressionModel, z: &DMatrix<f64>) -> Result<DVector<f64>> {
    let RegressionModel::Gpr {
        train,
        params,
        chol,
        ..
    } = model
    else {
        return Err(Error::Parameter(
            "predictive variance only defined for GPR models".into(),
        ));
    };
    if z.ncols() != train.ncols() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            train.ncols(),
            z.ncols()
        )));
    }
    let chol = Cholesky::pack_dirty(chol.clone());
    let cross = cross_kernel(z, train, params);
    let mut out = DVector::zeros(z.nrows());
    for i in 0..z.nrows() {
        let row = z.row(i).transpose();
        let k_star = cross.row(i).transpose();
        let prior = kernel_eval(row.as_slice(), row.as_slice(), params, true)?;
        let reduction = k_star.dot(&chol.solve(&k_star));
        out[i] = (prior - reduction).max(0.0);
    }
    Ok(out)
}
