//! Linear dimensionality reduction: PCA, CCA and PLS.
//!
//! All three methods fit a column mean and a d-by-k projection matrix that
//! maps centered spectra onto component scores. PCA maximizes explained
//! variance, PLS the covariance between scores and the target, CCA the
//! correlation between the two. CCA and PLS build components beyond the
//! first by deflating the data matrix against the previous score, so both
//! store a composite projection that maps raw centered data directly to
//! scores.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge factor applied to the within-X covariance in CCA, as a multiple
/// of `trace(S)/d`. The sample covariance is singular whenever there are
/// fewer samples than bands.
pub const CCA_RIDGE_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DimRedMethod {
    Pca,
    Cca,
    Pls,
}

impl DimRedMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DimRedMethod::Pca => "PCA",
            DimRedMethod::Cca => "CCA",
            DimRedMethod::Pls => "PLS",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PCA" => Ok(DimRedMethod::Pca),
            "CCA" => Ok(DimRedMethod::Cca),
            "PLS" => Ok(DimRedMethod::Pls),
            other => Err(Error::Parameter(format!("unknown dimred method {other:?}"))),
        }
    }

    /// Whether fitting needs the target vector.
    pub fn is_supervised(&self) -> bool {
        !matches!(self, DimRedMethod::Pca)
    }
}

/// A fitted linear projection from d bands to k components.
///
/// `loadings` maps centered rows to scores: `T = (X - mean) * loadings`.
/// `diagnostics` holds one scalar per component: explained variance for
/// PCA, canonical correlation for CCA and score/target covariance for PLS.
#[derive(Debug, Clone, PartialEq)]
pub struct DimRedModel {
    pub method: DimRedMethod,
    pub x_mean: DVector<f64>,
    pub loadings: DMatrix<f64>,
    pub diagnostics: Vec<f64>,
    /// Set when PLS stopped before the requested component count because
    /// the target residual vanished; holds the number of components kept.
    pub early_stop: Option<usize>,
}

impl DimRedModel {
    pub fn d(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    /// Projects rows of `x` onto the fitted components.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::Shape(format!(
                "expected {} columns, got {}",
                self.d(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.x_mean.transpose();
        }
        Ok(centered * &self.loadings)
    }
}

/// Fits PCA via singular value decomposition of the column-centered data.
///
/// Loadings are the top-k right singular vectors; diagnostics the matching
/// sample variances in non-increasing order.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<DimRedModel> {
    let (n, d) = x.shape();
    check_finite(x)?;
    if n < 2 {
        return Err(Error::Parameter(format!("PCA needs n >= 2, got {n}")));
    }
    check_k(k, n, d)?;
    let mean = column_means(x);
    let centered = center_columns(x, &mean);
    check_not_degenerate(&centered, x)?;

    let svd = centered.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce right singular vectors".into()))?;
    let mut loadings = DMatrix::zeros(d, k);
    for j in 0..k {
        loadings.set_column(j, &v_t.row(j).transpose());
    }
    let diagnostics: Vec<f64> = svd
        .singular_values
        .iter()
        .take(k)
        .map(|s| s * s / (n as f64 - 1.0))
        .collect();
    orient_columns(&mut loadings, None);
    finish_model(DimRedMethod::Pca, mean, loadings, diagnostics, None)
}

/// Fits CCA against a scalar target. The first direction maximizes the
/// Pearson correlation between scores and the target over ridge-regularized
/// directions; further components come from deflating the data against the
/// previous score and refitting.
pub fn cca_fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<DimRedModel> {
    let (n, d) = x.shape();
    check_finite(x)?;
    check_target(y, n)?;
    if n < 3 {
        return Err(Error::Parameter(format!("CCA needs n >= 3, got {n}")));
    }
    check_k(k, n, d)?;
    let y_mean = y.mean();
    let yc = y.map(|v| v - y_mean);
    if yc.norm() <= 1e-12 * y.norm().max(1.0) {
        return Err(Error::DegenerateTarget("target is constant".into()));
    }
    let mean = column_means(x);
    let centered = center_columns(x, &mean);
    check_not_degenerate(&centered, x)?;

    let denom = n as f64 - 1.0;
    let mut deflated = centered.clone();
    let mut weights = DMatrix::zeros(d, k);
    let mut x_loadings = DMatrix::zeros(d, k);
    let mut diagnostics = Vec::with_capacity(k);
    for j in 0..k {
        let s = deflated.transpose() * &deflated / denom;
        let trace = s.trace();
        if trace <= f64::EPSILON * d as f64 {
            return Err(Error::Rank(format!(
                "deflation exhausted the data rank after {j} components"
            )));
        }
        let gamma = CCA_RIDGE_FACTOR * trace / d as f64;
        let regularized = s + DMatrix::identity(d, d) * gamma;
        let s_xy = deflated.transpose() * &yc / denom;
        let chol = nalgebra::Cholesky::new(regularized).ok_or_else(|| {
            Error::Numerical("ridge-regularized covariance not positive definite".into())
        })?;
        let mut w = chol.solve(&s_xy);
        let w_norm = w.norm();
        if w_norm <= f64::EPSILON {
            return Err(Error::Numerical(format!(
                "target carries no correlation with the deflated data at component {}",
                j + 1
            )));
        }
        w /= w_norm;
        let t = &deflated * &w;
        let corr = pearson_abs(&t, &yc)?;
        diagnostics.push(corr);
        let t_norm2 = t.norm_squared();
        if t_norm2 <= f64::EPSILON {
            return Err(Error::Rank(format!(
                "component {} score collapsed to zero",
                j + 1
            )));
        }
        let p = deflated.transpose() * &t / t_norm2;
        deflated -= &t * p.transpose();
        weights.set_column(j, &w);
        x_loadings.set_column(j, &p);
    }
    let mut loadings = composite_projection(&weights, &x_loadings)?;
    orient_columns(&mut loadings, None);
    finish_model(DimRedMethod::Cca, mean, loadings, diagnostics, None)
}

/// Fits PLS1 by iterative deflation: each weight vector is proportional to
/// the covariance between the deflated data and target, and the data matrix
/// is deflated against each score in turn.
///
/// Stops early with [`DimRedModel::early_stop`] set if the target residual
/// vanishes before `k` components are extracted.
pub fn pls_fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<DimRedModel> {
    let (n, d) = x.shape();
    check_finite(x)?;
    check_target(y, n)?;
    if n < 2 {
        return Err(Error::Parameter(format!("PLS needs n >= 2, got {n}")));
    }
    check_k(k, n, d)?;
    let mean = column_means(x);
    let centered = center_columns(x, &mean);
    check_not_degenerate(&centered, x)?;
    let rank = estimate_rank(&centered);
    if k > rank {
        return Err(Error::Rank(format!(
            "k = {k} exceeds rank {rank} of the centered data"
        )));
    }
    let y_mean = y.mean();
    let yc0 = y.map(|v| v - y_mean);
    if yc0.norm() <= 1e-12 * y.norm().max(1.0) {
        return Err(Error::DegenerateTarget(
            "target residual already zero before the first component".into(),
        ));
    }
    let y_scale = yc0.norm();

    let denom = n as f64 - 1.0;
    let mut deflated = centered;
    let mut residual = yc0;
    let mut weights = DMatrix::zeros(d, k);
    let mut x_loadings = DMatrix::zeros(d, k);
    let mut diagnostics = Vec::with_capacity(k);
    let mut fitted = 0;
    for j in 0..k {
        if residual.norm() <= 1e-12 * y_scale {
            break;
        }
        let mut w = deflated.transpose() * &residual;
        let w_norm = w.norm();
        if w_norm <= 1e-12 * y_scale {
            break;
        }
        w /= w_norm;
        let t = &deflated * &w;
        let t_norm2 = t.norm_squared();
        if t_norm2 <= f64::EPSILON {
            break;
        }
        diagnostics.push(t.dot(&residual) / denom);
        let p = deflated.transpose() * &t / t_norm2;
        deflated -= &t * p.transpose();
        let c = t.dot(&residual) / t_norm2;
        residual -= &t * c;
        weights.set_column(j, &w);
        x_loadings.set_column(j, &p);
        fitted = j + 1;
    }
    if fitted == 0 {
        return Err(Error::DegenerateTarget(
            "target residual already zero before the first component".into(),
        ));
    }
    let early_stop = (fitted < k).then_some(fitted);
    let weights = weights.columns(0, fitted).into_owned();
    let x_loadings = x_loadings.columns(0, fitted).into_owned();
    let mut loadings = composite_projection(&weights, &x_loadings)?;
    orient_columns(&mut loadings, Some(&mut diagnostics));
    finish_model(DimRedMethod::Pls, mean, loadings, diagnostics, early_stop)
}

/// Projects `x` through a fitted model; identical to [`DimRedModel::transform`].
pub fn transform(model: &DimRedModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.transform(x)
}

/// Dispatches to the fit routine for `method`. PCA ignores the target.
pub fn fit_method(
    method: DimRedMethod,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
) -> Result<DimRedModel> {
    match method {
        DimRedMethod::Pca => pca_fit(x, k),
        DimRedMethod::Cca => cca_fit(x, y, k),
        DimRedMethod::Pls => pls_fit(x, y, k),
    }
}

/// Numerical rank of the column-centered data, the upper bound on PLS
/// components.
pub fn centered_rank(x: &DMatrix<f64>) -> usize {
    let mean = column_means(x);
    estimate_rank(&center_columns(x, &mean))
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

fn center_columns(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    centered
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite entry in data matrix".into()));
    }
    Ok(())
}

fn check_target(y: &DVector<f64>, n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Shape(format!(
            "{} rows of X but {} targets",
            n,
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite target value".into()));
    }
    Ok(())
}

fn check_k(k: usize, n: usize, d: usize) -> Result<()> {
    let k_max = d.min(n.saturating_sub(1));
    if k < 1 || k > k_max {
        return Err(Error::Parameter(format!(
            "k = {k} outside [1, {k_max}] for n = {n}, d = {d}"
        )));
    }
    Ok(())
}

/// All-identical-rows input carries no directional information; fail loudly
/// rather than returning arbitrary directions.
fn check_not_degenerate(centered: &DMatrix<f64>, raw: &DMatrix<f64>) -> Result<()> {
    let scale = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let spread = centered.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if spread <= 1e-12 * scale {
        return Err(Error::Parameter(
            "all rows are identical; no directions to fit".into(),
        ));
    }
    Ok(())
}

/// Numerical rank of a centered matrix from its singular spectrum.
fn estimate_rank(centered: &DMatrix<f64>) -> usize {
    let svd = centered.clone().svd(false, false);
    let s = &svd.singular_values;
    if s.is_empty() {
        return 0;
    }
    let tol = s[0] * f64::EPSILON * centered.nrows().max(centered.ncols()) as f64;
    s.iter().filter(|&&v| v > tol).count()
}

/// Combines per-step weights W and data loadings P into the projection that
/// maps raw centered data to deflation scores: `R = W (PᵀW)⁻¹`.
fn composite_projection(weights: &DMatrix<f64>, x_loadings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = x_loadings.transpose() * weights;
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular PᵀW in composite projection".into()))?;
    Ok(weights * inv)
}

/// Orients every column so its largest-magnitude entry is positive, for
/// deterministic output across runs and platforms. Diagnostics that carry
/// the score sign (PLS covariance) are flipped along with their column.
fn orient_columns(loadings: &mut DMatrix<f64>, mut signed_diagnostics: Option<&mut Vec<f64>>) {
    for j in 0..loadings.ncols() {
        let col = loadings.column(j);
        let mut dominant = 0.0_f64;
        for &v in col.iter() {
            if v.abs() > dominant.abs() {
                dominant = v;
            }
        }
        if dominant < 0.0 {
            loadings.column_mut(j).neg_mut();
            if let Some(diags) = signed_diagnostics.as_deref_mut() {
                if let Some(dj) = diags.get_mut(j) {
                    *dj = -*dj;
                }
            }
        }
    }
}

fn finish_model(
    method: DimRedMethod,
    x_mean: DVector<f64>,
    loadings: DMatrix<f64>,
    diagnostics: Vec<f64>,
    early_stop: Option<usize>,
) -> Result<DimRedModel> {
    for j in 0..loadings.ncols() {
        let col = loadings.column(j);
        if col.iter().any(|v| !v.is_finite()) || col.norm() == 0.0 {
            return Err(Error::Numerical(format!(
                "loading column {j} is non-finite or zero"
            )));
        }
    }
    Ok(DimRedModel {
        method,
        x_mean,
        loadings,
        diagnostics,
        early_stop,
    })
}

fn pearson_abs(t: &DVector<f64>, yc: &DVector<f64>) -> Result<f64> {
    let t_mean = t.mean();
    let tc = t.map(|v| v - t_mean);
    let denom = tc.norm() * yc.norm();
    if denom <= f64::EPSILON {
        return Err(Error::UndefinedCorrelation(
            "constant score or target in canonical correlation".into(),
        ));
    }
    Ok((tc.dot(yc) / denom).abs())
}
