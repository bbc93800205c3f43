//! Repeated two-fold cross validation with grid-searched hyperparameters.
//!
//! Each repetition partitions the samples into two halves; every half
//! serves once for training and once for validation. Component counts and
//! kernel hyperparameters are selected by grid search, by default through
//! an inner two-fold split of the training fold only (`nested` mode), so
//! validation targets are never consulted before metric computation. A
//! `pooled` mode that selects on the reported folds themselves is provided
//! for comparison with protocols that do not guard against that leakage.
//!
//! Length-scale and noise grids are scale-aware multipliers: they are
//! resolved against the median pairwise score distance and the training
//! target variance of whatever fold the candidate is fitted on.

use std::cell::Cell;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dimred::{self, DimRedMethod, DimRedModel};
use crate::error::{Error, Result};
use crate::regress::{self, KernelParams, RegressMethod, RegressionModel};
use crate::spectra::SampleTable;

/// Floor applied to resolved length scales and noise variances so that a
/// degenerate fold (identical scores, constant target) does not produce
/// invalid kernel parameters.
const SCALE_FLOOR: f64 = 1e-12;

/// A dimensionality-reduction method paired with a regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodPair {
    pub dimred: DimRedMethod,
    pub regress: RegressMethod,
}

impl MethodPair {
    pub fn new(dimred: DimRedMethod, regress: RegressMethod) -> Self {
        Self { dimred, regress }
    }

    /// Parses `"PLS:GPR"`-style pair names.
    pub fn parse(s: &str) -> Result<Self> {
        let (d, r) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("method pair {s:?} is not DIMRED:REGRESSOR")))?;
        Ok(Self {
            dimred: DimRedMethod::parse(d.trim())?,
            regress: RegressMethod::parse(r.trim())?,
        })
    }

    /// The nine combinations in canonical report order:
    /// PCA/CCA/PLS crossed with OLSR/GPR/KRR.
    pub fn all() -> Vec<MethodPair> {
        let mut pairs = Vec::with_capacity(9);
        for d in [DimRedMethod::Pca, DimRedMethod::Cca, DimRedMethod::Pls] {
            for r in [RegressMethod::Olsr, RegressMethod::Gpr, RegressMethod::Krr] {
                pairs.push(MethodPair::new(d, r));
            }
        }
        pairs
    }

    /// Position in canonical report order.
    pub fn order_index(&self) -> usize {
        let d = match self.dimred {
            DimRedMethod::Pca => 0,
            DimRedMethod::Cca => 1,
            DimRedMethod::Pls => 2,
        };
        let r = match self.regress {
            RegressMethod::Olsr => 0,
            RegressMethod::Gpr => 1,
            RegressMethod::Krr => 2,
        };
        d * 3 + r
    }
}

impl fmt::Display for MethodPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dimred.name(), self.regress.name())
    }
}

/// How hyperparameters are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Inner two-fold CV on the training fold only (no validation leakage).
    Nested,
    /// Selection on the reported folds themselves; reproduces protocols
    /// that reuse the evaluation CV for tuning. Leaky by construction.
    Pooled,
}

impl SelectionMode {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionMode::Nested => "nested",
            SelectionMode::Pooled => "pooled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nested" => Ok(SelectionMode::Nested),
            "pooled" => Ok(SelectionMode::Pooled),
            other => Err(Error::Parameter(format!("unknown selection mode {other:?}"))),
        }
    }
}

/// Cross-validation protocol configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub repetitions: usize,
    /// Fixed at two; kept explicit so configs are self-describing.
    pub folds: usize,
    pub rng_seed: u64,
    pub k_grid: Vec<usize>,
    /// Absolute offsets for the dot-product kernel.
    pub sigma2_grid: Vec<f64>,
    /// Multipliers of the median pairwise score distance.
    pub length_scale_grid: Vec<f64>,
    /// Multipliers of the training-target variance.
    pub noise_grid: Vec<f64>,
    pub selection_mode: SelectionMode,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            folds: 2,
            rng_seed: 0,
            k_grid: (1..=10).collect(),
            sigma2_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            length_scale_grid: vec![1e-2, 1e-1, 1.0, 1e1, 1e2],
            noise_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1],
            selection_mode: SelectionMode::Nested,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::Parameter("repetitions must be >= 1".into()));
        }
        if self.folds != 2 {
            return Err(Error::Parameter(format!(
                "protocol is two-fold; folds = {}",
                self.folds
            )));
        }
        if self.k_grid.is_empty() || self.k_grid.iter().any(|&k| k < 1) {
            return Err(Error::Parameter(
                "k_grid must be non-empty, entries >= 1".into(),
            ));
        }
        for (name, grid) in [
            ("sigma2_grid", &self.sigma2_grid),
            ("length_scale_grid", &self.length_scale_grid),
            ("noise_grid", &self.noise_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be non-empty with positive entries"
                )));
            }
        }
        Ok(())
    }
}

/// One validated round of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based repetition index.
    pub repetition: usize,
    /// 1 or 2.
    pub round: usize,
    pub k: usize,
    /// `None` for OLSR, which has no kernel.
    pub kernel: Option<KernelParams>,
    /// `None` when the correlation was undefined (constant predictions).
    pub r: Option<f64>,
    pub rmse: f64,
}

/// Full cross-validation report for one method pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub selection_mode: SelectionMode,
    pub repetitions: usize,
    pub per_round: Vec<RoundRecord>,
    /// Mean/standard deviation of r over rounds with defined correlation.
    pub r_mean: f64,
    pub r_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    /// Metrics over validation predictions concatenated per repetition,
    /// averaged over repetitions.
    pub r_pooled: f64,
    pub rmse_pooled: f64,
    /// Rounds whose Pearson r was undefined and excluded from the mean.
    pub undefined_r: usize,
    /// Repetitions whose pooled r was undefined.
    pub undefined_pooled_r: usize,
    /// Number of reads of validation-fold targets; in nested mode exactly
    /// three per round (r, RMSE, pooled concatenation).
    pub validation_target_reads: u64,
}

/// Validation targets behind a read counter. Every access to the values
/// increments the counter, so tests can assert that nothing outside metric
/// computation ever touches them.
struct AuditedTargets {
    values: Vec<f64>,
    reads: Cell<u64>,
}

impl AuditedTargets {
    fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            reads: Cell::new(0),
        }
    }

    fn read(&self) -> &[f64] {
        self.reads.set(self.reads.get() + 1);
        &self.values
    }

    fn reads(&self) -> u64 {
        self.reads.get()
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands the run seed into independent sub-seeds, one per purpose tag.
/// Deterministic across platforms and thread counts.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut acc = mix64(base);
    for &t in tags {
        acc = mix64(acc ^ mix64(t));
    }
    acc
}

/// Randomly halves `0..n` into two disjoint index sets whose sizes differ
/// by at most one. Deterministic for a given seed; each set is sorted.
pub fn two_fold_split(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "two-fold split needs n >= 4, got {n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let half = n / 2;
    let mut first = indices[..half].to_vec();
    let mut second = indices[half..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Pearson product-moment correlation, clamped to [-1, 1]. Undefined for
/// vectors shorter than two or with zero variance.
pub fn pearson_r(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "pearson_r over {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InsufficientData("pearson_r needs m >= 2".into()));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in pearson_r input".into()));
    }
    let m = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / m;
    let mt = truth.iter().sum::<f64>() / m;
    let mut spt = 0.0;
    let mut spp = 0.0;
    let mut stt = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        let dp = p - mp;
        let dt = t - mt;
        spt += dp * dt;
        spp += dp * dp;
        stt += dt * dt;
    }
    if spp == 0.0 {
        return Err(Error::UndefinedCorrelation("constant predictions".into()));
    }
    if stt == 0.0 {
        return Err(Error::UndefinedCorrelation("constant truth values".into()));
    }
    Ok((spt / (spp * stt).sqrt()).clamp(-1.0, 1.0))
}

/// Root-mean-square error in target units.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "rmse over {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("rmse needs m >= 1".into()));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in rmse input".into()));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn select_entries(y: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| y[rows[i]])
}

fn variance(values: &DVector<f64>) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.mean();
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
}

/// Median pairwise Euclidean distance between the rows of `scores`.
fn median_pairwise_distance(scores: &DMatrix<f64>) -> f64 {
    let n = scores.nrows();
    let mut dists = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push((scores.row(i) - scores.row(j)).norm());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    }
}

/// Scale anchors of a training fold: median pairwise score distance and
/// target variance, floored to guard degenerate folds.
fn fold_scales(scores: &DMatrix<f64>, y: &DVector<f64>) -> (f64, f64) {
    (
        median_pairwise_distance(scores).max(SCALE_FLOOR),
        variance(y).max(SCALE_FLOOR),
    )
}

/// Resolves multiplier-space kernel hyperparameters against fold scales:
/// `l = l_mult * median score distance`, `noise = n_mult * var(y)`.
fn resolve_params(
    sigma2: f64,
    l_mult: f64,
    noise_mult: f64,
    scales: (f64, f64),
) -> Result<KernelParams> {
    KernelParams::new(sigma2, l_mult * scales.0, noise_mult * scales.1)
}

/// A candidate grid point in multiplier space.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    k: usize,
    /// `(sigma2, length-scale multiplier, noise multiplier)`; `None` for OLSR.
    kernel: Option<(f64, f64, f64)>,
}

impl GridPoint {
    /// Deterministic tie-break order: smaller k, then smaller noise, then
    /// smaller length scale, then smaller sigma2.
    fn tie_key(&self) -> (usize, f64, f64, f64) {
        match self.kernel {
            None => (self.k, 0.0, 0.0, 0.0),
            Some((s, l, d)) => (self.k, d, l, s),
        }
    }
}

fn enumerate_grid(pair: MethodPair, config: &CvConfig) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &k in &config.k_grid {
        if pair.regress.uses_kernel() {
            for &s in &config.sigma2_grid {
                for &l in &config.length_scale_grid {
                    for &d in &config.noise_grid {
                        points.push(GridPoint {
                            k,
                            kernel: Some((s, l, d)),
                        });
                    }
                }
            }
        } else {
            points.push(GridPoint { k, kernel: None });
        }
    }
    points
}

/// Fits the dimensionality reduction at the largest feasible component
/// count not exceeding `k_cap`, walking down on rank failures so that a
/// single fit serves every smaller k (components nest).
fn fit_dimred_capped(
    method: DimRedMethod,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k_cap: usize,
) -> Result<DimRedModel> {
    let n = x.nrows();
    let d = x.ncols();
    let mut k = k_cap.min(d.min(n.saturating_sub(1)));
    if method != DimRedMethod::Pca {
        k = k.min(dimred::centered_rank(x));
    }
    if k == 0 {
        return Err(Error::Rank("no usable components".into()));
    }
    loop {
        match dimred::fit_method(method, x, y, k) {
            Ok(model) => return Ok(model),
            Err(Error::Rank(_)) | Err(Error::Numerical(_)) if k > 1 => k -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// Fits the regressor for `pair` on score features.
fn fit_regressor(
    pair: MethodPair,
    scores: &DMatrix<f64>,
    y: &DVector<f64>,
    params: Option<&KernelParams>,
) -> Result<RegressionModel> {
    match pair.regress {
        RegressMethod::Olsr => regress::olsr_fit(scores, y),
        RegressMethod::Krr => regress::krr_fit(scores, y, params.expect("KRR needs params")),
        RegressMethod::Gpr => regress::gpr_fit(scores, y, params.expect("GPR needs params")),
    }
}

/// Evaluates every grid point over the given rounds and returns the point
/// with the lowest mean validation RMSE, ties broken by [`GridPoint::tie_key`].
/// A point failing in any round is discarded.
fn evaluate_grid(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rounds: &[(&[usize], &[usize])],
    pair: MethodPair,
    config: &CvConfig,
) -> Result<GridPoint> {
    let points = enumerate_grid(pair, config);
    let mut sums = vec![0.0_f64; points.len()];
    let mut counts = vec![0_usize; points.len()];

    for &(train_idx, val_idx) in rounds {
        let x_train = select_rows(x, train_idx);
        let y_train = select_entries(y, train_idx);
        let x_val = select_rows(x, val_idx);
        let y_val = select_entries(y, val_idx);
        let k_cap = config.k_grid.iter().copied().max().unwrap_or(1);
        let model = fit_dimred_capped(pair.dimred, &x_train, &y_train, k_cap).map_err(|e| {
            Error::SearchFailure(format!(
                "dimensionality reduction failed on an evaluation fold for {pair}: {e}"
            ))
        })?;
        let t_train_full = model.transform(&x_train)?;
        let t_val_full = model.transform(&x_val)?;

        for &k in config.k_grid.iter().filter(|&&k| k <= model.k()) {
            let t_train = t_train_full.columns(0, k).into_owned();
            let t_val = t_val_full.columns(0, k).into_owned();
            let scales = pair
                .regress
                .uses_kernel()
                .then(|| fold_scales(&t_train, &y_train));
            for (idx, point) in points.iter().enumerate() {
                if point.k != k {
                    continue;
                }
                let params = match point.kernel {
                    None => None,
                    Some((s, l, d)) => match resolve_params(s, l, d, scales.unwrap()) {
                        Ok(p) => Some(p),
                        Err(_) => continue,
                    },
                };
                let Ok(regressor) = fit_regressor(pair, &t_train, &y_train, params.as_ref())
                else {
                    continue;
                };
                let Ok(pred) = regress::predict(&regressor, &t_val) else {
                    continue;
                };
                let Ok(err) = rmse(pred.as_slice(), y_val.as_slice()) else {
                    continue;
                };
                sums[idx] += err;
                counts[idx] += 1;
            }
        }
    }

    let mut best: Option<(f64, GridPoint)> = None;
    for (idx, point) in points.iter().enumerate() {
        if counts[idx] != rounds.len() {
            continue;
        }
        let mean = sums[idx] / rounds.len() as f64;
        let better = match &best {
            None => true,
            Some((best_mean, best_point)) => {
                mean < *best_mean || (mean == *best_mean && point.tie_key() < best_point.tie_key())
            }
        };
        if better {
            best = Some((mean, *point));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::SearchFailure(format!("every grid point failed for {pair}")))
}

/// Selects the component count and kernel hyperparameters for a training
/// fold by inner two-fold cross validation (nothing outside `x`/`y` is
/// consulted). Single-point grids are returned directly without inner CV.
/// Returned kernel parameters are resolved against the full training fold.
pub fn grid_search(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    pair: MethodPair,
    config: &CvConfig,
) -> Result<(usize, Option<KernelParams>)> {
    grid_search_seeded(x, y, pair, config, config.rng_seed)
}

/// [`grid_search`] with an explicit inner-split seed, used by [`run_cv`] to
/// give every (repetition, round) its own deterministic inner partition.
pub fn grid_search_seeded(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    pair: MethodPair,
    config: &CvConfig,
    seed: u64,
) -> Result<(usize, Option<KernelParams>)> {
    config.validate()?;
    let n = x.nrows();
    let single_point = config.k_grid.len() == 1
        && (!pair.regress.uses_kernel()
            || (config.sigma2_grid.len() == 1
                && config.length_scale_grid.len() == 1
                && config.noise_grid.len() == 1));
    let point = if single_point {
        // Nothing to select: no inner split is made, so even folds too
        // small to halve again can run with pinned hyperparameters.
        GridPoint {
            k: config.k_grid[0],
            kernel: pair.regress.uses_kernel().then(|| {
                (
                    config.sigma2_grid[0],
                    config.length_scale_grid[0],
                    config.noise_grid[0],
                )
            }),
        }
    } else {
        if n < 4 {
            return Err(Error::InsufficientData(format!(
                "grid search needs n >= 4 for an inner split, got {n}"
            )));
        }
        let (inner_a, inner_b) = two_fold_split(n, seed)?;
        let rounds: [(&[usize], &[usize]); 2] = [(&inner_a, &inner_b), (&inner_b, &inner_a)];
        evaluate_grid(x, y, &rounds, pair, config)?
    };
    resolve_point(x, y, pair, point)
}

/// Resolves a selected grid point against the full training fold: fits the
/// projection at the chosen k and turns multipliers into concrete kernel
/// parameters.
fn resolve_point(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    pair: MethodPair,
    point: GridPoint,
) -> Result<(usize, Option<KernelParams>)> {
    let model = fit_dimred_capped(pair.dimred, x, y, point.k)?;
    let k = point.k.min(model.k());
    match point.kernel {
        None => Ok((k, None)),
        Some((s, l, d)) => {
            let scores = model.transform(x)?.columns(0, k).into_owned();
            let scales = fold_scales(&scores, y);
            Ok((k, Some(resolve_params(s, l, d, scales)?)))
        }
    }
}

/// Runs the full repeated two-fold protocol for one method pair.
///
/// For every repetition the samples are split once; round 1 trains on the
/// first half and validates on the second, round 2 swaps the roles. All
/// randomness derives from `config.rng_seed`, so reports are bit-identical
/// across runs and thread counts.
pub fn run_cv(table: &SampleTable, pair: MethodPair, config: &CvConfig) -> Result<CvReport> {
    config.validate()?;
    let n = table.n_samples();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "cross validation needs n >= 4, got {n}"
        )));
    }
    let x = &table.x;
    let y = &table.y;

    let mut per_round = Vec::with_capacity(config.repetitions * 2);
    let mut reads_total = 0_u64;
    let mut undefined_r = 0_usize;
    let mut undefined_pooled = 0_usize;
    let mut pooled_r_sum = 0.0;
    let mut pooled_r_count = 0_usize;
    let mut pooled_rmse_sum = 0.0;

    for rep in 1..=config.repetitions {
        let split_seed = derive_seed(config.rng_seed, &[1, rep as u64]);
        let (half_a, half_b) = two_fold_split(n, split_seed)?;
        let rounds = [(half_a.clone(), half_b.clone()), (half_b, half_a)];

        let mut pooled_pred: Vec<f64> = Vec::with_capacity(n);
        let mut pooled_truth: Vec<f64> = Vec::with_capacity(n);

        for (round_no, (train_idx, val_idx)) in rounds.iter().enumerate() {
            let round = round_no + 1;
            let context = format!("{pair} repetition {rep} round {round}");

            let x_train = select_rows(x, train_idx);
            let y_train = select_entries(y, train_idx);
            let x_val = select_rows(x, val_idx);
            let val_targets = AuditedTargets::new(val_idx.iter().map(|&i| y[i]).collect());

            let (k, params) = match config.selection_mode {
                SelectionMode::Nested => {
                    let inner_seed = derive_seed(config.rng_seed, &[2, rep as u64, round as u64]);
                    grid_search_seeded(&x_train, &y_train, pair, config, inner_seed)
                        .map_err(|e| e.with_context(context.clone()))?
                }
                SelectionMode::Pooled => {
                    // Selection on the reported folds: reads validation
                    // targets by construction.
                    let y_val = DVector::from_column_slice(val_targets.read());
                    select_on_round(&x_train, &y_train, &x_val, &y_val, pair, config)
                        .map_err(|e| e.with_context(context.clone()))?
                }
            };

            let model = fit_dimred_capped(pair.dimred, &x_train, &y_train, k)
                .map_err(|e| e.with_context(context.clone()))?;
            let k_used = k.min(model.k());
            let t_train = model.transform(&x_train)?.columns(0, k_used).into_owned();
            let t_val = model.transform(&x_val)?.columns(0, k_used).into_owned();
            let regressor = fit_regressor(pair, &t_train, &y_train, params.as_ref())
                .map_err(|e| e.with_context(context.clone()))?;
            let pred = regress::predict(&regressor, &t_val)
                .map_err(|e| e.with_context(context.clone()))?;

            let r = match pearson_r(pred.as_slice(), val_targets.read()) {
                Ok(v) => Some(v),
                Err(Error::UndefinedCorrelation(_)) => {
                    undefined_r += 1;
                    None
                }
                Err(e) => return Err(e.with_context(context)),
            };
            let err = rmse(pred.as_slice(), val_targets.read())
                .map_err(|e| e.with_context(context.clone()))?;

            pooled_pred.extend_from_slice(pred.as_slice());
            pooled_truth.extend_from_slice(val_targets.read());
            reads_total += val_targets.reads();

            per_round.push(RoundRecord {
                repetition: rep,
                round,
                k: k_used,
                kernel: params,
                r,
                rmse: err,
            });
        }

        match pearson_r(&pooled_pred, &pooled_truth) {
            Ok(v) => {
                pooled_r_sum += v;
                pooled_r_count += 1;
            }
            Err(Error::UndefinedCorrelation(_)) => undefined_pooled += 1,
            Err(e) => return Err(e),
        }
        pooled_rmse_sum += rmse(&pooled_pred, &pooled_truth)?;
    }

    let rmse_values: Vec<f64> = per_round.iter().map(|r| r.rmse).collect();
    let r_values: Vec<f64> = per_round.iter().filter_map(|r| r.r).collect();
    let (r_mean, r_std) = mean_std(&r_values);
    let (rmse_mean, rmse_std) = mean_std(&rmse_values);

    Ok(CvReport {
        selection_mode: config.selection_mode,
        repetitions: config.repetitions,
        per_round,
        r_mean,
        r_std,
        rmse_mean,
        rmse_std,
        r_pooled: if pooled_r_count > 0 {
            pooled_r_sum / pooled_r_count as f64
        } else {
            f64::NAN
        },
        rmse_pooled: pooled_rmse_sum / config.repetitions as f64,
        undefined_r,
        undefined_pooled_r: undefined_pooled,
        validation_target_reads: reads_total,
    })
}

/// Pooled-mode selection: evaluates the grid on the single
/// (train, validation) round being reported and picks the best point.
fn select_on_round(
    x_train: &DMatrix<f64>,
    y_train: &DVector<f64>,
    x_val: &DMatrix<f64>,
    y_val: &DVector<f64>,
    pair: MethodPair,
    config: &CvConfig,
) -> Result<(usize, Option<KernelParams>)> {
    // Stack train and validation rows so index sets can address both.
    let n_train = x_train.nrows();
    let n_val = x_val.nrows();
    let mut x = DMatrix::zeros(n_train + n_val, x_train.ncols());
    x.rows_mut(0, n_train).copy_from(x_train);
    x.rows_mut(n_train, n_val).copy_from(x_val);
    let mut y = DVector::zeros(n_train + n_val);
    y.rows_mut(0, n_train).copy_from(y_train);
    y.rows_mut(n_train, n_val).copy_from(y_val);

    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n_train + n_val).collect();
    let rounds: [(&[usize], &[usize]); 1] = [(&train_idx, &val_idx)];
    let point = evaluate_grid(&x, &y, &rounds, pair, config)?;
    resolve_point(x_train, y_train, pair, point)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row of the method-comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub pair: MethodPair,
    pub r_mean: f64,
    pub r_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub r_pooled: f64,
    pub rmse_pooled: f64,
    pub best: bool,
}

/// Orders results canonically (PCA/CCA/PLS by OLSR/GPR/KRR) and flags the
/// best row: highest mean r, ties broken by lowest mean RMSE.
pub fn report_table(entries: &[(MethodPair, CvReport)]) -> Result<Vec<ReportRow>> {
    if entries.is_empty() {
        return Err(Error::Parameter("no reports to tabulate".into()));
    }
    let mut rows: Vec<ReportRow> = entries
        .iter()
        .map(|(pair, report)| ReportRow {
            pair: *pair,
            r_mean: report.r_mean,
            r_std: report.r_std,
            rmse_mean: report.rmse_mean,
            rmse_std: report.rmse_std,
            r_pooled: report.r_pooled,
            rmse_pooled: report.rmse_pooled,
            best: false,
        })
        .collect();
    rows.sort_by_key(|row| row.pair.order_index());
    // An undefined (NaN) mean r ranks below everything.
    let r_key = |row: &ReportRow| {
        if row.r_mean.is_nan() {
            f64::NEG_INFINITY
        } else {
            row.r_mean
        }
    };
    let mut best_idx = 0;
    for i in 1..rows.len() {
        let better = r_key(&rows[i]) > r_key(&rows[best_idx])
            || (r_key(&rows[i]) == r_key(&rows[best_idx])
                && rows[i].rmse_mean < rows[best_idx].rmse_mean);
        if better {
            best_idx = i;
        }
    }
    rows[best_idx].best = true;
    Ok(rows)
}

/// Renders report rows as the CLI-facing CSV:
/// `dimred,regressor,r_mean,r_std,rmse_mean,rmse_std,r_pooled,rmse_pooled,best_flag`.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "dimred,regressor,r_mean,r_std,rmse_mean,rmse_std,r_pooled,rmse_pooled,best_flag\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.pair.dimred.name(),
            row.pair.regress.name(),
            row.r_mean,
            row.r_std,
            row.rmse_mean,
            row.rmse_std,
            row.r_pooled,
            row.rmse_pooled,
            u8::from(row.best),
        ));
    }
    out
}

/// Renders report rows as an aligned text table with the best pair starred.
pub fn report_text(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:<10} {:>8} {:>8} {:>9} {:>9} {:>9} {:>12}  {}\n",
        "dimred", "regressor", "r", "r_std", "rmse", "rmse_std", "r_pooled", "rmse_pooled", "best"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<8} {:<10} {:>8.4} {:>8.4} {:>9.4} {:>9.4} {:>9.4} {:>12.4}  {}\n",
            row.pair.dimred.name(),
            row.pair.regress.name(),
            row.r_mean,
            row.r_std,
            row.rmse_mean,
            row.rmse_std,
            row.r_pooled,
            row.rmse_pooled,
            if row.best { "*" } else { "" }
        ));
    }
    out
}

/// Renders the per-round log CSV:
/// `repetition,round,dimred,regressor,k,sigma2,length_scale,noise,r,rmse`.
/// Kernel fields are empty for OLSR; the r field is empty when undefined.
pub fn rounds_csv(entries: &[(MethodPair, CvReport)]) -> String {
    let mut out =
        String::from("repetition,round,dimred,regressor,k,sigma2,length_scale,noise,r,rmse\n");
    let mut sorted: Vec<&(MethodPair, CvReport)> = entries.iter().collect();
    sorted.sort_by_key(|(pair, _)| pair.order_index());
    for (pair, report) in sorted {
        for rec in &report.per_round {
            let (sigma2, length_scale, noise) = match rec.kernel {
                Some(p) => (
                    p.sigma2.to_string(),
                    p.length_scale.to_string(),
                    p.noise.to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                rec.repetition,
                rec.round,
                pair.dimred.name(),
                pair.regress.name(),
                rec.k,
                sigma2,
                length_scale,
                noise,
                rec.r.map(|v| v.to_string()).unwrap_or_default(),
                rec.rmse,
            ));
        }
    }
    out
}
