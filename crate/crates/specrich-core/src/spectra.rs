//! Spectrum and sample-table types plus the preprocessing chain:
//! Gaussian-response resampling, band removal, cloud filtering and
//! per-spectrum mean normalization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;

/// Default threshold below which a spectrum mean counts as degenerate.
pub const MEAN_NORMALIZE_EPS: f64 = 1e-12;

/// Gaussian resampling weights are truncated beyond this many sigmas from
/// the target band center.
pub const RESAMPLE_TRUNCATION_SIGMAS: f64 = 3.0;

/// Default matching tolerance for band removal, in nm.
pub const BAND_MATCH_TOLERANCE_NM: f64 = 0.05;

/// Per-spectrum quality labels. Only the cloud flag is interpreted by the
/// preprocessing chain; it marks spectra to be discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpectrumFlags {
    pub cloud: bool,
}

/// A single reflectance spectrum aligned to some [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub flags: SpectrumFlags,
}

impl Spectrum {
    /// Builds a spectrum, checking that every value is finite and that the
    /// length matches `grid`.
    pub fn new(values: Vec<f64>, grid: &SpectralGrid, flags: SpectrumFlags) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "spectrum has {} values but grid has {} bands",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite reflectance at band {i}")));
        }
        Ok(Self { values, flags })
    }
}

/// n samples by d bands of reflectance plus richness targets and ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub ids: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub grid: SpectralGrid,
}

impl SampleTable {
    /// Builds a table, validating row/column counts, finiteness and
    /// non-negative richness values.
    pub fn new(ids: Vec<String>, x: DMatrix<f64>, y: DVector<f64>, grid: SpectralGrid) -> Result<Self> {
        if x.nrows() != ids.len() || x.nrows() != y.len() {
            return Err(Error::Shape(format!(
                "{} rows of X, {} ids, {} targets",
                x.nrows(),
                ids.len(),
                y.len()
            )));
        }
        if x.ncols() != grid.len() {
            return Err(Error::Shape(format!(
                "X has {} columns but grid has {} bands",
                x.ncols(),
                grid.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in X".into()));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Data(format!("richness {v} for sample {i}")));
            }
        }
        Ok(Self { ids, x, y, grid })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.x.ncols()
    }
}

/// Precomputed sparse resampling weights from a source grid onto a target
/// grid. Row `b` holds the normalized Gaussian weights of target band `b`
/// over the source bands within the truncation window.
#[derive(Debug, Clone)]
pub struct ResampleWeights {
    /// One `(first_source_index, weights)` run per target band.
    rows: Vec<(usize, Vec<f64>)>,
    source_len: usize,
    target_len: usize,
}

impl ResampleWeights {
    /// Computes the weight rows for resampling from `source` onto `target`.
    ///
    /// Weights follow the Gaussian spectral response of each target band:
    /// `w_i ∝ exp(-(λ_i - λ_b)² / (2 σ_b²))` with `σ_b` derived from the
    /// target band's FWHM, truncated beyond [`RESAMPLE_TRUNCATION_SIGMAS`]
    /// and normalized to sum to one.
    pub fn compute(source: &SpectralGrid, target: &SpectralGrid) -> Result<Self> {
        let (src_min, src_max) = source.coverage();
        let centers = source.centers();
        let mut rows = Vec::with_capacity(target.len());
        for (b, &tc) in target.centers().iter().enumerate() {
            if tc < src_min || tc > src_max {
                return Err(Error::Coverage {
                    target: tc,
                    min: src_min,
                    max: src_max,
                });
            }
            let sigma = target.sigma(b);
            let half_window = RESAMPLE_TRUNCATION_SIGMAS * sigma;
            // Source centers are sorted, so the window is a contiguous run.
            let first = centers.partition_point(|&c| c < tc - half_window);
            let last = centers.partition_point(|&c| c <= tc + half_window);
            let mut weights: Vec<f64> = centers[first..last]
                .iter()
                .map(|&c| {
                    let d = c - tc;
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if !total.is_finite() || total <= 0.0 {
                return Err(Error::Numerical(format!(
                    "degenerate resampling weights for target band {b} at {tc} nm"
                )));
            }
            for w in &mut weights {
                *w /= total;
            }
            rows.push((first, weights));
        }
        Ok(Self {
            rows,
            source_len: source.len(),
            target_len: target.len(),
        })
    }

    /// Applies the weights to one source-aligned value slice.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.source_len {
            return Err(Error::Shape(format!(
                "expected {} source values, got {}",
                self.source_len,
                values.len()
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|(first, w)| {
                w.iter()
                    .zip(&values[*first..])
                    .map(|(wi, vi)| wi * vi)
                    .sum()
            })
            .collect())
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }
}

/// Resamples a spectrum from `source` onto `target` under a Gaussian
/// spectral response function per target band. Flags are carried over.
pub fn gaussian_resample(
    spectrum: &Spectrum,
    source: &SpectralGrid,
    target: &SpectralGrid,
) -> Result<Spectrum> {
    let weights = ResampleWeights::compute(source, target)?;
    let values = weights.apply(&spectrum.values)?;
    Ok(Spectrum {
        values,
        flags: spectrum.flags,
    })
}

/// Removes the listed band centers from a table. Each removal wavelength
/// must match exactly one grid center within `tolerance` nm; otherwise an
/// [`Error::AmbiguousBand`] is raised. Column order is preserved.
pub fn remove_bands(
    table: &SampleTable,
    removal_centers: &[f64],
    tolerance: f64,
) -> Result<SampleTable> {
    let mut removed = vec![false; table.grid.len()];
    for &rc in removal_centers {
        let matches = table.grid.matching_bands(rc, tolerance);
        if matches.len() != 1 {
            return Err(Error::AmbiguousBand {
                center: rc,
                matches: matches.len(),
                tolerance,
            });
        }
        removed[matches[0]] = true;
    }
    let keep: Vec<usize> = (0..table.grid.len()).filter(|&i| !removed[i]).collect();
    if keep.is_empty() {
        return Err(Error::Grid("band removal left no bands".into()));
    }
    let x = table.x.select_columns(keep.iter());
    SampleTable::new(
        table.ids.clone(),
        x,
        table.y.clone(),
        table.grid.select(&keep)?,
    )
}

/// Drops every `(spectrum, richness)` pair whose cloud flag is set,
/// preserving the original order.
pub fn filter_flagged(samples: Vec<(Spectrum, f64)>) -> Vec<(Spectrum, f64)> {
    samples.into_iter().filter(|(s, _)| !s.flags.cloud).collect()
}

/// Divides a spectrum by its mean over all bands. Fails for means at or
/// below `eps`, which signals a dark or invalid pixel.
pub fn mean_normalize(values: &[f64], eps: f64) -> Result<Vec<f64>> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !mean.is_finite() || mean <= eps {
        return Err(Error::DegenerateSpectrum { mean, eps });
    }
    Ok(values.iter().map(|v| v / mean).collect())
}
