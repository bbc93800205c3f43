//! Estimation of plant species richness from hyperspectral reflectance
//! spectra.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`spectra`]: spectral grids, sample tables and the preprocessing chain
//!   (Gaussian-response resampling, band removal, cloud filtering,
//!   mean normalization);
//! - [`dimred`]: PCA, CCA and PLS projections of band space onto a small
//!   number of components;
//! - [`regress`]: ordinary least squares, kernel ridge and Gaussian process
//!   regression over a composite dot-product + RBF + white kernel;
//! - [`eval`]: repeated two-fold cross validation with nested grid search
//!   and r/RMSE reporting;
//! - [`synth`]: a deterministic synthetic scene generator with a known
//!   richness link for end-to-end validation;
//! - [`io`] and [`model_io`]: CSV ingestion/emission and a flat-text model
//!   serialization format.

pub mod dimred;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod model_io;
pub mod regress;
pub mod spectra;
pub mod synth;

pub use error::{Error, Result};
pub use grid::SpectralGrid;
pub use spectra::{SampleTable, Spectrum, SpectrumFlags};

/// The eight wavelengths removed from the 10 nm DESIS grid: five
/// atmospherically affected bands and three low-quality bands at the ends
/// of the spectrum.
pub const DESIS_REMOVED_BANDS_NM: &[f64] = &[
    759.0, 769.0, 933.4, 943.4, 953.2, 402.8, 410.3, 999.5,
];

/// Reference 60-band target grid for downsampling DESIS spectra to 10 nm
/// resolution. The removal wavelengths in [`DESIS_REMOVED_BANDS_NM`] appear
/// exactly; removing them leaves 52 bands. The exact DESIS product band
/// list is instrument-specific, so runs may supply their own list; this one
/// is the bundled default.
pub fn desis_target_centers() -> Vec<f64> {
    let mut centers = vec![402.8, 410.3];
    let mut c = 419.0;
    while c <= 759.0 + 1e-9 {
        centers.push(c);
        c += 10.0;
    }
    let mut c = 769.0;
    while c <= 919.0 + 1e-9 {
        centers.push(c);
        c += 10.0;
    }
    centers.extend_from_slice(&[933.4, 943.4, 953.2, 964.8, 976.3, 987.9, 999.5]);
    centers
}

/// The 52 bands left after removing [`DESIS_REMOVED_BANDS_NM`] from
/// [`desis_target_centers`].
pub fn desis_retained_centers() -> Vec<f64> {
    desis_target_centers()
        .into_iter()
        .filter(|c| {
            !DESIS_REMOVED_BANDS_NM
                .iter()
                .any(|r| (c - r).abs() < 1e-9)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_band_accounting() {
        let centers = desis_target_centers();
        assert_eq!(centers.len(), 60);
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        for r in DESIS_REMOVED_BANDS_NM {
            assert!(centers.iter().any(|c| (c - r).abs() < 1e-9), "{r} missing");
        }
        assert_eq!(centers.len() - DESIS_REMOVED_BANDS_NM.len(), 52);
    }
}
