//! Spectral band grids.
//!
//! A [`SpectralGrid`] is the coordinate system of every spectrum in the crate:
//! an ordered list of band centers in nanometres together with the
//! full-width-at-half-maximum of each band's response function.

use crate::error::{Error, Result};

/// Conversion factor between a Gaussian FWHM and its standard deviation,
/// `FWHM = 2 sqrt(2 ln 2) * sigma`.
pub const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_4;

/// Ordered band centers with per-band FWHM values, both in nanometres.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    centers: Vec<f64>,
    fwhms: Vec<f64>,
}

impl SpectralGrid {
    /// Builds a grid, validating that centers are strictly increasing and
    /// positive and that every FWHM is positive.
    pub fn new(centers: Vec<f64>, fwhms: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Grid("grid must contain at least one band".into()));
        }
        if centers.len() != fwhms.len() {
            return Err(Error::Grid(format!(
                "{} centers but {} fwhms",
                centers.len(),
                fwhms.len()
            )));
        }
        for (i, &c) in centers.iter().enumerate() {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::Grid(format!("center {i} is {c} nm")));
            }
            if i > 0 && c <= centers[i - 1] {
                return Err(Error::Grid(format!(
                    "centers not strictly increasing at index {i}: {} -> {c}",
                    centers[i - 1]
                )));
            }
        }
        for (i, &f) in fwhms.iter().enumerate() {
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::Grid(format!("fwhm {i} is {f} nm")));
            }
        }
        Ok(Self { centers, fwhms })
    }

    /// Builds a grid with the same FWHM for every band.
    pub fn with_uniform_fwhm(centers: Vec<f64>, fwhm: f64) -> Result<Self> {
        let n = centers.len();
        Self::new(centers, vec![fwhm; n])
    }

    /// Builds a uniformly spaced grid of `count` bands starting at `start` nm.
    pub fn uniform(start: f64, step: f64, count: usize, fwhm: f64) -> Result<Self> {
        let centers = (0..count).map(|i| start + step * i as f64).collect();
        Self::with_uniform_fwhm(centers, fwhm)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn fwhms(&self) -> &[f64] {
        &self.fwhms
    }

    /// Wavelength range covered by the band centers, `(min, max)`.
    pub fn coverage(&self) -> (f64, f64) {
        (self.centers[0], *self.centers.last().unwrap())
    }

    /// Gaussian sigma of band `i`, derived from its FWHM.
    pub fn sigma(&self, i: usize) -> f64 {
        self.fwhms[i] / FWHM_TO_SIGMA
    }

    /// Indices of grid centers within `tolerance` nm of `wavelength`.
    pub fn matching_bands(&self, wavelength: f64, tolerance: f64) -> Vec<usize> {
        self.centers
            .iter()
            .enumerate()
            .filter(|(_, &c)| (c - wavelength).abs() <= tolerance)
            .map(|(i, _)| i)
            .collect()
    }

    /// Returns the grid restricted to the given band indices (ascending).
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let centers = keep.iter().map(|&i| self.centers[i]).collect();
        let fwhms = keep.iter().map(|&i| self.fwhms[i]).collect();
        Self::new(centers, fwhms)
    }
}
