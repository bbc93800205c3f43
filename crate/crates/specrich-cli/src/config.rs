//! Flat `key = value` configuration files.
//!
//! Lines are `key = value` pairs; `#` starts a comment; blank lines are
//! ignored. Paths are resolved relative to the configuration file so
//! bundles stay relocatable. Command-line flags override file keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use specrich_core::eval::{CvConfig, SelectionMode};
use specrich_core::synth::{GaussianBump, RichnessLink, SceneSpec};
use specrich_core::SpectralGrid;

/// Parsed key/value file with path resolution against its directory.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
    base_dir: PathBuf,
}

impl KeyValues {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut entries = Vec::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{} line {}: expected `key = value`, found {raw:?}",
                    path.display(),
                    line_no + 1
                );
            };
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self { entries, base_dir })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.resolve(v))
    }

    /// Resolves a possibly-relative path against the config directory.
    pub fn resolve(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn get_parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| anyhow::anyhow!("config key {key} = {raw:?} failed to parse")),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true") | Some("1") | Some("yes") | Some("on") => Ok(Some(true)),
            Some("false") | Some("0") | Some("no") | Some("off") => Ok(Some(false)),
            Some(other) => bail!("config key {key} = {other:?} is not a boolean"),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

pub fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("{what}: bad entry {f:?}"))
        })
        .collect()
}

pub fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse::<usize>()
                .map_err(|_| anyhow::anyhow!("{what}: bad entry {f:?}"))
        })
        .collect()
}

/// Reads a wavelength-list grid file: one band per line, `center [fwhm]`,
/// `#` comments. Bands missing an FWHM take `default_fwhm`, or the median
/// center spacing when that is not given either.
pub fn parse_grid_file(path: &Path, default_fwhm: Option<f64>) -> Result<SpectralGrid> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading grid file {}", path.display()))?;
    let mut centers = Vec::new();
    let mut fwhms: Vec<Option<f64>> = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let center: f64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| anyhow::anyhow!("{} line {}: bad center", path.display(), line_no + 1))?;
        let fwhm = match fields.next() {
            Some(f) => Some(f.parse::<f64>().map_err(|_| {
                anyhow::anyhow!("{} line {}: bad fwhm", path.display(), line_no + 1)
            })?),
            None => None,
        };
        centers.push(center);
        fwhms.push(fwhm);
    }
    if centers.is_empty() {
        bail!("{}: no bands", path.display());
    }
    let fallback = default_fwhm.unwrap_or_else(|| median_spacing(&centers));
    let fwhms: Vec<f64> = fwhms.into_iter().map(|f| f.unwrap_or(fallback)).collect();
    Ok(SpectralGrid::new(centers, fwhms)?)
}

/// Median gap between consecutive centers; the FWHM fallback for grids
/// quoted without an explicit response width.
pub fn median_spacing(centers: &[f64]) -> f64 {
    if centers.len() < 2 {
        return 1.0;
    }
    let mut gaps: Vec<f64> = centers.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gaps[gaps.len() / 2]
}

/// Reads a band-removal list: one wavelength (nm) per line, `#` comments.
pub fn parse_removal_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading removal list {}", path.display()))?;
    let mut out = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse::<f64>().map_err(|_| {
            anyhow::anyhow!("{} line {}: bad wavelength", path.display(), line_no + 1)
        })?);
    }
    Ok(out)
}

/// Builds a scene specification from a scene config file.
///
/// Keys: `n_samples`, `seed`, `grid` (wavelength-list path), `grid_fwhm`,
/// `endmember.<i>` (comma-separated `center:width:amplitude` bumps),
/// `link` (`linear` or `saturating`), `link_intercept`/`link_max`/
/// `link_rate`, `link_coefficients`, `noise_sd_spectral`, and either
/// `noise_sd_richness` or `oracle_correlation` (the latter resolves the
/// richness-noise SD so that `corr(link, richness) = c` analytically;
/// linear links only).
pub fn parse_scene_conf(path: &Path) -> Result<SceneSpec> {
    let kv = KeyValues::from_path(path)?;
    let n_samples: usize = kv
        .get_parse("n_samples")?
        .context("scene config needs n_samples")?;
    let rng_seed: u64 = kv.get_parse("seed")?.unwrap_or(0);
    let grid_path = kv.get_path("grid").context("scene config needs grid")?;
    let grid_fwhm: Option<f64> = kv.get_parse("grid_fwhm")?;
    let grid = parse_grid_file(&grid_path, grid_fwhm)?;

    let mut endmembers = Vec::new();
    for i in 1.. {
        let Some(raw) = kv.get(&format!("endmember.{i}")) else {
            break;
        };
        endmembers.push(parse_bumps(raw).with_context(|| format!("endmember.{i}"))?);
    }
    if endmembers.is_empty() {
        bail!("scene config needs endmember.1, endmember.2, ...");
    }

    let coefficients = parse_f64_list(
        kv.get("link_coefficients")
            .context("scene config needs link_coefficients")?,
        "link_coefficients",
    )?;
    let richness_link = match kv.get("link").unwrap_or("linear") {
        "linear" => RichnessLink::Linear {
            intercept: kv.get_parse("link_intercept")?.unwrap_or(0.0),
            coefficients,
        },
        "saturating" => RichnessLink::Saturating {
            max: kv
                .get_parse("link_max")?
                .context("saturating link needs link_max")?,
            rate: kv
                .get_parse("link_rate")?
                .context("saturating link needs link_rate")?,
            coefficients,
        },
        other => bail!("unknown link {other:?}"),
    };

    let noise_sd_spectral: f64 = kv.get_parse("noise_sd_spectral")?.unwrap_or(0.0);
    let noise_sd_richness = match (
        kv.get_parse::<f64>("noise_sd_richness")?,
        kv.get_parse::<f64>("oracle_correlation")?,
    ) {
        (Some(_), Some(_)) => {
            bail!("give either noise_sd_richness or oracle_correlation, not both")
        }
        (Some(sd), None) => sd,
        (None, Some(c)) => {
            if !(0.0 < c && c < 1.0) {
                bail!("oracle_correlation must be in (0, 1), got {c}");
            }
            let link_sd = richness_link
                .analytic_sd(endmembers.len())
                .context("oracle_correlation needs a linear link")?;
            link_sd * (1.0 / (c * c) - 1.0).sqrt()
        }
        (None, None) => 0.0,
    };

    let spec = SceneSpec {
        n_samples,
        grid,
        endmembers,
        richness_link,
        noise_sd_spectral,
        noise_sd_richness,
        round_richness: kv.get_bool("round_richness")?.unwrap_or(false),
        rng_seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_bumps(raw: &str) -> Result<Vec<GaussianBump>> {
    raw.split(',')
        .map(|b| {
            let parts: Vec<&str> = b.trim().split(':').collect();
            if parts.len() != 3 {
                bail!("bump {b:?} is not center:width:amplitude");
            }
            Ok(GaussianBump {
                center_nm: parts[0].trim().parse()?,
                width_nm: parts[1].trim().parse()?,
                amplitude: parts[2].trim().parse()?,
            })
        })
        .collect()
}

/// Assembles the cross-validation configuration from config keys.
pub fn cv_config_from(kv: &KeyValues) -> Result<CvConfig> {
    let mut config = CvConfig::default();
    if let Some(r) = kv.get_parse("repetitions")? {
        config.repetitions = r;
    }
    if let Some(f) = kv.get_parse("folds")? {
        config.folds = f;
    }
    if let Some(s) = kv.get_parse("seed")? {
        config.rng_seed = s;
    }
    if let Some(raw) = kv.get("k_grid") {
        config.k_grid = parse_usize_list(raw, "k_grid")?;
    }
    if let Some(raw) = kv.get("sigma2_grid") {
        config.sigma2_grid = parse_f64_list(raw, "sigma2_grid")?;
    }
    if let Some(raw) = kv.get("length_scale_grid") {
        config.length_scale_grid = parse_f64_list(raw, "length_scale_grid")?;
    }
    if let Some(raw) = kv.get("noise_grid") {
        config.noise_grid = parse_f64_list(raw, "noise_grid")?;
    }
    if let Some(raw) = kv.get("selection_mode") {
        config.selection_mode = SelectionMode::parse(raw)?;
    }
    Ok(config)
}
