//! `specrich preprocess`: cloud filtering, Gaussian resampling, band
//! removal and mean normalization, writing a preprocessed table plus a
//! provenance sidecar.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use specrich_core::spectra::{
    self, SpectrumFlags, BAND_MATCH_TOLERANCE_NM, MEAN_NORMALIZE_EPS,
};
use specrich_core::{io, SpectralGrid};

use crate::config::{self, KeyValues};
use crate::provenance::Provenance;

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Run configuration file; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Spectra CSV (`id,<center>,...`).
    #[arg(long)]
    pub spectra: Option<PathBuf>,
    /// Richness CSV (`id,richness`).
    #[arg(long)]
    pub richness: Option<PathBuf>,
    /// Optional cloud-flag CSV (`id,cloud`).
    #[arg(long)]
    pub flags: Option<PathBuf>,
    /// Output directory for the preprocessed table and sidecar.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Target grid wavelength-list file for resampling.
    #[arg(long)]
    pub target_grid: Option<PathBuf>,
    /// Band-removal wavelength-list file.
    #[arg(long)]
    pub remove_bands: Option<PathBuf>,
    /// FWHM of the source bands; defaults to their median spacing.
    #[arg(long)]
    pub source_fwhm: Option<f64>,
    /// Matching tolerance for band removal, nm.
    #[arg(long)]
    pub band_match_tolerance: Option<f64>,
    /// Skip resampling (input already on the target grid).
    #[arg(long)]
    pub no_resample: bool,
    /// Skip mean normalization.
    #[arg(long)]
    pub no_normalize: bool,
}

pub fn run(args: &PreprocessArgs) -> Result<()> {
    let kv = match &args.config {
        Some(path) => KeyValues::from_path(path)?,
        None => KeyValues::default(),
    };
    let spectra_path = args
        .spectra
        .clone()
        .or_else(|| kv.get_path("spectra"))
        .context("no spectra input (flag --spectra or config key `spectra`)")?;
    let richness_path = args
        .richness
        .clone()
        .or_else(|| kv.get_path("richness"))
        .context("no richness input (flag --richness or config key `richness`)")?;
    let flags_path = args.flags.clone().or_else(|| kv.get_path("flags"));
    let output_dir = args
        .output_dir
        .clone()
        .or_else(|| kv.get_path("output_dir"))
        .context("no output directory (flag --output-dir or config key `output_dir`)")?;
    let resample = !args.no_resample && kv.get_bool("resample")?.unwrap_or(true);
    let normalize = !args.no_normalize && kv.get_bool("normalize")?.unwrap_or(true);
    let target_grid_path = args.target_grid.clone().or_else(|| kv.get_path("target_grid"));
    let removal_path = args.remove_bands.clone().or_else(|| kv.get_path("remove_bands"));
    let source_fwhm = match args.source_fwhm {
        Some(v) => Some(v),
        None => kv.get_parse("source_fwhm")?,
    };
    let tolerance = match args.band_match_tolerance {
        Some(v) => v,
        None => kv
            .get_parse("band_match_tolerance")?
            .unwrap_or(BAND_MATCH_TOLERANCE_NM),
    };

    std::fs::create_dir_all(&output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;
    let mut prov = Provenance::new("preprocess");
    prov.digest("input.spectra", &spectra_path)?;
    prov.digest("input.richness", &richness_path)?;
    if let Some(fp) = &flags_path {
        prov.digest("input.flags", fp)?;
    }

    let spectra_csv = io::read_spectra_csv(&spectra_path).context("stage ingest: spectra")?;
    let richness = io::read_richness_csv(&richness_path).context("stage ingest: richness")?;
    let flags = match &flags_path {
        Some(fp) => Some(io::read_flags_csv(fp).context("stage ingest: flags")?),
        None => None,
    };
    let (ids, rows, y, cloud) =
        io::join_inputs(&spectra_csv, &richness, flags.as_deref()).context("stage ingest: join")?;
    let samples_in = ids.len();
    prov.set("samples_in", samples_in);
    prov.set("bands_in", spectra_csv.centers.len());

    // Stage 1: discard cloud-flagged samples.
    let source_grid = SpectralGrid::with_uniform_fwhm(
        spectra_csv.centers.clone(),
        source_fwhm.unwrap_or_else(|| config::median_spacing(&spectra_csv.centers)),
    )
    .context("stage filter: source grid")?;
    let pairs: Vec<(specrich_core::Spectrum, f64)> = ids
        .iter()
        .zip(rows.iter().zip(cloud.iter().zip(y.iter())))
        .map(|(id, (row, (&cloud, &richness)))| {
            specrich_core::Spectrum::new(row.clone(), &source_grid, SpectrumFlags { cloud })
                .map(|s| (s, richness))
                .with_context(|| format!("stage filter: sample {id}"))
        })
        .collect::<Result<_>>()?;
    let kept_ids: Vec<String> = ids
        .iter()
        .zip(&cloud)
        .filter(|(_, &c)| !c)
        .map(|(id, _)| id.clone())
        .collect();
    let kept = spectra::filter_flagged(pairs);
    let samples_discarded = samples_in - kept.len();
    prov.set("samples_discarded", samples_discarded);
    if kept.is_empty() {
        bail!("stage filter: every sample is cloud-flagged");
    }

    // Stage 2: Gaussian-response resampling onto the target grid.
    let (mut rows, y): (Vec<Vec<f64>>, Vec<f64>) = kept
        .into_iter()
        .map(|(s, richness)| (s.values, richness))
        .unzip();
    let mut grid = source_grid.clone();
    if resample {
        let target_path = target_grid_path
            .context("resampling requested but no target grid (flag --target-grid or key `target_grid`)")?;
        prov.digest("input.target_grid", &target_path)?;
        let target = config::parse_grid_file(&target_path, None).context("stage resample")?;
        let weights = spectra::ResampleWeights::compute(&source_grid, &target)
            .context("stage resample: weights")?;
        for (row, id) in rows.iter_mut().zip(&kept_ids) {
            *row = weights
                .apply(row)
                .with_context(|| format!("stage resample: sample {id}"))?;
        }
        grid = target;
    }
    prov.set("bands_resampled", grid.len());

    // Stage 3: band removal.
    let mut table =
        io::table_from_rows(kept_ids.clone(), &rows, y, grid).context("stage remove: assemble")?;
    if let Some(rp) = &removal_path {
        prov.digest("input.remove_bands", rp)?;
        let removals = config::parse_removal_file(rp)?;
        table =
            spectra::remove_bands(&table, &removals, tolerance).context("stage remove")?;
    }
    prov.set("bands_retained", table.n_bands());

    // Stage 4: per-spectrum mean normalization over the retained bands.
    if normalize {
        for i in 0..table.n_samples() {
            let row: Vec<f64> = (0..table.n_bands()).map(|j| table.x[(i, j)]).collect();
            let normalized = spectra::mean_normalize(&row, MEAN_NORMALIZE_EPS)
                .with_context(|| format!("stage normalize: sample {}", table.ids[i]))?;
            for (j, v) in normalized.into_iter().enumerate() {
                table.x[(i, j)] = v;
            }
        }
    }

    let spectra_out = output_dir.join("preprocessed_spectra.csv");
    let richness_out = output_dir.join("preprocessed_richness.csv");
    io::write_spectra_csv(&spectra_out, &table)?;
    io::write_richness_csv(&richness_out, &table.ids, &table.y)?;

    prov.set("samples_out", table.n_samples());
    prov.set("resample", resample);
    prov.set("normalize", normalize);
    prov.set("band_match_tolerance", tolerance);
    prov.set(
        "source_fwhm",
        source_fwhm.map_or_else(|| "auto-median-spacing".to_string(), |v| v.to_string()),
    );
    for key in kv.keys() {
        if let Some(value) = kv.get(key) {
            prov.set(&format!("config.{key}"), value);
        }
    }
    prov.write_to(&output_dir)?;

    println!(
        "preprocess: {} samples ({} discarded), {} bands retained -> {}",
        table.n_samples(),
        samples_discarded,
        table.n_bands(),
        output_dir.display()
    );
    Ok(())
}
