//! `specrich evaluate`: repeated two-fold cross validation over the
//! selected method pairs, writing the report CSV, the per-round log, an
//! aligned text table and a provenance sidecar. Method pairs run on a
//! small worker pool; outputs are assembled in canonical order so thread
//! count never changes a byte.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::Args;
use specrich_core::eval::{self, CvConfig, MethodPair, SelectionMode};
use specrich_core::{dimred, io, model_io, regress, SampleTable, SpectralGrid};

use crate::config::{self, KeyValues};
use crate::provenance::Provenance;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run configuration file; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preprocessed spectra CSV.
    #[arg(long)]
    pub spectra: Option<PathBuf>,
    /// Preprocessed richness CSV.
    #[arg(long)]
    pub richness: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Method pairs: `all` or a comma list like `PLS:GPR,PCA:OLSR`.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Cross-validation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of repetitions.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Hyperparameter selection mode: `nested` or `pooled`.
    #[arg(long)]
    pub selection_mode: Option<String>,
    /// Fit the best pair on the full table and save the models.
    #[arg(long)]
    pub save_models: bool,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
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
    let output_dir = args
        .output_dir
        .clone()
        .or_else(|| kv.get_path("output_dir"))
        .context("no output directory (flag --output-dir or config key `output_dir`)")?;

    let mut cv = config::cv_config_from(&kv)?;
    if let Some(seed) = args.seed {
        cv.rng_seed = seed;
    }
    if let Some(reps) = args.repetitions {
        cv.repetitions = reps;
    }
    if let Some(mode) = &args.selection_mode {
        cv.selection_mode = SelectionMode::parse(mode)?;
    }

    let pairs_raw = args
        .pairs
        .clone()
        .or_else(|| kv.get("pairs").map(str::to_string))
        .unwrap_or_else(|| "all".to_string());
    let pairs = parse_pairs(&pairs_raw)?;

    let table = load_table(&spectra_path, &richness_path)?;

    std::fs::create_dir_all(&output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;
    let mut prov = Provenance::new("evaluate");
    prov.digest("input.spectra", &spectra_path)?;
    prov.digest("input.richness", &richness_path)?;
    prov.set("seed", cv.rng_seed);
    prov.set("repetitions", cv.repetitions);
    prov.set("selection_mode", cv.selection_mode.name());
    prov.set("pairs", &pairs_raw);
    prov.set("threads", worker_count(pairs.len()));
    for key in kv.keys() {
        if let Some(value) = kv.get(key) {
            prov.set(&format!("config.{key}"), value);
        }
    }

    let outcomes = run_pairs(&table, &pairs, &cv);
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (pair, outcome) in outcomes {
        match outcome {
            Ok(report) => entries.push((pair, report)),
            Err(e) => failures.push((pair, format!("{e:#}"))),
        }
    }
    for (pair, message) in &failures {
        prov.set(&format!("failure.{pair}"), message);
        eprintln!("evaluate: {pair} failed: {message}");
    }

    if !entries.is_empty() {
        let rows = eval::report_table(&entries)?;
        std::fs::write(output_dir.join("report.csv"), eval::report_csv(&rows))?;
        std::fs::write(output_dir.join("rounds.csv"), eval::rounds_csv(&entries))?;
        let text = eval::report_text(&rows);
        std::fs::write(output_dir.join("report.txt"), &text)?;
        print!("{text}");

        if args.save_models {
            let best = rows.iter().find(|r| r.best).unwrap();
            save_best_models(&table, best.pair, &cv, &output_dir)
                .context("saving best-pair models")?;
            prov.set("saved_models", best.pair);
        }
    }
    prov.write_to(&output_dir)?;

    if !failures.is_empty() {
        bail!("{} of {} method pairs failed", failures.len(), pairs.len());
    }
    Ok(())
}

pub fn parse_pairs(raw: &str) -> Result<Vec<MethodPair>> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(MethodPair::all());
    }
    let mut pairs: Vec<MethodPair> = raw
        .split(',')
        .map(|p| MethodPair::parse(p.trim()).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    pairs.sort_by_key(MethodPair::order_index);
    pairs.dedup();
    if pairs.is_empty() {
        bail!("empty method-pair list");
    }
    Ok(pairs)
}

/// Loads a preprocessed table. Band FWHM is irrelevant downstream of
/// resampling, so the median spacing stands in.
pub fn load_table(spectra_path: &std::path::Path, richness_path: &std::path::Path) -> Result<SampleTable> {
    let spectra = io::read_spectra_csv(spectra_path)?;
    let richness = io::read_richness_csv(richness_path)?;
    let (ids, rows, y, _) = io::join_inputs(&spectra, &richness, None)?;
    let grid = SpectralGrid::with_uniform_fwhm(
        spectra.centers.clone(),
        config::median_spacing(&spectra.centers),
    )?;
    Ok(io::table_from_rows(ids, &rows, y, grid)?)
}

fn worker_count(pairs: usize) -> usize {
    let requested = std::env::var("SPECRICH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1);
    requested.min(pairs.max(1))
}

/// Runs every pair on a fixed worker pool and returns results in input
/// order, identical to a sequential run.
fn run_pairs(
    table: &SampleTable,
    pairs: &[MethodPair],
    cv: &CvConfig,
) -> Vec<(MethodPair, specrich_core::Result<eval::CvReport>)> {
    let workers = worker_count(pairs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<specrich_core::Result<eval::CvReport>>>> =
        Mutex::new((0..pairs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= pairs.len() {
                    break;
                }
                let outcome = eval::run_cv(table, pairs[idx], cv);
                results.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });
    pairs
        .iter()
        .copied()
        .zip(results.into_inner().unwrap().into_iter().map(Option::unwrap))
        .collect()
}

/// Grid-searches the best pair on the full table, fits both stages, and
/// writes them in the flat-text model format.
fn save_best_models(
    table: &SampleTable,
    pair: MethodPair,
    cv: &CvConfig,
    output_dir: &std::path::Path,
) -> Result<()> {
    let (k, params) = eval::grid_search(&table.x, &table.y, pair, cv)?;
    let projection = dimred::fit_method(pair.dimred, &table.x, &table.y, k)?;
    let scores = projection.transform(&table.x)?;
    let regressor = match pair.regress {
        specrich_core::regress::RegressMethod::Olsr => regress::olsr_fit(&scores, &table.y)?,
        specrich_core::regress::RegressMethod::Krr => {
            regress::krr_fit(&scores, &table.y, &params.unwrap())?
        }
        specrich_core::regress::RegressMethod::Gpr => {
            regress::gpr_fit(&scores, &table.y, &params.unwrap())?
        }
    };
    let dir = output_dir.join("models");
    std::fs::create_dir_all(&dir)?;
    model_io::save_dimred(&dir.join("best.dimred.txt"), &projection)?;
    model_io::save_regression(&dir.join("best.regress.txt"), &regressor)?;
    Ok(())
}
