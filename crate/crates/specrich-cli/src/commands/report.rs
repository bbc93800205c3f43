//! `specrich report`: re-render the aligned text table from a previously
//! written report CSV.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use specrich_core::eval::{self, MethodPair, ReportRow};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.csv written by `specrich evaluate`.
    #[arg(long)]
    pub report: PathBuf,
    /// Also write the rendered table to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty report file")?;
    let expected = "dimred,regressor,r_mean,r_std,rmse_mean,rmse_std,r_pooled,rmse_pooled,best_flag";
    if header != expected {
        bail!("unexpected report header {header:?}");
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            bail!("report line {}: {} fields, expected 9", line_no + 2, fields.len());
        }
        let parse = |idx: usize| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("report line {}: bad number {:?}", line_no + 2, fields[idx]))
        };
        rows.push(ReportRow {
            pair: MethodPair::parse(&format!("{}:{}", fields[0], fields[1]))?,
            r_mean: parse(2)?,
            r_std: parse(3)?,
            rmse_mean: parse(4)?,
            rmse_std: parse(5)?,
            r_pooled: parse(6)?,
            rmse_pooled: parse(7)?,
            best: fields[8].trim() == "1",
        });
    }
    if rows.is_empty() {
        bail!("report file has no data rows");
    }
    // Re-derive ordering and the best flag from the data itself.
    rows.sort_by_key(|r| r.pair.order_index());
    for row in rows.iter_mut() {
        row.best = false;
    }
    let mut best_idx = 0;
    for i in 1..rows.len() {
        if rows[i].r_mean > rows[best_idx].r_mean
            || (rows[i].r_mean == rows[best_idx].r_mean
                && rows[i].rmse_mean < rows[best_idx].rmse_mean)
        {
            best_idx = i;
        }
    }
    rows[best_idx].best = true;

    let rendered = eval::report_text(&rows);
    print!("{rendered}");
    if let Some(path) = &args.output {
        std::fs::write(path, &rendered).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
