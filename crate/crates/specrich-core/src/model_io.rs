//! Flat-text model serialization.
//!
//! A model file is a `specrich-model v1` magic line, a block of `key = value`
//! header lines, then named matrix blocks. A block starts with `[name]`
//! followed by one line per row, entries separated by single spaces. Floats
//! are written in the shortest form that parses back to identical bits, so
//! save/load round-trips exactly. Field order is fixed and documented in
//! the repository README.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::dimred::{DimRedMethod, DimRedModel};
use crate::error::{Error, Result};
use crate::regress::{KernelParams, RegressionModel};

const MAGIC: &str = "specrich-model v1";

/// Serializes a fitted projection model.
pub fn dimred_to_string(model: &DimRedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind = dimred");
    let _ = writeln!(out, "method = {}", model.method.name());
    let _ = writeln!(out, "d = {}", model.d());
    let _ = writeln!(out, "k = {}", model.k());
    let _ = writeln!(
        out,
        "early_stop = {}",
        model.early_stop.map_or(String::from("none"), |v| v.to_string())
    );
    write_block(&mut out, "x_mean", &[model.x_mean.as_slice()]);
    write_matrix_block(&mut out, "loadings", &model.loadings);
    write_block(&mut out, "diagnostics", &[model.diagnostics.as_slice()]);
    out
}

/// Parses a projection model written by [`dimred_to_string`].
pub fn dimred_from_string(text: &str) -> Result<DimRedModel> {
    let mut doc = Document::parse(text)?;
    doc.expect_header("kind", "dimred")?;
    let method = DimRedMethod::parse(&doc.take_header("method")?)?;
    let d: usize = doc.take_parsed("d")?;
    let k: usize = doc.take_parsed("k")?;
    let early_stop = match doc.take_header("early_stop")?.as_str() {
        "none" => None,
        v => Some(v.parse::<usize>().map_err(|_| {
            Error::Format(format!("early_stop value {v:?} is not an integer"))
        })?),
    };
    let x_mean = doc.take_vector("x_mean", d)?;
    let loadings = doc.take_matrix("loadings", d, k)?;
    let diagnostics = doc.take_vector("diagnostics", k)?;
    Ok(DimRedModel {
        method,
        x_mean: DVector::from_vec(x_mean),
        loadings,
        diagnostics,
        early_stop,
    })
}

/// Serializes a fitted regressor, kernel hyperparameters at full precision.
pub fn regression_to_string(model: &RegressionModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind = regression");
    match model {
        RegressionModel::Olsr {
            coefficients,
            intercept,
        } => {
            let _ = writeln!(out, "variant = OLSR");
            let _ = writeln!(out, "k = {}", coefficients.len());
            let _ = writeln!(out, "intercept = {intercept}");
            write_block(&mut out, "coefficients", &[coefficients.as_slice()]);
        }
        RegressionModel::Krr {
            train,
            dual_weights,
            params,
        } => {
            let _ = writeln!(out, "variant = KRR");
            write_kernel_header(&mut out, train, params);
            write_matrix_block(&mut out, "train", train);
            write_block(&mut out, "dual_weights", &[dual_weights.as_slice()]);
        }
        RegressionModel::Gpr {
            train,
            dual_weights,
            params,
            y_mean,
            chol,
        } => {
            let _ = writeln!(out, "variant = GPR");
            write_kernel_header(&mut out, train, params);
            let _ = writeln!(out, "y_mean = {y_mean}");
            write_matrix_block(&mut out, "train", train);
            write_block(&mut out, "dual_weights", &[dual_weights.as_slice()]);
            write_matrix_block(&mut out, "chol", chol);
        }
    }
    out
}

/// Parses a regressor written by [`regression_to_string`].
pub fn regression_from_string(text: &str) -> Result<RegressionModel> {
    let mut doc = Document::parse(text)?;
    doc.expect_header("kind", "regression")?;
    let variant = doc.take_header("variant")?;
    match variant.as_str() {
        "OLSR" => {
            let k: usize = doc.take_parsed("k")?;
            let intercept: f64 = doc.take_parsed("intercept")?;
            let coefficients = doc.take_vector("coefficients", k)?;
            Ok(RegressionModel::Olsr {
                coefficients: DVector::from_vec(coefficients),
                intercept,
            })
        }
        "KRR" => {
            let (n, k, params) = read_kernel_header(&mut doc)?;
            let train = doc.take_matrix("train", n, k)?;
            let dual_weights = doc.take_vector("dual_weights", n)?;
            Ok(RegressionModel::Krr {
                train,
                dual_weights: DVector::from_vec(dual_weights),
                params,
            })
        }
        "GPR" => {
            let (n, k, params) = read_kernel_header(&mut doc)?;
            let y_mean: f64 = doc.take_parsed("y_mean")?;
            let train = doc.take_matrix("train", n, k)?;
            let dual_weights = doc.take_vector("dual_weights", n)?;
            let chol = doc.take_matrix("chol", n, n)?;
            Ok(RegressionModel::Gpr {
                train,
                dual_weights: DVector::from_vec(dual_weights),
                params,
                y_mean,
                chol,
            })
        }
        other => Err(Error::Format(format!("unknown model variant {other:?}"))),
    }
}

/// Writes a model file.
pub fn save_dimred(path: &Path, model: &DimRedModel) -> Result<()> {
    std::fs::write(path, dimred_to_string(model))?;
    Ok(())
}

/// Reads a model file.
pub fn load_dimred(path: &Path) -> Result<DimRedModel> {
    dimred_from_string(&std::fs::read_to_string(path)?)
}

pub fn save_regression(path: &Path, model: &RegressionModel) -> Result<()> {
    std::fs::write(path, regression_to_string(model))?;
    Ok(())
}

pub fn load_regression(path: &Path) -> Result<RegressionModel> {
    regression_from_string(&std::fs::read_to_string(path)?)
}

fn write_kernel_header(out: &mut String, train: &DMatrix<f64>, params: &KernelParams) {
    let _ = writeln!(out, "n = {}", train.nrows());
    let _ = writeln!(out, "k = {}", train.ncols());
    let _ = writeln!(out, "sigma2 = {}", params.sigma2);
    let _ = writeln!(out, "length_scale = {}", params.length_scale);
    let _ = writeln!(out, "noise = {}", params.noise);
}

fn read_kernel_header(doc: &mut Document) -> Result<(usize, usize, KernelParams)> {
    let n: usize = doc.take_parsed("n")?;
    let k: usize = doc.take_parsed("k")?;
    let sigma2: f64 = doc.take_parsed("sigma2")?;
    let length_scale: f64 = doc.take_parsed("length_scale")?;
    let noise: f64 = doc.take_parsed("noise")?;
    Ok((n, k, KernelParams::new(sigma2, length_scale, noise)?))
}

fn write_block(out: &mut String, name: &str, rows: &[&[f64]]) {
    let _ = writeln!(out, "[{name}]");
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn write_matrix_block(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "[{name}]");
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

/// Parsed model file: ordered header pairs plus named row blocks.
struct Document {
    headers: Vec<(String, String)>,
    blocks: Vec<(String, Vec<Vec<f64>>)>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(line) if line.trim() == MAGIC => {}
            other => {
                return Err(Error::Format(format!(
                    "expected magic line {MAGIC:?}, found {other:?}"
                )))
            }
        }
        let mut headers = Vec::new();
        let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                blocks.push((name.to_string(), Vec::new()));
            } else if let Some((key, value)) = line.split_once('=') {
                if !blocks.is_empty() {
                    return Err(Error::Format(format!(
                        "header line {line:?} after matrix blocks began"
                    )));
                }
                headers.push((key.trim().to_string(), value.trim().to_string()));
            } else if let Some((_, rows)) = blocks.last_mut() {
                let row: Vec<f64> = line
                    .split_ascii_whitespace()
                    .map(|f| {
                        f.parse::<f64>().map_err(|_| {
                            Error::Format(format!("bad numeric field {f:?} in matrix block"))
                        })
                    })
                    .collect::<Result<_>>()?;
                rows.push(row);
            } else {
                return Err(Error::Format(format!("unexpected line {line:?}")));
            }
        }
        Ok(Self { headers, blocks })
    }

    fn take_header(&mut self, key: &str) -> Result<String> {
        let pos = self
            .headers
            .iter()
            .position(|(k, _)| k == key)
            .ok_or_else(|| Error::Format(format!("missing header {key:?}")))?;
        Ok(self.headers.remove(pos).1)
    }

    fn expect_header(&mut self, key: &str, value: &str) -> Result<()> {
        let found = self.take_header(key)?;
        if found != value {
            return Err(Error::Format(format!(
                "header {key} = {found:?}, expected {value:?}"
            )));
        }
        Ok(())
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.take_header(key)?;
        raw.parse::<T>()
            .map_err(|_| Error::Format(format!("header {key} = {raw:?} failed to parse")))
    }

    fn take_block(&mut self, name: &str) -> Result<Vec<Vec<f64>>> {
        let pos = self
            .blocks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing block [{name}]")))?;
        Ok(self.blocks.remove(pos).1)
    }

    fn take_vector(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let rows = self.take_block(name)?;
        if rows.len() != 1 || rows[0].len() != len {
            return Err(Error::Format(format!(
                "block [{name}] should be 1 row of {len} values"
            )));
        }
        Ok(rows.into_iter().next().unwrap())
    }

    fn take_matrix(&mut self, name: &str, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
        let rows = self.take_block(name)?;
        if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Format(format!(
                "block [{name}] should be {nrows} rows of {ncols} values"
            )));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}
