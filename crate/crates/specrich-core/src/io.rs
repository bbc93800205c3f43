//! CSV ingestion and emission.
//!
//! Formats:
//! - spectra CSV: header `id,<center_1>,<center_2>,...` with band centers
//!   in nm as decimal literals, one row per sample;
//! - richness CSV: header `id,richness`, ids matching the spectra file;
//! - flags CSV (optional): header `id,cloud` with cloud in {0,1}.
//!
//! All values use `.` as the decimal separator with no grouping. Floats
//! round-trip exactly: writing uses the shortest representation that
//! parses back to the same bits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::spectra::SampleTable;

/// Raw contents of a spectra CSV: ids, band centers from the header and
/// one reflectance row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraCsv {
    pub ids: Vec<String>,
    pub centers: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn parse_float(field: &str, context: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{context}: cannot parse {field:?} as a number")))
}

/// Reads a spectra CSV.
pub fn read_spectra_csv(path: &Path) -> Result<SpectraCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("id") {
        return Err(Error::Format(format!(
            "{}: first header column must be `id`",
            path.display()
        )));
    }
    let centers: Vec<f64> = headers
        .iter()
        .skip(1)
        .map(|h| parse_float(h, "spectra header"))
        .collect::<Result<_>>()?;
    if centers.is_empty() {
        return Err(Error::Format(format!(
            "{}: no band columns",
            path.display()
        )));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != centers.len() + 1 {
            return Err(Error::Format(format!(
                "{} row {}: {} fields, expected {}",
                path.display(),
                row_no + 2,
                record.len(),
                centers.len() + 1
            )));
        }
        ids.push(record[0].to_string());
        let row: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|f| parse_float(f, &format!("spectra row {}", row_no + 2)))
            .collect::<Result<_>>()?;
        values.push(row);
    }
    Ok(SpectraCsv {
        ids,
        centers,
        values,
    })
}

/// Reads a richness CSV into (id, richness) pairs in file order.
pub fn read_richness_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?;
    if headers.get(0) != Some("id") || headers.get(1) != Some("richness") {
        return Err(Error::Format(format!(
            "{}: header must be `id,richness`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let value = parse_float(&record[1], &format!("richness row {}", row_no + 2))?;
        out.push((record[0].to_string(), value));
    }
    Ok(out)
}

/// Reads a flags CSV into (id, cloud) pairs.
pub fn read_flags_csv(path: &Path) -> Result<Vec<(String, bool)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?;
    if headers.get(0) != Some("id") || headers.get(1) != Some("cloud") {
        return Err(Error::Format(format!(
            "{}: header must be `id,cloud`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let cloud = match record[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Format(format!(
                    "{} row {}: cloud flag {:?} not in {{0,1}}",
                    path.display(),
                    row_no + 2,
                    other
                )))
            }
        };
        out.push((record[0].to_string(), cloud));
    }
    Ok(out)
}

/// Aligned `(ids, spectra rows, richness, cloud flags)` produced by
/// [`join_inputs`].
pub type JoinedInputs = (Vec<String>, Vec<Vec<f64>>, Vec<f64>, Vec<bool>);

/// Joins spectra, richness and optional cloud flags into aligned vectors,
/// ordered as in the spectra file. Every spectra id must appear in the
/// richness file and vice versa; flag ids must be a subset.
pub fn join_inputs(
    spectra: &SpectraCsv,
    richness: &[(String, f64)],
    flags: Option<&[(String, bool)]>,
) -> Result<JoinedInputs> {
    let mut richness_by_id: HashMap<&str, f64> = HashMap::with_capacity(richness.len());
    for (id, v) in richness {
        if richness_by_id.insert(id.as_str(), *v).is_some() {
            return Err(Error::Format(format!("duplicate richness id {id:?}")));
        }
    }
    let mut flags_by_id: HashMap<&str, bool> = HashMap::new();
    if let Some(flags) = flags {
        for (id, cloud) in flags {
            if flags_by_id.insert(id.as_str(), *cloud).is_some() {
                return Err(Error::Format(format!("duplicate flag id {id:?}")));
            }
        }
        for id in flags_by_id.keys() {
            if !spectra.ids.iter().any(|s| s == id) {
                return Err(Error::Format(format!(
                    "flag id {id:?} not present in spectra"
                )));
            }
        }
    }
    let mut ids = Vec::with_capacity(spectra.ids.len());
    let mut values = Vec::with_capacity(spectra.ids.len());
    let mut y = Vec::with_capacity(spectra.ids.len());
    let mut cloud = Vec::with_capacity(spectra.ids.len());
    for (i, id) in spectra.ids.iter().enumerate() {
        let Some(&richness) = richness_by_id.remove(id.as_str()).as_ref() else {
            return Err(Error::Format(format!("no richness for spectra id {id:?}")));
        };
        ids.push(id.clone());
        values.push(spectra.values[i].clone());
        y.push(richness);
        cloud.push(flags_by_id.get(id.as_str()).copied().unwrap_or(false));
    }
    if !richness_by_id.is_empty() {
        let mut extra: Vec<&str> = richness_by_id.keys().copied().collect();
        extra.sort_unstable();
        return Err(Error::Format(format!(
            "richness ids {:?} not present in spectra",
            extra
        )));
    }
    Ok((ids, values, y, cloud))
}

/// Writes a sample table's spectra in the spectra CSV format.
pub fn write_spectra_csv(path: &Path, table: &SampleTable) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain(table.grid.centers().iter().map(|c| c.to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..table.n_samples() {
        let mut fields = Vec::with_capacity(table.n_bands() + 1);
        fields.push(table.ids[i].clone());
        for j in 0..table.n_bands() {
            fields.push(table.x[(i, j)].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes richness values in the richness CSV format.
pub fn write_richness_csv(path: &Path, ids: &[String], y: &DVector<f64>) -> Result<()> {
    if ids.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} ids and {} richness values",
            ids.len(),
            y.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "id,richness")?;
    for (id, v) in ids.iter().zip(y.iter()) {
        writeln!(out, "{id},{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Builds a sample table from joined rows and an explicit grid.
pub fn table_from_rows(
    ids: Vec<String>,
    rows: &[Vec<f64>],
    y: Vec<f64>,
    grid: SpectralGrid,
) -> Result<SampleTable> {
    if rows.len() != ids.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} ids",
            rows.len(),
            ids.len()
        )));
    }
    let d = grid.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Shape(format!(
                "row {i} has {} bands, grid has {d}",
                row.len()
            )));
        }
    }
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    SampleTable::new(ids, x, DVector::from_vec(y), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("specrich-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn spectra_roundtrip() {
        let grid = SpectralGrid::with_uniform_fwhm(vec![500.5, 510.25, 520.125], 10.0).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0]);
        let y = DVector::from_vec(vec![3.0, 7.0]);
        let table =
            SampleTable::new(vec!["a".into(), "b".into()], x.clone(), y, grid.clone()).unwrap();

        let dir = std::env::temp_dir().join("specrich-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("spectra_roundtrip.csv");
        write_spectra_csv(&path, &table).unwrap();
        let back = read_spectra_csv(&path).unwrap();
        assert_eq!(back.ids, vec!["a", "b"]);
        assert_eq!(back.centers, grid.centers());
        for i in 0..2 {
            for j in 0..3 {
                // Bit-exact float round-trip.
                assert_eq!(back.values[i][j], x[(i, j)]);
            }
        }
    }

    #[test]
    fn richness_and_flags_parsing() {
        let rp = write_temp("r.csv", "id,richness\na,12\nb,3.5\n");
        let richness = read_richness_csv(&rp).unwrap();
        assert_eq!(richness, vec![("a".to_string(), 12.0), ("b".to_string(), 3.5)]);

        let fp = write_temp("f.csv", "id,cloud\na,1\nb,0\n");
        let flags = read_flags_csv(&fp).unwrap();
        assert_eq!(flags, vec![("a".to_string(), true), ("b".to_string(), false)]);

        let bad = write_temp("bad_flags.csv", "id,cloud\na,2\n");
        assert!(read_flags_csv(&bad).is_err());

        let bad_header = write_temp("bad_r.csv", "id,count\na,2\n");
        assert!(read_richness_csv(&bad_header).is_err());
    }

    #[test]
    fn join_validates_id_sets() {
        let spectra = SpectraCsv {
            ids: vec!["a".into(), "b".into()],
            centers: vec![500.0],
            values: vec![vec![0.5], vec![0.6]],
        };
        let richness = vec![("b".to_string(), 2.0), ("a".to_string(), 1.0)];
        let (ids, _, y, cloud) = join_inputs(&spectra, &richness, None).unwrap();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(y, vec![1.0, 2.0]);
        assert_eq!(cloud, vec![false, false]);

        let missing = vec![("a".to_string(), 1.0)];
        assert!(join_inputs(&spectra, &missing, None).is_err());

        let extra = vec![
            ("a".to_string(), 1.0),
            ("b".to_string(), 2.0),
            ("c".to_string(), 3.0),
        ];
        assert!(join_inputs(&spectra, &extra, None).is_err());

        let stray_flag = vec![("z".to_string(), true)];
        assert!(join_inputs(&spectra, &richness, Some(&stray_flag)).is_err());
    }

    #[test]
    fn spectra_header_must_start_with_id() {
        let p = write_temp("noid.csv", "sample,500\na,0.5\n");
        assert!(read_spectra_csv(&p).is_err());
    }
}
