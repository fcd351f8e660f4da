//! CSV readers for individual-level data and per-instrument summary statistics.

use std::path::Path;

use invalid_iv::model::SummaryRecord;
use invalid_iv::IVDataset;
use nalgebra::{DMatrix, DVector};

use crate::config::Columns;
use crate::error::CliError;

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn csv_error(path: &Path, err: csv::Error) -> CliError {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    CliError::parse(path, line, err.to_string())
}

fn header_index(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::parse(path, 1, format!("missing column '{name}'")))
}

fn number(path: &Path, line: usize, column: &str, raw: &str) -> Result<f64, CliError> {
    let v: f64 = raw
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("column '{column}': cannot parse {raw:?} as a number")))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("column '{column}': value {raw:?} is not finite")));
    }
    Ok(v)
}

/// Reads a header-first CSV into a raw dataset.
pub fn read_individual(path: &Path, columns: &Columns) -> Result<IVDataset, CliError> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let by_prefix = |prefix: &str, exclude: &[&str]| -> Vec<String> {
        headers
            .iter()
            .filter(|h| h.starts_with(prefix) && !exclude.contains(h))
            .map(str::to_string)
            .collect()
    };
    let reserved = [columns.outcome.as_str(), columns.exposure.as_str()];
    let instruments = columns.instruments.clone().unwrap_or_else(|| by_prefix("z", &reserved));
    let covariates = columns.covariates.clone().unwrap_or_else(|| by_prefix("x", &reserved));
    if instruments.is_empty() {
        return Err(CliError::parse(path, 1, "no instrument columns"));
    }
    let yi = header_index(path, &headers, &columns.outcome)?;
    let di = header_index(path, &headers, &columns.exposure)?;
    let zi: Vec<usize> = instruments.iter().map(|c| header_index(path, &headers, c)).collect::<Result<_, _>>()?;
    let xi: Vec<usize> = covariates.iter().map(|c| header_index(path, &headers, c)).collect::<Result<_, _>>()?;

    let (p, q) = (zi.len(), xi.len());
    let (mut y, mut d) = (Vec::new(), Vec::new());
    let mut z: Vec<f64> = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |k: usize| record.get(k).unwrap_or("");
        y.push(number(path, line, &columns.outcome, field(yi))?);
        d.push(number(path, line, &columns.exposure, field(di))?);
        for (k, &c) in zi.iter().enumerate() {
            z.push(number(path, line, &instruments[k], field(c))?);
        }
        for (k, &c) in xi.iter().enumerate() {
            x.push(number(path, line, &covariates[k], field(c))?);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(CliError::parse(path, 2, "no data rows"));
    }
    let zm = DMatrix::from_row_slice(n, p, &z);
    let xm = (q > 0).then(|| DMatrix::from_row_slice(n, q, &x));
    Ok(IVDataset::new(DVector::from_vec(y), DVector::from_vec(d), zm, xm)?)
}

/// Reads `gamma_hat, se_gamma, Gamma_hat, se_Gamma` rows, one per instrument.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRecord>, CliError> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names = ["gamma_hat", "se_gamma", "Gamma_hat", "se_Gamma"];
    let idx: Vec<usize> = names.iter().map(|n| header_index(path, &headers, n)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let v: Vec<f64> = idx
            .iter()
            .zip(names)
            .map(|(&k, name)| number(path, line, name, record.get(k).unwrap_or("")))
            .collect::<Result<_, _>>()?;
        out.push(SummaryRecord { gamma_hat: v[0], se_gamma: v[1], big_gamma_hat: v[2], se_big_gamma: v[3] });
    }
    if out.is_empty() {
        return Err(CliError::parse(path, 2, "no instrument rows"));
    }
    Ok(out)
}

/// Writes a dataset as CSV with columns `y, d, z1..zp` (and `x1..xq`).
pub fn write_individual(path: &Path, data: &IVDataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let q = data.covariates().map(|x| x.ncols()).unwrap_or(0);
    let mut header = vec!["y".to_string(), "d".to_string()];
    header.extend((1..=data.p()).map(|j| format!("z{j}")));
    header.extend((1..=q).map(|j| format!("x{j}")));
    let io = |e: csv::Error| CliError::Io { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let mut row = vec![data.outcome()[i].to_string(), data.exposure()[i].to_string()];
        row.extend((0..data.p()).map(|j| data.instruments()[(i, j)].to_string()));
        if let Some(x) = data.covariates() {
            row.extend((0..q).map(|j| x[(i, j)].to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_prefixed_columns() {
        let f = file("y,d,z1,z2,x1,note\n1,2,3,4,5,a\n2,3,1,0,1,b\n0,1,2,2,0,c\n5,1,0,1,1,d\n");
        let ds = read_individual(f.path(), &Columns::default()).unwrap();
        assert_eq!((ds.n(), ds.p()), (4, 2));
        assert_eq!(ds.instruments()[(0, 1)], 4.0);
        assert_eq!(ds.covariates().unwrap()[(1, 0)], 1.0);
    }

    #[test]
    fn bad_value_reports_line() {
        let f = file("y,d,z1\n1,2,3\n2,NA,1\n");
        let err = read_individual(f.path(), &Columns::default()).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let f = file("gamma_hat,se_gamma,Gamma_hat,se_Gamma\n0.5,0.1,1.0,0.1\n0.4,0.1\n");
        let err = read_summary(f.path()).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn round_trip() {
        let z = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64 * 0.5);
        let ds = IVDataset::new(DVector::from_fn(5, |i, _| i as f64 / 3.0), DVector::from_fn(5, |i, _| (i * i) as f64), z, None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_individual(f.path(), &ds).unwrap();
        assert_eq!(read_individual(f.path(), &Columns::default()).unwrap(), ds);
    }
}
