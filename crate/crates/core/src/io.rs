//! CSV input and output.
//!
//! Datasets are stored with a header row, `y` in the first column and the `p` columns of `Z`
//! after it. The true design `X`, when known, sits in a sibling file with `p` columns.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{EivError, Result};
use crate::model::EivDataset;
use crate::simlab::MetricsRow;

/// Formats with 7 significant digits.
pub fn sig7(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.6e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn csv_error(e: csv::Error) -> EivError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EivError::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => EivError::Parse {
            line,
            msg: format!("expected {expected_len} fields, found {len}"),
        },
        other => EivError::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

/// Numeric table from CSV text. Returns the header when `header` is set.
pub fn parse_table<R: Read>(reader: R, header: bool) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names = if header {
        let h = rdr.headers().map_err(csv_error)?.clone();
        if h.is_empty() || h.iter().all(|f| f.is_empty()) {
            return Err(EivError::Parse {
                line: 1,
                msg: "missing header row".into(),
            });
        }
        if h.iter().all(|f| f.parse::<f64>().is_ok()) {
            return Err(EivError::Parse {
                line: 1,
                msg: "header row required, found numbers".into(),
            });
        }
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rows == 0 {
            cols = rec.len();
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| EivError::Parse {
                line,
                msg: format!("column {}: `{field}` is not a number", k + 1),
            })?;
            if !v.is_finite() {
                return Err(EivError::Parse {
                    line,
                    msg: format!("column {}: non-finite value `{field}`", k + 1),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(EivError::Empty("CSV file has no data rows"));
    }
    Ok((names, DMatrix::from_row_slice(rows, cols, &values)))
}

pub fn read_table(path: &Path, header: bool) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    parse_table(File::open(path)?, header)
}

/// Reads `y` and `Z` from `data`, and `X` from `design` when given.
pub fn read_dataset(data: &Path, design: Option<&Path>) -> Result<EivDataset> {
    let (_, m) = read_table(data, true)?;
    if m.ncols() < 2 {
        return Err(EivError::DimensionMismatch {
            field: "data",
            expected: "y followed by at least one column of Z".into(),
            found: format!("{} column", m.ncols()),
        });
    }
    let y = m.column(0).into_owned();
    let z = m.columns(1, m.ncols() - 1).into_owned();
    let x = match design {
        Some(path) => Some(read_table(path, true)?.1),
        None => None,
    };
    EivDataset::new(y, z, x, None)
}

fn write_rows<W: Write>(mut w: W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Writes `y` and `Z` to `data`, and `X` to `design` when both are present.
pub fn write_dataset(d: &EivDataset, data: &Path, design: Option<&Path>) -> Result<()> {
    let p = d.p();
    let mut header = vec!["y".to_string()];
    header.extend((1..=p).map(|j| format!("z{j}")));
    let rows = (0..d.n()).map(|i| {
        let mut r = vec![d.y()[i]];
        r.extend(d.z().row(i).iter());
        r
    });
    write_rows(File::create(data)?, &header, rows)?;
    if let (Some(path), Some(x)) = (design, d.x()) {
        let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        let rows = (0..d.n()).map(|i| x.row(i).iter().copied().collect());
        write_rows(File::create(path)?, &header, rows)?;
    }
    Ok(())
}

/// Coefficient table with 1-based indices.
pub fn write_coefficients<W: Write>(mut w: W, theta: &DVector<f64>, config_hash: &str) -> Result<()> {
    writeln!(w, "index,theta_hat,config_hash")?;
    for (j, v) in theta.iter().enumerate() {
        writeln!(w, "{},{v:e},{config_hash}", j + 1)?;
    }
    Ok(())
}

pub const METRICS_HEADER: &str = "estimator_label,lambda,nu,bias,rmse,pr,R_effective,seed,config_hash";

fn quote(label: &str) -> String {
    if label.contains([',', '"', '\n']) {
        format!("\"{}\"", label.replace('"', "\"\""))
    } else {
        label.to_string()
    }
}

/// Metrics table with every number at 7 significant digits and the provenance columns.
pub fn write_metrics<W: Write>(mut w: W, rows: &[MetricsRow], seed: u64, config_hash: &str) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{seed},{config_hash}",
            quote(&r.estimator_label),
            sig7(r.lambda),
            sig7(r.nu),
            sig7(r.bias),
            sig7(r.rmse),
            sig7(r.pr),
            r.r_effective
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_significant_digits() {
        assert_eq!(sig7(0.032152812345), "0.03215281");
        assert_eq!(sig7(1.0), "1");
        assert_eq!(sig7(1234567890.0), "1234568000");
        assert_eq!(sig7(f64::NAN), "NaN");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "y,z1\n1.0,2.0\n3.0,abc\n";
        match parse_table(text.as_bytes(), true) {
            Err(EivError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_table("y,z1\n1,2\n3\n".as_bytes(), true) {
            Err(EivError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_table("1,2\n3,4\n".as_bytes(), true),
            Err(EivError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        let z = &x + DMatrix::from_element(3, 2, 0.25);
        let y = DVector::from_vec(vec![0.1, -0.2, 1e-9]);
        let d = EivDataset::new(y, z, Some(x), None).unwrap();
        let (a, b) = (dir.path().join("d.csv"), dir.path().join("x.csv"));
        write_dataset(&d, &a, Some(&b)).unwrap();
        let back = read_dataset(&a, Some(&b)).unwrap();
        assert_eq!(back.y(), d.y());
        assert_eq!(back.z(), d.z());
        assert_eq!(back.x(), d.x());
    }

    #[test]
    fn metrics_table_layout() {
        let row = MetricsRow {
            estimator_label: "Conic(0.5)".into(),
            lambda: 0.5,
            nu: 0.0,
            bias: 0.123456789,
            rmse: 0.2,
            pr: 0.3,
            r_effective: 100,
        };
        let mut out = Vec::new();
        write_metrics(&mut out, &[row], 42, "abc").unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\nConic(0.5),0.5,0,0.1234568,0.2,0.3,100,42,abc\n"));
    }
}
