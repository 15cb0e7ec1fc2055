//! CSV tables with round-trip floating-point formatting.
//!
//! Values are written with 17 significant digits, so parsing a file yields
//! the exact `f64` that was written.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ode::Trajectory;

pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_table<W: Write>(out: &mut W, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "row has {} values for {} columns",
                row.len(),
                header.len()
            )));
        }
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Columns `time, R11..Q22, observables` and, for averaged runs, `sem_*`.
pub fn write_trajectory<W: Write>(out: &mut W, traj: &Trajectory) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..traj.len()).map(|i| traj.row(i)).collect();
    write_table(out, &traj.header(), &rows)
}

pub fn save_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_table(&mut w, header, rows)?;
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectory(&mut w, traj)?;
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a CSV table written by this module.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h?.split(',').map(str::to_string).collect(),
        None => return Err(Error::Config(format!("{} is empty", path.display()))),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let row = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), k + 2)))?;
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "{} line {}: wrong column count",
                path.display(),
                k + 2
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            f64::INFINITY,
        ] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
        assert!(format_value(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut buf = Vec::new();
        let header = vec!["a".to_string(), "b".to_string()];
        assert!(write_table(&mut buf, &header, &[vec![1.0]]).is_err());
    }
}
