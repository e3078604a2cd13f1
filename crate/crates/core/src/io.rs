//! CSV input for point sets and measures, and CSV/JSON output for plans.
//!
//! Rows are comma separated decimals. A first row that does not parse as
//! numbers is taken as a header and skipped.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::transport::{DiscreteMeasure, TransportPlan};

fn parse_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(_) => {
                return Err(Error::InvalidArgument(format!(
                    "row {} is not numeric: {:?}",
                    line + 1,
                    rec.iter().collect::<Vec<_>>()
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no data rows".into()));
    }
    let w = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != w) {
        return Err(Error::Dimension(format!(
            "row {} has {} columns, expected {w}",
            i + 1,
            rows[i].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in input".into()));
    }
    Ok(rows)
}

/// One point per row.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    parse_rows(reader)
}

pub fn read_points_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_points(std::fs::File::open(path)?)
}

/// Coordinates then mass on each row. Masses are used as given and must
/// already sum to one.
pub fn read_measure<R: Read>(reader: R) -> Result<DiscreteMeasure> {
    let rows = parse_rows(reader)?;
    if rows[0].len() < 2 {
        return Err(Error::Dimension("measure rows need coordinates and a mass".into()));
    }
    let (points, masses) = rows
        .into_iter()
        .map(|mut r| {
            let m = r.pop().unwrap_or(f64::NAN);
            (r, m)
        })
        .unzip();
    DiscreteMeasure::new(points, masses)
}

pub fn read_measure_file(path: &Path) -> Result<DiscreteMeasure> {
    read_measure(std::fs::File::open(path)?)
}

/// Sparse `i,j,mass` rows with a header.
pub fn write_plan_triplets<W: Write>(plan: &TransportPlan, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["i", "j", "mass"])?;
    for (i, j, m) in plan.triplets() {
        w.write_record([i.to_string(), j.to_string(), format!("{m:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points<W: Write>(points: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.write_record(p.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_optional() {
        let a = read_measure("x,y,mass\n0,0,0.5\n1,0,0.5\n".as_bytes()).unwrap();
        let b = read_measure("0,0,0.5\n1,0,0.5\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points[1], vec![1.0, 0.0]);
    }

    #[test]
    fn ragged_and_bad_rows_are_rejected() {
        assert!(matches!(read_points("1,2\n3\n".as_bytes()), Err(Error::Dimension(_))));
        assert!(read_points("1,2\n3,x\n".as_bytes()).is_err());
        assert!(read_points("a,b\n".as_bytes()).is_err());
        assert!(read_measure("0,0,0.7\n1,0,0.7\n".as_bytes()).is_err());
    }

    #[test]
    fn triplets_round_trip_through_text() {
        let c = [0.0, 1.0, 1.0, 0.0];
        let plan = TransportPlan::from_entries(2, 2, vec![0.5, 0.0, 0.0, 0.5], &c).unwrap();
        let mut out = Vec::new();
        write_plan_triplets(&plan, &mut out).unwrap();
        let rows = read_points(out.as_slice()).unwrap();
        assert_eq!(rows, vec![vec![0.0, 0.0, 0.5], vec![1.0, 1.0, 0.5]]);
    }
}
