//! CSV and JSON export of fields, grids, profiles and time series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::evolve::TimeSeries;
use crate::grid::{RadialField, RadialGrid};
use crate::groundstate::{EllipticProblem, GroundStateProfile};

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Columns `r, re, im`.
pub fn write_field_csv(path: &Path, f: &RadialField) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["r", "re", "im"])?;
    for (r, v) in f.grid().nodes().iter().zip(f.values()) {
        w.serialize((r, v.re, v.im))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `r, w` with `w` the unweighted quadrature weight.
pub fn write_grid_csv(path: &Path, grid: &RadialGrid) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["r", "w"])?;
    for (r, wt) in grid.nodes().iter().zip(grid.weights()) {
        w.serialize((r, wt))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `r, Q`, plus a JSON summary of norms and residuals next to it.
pub fn write_profile(csv_path: &Path, json_path: &Path, profile: &GroundStateProfile, problem: &EllipticProblem) -> Result<()> {
    let mut w = csv_writer(csv_path)?;
    w.write_record(["r", "Q"])?;
    for (r, q) in profile.field.grid().nodes().iter().zip(profile.values()) {
        w.serialize((r, q))?;
    }
    w.flush()?;
    write_json(json_path, &profile.summary(problem)?)
}

/// Columns `t, mass, energy, gradb, supamp`.
pub fn write_timeseries_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "mass", "energy", "gradb", "supamp"])?;
    for f in &series.frames {
        w.serialize((f.t, f.mass, f.energy, f.grad_b, f.sup_amp))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON of any report.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grading;
    use std::sync::Arc;

    #[test]
    fn field_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(RadialGrid::build(3, 10.0, 64, Grading::LogGraded).unwrap());
        let f = RadialField::from_real_fn(g.clone(), |r| (-r * r).exp()).unwrap();
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &f).unwrap();
        let mut rd = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rd.headers().unwrap(), vec!["r", "re", "im"]);
        let rows: Vec<(f64, f64, f64)> = rd.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 64);
        for ((r, re, im), (node, v)) in rows.iter().zip(g.nodes().iter().zip(f.values())) {
            assert_eq!(r, node);
            assert_eq!(*re, v.re);
            assert_eq!(*im, 0.0);
        }
        let gp = dir.path().join("g.csv");
        write_grid_csv(&gp, &g).unwrap();
        assert_eq!(csv::Reader::from_path(&gp).unwrap().records().count(), 64);
    }

    #[test]
    fn json_is_parseable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_json(&path, &[1.0, 2.5]).unwrap();
        let v: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v, vec![1.0, 2.5]);
    }
}
