//! CSV and JSON emission.
//!
//! CSV files start with `# key=value` comment lines describing the lattice
//! and units, followed by one header row. Floats are written with 17
//! significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::experiment::{BranchSummary, SpacetimeDensity, SweepRow};
use crate::wigner::WignerMap;

/// Lossless text form of a float.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub type Meta = Vec<(String, String)>;

pub fn meta(pairs: &[(&str, String)]) -> Meta {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

struct Csv {
    out: BufWriter<File>,
}

impl Csv {
    fn create(path: &Path, meta: &Meta, header: &[String]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        for (k, v) in meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    fn row(&mut self, cells: impl IntoIterator<Item = String>) -> Result<()> {
        let line: Vec<String> = cells.into_iter().collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `n,survival` with the measurement time of each step.
pub fn write_staircase(path: &Path, meta: &Meta, times: &[f64], staircase: &[f64]) -> Result<()> {
    let mut csv = Csv::create(path, meta, &strings(&["n", "tau", "survival"]))?;
    for (i, (t, p)) in times.iter().zip(staircase).enumerate() {
        csv.row([(i + 1).to_string(), fmt_f64(*t), fmt_f64(*p)])?;
    }
    csv.finish()
}

/// `N,P_s,P_ns`; engines that were not run leave an empty cell.
pub fn write_sweep(path: &Path, meta: &Meta, rows: &[SweepRow]) -> Result<()> {
    let mut csv = Csv::create(path, meta, &strings(&["N", "P_s", "P_ns"]))?;
    let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        csv.row([r.n.to_string(), cell(r.p_s), cell(r.p_ns)])?;
    }
    csv.finish()
}

/// One `ξ` column followed by one density column per label.
pub fn write_density(path: &Path, meta: &Meta, xi: &[f64], columns: &[(String, Vec<f64>)]) -> Result<()> {
    let mut header = vec!["xi".to_string()];
    header.extend(columns.iter().map(|(l, _)| l.clone()));
    let mut csv = Csv::create(path, meta, &header)?;
    for (j, x) in xi.iter().enumerate() {
        csv.row(std::iter::once(fmt_f64(*x)).chain(columns.iter().map(|(_, c)| fmt_f64(c[j]))))?;
    }
    csv.finish()
}

/// `τ` rows by `ξ` columns.
pub fn write_spacetime(path: &Path, meta: &Meta, st: &SpacetimeDensity) -> Result<()> {
    let mut header = vec!["tau".to_string()];
    header.extend(st.xi.iter().map(|x| fmt_f64(*x)));
    let mut csv = Csv::create(path, meta, &header)?;
    for (tau, row) in st.taus.iter().zip(&st.rows) {
        csv.row(std::iter::once(fmt_f64(*tau)).chain(row.iter().map(|d| fmt_f64(*d))))?;
    }
    csv.finish()
}

/// `ξ` rows by `κ` columns; the header row holds the `κ` lattice.
pub fn write_wigner(path: &Path, meta: &Meta, map: &WignerMap) -> Result<()> {
    let mut m = meta.clone();
    m.extend(self::meta(&[
        ("rows", map.rows().to_string()),
        ("cols", map.cols().to_string()),
        ("dxi", fmt_f64(map.dxi)),
        ("dkappa", fmt_f64(map.dkappa)),
        ("kappa_min", fmt_f64(map.kappa.first().copied().unwrap_or(f64::NAN))),
        ("kappa_max", fmt_f64(map.kappa.last().copied().unwrap_or(f64::NAN))),
        ("lattice", "grid xi rows x grid kappa columns, kappa ascending".to_string()),
    ]));
    let mut header = vec!["xi\\kappa".to_string()];
    header.extend(map.kappa.iter().map(|k| fmt_f64(*k)));
    let mut csv = Csv::create(path, &m, &header)?;
    for (i, x) in map.xi.iter().enumerate() {
        csv.row(std::iter::once(fmt_f64(*x)).chain(map.row(i).iter().map(|w| fmt_f64(*w))))?;
    }
    csv.finish()
}

/// `history,norm_sq,transmitted`, one line per leaf.
pub fn write_branches(path: &Path, meta: &Meta, branches: &[BranchSummary]) -> Result<()> {
    let mut csv = Csv::create(path, meta, &strings(&["history", "norm_sq", "transmitted"]))?;
    for b in branches {
        csv.row([b.history.clone(), fmt_f64(b.norm_sq), fmt_f64(b.transmitted)])?;
    }
    csv.finish()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.67, 6.02e-23, f64::MAX, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn sweep_leaves_missing_cells_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let rows = [SweepRow {
            n: 4,
            p_s: Some(0.25),
            p_ns: None,
        }];
        write_sweep(&path, &meta(&[("preset", "fig1".into())]), &rows).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "# preset=fig1\nN,P_s,P_ns\n4,2.5000000000000000e-1,\n");
    }
}
