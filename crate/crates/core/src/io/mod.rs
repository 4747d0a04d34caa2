//! Configuration files, CSV tables and legacy VTK output.

mod config;
mod vtk;

pub use config::{parse_variant_list, Mode, ProblemKind, ReferenceSpec, RunConfig};
pub use vtk::{write_fields, write_mesh, PointField};

use std::path::Path;

use crate::adapt::{LoopRecord, StudyRow};
use crate::error::{Error, Result};

/// Nine significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Io(std::io::Error::other(format!("{k:?}"))),
    }
}

/// Columns of the study table. The variant column is written when rows of
/// more than one variant are present.
pub const STUDY_COLUMNS: [&str; 9] = [
    "M",
    "N",
    "J_error_vs_ref",
    "eta_k",
    "eta_h",
    "eta_total",
    "eta_adj_total",
    "eta_full",
    "I_eff",
];

pub fn write_study_csv(path: &Path, rows: &[StudyRow]) -> Result<()> {
    let several = rows.iter().any(|r| r.variant != rows[0].variant);
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header: Vec<&str> = Vec::new();
    if several {
        header.push("variant");
    }
    header.extend(STUDY_COLUMNS);
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = Vec::new();
        if several {
            rec.push(r.variant.to_string());
        }
        rec.push(r.m.to_string());
        rec.push(r.n.to_string());
        for v in [
            r.j_error_vs_ref,
            r.eta_k,
            r.eta_h,
            r.eta_total,
            r.eta_adj_total,
            r.eta_full,
            r.i_eff,
        ] {
            rec.push(fmt_float(v));
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One point of an error-vs-DoF curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// `adaptive` or `global`
    pub kind: &'static str,
    pub step: usize,
    pub m: usize,
    pub n: f64,
    pub dofs: usize,
    pub j: f64,
    pub eta: Option<f64>,
    pub error: Option<f64>,
}

impl CurvePoint {
    pub fn adaptive(r: &LoopRecord) -> CurvePoint {
        CurvePoint {
            kind: "adaptive",
            step: r.iteration,
            m: r.m,
            n: r.mean_cells,
            dofs: r.dofs,
            j: r.j,
            eta: Some(r.eta),
            error: r.error,
        }
    }
}

pub fn write_adapt_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["kind", "step", "M", "N", "dofs", "J", "eta", "error"])
        .map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    for p in points {
        w.write_record([
            p.kind.to_string(),
            p.step.to_string(),
            p.m.to_string(),
            fmt_float(p.n),
            p.dofs.to_string(),
            fmt_float(p.j),
            opt(p.eta),
            opt(p.error),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `header` and `rows` of already formatted values.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EstimatorVariant;

    fn row(variant: EstimatorVariant) -> StudyRow {
        StudyRow {
            variant,
            level: 1,
            m: 256,
            n: 896,
            j: 1.0,
            j_ref: 1.5,
            j_error_vs_ref: 0.5,
            eta_k: 1.0 / 3.0,
            eta_h: -2e-5,
            eta_total: 0.1,
            eta_global: 0.1,
            eta_adj_total: 0.2,
            eta_adj_global: 0.2,
            eta_full: 0.15,
            i_eff: 0.2,
        }
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_float(-1.07197741e-2), "-1.07197741e-2");
    }

    #[test]
    fn study_table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("table.csv");
        write_study_csv(&p, &[row(EstimatorVariant::Cg1Cg1)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "M,N,J_error_vs_ref,eta_k,eta_h,eta_total,eta_adj_total,eta_full,I_eff");
        assert_eq!(
            lines.next().unwrap(),
            "256,896,5.00000000e-1,3.33333333e-1,-2.00000000e-5,1.00000000e-1,2.00000000e-1,1.50000000e-1,2.00000000e-1"
        );
        write_study_csv(&p, &[row(EstimatorVariant::Cg1Cg1), row(EstimatorVariant::Cg2Cg2)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("variant,M,N"));
        assert!(text.lines().nth(2).unwrap().starts_with("cg2cg2,256,896"));
    }
}
