use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{hex, ScenarioConfig};
use super::scenario::ScenarioOutput;
use super::sweep::SweepResult;
use crate::detection::RocPoint;
use crate::error::{Error, Result};
use crate::record::format_time;

pub const TRAJECTORY_COLUMNS: [&str; 13] = [
    "t", "x_R", "p_R", "x_F", "p_F", "x_B", "p_B", "x_S", "p_S", "V11", "V22", "U11", "U22",
];

/// Everything a CLI invocation may write.
#[derive(Debug, Default, Clone, Copy)]
pub struct Results<'a> {
    pub config: Option<&'a ScenarioConfig>,
    pub scenario: Option<&'a ScenarioOutput>,
    pub sweep: Option<&'a SweepResult>,
    pub roc: Option<&'a [RocPoint]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub config_hash: Option<String>,
    pub versions: Vec<(String, String)>,
    pub files: Vec<FileEntry>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<FileEntry>) -> Result<()> {
    let path: PathBuf = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.push(FileEntry {
        name: name.to_string(),
        bytes: bytes.len(),
        sha256: hex(&Sha256::digest(bytes)),
    });
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Csv {
        path: "<memory>".into(),
        source: e,
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| Error::validation(format!("csv buffer: {e}")))
}

/// Effect covariance for output: the tracked `U` when present, otherwise the
/// ν-regularised inverse of `P`.
fn effect_cov(info: &DMatrix<f64>, tracked: Option<&DMatrix<f64>>, nu: f64) -> DMatrix<f64> {
    if let Some(u) = tracked {
        return u.clone();
    }
    let dim = info.nrows();
    (info + DMatrix::identity(dim, dim) / nu)
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(dim, dim, f64::NAN))
}

pub fn trajectories_csv(out: &ScenarioOutput) -> Result<Vec<u8>> {
    let b = &out.bundle;
    let header: Vec<String> = TRAJECTORY_COLUMNS.iter().map(|s| s.to_string()).collect();
    let num = |v: f64| format!("{v:e}");
    let pair = |m: &DVector<f64>| [num(m[0]), num(m[1])];
    let rows = (0..b.len()).map(|i| {
        let e = &b.backward[i];
        let u = effect_cov(&e.info, e.cov_approx.as_ref(), out.config.nu);
        let v = &b.forward[i].cov;
        let mut row = vec![format_time(b.times[i])];
        row.extend(pair(&b.reference[i].mean));
        row.extend(pair(&b.forward[i].mean));
        row.extend(pair(&e.mean));
        row.extend(pair(&out.smoothed[i].mean));
        row.extend([
            num(v[(0, 0)]),
            num(v[(1, 1)]),
            num(u[(0, 0)]),
            num(u[(1, 1)]),
        ]);
        row
    });
    csv_bytes(&header, rows)
}

pub fn sweep_csv(sweep: &SweepResult) -> Result<Vec<u8>> {
    let mut header: Vec<String> = sweep.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(["metric", "value", "N", "failure"].map(String::from));
    let rows = sweep.cells.iter().flat_map(|cell| {
        sweep
            .cell_values(cell)
            .into_iter()
            .map(move |(metric, value)| {
                let mut row: Vec<String> = cell.coords.iter().map(|c| format!("{c}")).collect();
                row.push(metric.to_string());
                row.push(value.map(|v| format!("{v:e}")).unwrap_or_default());
                row.push(cell.runs.to_string());
                row.push(cell.failure.clone().unwrap_or_default());
                row
            })
    });
    csv_bytes(&header, rows)
}

pub fn roc_csv(points: &[RocPoint]) -> Result<Vec<u8>> {
    let header = ["alpha", "fpr", "tpr"].map(String::from);
    let rows = points.iter().map(|p| {
        vec![
            format!("{}", p.alpha),
            format!("{:e}", p.fpr),
            format!("{:e}", p.tpr),
        ]
    });
    csv_bytes(&header, rows)
}

/// Writes the artifacts present in `results` plus `manifest.json`.
///
/// Output depends only on the inputs: no timestamps or host data, and files
/// are listed in a fixed order.
pub fn emit_artifacts(results: &Results, out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    if let Some(s) = results.scenario {
        write_file(
            out_dir,
            "trajectories.csv",
            &trajectories_csv(s)?,
            &mut files,
        )?;
        let mut record = Vec::new();
        s.record.write_csv(&mut record)?;
        write_file(out_dir, "record.csv", &record, &mut files)?;
        if let Some(report) = &s.report {
            let json = serde_json::to_vec_pretty(report)?;
            write_file(out_dir, "detections.json", &json, &mut files)?;
        }
    }
    if let Some(sweep) = results.sweep {
        write_file(out_dir, "sweep.csv", &sweep_csv(sweep)?, &mut files)?;
    }
    if let Some(points) = results.roc {
        write_file(out_dir, "roc.csv", &roc_csv(points)?, &mut files)?;
    }
    let config = results.config.or(results.scenario.map(|s| &s.config));
    let manifest = Manifest {
        config_hash: config.map(ScenarioConfig::hash),
        versions: vec![
            ("qsmooth".into(), env!("CARGO_PKG_VERSION").into()),
            ("format".into(), "1".into()),
        ],
        files,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
