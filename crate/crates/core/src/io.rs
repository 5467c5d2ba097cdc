//! CSV and JSON file formats.

use std::fs::File;
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intent::{GloveSample, GloveTrace, IntentRecord};
use crate::plant::TrajectoryRow;

pub const INTENT_HEADER: [&str; 7] = ["t_s", "dthx_rad", "dthy_rad", "dthz_rad", "dx_m", "dy_m", "dz_m"];

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i:02}"))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn parse_row(record: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("line {line}: '{f}' is not a number")))
        })
        .collect()
}

/// Writes a CSV with the given header and numeric rows.
pub fn write_table(path: impl AsRef<Path>, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV, returning the header and rows.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = parse_row(&rec?, i + 2)?;
        if row.len() != header.len() {
            return Err(Error::Invalid(format!(
                "line {}: expected {} fields, found {}",
                i + 2,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// `t_s,jm01,...,jmNN`, angles in degrees.
pub fn write_glove_csv(path: impl AsRef<Path>, trace: &GloveTrace) -> Result<()> {
    let header: Vec<String> = std::iter::once("t_s".to_string())
        .chain(numbered("jm", trace.channels()))
        .collect();
    write_table(
        path,
        &header,
        trace
            .samples
            .iter()
            .map(|s| std::iter::once(s.t).chain(s.values.iter().copied()).collect()),
    )
}

pub fn read_glove_csv(path: impl AsRef<Path>) -> Result<GloveTrace> {
    let (header, rows) = read_table(path)?;
    let expected: Vec<String> = std::iter::once("t_s".to_string())
        .chain(numbered("jm", header.len().saturating_sub(1)))
        .collect();
    if header.len() < 2 || header != expected {
        return Err(Error::Invalid(format!("glove trace header must be t_s,jm01,...; got {}", header.join(","))));
    }
    let trace = GloveTrace {
        samples: rows
            .into_iter()
            .map(|r| GloveSample {
                t: r[0],
                values: DVector::from_column_slice(&r[1..]),
            })
            .collect(),
    };
    trace.validate()?;
    Ok(trace)
}

pub fn write_intent_csv(path: impl AsRef<Path>, records: &[IntentRecord]) -> Result<()> {
    let header: Vec<String> = INTENT_HEADER.iter().map(|s| s.to_string()).collect();
    write_table(
        path,
        &header,
        records.iter().map(|r| {
            vec![r.t, r.dtheta.x, r.dtheta.y, r.dtheta.z, r.d.x, r.d.y, r.d.z]
        }),
    )
}

pub fn read_intent_csv(path: impl AsRef<Path>) -> Result<Vec<IntentRecord>> {
    let (header, rows) = read_table(path)?;
    if header != INTENT_HEADER {
        return Err(Error::Invalid(format!("intent header must be {}", INTENT_HEADER.join(","))));
    }
    Ok(rows
        .into_iter()
        .map(|r| IntentRecord {
            t: r[0],
            dtheta: Vector3::new(r[1], r[2], r[3]),
            d: Vector3::new(r[4], r[5], r[6]),
        })
        .collect())
}

pub fn trajectory_header(joints: usize) -> Vec<String> {
    std::iter::once("t_s".to_string())
        .chain(numbered("q", joints))
        .chain(numbered("tau", joints))
        .chain(["qw", "qx", "qy", "qz", "px", "py", "pz"].iter().map(|s| s.to_string()))
        .collect()
}

/// `t_s,q01..,tau01..,qw,qx,qy,qz,px,py,pz`.
pub fn write_trajectory_csv(path: impl AsRef<Path>, rows: &[TrajectoryRow]) -> Result<()> {
    let joints = rows.first().map_or(0, |r| r.q.len());
    write_table(
        path,
        &trajectory_header(joints),
        rows.iter().map(|r| {
            let mut v = Vec::with_capacity(1 + 2 * joints + 7);
            v.push(r.t);
            v.extend(r.q.iter());
            v.extend(r.tau.iter());
            v.extend(r.pose.quaternion_wxyz());
            v.extend(r.pose.origin.iter());
            v
        }),
    )
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Pose;

    #[test]
    fn glove_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let trace = GloveTrace {
            samples: (0..5)
                .map(|n| GloveSample {
                    t: n as f64 * 0.005,
                    values: DVector::from_fn(11, |j, _| 10.0 + j as f64 * 0.08 + n as f64),
                })
                .collect(),
        };
        write_glove_csv(&path, &trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_s,jm01,jm02,jm03,jm04,jm05,jm06,jm07,jm08,jm09,jm10,jm11\n"));
        assert_eq!(read_glove_csv(&path).unwrap(), trace);
    }

    #[test]
    fn bad_glove_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t_s,jm01\n0,1\n0,2\n").unwrap();
        assert!(read_glove_csv(&path).is_err());
        std::fs::write(&path, "time,a\n0,1\n").unwrap();
        assert!(read_glove_csv(&path).is_err());
        std::fs::write(&path, "t_s,jm01\n0,abc\n").unwrap();
        assert!(read_glove_csv(&path).is_err());
    }

    #[test]
    fn intent_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.csv");
        let recs = vec![IntentRecord {
            t: 0.06,
            dtheta: Vector3::new(0.1, -0.2, 0.3),
            d: Vector3::new(0.0, 0.001, 0.0),
        }];
        write_intent_csv(&path, &recs).unwrap();
        assert!(std::fs::read_to_string(&path)
            .unwrap()
            .starts_with("t_s,dthx_rad,dthy_rad,dthz_rad,dx_m,dy_m,dz_m\n"));
        assert_eq!(read_intent_csv(&path).unwrap(), recs);
    }

    #[test]
    fn trajectory_header_layout() {
        let h = trajectory_header(16);
        assert_eq!(h.len(), 1 + 32 + 7);
        assert_eq!(h[1], "q01");
        assert_eq!(h[16], "q16");
        assert_eq!(h[17], "tau01");
        assert_eq!(&h[33..], &["qw", "qx", "qy", "qz", "px", "py", "pz"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let row = TrajectoryRow {
            t: 0.0,
            q: DVector::zeros(16),
            tau: DVector::zeros(16),
            pose: Pose::identity(),
        };
        write_trajectory_csv(&path, &[row]).unwrap();
        let (header, rows) = read_table(&path).unwrap();
        assert_eq!(header, h);
        assert_eq!(rows[0][33], 1.0);
    }
}
