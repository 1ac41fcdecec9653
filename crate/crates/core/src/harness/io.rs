//! Plain-text track files.
//!
//! A track directory holds `gyro.csv` (`t,imu,wx,wy,wz`, one row per IMU
//! sample) and `gt.csv` (`t,r00,…,r22`, row-major `R_{W←M}`). Timestamps are
//! written with 9 decimals, other reals in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{HarnessError, Track};
use crate::estimator::OrientationTrajectory;
use crate::gyro_model::GyroTrack;
use crate::so3::{orthonormality_deviation, Mat3, Rotation, Vec3, MATRIX_TOL};

pub const GYRO_FILE: &str = "gyro.csv";
pub const GT_FILE: &str = "gt.csv";

const GYRO_COLUMNS: [&str; 5] = ["t", "imu", "wx", "wy", "wz"];
const GT_COLUMNS: [&str; 10] = [
    "t", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22",
];

/// Rotation rows drifting more than this are rejected.
const MAX_DRIFT: f64 = 1e-6;

pub fn write_gyro_csv(streams: &[GyroTrack]) -> String {
    let mut out = GYRO_COLUMNS.join(",");
    out.push('\n');
    let Some(first) = streams.first() else {
        return out;
    };
    for k in 0..first.len() {
        for s in streams {
            let (t, w) = (s.timestamps()[k], s.samples()[k]);
            let _ = writeln!(out, "{t:.9},{},{:?},{:?},{:?}", s.imu_id(), w.x, w.y, w.z);
        }
    }
    out
}

pub fn write_gt_csv(gt: &OrientationTrajectory) -> String {
    let mut out = GT_COLUMNS.join(",");
    out.push('\n');
    for (t, r) in gt.timestamps().iter().zip(gt.rotations()) {
        let _ = write!(out, "{t:.9}");
        for v in r.to_row_major() {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Column positions of `required` in the header line.
fn header_columns<const N: usize>(
    path: &Path,
    header: Option<&str>,
    required: [&str; N],
) -> Result<([usize; N], usize), HarnessError> {
    let Some(header) = header else {
        return Err(HarnessError::Schema {
            path: path.into(),
            message: "empty file".into(),
        });
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut idx = [0; N];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| HarnessError::Schema {
                path: path.into(),
                message: format!("missing column `{name}`"),
            })?;
    }
    Ok((idx, names.len()))
}

/// Data rows as `(line number, fields)`, checking the field count.
fn rows<'a>(
    path: &'a Path,
    text: &'a str,
    width: usize,
) -> impl Iterator<Item = Result<(usize, Vec<&'a str>), HarnessError>> + 'a {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != width {
                return Err(HarnessError::Parse {
                    path: path.into(),
                    line: i + 1,
                    column: fields.len().min(width) + 1,
                    message: format!("expected {width} fields, found {}", fields.len()),
                });
            }
            Ok((i + 1, fields))
        })
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    fields: &[&str],
    col: usize,
) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    fields[col].parse::<T>().map_err(|e| HarnessError::Parse {
        path: path.into(),
        line,
        column: col + 1,
        message: format!("`{}`: {e}", fields[col]),
    })
}

fn real(path: &Path, line: usize, fields: &[&str], col: usize) -> Result<f64, HarnessError> {
    let v: f64 = field(path, line, fields, col)?;
    if !v.is_finite() {
        return Err(HarnessError::Parse {
            path: path.into(),
            line,
            column: col + 1,
            message: "non-finite value".into(),
        });
    }
    Ok(v)
}

/// Streams sorted by IMU id.
pub fn parse_gyro_csv(path: &Path, text: &str) -> Result<Vec<GyroTrack>, HarnessError> {
    let (cols, width) = header_columns(path, text.lines().next(), GYRO_COLUMNS)?;
    let mut streams: BTreeMap<usize, (Vec<f64>, Vec<Vec3>)> = BTreeMap::new();
    for row in rows(path, text, width) {
        let (line, f) = row?;
        let t = real(path, line, &f, cols[0])?;
        let imu: usize = field(path, line, &f, cols[1])?;
        let w = Vec3::new(
            real(path, line, &f, cols[2])?,
            real(path, line, &f, cols[3])?,
            real(path, line, &f, cols[4])?,
        );
        let (ts, ws) = streams.entry(imu).or_default();
        if ts.last().is_some_and(|last| t <= *last) {
            return Err(HarnessError::Monotonicity {
                path: path.into(),
                line,
            });
        }
        ts.push(t);
        ws.push(w);
    }
    if streams.is_empty() {
        return Err(HarnessError::Schema {
            path: path.into(),
            message: "no samples".into(),
        });
    }
    streams
        .into_iter()
        .map(|(id, (ts, ws))| Ok(GyroTrack::new(id, ts, ws)?))
        .collect()
}

pub fn parse_gt_csv(path: &Path, text: &str) -> Result<OrientationTrajectory, HarnessError> {
    let (cols, width) = header_columns(path, text.lines().next(), GT_COLUMNS)?;
    let mut ts = Vec::new();
    let mut rs = Vec::new();
    for row in rows(path, text, width) {
        let (line, f) = row?;
        let t = real(path, line, &f, cols[0])?;
        if ts.last().is_some_and(|last| t <= *last) {
            return Err(HarnessError::Monotonicity {
                path: path.into(),
                line,
            });
        }
        let mut entries = [0.0; 9];
        for (j, e) in entries.iter_mut().enumerate() {
            *e = real(path, line, &f, cols[j + 1])?;
        }
        let m = Mat3::from_row_slice(&entries);
        let drift = orthonormality_deviation(&m);
        let r = if drift <= MATRIX_TOL {
            Rotation::from_matrix_unchecked(m)
        } else if drift < MAX_DRIFT {
            Rotation::project(&m)?
        } else {
            return Err(HarnessError::Parse {
                path: path.into(),
                line,
                column: cols[1] + 1,
                message: format!("rotation drifts {drift:.3e} from orthonormality"),
            });
        };
        ts.push(t);
        rs.push(r);
    }
    if ts.is_empty() {
        return Err(HarnessError::Schema {
            path: path.into(),
            message: "no samples".into(),
        });
    }
    Ok(OrientationTrajectory::new(ts, rs)?)
}

/// Track id from trailing digits of the directory name, else 0.
fn track_id_from(dir: &Path) -> usize {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let digits: String = name
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().unwrap_or(0)
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// Loads `gyro.csv` and `gt.csv` from `dir`, shifting all timestamps so the
/// earliest one is zero.
pub fn load_track(
    dir: &Path,
    aided_duration: f64,
    open_loop_duration: f64,
) -> Result<Track, HarnessError> {
    let gyro_path = dir.join(GYRO_FILE);
    let gt_path = dir.join(GT_FILE);
    let gyro = parse_gyro_csv(&gyro_path, &read(&gyro_path)?)?;
    let gt = parse_gt_csv(&gt_path, &read(&gt_path)?)?;
    let t0 = gyro
        .iter()
        .map(|g| g.timestamps()[0])
        .fold(gt.timestamps()[0], f64::min);
    let (gyro, gt) = if t0 == 0.0 {
        (gyro, gt)
    } else {
        (
            gyro.iter().map(|g| g.shifted(-t0)).collect(),
            gt.shifted(-t0),
        )
    };
    Track::new(
        track_id_from(dir),
        gyro,
        gt,
        aided_duration,
        open_loop_duration,
    )
}

pub fn save_track(track: &Track, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let gyro_path = dir.join(GYRO_FILE);
    std::fs::write(&gyro_path, write_gyro_csv(&track.gyro))
        .map_err(|e| HarnessError::io(&gyro_path, e))?;
    let gt_path = dir.join(GT_FILE);
    std::fs::write(&gt_path, write_gt_csv(&track.gt)).map_err(|e| HarnessError::io(&gt_path, e))
}
