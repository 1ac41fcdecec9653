//! Versioned key-value calibration file.
//!
//! ```text
//! format bac-calibration
//! version 1
//! imus 2
//! imu.0.id 0
//! imu.0.c 1 0 0 0 1 0 0 0 1
//! imu.0.extrinsic 0 0 0
//! imu.0.bias 0 0 0
//! ...
//! cost 0.5
//! epochs 1400
//! ```
//!
//! `c` is row-major, `extrinsic` is `Ln(R_{M←I})`. Floats use shortest
//! round-trip formatting.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::CalibError;
use crate::gyro_model::{ImuExtrinsics, ImuIntrinsics, ImuParams};
use crate::so3::{exp_map, log_map, Mat3, Rotation, Vec3};

pub const CALIBRATION_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "bac-calibration";

#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedImu {
    pub imu_id: usize,
    pub c: Mat3,
    pub extrinsic: Rotation,
    pub bias: Vec3,
}

impl CalibratedImu {
    /// Model parameters with the given bias decay; noise levels are left at zero.
    pub fn params(&self, gamma: f64) -> ImuParams {
        ImuParams {
            intrinsics: ImuIntrinsics {
                c: self.c,
                gamma,
                bias0: self.bias,
                ..Default::default()
            },
            extrinsics: ImuExtrinsics {
                r_master_imu: self.extrinsic,
            },
        }
    }
}

/// Persisted outcome of Stage I.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub imus: Vec<CalibratedImu>,
    pub cost: f64,
    pub epochs: usize,
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_calibration(cal: &Calibration) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format {FORMAT_TAG}");
    let _ = writeln!(out, "version {CALIBRATION_FORMAT_VERSION}");
    let _ = writeln!(out, "imus {}", cal.imus.len());
    for (i, imu) in cal.imus.iter().enumerate() {
        let c = &imu.c;
        let _ = writeln!(out, "imu.{i}.id {}", imu.imu_id);
        let _ = writeln!(out, "imu.{i}.c {}", join((0..9).map(|j| c[(j / 3, j % 3)])));
        let _ = writeln!(
            out,
            "imu.{i}.extrinsic {}",
            join(log_map(&imu.extrinsic).iter().copied())
        );
        let _ = writeln!(out, "imu.{i}.bias {}", join(imu.bias.iter().copied()));
    }
    let _ = writeln!(out, "cost {:?}", cal.cost);
    let _ = writeln!(out, "epochs {}", cal.epochs);
    out
}

struct Entries<'a> {
    map: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn get(&self, key: &str) -> Result<(usize, &'a str), CalibError> {
        self.map.get(key).copied().ok_or_else(|| CalibError::Parse {
            line: 0,
            message: format!("missing key `{key}`"),
        })
    }

    fn reals<const N: usize>(&self, key: &str) -> Result<[f64; N], CalibError> {
        let (line, value) = self.get(key)?;
        let parsed: Vec<f64> = value
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CalibError::Parse {
                line,
                message: format!("`{key}`: {e}"),
            })?;
        if parsed.iter().any(|v| !v.is_finite()) {
            return Err(CalibError::Parse {
                line,
                message: format!("`{key}`: non-finite value"),
            });
        }
        parsed.try_into().map_err(|v: Vec<f64>| CalibError::Parse {
            line,
            message: format!("`{key}`: expected {N} values, found {}", v.len()),
        })
    }

    fn int(&self, key: &str) -> Result<usize, CalibError> {
        let (line, value) = self.get(key)?;
        value.trim().parse().map_err(|e| CalibError::Parse {
            line,
            message: format!("`{key}`: {e}"),
        })
    }
}

pub fn parse_calibration(text: &str) -> Result<Calibration, CalibError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        if map.insert(key, (i + 1, value)).is_some() {
            return Err(CalibError::Parse {
                line: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    let entries = Entries { map };
    let (line, tag) = entries.get("format")?;
    if tag.trim() != FORMAT_TAG {
        return Err(CalibError::Parse {
            line,
            message: format!("unknown format `{}`", tag.trim()),
        });
    }
    let (line, _) = entries.get("version")?;
    let version = entries.int("version")?;
    if version != CALIBRATION_FORMAT_VERSION as usize {
        return Err(CalibError::Parse {
            line,
            message: format!("unsupported version {version}"),
        });
    }
    let count = entries.int("imus")?;
    let imus = (0..count)
        .map(|i| {
            let c = entries.reals::<9>(&format!("imu.{i}.c"))?;
            Ok(CalibratedImu {
                imu_id: entries.int(&format!("imu.{i}.id"))?,
                c: Mat3::from_row_slice(&c),
                extrinsic: exp_map(&Vec3::from(
                    entries.reals::<3>(&format!("imu.{i}.extrinsic"))?,
                )),
                bias: Vec3::from(entries.reals::<3>(&format!("imu.{i}.bias"))?),
            })
        })
        .collect::<Result<_, CalibError>>()?;
    Ok(Calibration {
        imus,
        cost: entries.reals::<1>("cost")?[0],
        epochs: entries.int("epochs")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Calibration {
        Calibration {
            imus: vec![
                CalibratedImu {
                    imu_id: 0,
                    c: Mat3::new(1.01, 0.0, 0.0, 0.003, 0.98, 0.0, -0.01, 0.02, 1.0),
                    extrinsic: exp_map(&Vec3::new(0.01, -0.02, 0.03)),
                    bias: Vec3::new(1e-3, -2e-3, 0.1 + 0.2),
                },
                CalibratedImu {
                    imu_id: 3,
                    c: Mat3::identity(),
                    extrinsic: Rotation::identity(),
                    bias: Vec3::zeros(),
                },
            ],
            cost: 12.5,
            epochs: 1400,
        }
    }

    #[test]
    fn written_file_parses_back() {
        let cal = sample();
        let back = parse_calibration(&write_calibration(&cal)).unwrap();
        assert_eq!(back.imus.len(), 2);
        assert_eq!(back.cost, cal.cost);
        assert_eq!(back.epochs, cal.epochs);
        for (a, b) in cal.imus.iter().zip(&back.imus) {
            assert_eq!(a.imu_id, b.imu_id);
            assert_eq!(a.c, b.c);
            assert_eq!(a.bias, b.bias);
            assert!(a.extrinsic.angle_to(&b.extrinsic) < 1e-14);
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let text = write_calibration(&sample());
        let bad_version = text.replace("version 1", "version 2");
        assert!(matches!(
            parse_calibration(&bad_version),
            Err(CalibError::Parse { line: 2, .. })
        ));
        let short = text.replace("imu.1.bias 0.0 0.0 0.0", "imu.1.bias 0.0 0.0");
        assert!(matches!(
            parse_calibration(&short),
            Err(CalibError::Parse { .. })
        ));
        let missing: String = text
            .lines()
            .filter(|l| !l.starts_with("cost"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(parse_calibration(&missing).is_err());
        assert!(parse_calibration("format other\nversion 1\n").is_err());
    }
}
