//! Track ingestion, time alignment, synthetic suites, the three-stage
//! experiment pipeline and report generation.

mod align;
mod io;
mod pipeline;
mod report;
mod suite;

pub use align::{time_align, MIN_MOTION_STD, MIN_OVERLAP};
pub use io::{
    load_track, parse_gt_csv, parse_gyro_csv, save_track, write_gt_csv, write_gyro_csv, GT_FILE,
    GYRO_FILE,
};
pub use pipeline::{
    run_pipeline, truncate_gt, Method, PipelineConfig, PipelineOutput, TrackFailure, TrackOutcome,
};
pub use report::{
    emit_reports, load_reports, per_track_table, AxisUsageReport, MethodReport, ReportPaths,
    ERRORS_FILE, PER_TRACK_FILE, SELECTIONS_FILE, SUMMARY_FILE, USAGE_FILE,
};
pub use suite::{
    generate_synthetic_suite, regular_timestamps, smooth_trajectory, BandLimitedMotion,
    SuiteConfig, SyntheticSuite, TrackTruth,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::bac::BacError;
use crate::calibrate::CalibError;
use crate::estimator::{EstimatorError, OrientationTrajectory};
use crate::gyro_model::{GyroTrack, ModelError};
use crate::so3::So3Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}:{line}: timestamps not strictly increasing")]
    Monotonicity { path: PathBuf, line: usize },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("insufficient motion: |ω| standard deviation {std:.4} rad/s")]
    InsufficientMotion { std: f64 },
    #[error("overlap of {seconds:.3} s is too short")]
    NoOverlap { seconds: f64 },
    #[error("nothing to report")]
    NothingToReport,
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Bac(#[from] BacError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    So3(#[from] So3Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// True for optimizer divergence and singular axis compositions.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HarnessError::Calib(CalibError::Diverged { .. })
                | HarnessError::Bac(BacError::CoplanarAxes { .. })
        )
    }
}

/// One experiment unit: synchronized gyro streams and Master ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub track_id: usize,
    /// One stream per IMU, all on the same timestamps.
    pub gyro: Vec<GyroTrack>,
    pub gt: OrientationTrajectory,
    pub aided_duration: f64,
    pub open_loop_duration: f64,
}

impl Track {
    pub fn new(
        track_id: usize,
        gyro: Vec<GyroTrack>,
        gt: OrientationTrajectory,
        aided_duration: f64,
        open_loop_duration: f64,
    ) -> Result<Self, HarnessError> {
        let track = Track {
            track_id,
            gyro,
            gt,
            aided_duration,
            open_loop_duration,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| {
            Err(HarnessError::InvalidTrack(format!(
                "track {}: {m}",
                self.track_id
            )))
        };
        if !(self.aided_duration > 0.0 && self.open_loop_duration >= 0.0) {
            return bad("durations must be positive".into());
        }
        let Some(first) = self.gyro.first() else {
            return bad("no gyro streams".into());
        };
        if first.len() < 2 {
            return bad("gyro streams need at least two samples".into());
        }
        if self
            .gyro
            .iter()
            .any(|g| g.timestamps() != first.timestamps())
        {
            return bad("gyro streams do not share timestamps".into());
        }
        let (Some(&g0), Some(&g1)) = (self.gt.timestamps().first(), self.gt.timestamps().last())
        else {
            return bad("empty ground truth".into());
        };
        let ts = first.timestamps();
        let t0 = ts[0];
        let half = 0.5 * (ts[1] - ts[0]);
        if g0 > t0 + 1e-9 || g1 < t0 + self.aided_duration - 1e-9 {
            return bad(format!(
                "ground truth [{g0}, {g1}] does not cover the aided window"
            ));
        }
        let end = ts[ts.len() - 1];
        if end < t0 + self.aided_duration + self.open_loop_duration - half {
            return bad(format!(
                "gyro data ends at {end}, before the open-loop window does"
            ));
        }
        Ok(())
    }

    pub fn imu_count(&self) -> usize {
        self.gyro.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_are_classified() {
        assert!(HarnessError::Calib(CalibError::Diverged { epoch: 3 }).is_numerical());
        assert!(HarnessError::Bac(BacError::CoplanarAxes { det: 0.0 }).is_numerical());
        assert!(!HarnessError::NothingToReport.is_numerical());
        assert!(!HarnessError::Calib(CalibError::InvalidConfig("x")).is_numerical());
    }
}
