//! Stage II refit over the aided window, axis selection at its end, and
//! open-loop propagation scored against withheld ground truth.

use rayon::prelude::*;

use super::report::{AxisUsageReport, MethodReport};
use super::{HarnessError, Track};
use crate::bac::{
    axis_errors, open_loop_estimate, open_loop_range, AxisSelection, DEFAULT_WINDOW_P,
};
use crate::calibrate::{optimize_stage2, Calibration, CalibrationConfig, ImuStateEstimate};
use crate::estimator::{ave_fuse, integrate_master, OrientationTrajectory};
use crate::gyro_model::{GyroTrack, ImuExtrinsics, ImuParams};
use crate::so3::{interpolate_trajectory, rotation_mean, Rotation, Vec3};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// One IMU by its position in the track.
    Single(usize),
    Ave,
    Bac,
    /// BAC restricted to the listed IMU positions.
    BacSubset(Vec<usize>),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Single(i) => format!("imu{i}"),
            Method::Ave => "AVE".into(),
            Method::Bac => "BAC".into(),
            Method::BacSubset(s) => format!("BAC-{}", s.len()),
        }
    }

    /// Parses `imuN`, `AVE`, `BAC` or `BAC-k` (BAC on the last `k` of `imus` IMUs).
    pub fn parse(s: &str, imus: usize) -> Option<Method> {
        let s = s.trim();
        if let Some(i) = s.strip_prefix("imu") {
            return i.parse().ok().filter(|i| *i < imus).map(Method::Single);
        }
        if let Some(k) = s.strip_prefix("BAC-") {
            let k: usize = k.parse().ok().filter(|k| (1..=imus).contains(k))?;
            return Some(Method::BacSubset((imus - k..imus).collect()));
        }
        match s {
            "AVE" => Some(Method::Ave),
            "BAC" => Some(Method::Bac),
            _ => None,
        }
    }

    /// Every single IMU, AVE, BAC and, with three or more IMUs, BAC-2.
    pub fn defaults(imus: usize) -> Vec<Method> {
        let mut out: Vec<Method> = (0..imus).map(Method::Single).collect();
        out.push(Method::Ave);
        out.push(Method::Bac);
        if imus >= 3 {
            out.push(Method::BacSubset(vec![imus - 2, imus - 1]));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub stage2: CalibrationConfig,
    pub window_p: usize,
    pub methods: Vec<Method>,
    /// Spacing of the scored horizons (s).
    pub horizon_step: f64,
    /// Further aided-window lengths at which Stage II and the selection are
    /// rerun for the axis-usage report.
    pub usage_boundaries: Vec<f64>,
}

impl PipelineConfig {
    pub fn new(imus: usize) -> Self {
        PipelineConfig {
            stage2: CalibrationConfig {
                max_epochs: 600,
                min_excitation: 0.0,
                ..Default::default()
            },
            window_p: DEFAULT_WINDOW_P,
            methods: Method::defaults(imus),
            horizon_step: 0.1,
            usage_boundaries: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackOutcome {
    pub track_id: usize,
    pub horizons: Vec<f64>,
    /// Geodesic error per method (in configuration order) and horizon.
    pub errors: Vec<Vec<f64>>,
    /// Selection at the aided/open-loop boundary.
    pub selection: AxisSelection,
    /// `(aided length, selection)` for every usage boundary.
    pub extra_selections: Vec<(f64, AxisSelection)>,
    /// Largest geodesic error among the Stage II terminal estimates.
    pub stage2_terminal_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackFailure {
    pub track_id: usize,
    pub error: HarnessError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub outcomes: Vec<TrackOutcome>,
    pub failures: Vec<TrackFailure>,
    pub reports: Vec<MethodReport>,
    pub usage: AxisUsageReport,
}

/// Keyframes at or before `t_end`.
pub fn truncate_gt(gt: &OrientationTrajectory, t_end: f64) -> OrientationTrajectory {
    let n = gt.timestamps().partition_point(|t| *t <= t_end + 1e-9);
    gt.slice(0..n)
}

fn params_for(
    track: &Track,
    calib: &Calibration,
    gamma: f64,
) -> Result<(Vec<ImuParams>, Vec<Vec3>), HarnessError> {
    track
        .gyro
        .iter()
        .map(|g| {
            calib
                .imus
                .iter()
                .find(|c| c.imu_id == g.imu_id())
                .map(|c| (c.params(gamma), c.bias))
                .ok_or_else(|| {
                    HarnessError::InvalidTrack(format!("no calibration for IMU {}", g.imu_id()))
                })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().unzip())
}

/// Stage II over the first `aided` seconds.
struct Aided {
    /// Index of the last aided sample.
    boundary: usize,
    gt: OrientationTrajectory,
    states: Vec<ImuStateEstimate>,
}

fn run_aided(
    track: &Track,
    params: &[ImuParams],
    init_bias: &[Vec3],
    aided: f64,
    cfg: &PipelineConfig,
) -> Result<Aided, HarnessError> {
    let ts = track.gyro[0].timestamps();
    let gt_aided = truncate_gt(&track.gt, ts[0] + aided);
    let Some((t_last, _)) = gt_aided.last() else {
        return Err(HarnessError::InvalidTrack(
            "no ground truth in the aided window".into(),
        ));
    };
    let end = ts.partition_point(|t| *t <= t_last.min(ts[0] + aided) + 1e-9);
    if end < 2 {
        return Err(HarnessError::InvalidTrack(
            "aided window holds fewer than two samples".into(),
        ));
    }
    let gyro: Vec<GyroTrack> = track.gyro.iter().map(|g| g.truncated(end)).collect();
    let gt = interpolate_trajectory(&gt_aided, &ts[..end])?;
    let init: Vec<ImuStateEstimate> = init_bias
        .iter()
        .map(|b| ImuStateEstimate::constant_bias(&ts[..end], gt.rotations()[0], *b))
        .collect();
    let states = optimize_stage2(&gyro, &gt, params, &cfg.stage2, &init)?;
    Ok(Aided {
        boundary: end - 1,
        gt,
        states,
    })
}

fn select(
    aided: &Aided,
    subset: &[usize],
    extrinsics: &[ImuExtrinsics],
    ids: &[usize],
    window_p: usize,
) -> Result<AxisSelection, HarnessError> {
    let errors = subset
        .iter()
        .map(|&i| {
            axis_errors(
                ids[i],
                &aided.gt,
                &aided.states[i].trajectory(),
                &extrinsics[i],
                window_p,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let exts: Vec<ImuExtrinsics> = subset.iter().map(|&i| extrinsics[i]).collect();
    Ok(AxisSelection::from_errors(&errors, &exts)?)
}

fn terminal(aided: &Aided, i: usize) -> Rotation {
    *aided.states[i]
        .orientations
        .last()
        .expect("non-empty states")
}

fn fused_start(aided: &Aided, subset: &[usize]) -> Result<Rotation, HarnessError> {
    let rs: Vec<Rotation> = subset.iter().map(|&i| terminal(aided, i)).collect();
    Ok(rotation_mean(&rs)?)
}

/// Open-loop AVE over the IMUs in `subset`.
fn ave_open_loop(
    track: &Track,
    subset: &[usize],
    params: &[ImuParams],
    biases: &[Vec3],
    r0: &Rotation,
    start: usize,
) -> Result<OrientationTrajectory, HarnessError> {
    let ts = track.gyro[0].timestamps();
    let range = open_loop_range(ts, start, track.open_loop_duration)?;
    let ps: Vec<ImuParams> = subset.iter().map(|&i| params[i].clone()).collect();
    let bs: Vec<Vec3> = subset.iter().map(|&i| biases[i]).collect();
    let rates = range
        .map(|k| {
            let samples: Vec<Vec3> = subset.iter().map(|&i| track.gyro[i].samples()[k]).collect();
            Ok((ts[k], ave_fuse(&samples, &ps, &bs)?))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(integrate_master(r0, &rates)?)
}

fn bac_open_loop(
    track: &Track,
    subset: &[usize],
    selection: &AxisSelection,
    params: &[ImuParams],
    biases: &[Vec3],
    r0: &Rotation,
    start: usize,
) -> Result<OrientationTrajectory, HarnessError> {
    let tracks: Vec<GyroTrack> = subset.iter().map(|&i| track.gyro[i].clone()).collect();
    let ps: Vec<ImuParams> = subset.iter().map(|&i| params[i].clone()).collect();
    let bs: Vec<Vec3> = subset.iter().map(|&i| biases[i]).collect();
    Ok(open_loop_estimate(
        r0,
        &tracks,
        start,
        selection,
        &ps,
        &bs,
        track.open_loop_duration,
    )?)
}

/// Horizons `0, step, 2·step, …` up to `duration`.
fn horizon_grid(step: f64, duration: f64) -> Vec<f64> {
    let n = (duration / step + 1e-9).floor() as usize;
    (0..=n).map(|j| j as f64 * step).collect()
}

/// Sample indices into an open-loop estimate nearest to each horizon.
fn horizon_indices(est_ts: &[f64], horizons: &[f64]) -> Vec<usize> {
    let t0 = est_ts[0];
    horizons
        .iter()
        .map(|h| {
            let target = t0 + h;
            let j = est_ts.partition_point(|t| *t < target);
            if j == 0 {
                0
            } else if j >= est_ts.len() {
                est_ts.len() - 1
            } else if (est_ts[j] - target).abs() < (target - est_ts[j - 1]).abs() {
                j
            } else {
                j - 1
            }
        })
        .collect()
}

fn run_track(
    track: &Track,
    calib: &Calibration,
    cfg: &PipelineConfig,
) -> Result<TrackOutcome, HarnessError> {
    track.validate()?;
    let n = track.imu_count();
    for m in &cfg.methods {
        let bad = match m {
            Method::Single(i) => *i >= n,
            Method::BacSubset(s) => s.is_empty() || s.iter().any(|i| *i >= n),
            _ => false,
        };
        if bad {
            return Err(HarnessError::InvalidTrack(format!(
                "method {} needs more IMUs than the {n} present",
                m.name()
            )));
        }
    }
    let (params, init_bias) = params_for(track, calib, cfg.stage2.gamma)?;
    let extrinsics: Vec<ImuExtrinsics> = params.iter().map(|p| p.extrinsics).collect();
    let ids: Vec<usize> = track.gyro.iter().map(GyroTrack::imu_id).collect();
    let all: Vec<usize> = (0..n).collect();

    let aided = run_aided(track, &params, &init_bias, track.aided_duration, cfg)?;
    let start = aided.boundary;
    let biases: Vec<Vec3> = aided
        .states
        .iter()
        .map(ImuStateEstimate::final_bias)
        .collect();
    let selection = select(&aided, &all, &extrinsics, &ids, cfg.window_p)?;

    let ts = track.gyro[0].timestamps();
    let range = open_loop_range(ts, start, track.open_loop_duration)?;
    let horizons = horizon_grid(cfg.horizon_step, track.open_loop_duration);
    let open_ts = &ts[range];
    let idx = horizon_indices(open_ts, &horizons);
    let query: Vec<f64> = idx.iter().map(|&j| open_ts[j]).collect();
    let gt_eval = interpolate_trajectory(&track.gt, &query)?;
    let score = |est: &OrientationTrajectory| -> Vec<f64> {
        idx.iter()
            .zip(gt_eval.rotations())
            .map(|(&j, g)| g.angle_to(&est.rotations()[j]))
            .collect()
    };

    let mut errors = Vec::with_capacity(cfg.methods.len());
    for m in &cfg.methods {
        let est = match m {
            Method::Single(i) => {
                ave_open_loop(track, &[*i], &params, &biases, &terminal(&aided, *i), start)?
            }
            Method::Ave => ave_open_loop(
                track,
                &all,
                &params,
                &biases,
                &fused_start(&aided, &all)?,
                start,
            )?,
            Method::Bac => bac_open_loop(
                track,
                &all,
                &selection,
                &params,
                &biases,
                &fused_start(&aided, &all)?,
                start,
            )?,
            Method::BacSubset(subset) => {
                let sel = select(&aided, subset, &extrinsics, &ids, cfg.window_p)?;
                bac_open_loop(
                    track,
                    subset,
                    &sel,
                    &params,
                    &biases,
                    &fused_start(&aided, subset)?,
                    start,
                )?
            }
        };
        errors.push(score(&est));
    }

    let stage2_terminal_error = (0..n)
        .map(|i| gt_eval.rotations()[0].angle_to(&terminal(&aided, i)))
        .fold(0.0, f64::max);

    let mut extra_selections = Vec::with_capacity(cfg.usage_boundaries.len());
    for &b in &cfg.usage_boundaries {
        let aided = run_aided(track, &params, &init_bias, b, cfg)?;
        extra_selections.push((b, select(&aided, &all, &extrinsics, &ids, cfg.window_p)?));
    }

    Ok(TrackOutcome {
        track_id: track.track_id,
        horizons,
        errors,
        selection,
        extra_selections,
        stage2_terminal_error,
    })
}

/// Runs every track independently; failed tracks are recorded and skipped.
pub fn run_pipeline(
    tracks: &[Track],
    calib: &Calibration,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, HarnessError> {
    if cfg.methods.is_empty() {
        return Err(HarnessError::InvalidTrack("no methods requested".into()));
    }
    let mut results: Vec<(usize, Result<TrackOutcome, HarnessError>)> = tracks
        .par_iter()
        .map(|t| (t.track_id, run_track(t, calib, cfg)))
        .collect();
    results.sort_by_key(|(id, _)| *id);
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (track_id, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(error) => failures.push(TrackFailure { track_id, error }),
        }
    }
    let imus = tracks.iter().map(Track::imu_count).max().unwrap_or(0);
    let reports = MethodReport::from_outcomes(&cfg.methods, &outcomes);
    let selections: Vec<(usize, f64, AxisSelection)> = outcomes
        .iter()
        .flat_map(|o| {
            let main = tracks
                .iter()
                .find(|t| t.track_id == o.track_id)
                .map_or(0.0, |t| t.aided_duration);
            std::iter::once((o.track_id, main, o.selection.clone())).chain(
                o.extra_selections
                    .iter()
                    .map(|(b, s)| (o.track_id, *b, s.clone())),
            )
        })
        .collect();
    let usage = AxisUsageReport::from_selections(imus, selections);
    Ok(PipelineOutput {
        outcomes,
        failures,
        reports,
        usage,
    })
}
