//! Batch calibration against Master ground truth.
//!
//! Stage I jointly fits the scale-misalignment correction `C`, the mounting
//! rotation `R_{M←I}` and the per-sample orientation and bias states of every
//! IMU. Stage II keeps `C` and `R_{M←I}` fixed and refits only the states.
//! Both minimize, per IMU,
//!
//! ```text
//! Σₖ ‖Ln(R_gtᵀ(k)·R(k))‖² / σθ²  +  Σₖ ‖b(k+1) − b(k) + γ·b(k)‖² / σnb²
//! ```
//!
//! with Adam steps in tangent coordinates. The per-IMU costs are independent,
//! so IMUs are optimized separately and merged in IMU order.

mod adam;
mod file;
mod gradcheck;
mod problem;

pub use adam::{cosine_lr, Adam};
pub use file::{
    parse_calibration, write_calibration, CalibratedImu, Calibration, CALIBRATION_FORMAT_VERSION,
};
pub use gradcheck::{gradient_check, CalibrationProblem, TangentProblem, FD_STEP};
pub use problem::{
    imu_cost, reconstruct_chain, CostWeights, ImuGradient, ImuProblem, ImuVariables,
};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::OrientationTrajectory;
use crate::gyro_model::{GyroTrack, ImuExtrinsics, ImuIntrinsics, ImuParams};
use crate::so3::{interpolate_trajectory, log_map, Mat3, Rotation, So3Error, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("optimization diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("insufficient rotational excitation: {swept_deg:.2}° swept, need {required_deg:.2}°")]
    Degenerate { swept_deg: f64, required_deg: f64 },
    #[error("invalid calibration config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    So3(#[from] So3Error),
    #[error("calibration file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Relative step sizes per parameter group, multiplied into the learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepScales {
    /// Initial orientation and mounting rotations (rad).
    pub rotation: f64,
    /// Per-sample orientation states in free mode (rad).
    pub free_orientation: f64,
    /// Entries of `C` (dimensionless).
    pub scale_misalignment: f64,
    /// Common offset of all bias states (rad/s).
    pub bias: f64,
    /// Sample-to-sample bias increments (rad/s).
    pub bias_increment: f64,
}

impl Default for StepScales {
    fn default() -> Self {
        StepScales {
            rotation: 0.1,
            free_orientation: 1e-4,
            scale_misalignment: 0.1,
            bias: 0.01,
            bias_increment: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    /// Orientation residual standard deviation (rad).
    pub sigma_theta: f64,
    /// Bias-walk residual standard deviation (rad/s per sample).
    pub sigma_nb: f64,
    pub gamma: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub max_epochs: usize,
    /// Stop when the best cost improves by less than this fraction over
    /// `convergence_window` epochs. Zero disables early stopping.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Consecutive cost increases tolerated before reporting divergence.
    pub divergence_patience: usize,
    /// Minimum principal rotation swept by the ground truth (rad).
    pub min_excitation: f64,
    pub step_scales: StepScales,
    /// Treat every orientation as a free variable with a kinematic residual
    /// instead of rebuilding orientations from the measurements.
    pub free_orientation_states: bool,
    /// Kinematic residual standard deviation in free mode (rad per step).
    pub sigma_kinematic: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            sigma_theta: 1e-2,
            sigma_nb: 1e-5,
            gamma: 1e-4,
            lr_initial: 0.1,
            lr_final: 0.001,
            max_epochs: 1400,
            convergence_tol: 0.0,
            convergence_window: 100,
            divergence_patience: 50,
            min_excitation: 30f64.to_radians(),
            step_scales: StepScales::default(),
            free_orientation_states: false,
            sigma_kinematic: 1e-5,
        }
    }
}

impl CalibrationConfig {
    pub fn weights(&self) -> CostWeights {
        CostWeights {
            sigma_theta: self.sigma_theta,
            sigma_nb: self.sigma_nb,
            gamma: self.gamma,
            free_orientation_states: self.free_orientation_states,
            sigma_kinematic: self.sigma_kinematic,
        }
    }

    pub fn validate(&self) -> Result<(), CalibError> {
        if !(self.sigma_theta > 0.0 && self.sigma_nb > 0.0 && self.sigma_kinematic > 0.0) {
            return Err(CalibError::InvalidConfig("weights must be positive"));
        }
        if self.max_epochs < 1 {
            return Err(CalibError::InvalidConfig("max_epochs must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CalibError::InvalidConfig("gamma must lie in [0, 1)"));
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0) {
            return Err(CalibError::InvalidConfig("learning rates must be positive"));
        }
        Ok(())
    }
}

/// Per-sample states of one IMU: Master orientation `R^i_{W←M}(t_k)` and bias `b^i(t_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuStateEstimate {
    pub timestamps: Vec<f64>,
    pub orientations: Vec<Rotation>,
    pub biases: Vec<Vec3>,
}

impl ImuStateEstimate {
    /// `Ln(R(t_k))` per sample.
    pub fn orientation_tangents(&self) -> Vec<Vec3> {
        self.orientations.iter().map(log_map).collect()
    }

    pub fn final_bias(&self) -> Vec3 {
        self.biases.last().copied().unwrap_or_else(Vec3::zeros)
    }

    pub fn trajectory(&self) -> OrientationTrajectory {
        OrientationTrajectory::new_unchecked(self.timestamps.clone(), self.orientations.clone())
    }

    /// Ground-truth start with a constant bias.
    pub fn constant_bias(timestamps: &[f64], r0: Rotation, bias: Vec3) -> Self {
        ImuStateEstimate {
            timestamps: timestamps.to_vec(),
            orientations: vec![r0; timestamps.len()],
            biases: vec![bias; timestamps.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImuCalibration {
    pub imu_id: usize,
    pub params: ImuParams,
    pub states: ImuStateEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub imus: Vec<ImuCalibration>,
    pub cost: f64,
    pub initial_cost: f64,
    pub epochs: usize,
}

impl CalibrationResult {
    /// The persisted subset: parameters and final bias of every IMU.
    pub fn summary(&self) -> Calibration {
        Calibration {
            imus: self
                .imus
                .iter()
                .map(|imu| CalibratedImu {
                    imu_id: imu.imu_id,
                    c: imu.params.intrinsics.c,
                    extrinsic: imu.params.extrinsics.r_master_imu,
                    bias: imu.states.final_bias(),
                })
                .collect(),
            cost: self.cost,
            epochs: self.epochs,
        }
    }
}

/// `Ln(R_gtᵀ·R_est)`.
pub fn orientation_residual(r_gt: &Rotation, r_est: &Rotation) -> Vec3 {
    log_map(&(r_gt.transpose() * *r_est))
}

/// `(b(k+1) − b(k)) + γ·b(k)`.
pub fn bias_residual(b_k: &Vec3, b_k1: &Vec3, gamma: f64) -> Vec3 {
    (b_k1 - b_k) + b_k * gamma
}

/// Ground truth at the track's timestamps, interpolating when they differ.
pub fn align_ground_truth(
    track: &GyroTrack,
    gt: &OrientationTrajectory,
) -> Result<Vec<Rotation>, CalibError> {
    if gt.timestamps() == track.timestamps() {
        return Ok(gt.rotations().to_vec());
    }
    Ok(interpolate_trajectory(gt, track.timestamps())?
        .rotations()
        .to_vec())
}

/// Range swept along the dominant principal direction of `Ln(R₀ᵀ·R(k))` (rad).
pub fn rotational_excitation(gt: &[Rotation]) -> f64 {
    let Some(first) = gt.first() else {
        return 0.0;
    };
    let r0t = first.transpose();
    let coords: Vec<Vec3> = gt.iter().map(|r| log_map(&(r0t * *r))).collect();
    let mean = coords.iter().sum::<Vec3>() / coords.len() as f64;
    let scatter = coords.iter().fold(Mat3::zeros(), |acc, c| {
        acc + (c - mean) * (c - mean).transpose()
    });
    let eig = SymmetricEigen::new(scatter);
    let i = eig.eigenvalues.imax();
    let dir: Vec3 = eig.eigenvectors.column(i).into();
    let (lo, hi) = coords
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            let p = c.dot(&dir);
            (lo.min(p), hi.max(p))
        });
    hi - lo
}

fn check_excitation(gt: &[Rotation], cfg: &CalibrationConfig) -> Result<(), CalibError> {
    if cfg.min_excitation <= 0.0 {
        return Ok(());
    }
    let swept = rotational_excitation(gt);
    if swept < cfg.min_excitation {
        return Err(CalibError::Degenerate {
            swept_deg: swept.to_degrees(),
            required_deg: cfg.min_excitation.to_degrees(),
        });
    }
    Ok(())
}

fn check_states(
    track: &GyroTrack,
    states: &ImuStateEstimate,
    free: bool,
) -> Result<(), CalibError> {
    if states.biases.len() != track.len() {
        return Err(CalibError::LengthMismatch {
            what: "bias states",
            expected: track.len(),
            got: states.biases.len(),
        });
    }
    let need = if free { track.len() } else { 1 };
    if states.orientations.len() < need {
        return Err(CalibError::LengthMismatch {
            what: "orientation states",
            expected: need,
            got: states.orientations.len(),
        });
    }
    Ok(())
}

fn variables(params: &ImuParams, states: &ImuStateEstimate) -> ImuVariables {
    ImuVariables {
        c: params.intrinsics.c,
        extrinsic: params.extrinsics.r_master_imu,
        orientations: states.orientations.clone(),
        biases: states.biases.clone(),
    }
}

/// Total cost summed over IMUs. `gt` must already be sampled at the track timestamps.
pub fn total_cost(
    tracks: &[GyroTrack],
    gt: &OrientationTrajectory,
    params: &[ImuParams],
    states: &[ImuStateEstimate],
    cfg: &CalibrationConfig,
) -> Result<f64, CalibError> {
    if params.len() != tracks.len() || states.len() != tracks.len() {
        return Err(CalibError::LengthMismatch {
            what: "per-IMU inputs",
            expected: tracks.len(),
            got: params.len().min(states.len()),
        });
    }
    let weights = cfg.weights();
    let mut total = 0.0;
    for ((track, p), s) in tracks.iter().zip(params).zip(states) {
        if gt.len() != track.len() {
            return Err(CalibError::LengthMismatch {
                what: "ground truth",
                expected: track.len(),
                got: gt.len(),
            });
        }
        check_states(track, s, cfg.free_orientation_states)?;
        let problem = ImuProblem::new(track.timestamps(), track.samples(), gt.rotations());
        total += imu_cost(&problem, &variables(p, s), &weights, false).0;
    }
    Ok(total)
}

struct Outcome {
    vars: ImuVariables,
    cost: f64,
    initial_cost: f64,
    epochs: usize,
}

fn step_scales(vars: &ImuVariables, cfg: &CalibrationConfig, fit_params: bool) -> Vec<f64> {
    let s = cfg.step_scales;
    let mut out = Vec::with_capacity(vars.dim());
    let (c, r) = if fit_params {
        (s.scale_misalignment, s.rotation)
    } else {
        (0.0, 0.0)
    };
    out.extend([c; 6]);
    out.extend([r; 3]);
    let orient = if vars.orientations.len() > 1 {
        s.free_orientation
    } else {
        s.rotation
    };
    out.extend(std::iter::repeat_n(orient, 3 * vars.orientations.len()));
    if !vars.biases.is_empty() {
        out.extend([s.bias; 3]);
        out.extend(std::iter::repeat_n(
            s.bias_increment,
            3 * (vars.biases.len() - 1),
        ));
    }
    out
}

/// Maps the bias block of a flat gradient to coordinates `a` with
/// `b(k) = Σ_{j≤k} a(j)`: the gradient of `a(j)` is the suffix sum from `j`.
fn bias_gradient_to_increments(flat: &mut [f64], offset: usize) {
    let block = &mut flat[offset..];
    for j in (0..block.len() / 3).rev().skip(1) {
        for i in 0..3 {
            block[3 * j + i] += block[3 * (j + 1) + i];
        }
    }
}

/// Maps an increment-coordinate step back to per-sample bias steps by prefix sums.
fn bias_step_from_increments(flat: &mut [f64], offset: usize) {
    let block = &mut flat[offset..];
    for j in 1..block.len() / 3 {
        for i in 0..3 {
            block[3 * j + i] += block[3 * (j - 1) + i];
        }
    }
}

fn run_adam(
    problem: &ImuProblem<'_>,
    mut vars: ImuVariables,
    cfg: &CalibrationConfig,
    fit_params: bool,
) -> Result<Outcome, CalibError> {
    let weights = cfg.weights();
    let scales = step_scales(&vars, cfg, fit_params);
    let mut adam = Adam::new(vars.dim());
    let mut best = vars.clone();
    let mut best_cost = f64::INFINITY;
    let mut initial_cost = f64::NAN;
    let mut best_history: Vec<f64> = Vec::with_capacity(cfg.max_epochs);
    let mut prev = f64::INFINITY;
    let mut rising = 0;
    let mut epochs = 0;

    for epoch in 0..cfg.max_epochs {
        let (cost, grad) = imu_cost(problem, &vars, &weights, true);
        if !cost.is_finite() {
            return Err(CalibError::Diverged { epoch });
        }
        if epoch == 0 {
            initial_cost = cost;
        }
        if cost < best_cost {
            best_cost = cost;
            best.clone_from(&vars);
        }
        rising = if cost > prev { rising + 1 } else { 0 };
        if rising >= cfg.divergence_patience {
            return Err(CalibError::Diverged { epoch });
        }
        prev = cost;
        best_history.push(best_cost);
        epochs = epoch + 1;
        if best_cost == 0.0 {
            break;
        }
        if cfg.convergence_tol > 0.0 && epoch >= cfg.convergence_window {
            let past = best_history[epoch - cfg.convergence_window];
            if past - best_cost <= cfg.convergence_tol * best_cost {
                break;
            }
        }
        let mut grad = grad.expect("gradient requested").to_flat();
        let bias_offset = 9 + 3 * vars.orientations.len();
        bias_gradient_to_increments(&mut grad, bias_offset);
        let lr = cosine_lr(cfg.lr_initial, cfg.lr_final, epoch, cfg.max_epochs);
        let mut step = adam.step(&grad, &scales, lr);
        bias_step_from_increments(&mut step, bias_offset);
        vars.retract_in_place(&step);
    }
    if epochs == cfg.max_epochs {
        let (cost, _) = imu_cost(problem, &vars, &weights, false);
        if cost < best_cost {
            best_cost = cost;
            best = vars;
        }
    }
    Ok(Outcome {
        vars: best,
        cost: best_cost,
        initial_cost,
        epochs,
    })
}

/// Bias guess from the first 0.5 s when the ground truth shows the platform at rest.
fn static_bias(track: &GyroTrack, gt: &[Rotation]) -> Vec3 {
    let ts = track.timestamps();
    let Some(&t0) = ts.first() else {
        return Vec3::zeros();
    };
    let n = ts.iter().take_while(|t| **t - t0 <= 0.5).count();
    if n < 10 {
        return Vec3::zeros();
    }
    let still = gt[..n]
        .iter()
        .all(|r| gt[0].angle_to(r) < 0.25f64.to_radians());
    if !still {
        return Vec3::zeros();
    }
    track.samples()[..n].iter().sum::<Vec3>() / n as f64
}

fn states_from(
    track: &GyroTrack,
    problem: &ImuProblem<'_>,
    vars: &ImuVariables,
    free: bool,
) -> ImuStateEstimate {
    let orientations = if free {
        vars.orientations.clone()
    } else {
        reconstruct_chain(problem, vars)
    };
    ImuStateEstimate {
        timestamps: track.timestamps().to_vec(),
        orientations,
        biases: vars.biases.clone(),
    }
}

/// Stage I with identity nominal mounting for every IMU.
pub fn optimize_stage1(
    tracks: &[GyroTrack],
    gt: &OrientationTrajectory,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult, CalibError> {
    let nominal = vec![Rotation::identity(); tracks.len()];
    optimize_stage1_from(tracks, gt, cfg, &nominal)
}

/// Stage I: fits `C`, `R_{M←I}` and all states of every IMU.
///
/// `C` starts at identity, the mounting at `nominal_extrinsics`, orientations at
/// the ground truth and biases at a static-start estimate (else zero).
pub fn optimize_stage1_from(
    tracks: &[GyroTrack],
    gt: &OrientationTrajectory,
    cfg: &CalibrationConfig,
    nominal_extrinsics: &[Rotation],
) -> Result<CalibrationResult, CalibError> {
    cfg.validate()?;
    if nominal_extrinsics.len() != tracks.len() {
        return Err(CalibError::LengthMismatch {
            what: "nominal extrinsics",
            expected: tracks.len(),
            got: nominal_extrinsics.len(),
        });
    }
    let aligned: Vec<Vec<Rotation>> = tracks
        .iter()
        .map(|t| align_ground_truth(t, gt))
        .collect::<Result<_, _>>()?;
    for g in &aligned {
        check_excitation(g, cfg)?;
    }
    let outcomes: Vec<(ImuCalibration, Outcome)> = tracks
        .par_iter()
        .zip(aligned.par_iter())
        .zip(nominal_extrinsics.par_iter())
        .map(|((track, g), ext)| {
            let problem = ImuProblem::new(track.timestamps(), track.samples(), g);
            let n_orient = if cfg.free_orientation_states {
                g.len()
            } else {
                1
            };
            let init = ImuVariables {
                c: Mat3::identity(),
                extrinsic: *ext,
                orientations: g[..n_orient].to_vec(),
                biases: vec![static_bias(track, g); g.len()],
            };
            let out = run_adam(&problem, init, cfg, true)?;
            let states = states_from(track, &problem, &out.vars, cfg.free_orientation_states);
            let imu = ImuCalibration {
                imu_id: track.imu_id(),
                params: ImuParams {
                    intrinsics: ImuIntrinsics {
                        c: lower_triangular(&out.vars.c),
                        gamma: cfg.gamma,
                        ..Default::default()
                    },
                    extrinsics: ImuExtrinsics {
                        r_master_imu: out.vars.extrinsic,
                    },
                },
                states,
            };
            Ok((imu, out))
        })
        .collect::<Result<_, CalibError>>()?;
    Ok(CalibrationResult {
        cost: outcomes.iter().map(|(_, o)| o.cost).sum(),
        initial_cost: outcomes.iter().map(|(_, o)| o.initial_cost).sum(),
        epochs: outcomes.iter().map(|(_, o)| o.epochs).max().unwrap_or(0),
        imus: outcomes.into_iter().map(|(imu, _)| imu).collect(),
    })
}

fn lower_triangular(c: &Mat3) -> Mat3 {
    let mut out = *c;
    out[(0, 1)] = 0.0;
    out[(0, 2)] = 0.0;
    out[(1, 2)] = 0.0;
    out
}

/// Stage II: refits orientation and bias states with `C` and `R_{M←I}` frozen.
pub fn optimize_stage2(
    tracks: &[GyroTrack],
    gt: &OrientationTrajectory,
    fixed_params: &[ImuParams],
    cfg: &CalibrationConfig,
    init_states: &[ImuStateEstimate],
) -> Result<Vec<ImuStateEstimate>, CalibError> {
    cfg.validate()?;
    if fixed_params.len() != tracks.len() || init_states.len() != tracks.len() {
        return Err(CalibError::LengthMismatch {
            what: "per-IMU inputs",
            expected: tracks.len(),
            got: fixed_params.len().min(init_states.len()),
        });
    }
    let aligned: Vec<Vec<Rotation>> = tracks
        .iter()
        .map(|t| align_ground_truth(t, gt))
        .collect::<Result<_, _>>()?;
    for g in &aligned {
        check_excitation(g, cfg)?;
    }
    tracks
        .par_iter()
        .zip(aligned.par_iter())
        .zip(fixed_params.par_iter().zip(init_states.par_iter()))
        .map(|((track, g), (params, init))| {
            check_states(track, init, cfg.free_orientation_states)?;
            let problem = ImuProblem::new(track.timestamps(), track.samples(), g);
            let mut vars = variables(params, init);
            if !cfg.free_orientation_states {
                vars.orientations.truncate(1);
            }
            let out = run_adam(&problem, vars, cfg, false)?;
            Ok(states_from(
                track,
                &problem,
                &out.vars,
                cfg.free_orientation_states,
            ))
        })
        .collect()
}
