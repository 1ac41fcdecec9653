//! Discrete gyroscope model and synthetic multi-IMU data generation.
//!
//! The corrected rate of one gyroscope is `ω = C·ω̃ − b − n_g`, with a
//! lower-triangular scale-misalignment correction `C` and a bias that evolves
//! as `b(k+1) = b(k) − γ·b(k) + n_b`. The generator inverts this model and can
//! inject a per-axis systematic error that the model does not explain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::estimator::OrientationTrajectory;
use crate::so3::{log_map, Mat3, Rotation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid systematic error profile: {0}")]
    InvalidProfile(&'static str),
    #[error("timestamps not strictly increasing at index {index}")]
    NonMonotonicTime { index: usize },
    #[error("length mismatch: {timestamps} timestamps, {samples} samples")]
    LengthMismatch { timestamps: usize, samples: usize },
    #[error("irregular sampling at index {index}: dt = {dt}, nominal {nominal}")]
    RateMismatch { index: usize, dt: f64, nominal: f64 },
    #[error("expected {expected} entries, got {got}")]
    CountMismatch { expected: usize, got: usize },
}

/// Per-IMU intrinsic parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuIntrinsics {
    /// Lower-triangular scale-misalignment correction.
    pub c: Mat3,
    /// Dimensionless bias decay per sample, in [0, 1).
    pub gamma: f64,
    /// White-noise standard deviation per axis and sample (rad/s).
    pub sigma_g: f64,
    /// Bias random-walk standard deviation per axis and sample (rad/s).
    pub sigma_b: f64,
    /// Bias state at the first sample (rad/s). Used by the generator.
    pub bias0: Vec3,
}

impl Default for ImuIntrinsics {
    fn default() -> Self {
        ImuIntrinsics {
            c: Mat3::identity(),
            gamma: 0.0,
            sigma_g: 0.0,
            sigma_b: 0.0,
            bias0: Vec3::zeros(),
        }
    }
}

impl ImuIntrinsics {
    pub fn validate(&self) -> Result<(), ModelError> {
        let c = &self.c;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidIntrinsics("C has non-finite entries"));
        }
        if c[(0, 1)] != 0.0 || c[(0, 2)] != 0.0 || c[(1, 2)] != 0.0 {
            return Err(ModelError::InvalidIntrinsics("C must be lower-triangular"));
        }
        if (0..3).any(|i| c[(i, i)] <= 0.0) {
            return Err(ModelError::InvalidIntrinsics(
                "C must have a positive diagonal",
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ModelError::InvalidIntrinsics("gamma must lie in [0, 1)"));
        }
        if !(self.sigma_g >= 0.0 && self.sigma_b >= 0.0) {
            return Err(ModelError::InvalidIntrinsics(
                "noise scales must be non-negative",
            ));
        }
        if self.bias0.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidIntrinsics("initial bias must be finite"));
        }
        Ok(())
    }
}

/// Mounting rotation of one IMU: maps vectors in the IMU frame into the Master frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ImuExtrinsics {
    pub r_master_imu: Rotation,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ImuParams {
    pub intrinsics: ImuIntrinsics,
    pub extrinsics: ImuExtrinsics,
}

/// Timestamped raw angular-velocity stream of one IMU.
#[derive(Clone, Debug, PartialEq)]
pub struct GyroTrack {
    imu_id: usize,
    timestamps: Vec<f64>,
    omega_meas: Vec<Vec3>,
}

impl GyroTrack {
    pub fn new(
        imu_id: usize,
        timestamps: Vec<f64>,
        omega_meas: Vec<Vec3>,
    ) -> Result<Self, ModelError> {
        check_series(&timestamps, omega_meas.len())?;
        Ok(GyroTrack {
            imu_id,
            timestamps,
            omega_meas,
        })
    }

    pub fn imu_id(&self) -> usize {
        self.imu_id
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn samples(&self) -> &[Vec3] {
        &self.omega_meas
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Copy with every timestamp shifted by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> GyroTrack {
        GyroTrack {
            imu_id: self.imu_id,
            timestamps: self.timestamps.iter().map(|t| t + offset).collect(),
            omega_meas: self.omega_meas.clone(),
        }
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> GyroTrack {
        let n = n.min(self.len());
        GyroTrack {
            imu_id: self.imu_id,
            timestamps: self.timestamps[..n].to_vec(),
            omega_meas: self.omega_meas[..n].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasTrajectory {
    timestamps: Vec<f64>,
    biases: Vec<Vec3>,
}

impl BiasTrajectory {
    pub fn new(timestamps: Vec<f64>, biases: Vec<Vec3>) -> Result<Self, ModelError> {
        check_series(&timestamps, biases.len())?;
        Ok(BiasTrajectory { timestamps, biases })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn biases(&self) -> &[Vec3] {
        &self.biases
    }
}

fn check_series(timestamps: &[f64], samples: usize) -> Result<(), ModelError> {
    if timestamps.len() != samples {
        return Err(ModelError::LengthMismatch {
            timestamps: timestamps.len(),
            samples,
        });
    }
    for (i, w) in timestamps.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(ModelError::NonMonotonicTime { index: i + 1 });
        }
    }
    Ok(())
}

/// One constant stretch of additive offset on a single axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OffsetSegment {
    /// Seconds.
    pub duration: f64,
    /// rad/s.
    pub offset: f64,
}

/// Error injected on top of the gyroscope model, outside what the estimator can explain.
///
/// Each axis carries a sequence of piecewise-constant additive offsets starting
/// at the first sample of the track; the last offset holds after the sequence
/// ends. `scale` perturbs the true rate multiplicatively per axis.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SystematicErrorProfile {
    pub segments: [Vec<OffsetSegment>; 3],
    pub scale: Vec3,
}

impl SystematicErrorProfile {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for seg in self.segments.iter().flatten() {
            if !(seg.duration > 0.0) || !seg.duration.is_finite() {
                return Err(ModelError::InvalidProfile(
                    "segment durations must be positive",
                ));
            }
            if !seg.offset.is_finite() {
                return Err(ModelError::InvalidProfile("offsets must be finite"));
            }
        }
        if self.scale.iter().any(|s| !s.is_finite()) {
            return Err(ModelError::InvalidProfile(
                "scale perturbation must be finite",
            ));
        }
        Ok(())
    }

    /// Additive offset at `elapsed` seconds after the track start.
    pub fn offset_at(&self, elapsed: f64) -> Vec3 {
        let mut out = Vec3::zeros();
        for (axis, segs) in self.segments.iter().enumerate() {
            let mut start = 0.0;
            let mut value = 0.0;
            for seg in segs {
                value = seg.offset;
                start += seg.duration;
                if elapsed < start {
                    break;
                }
            }
            out[axis] = value;
        }
        out
    }
}

/// `C·ω̃ − b`: the model's estimate of the true rate in the IMU frame.
pub fn correct_measurement(omega_meas: &Vec3, intr: &ImuIntrinsics, b: &Vec3) -> Vec3 {
    intr.c * omega_meas - b
}

/// One step of the discrete bias dynamics: `b + (−γ·b + noise)`.
pub fn propagate_bias(b: &Vec3, intr: &ImuIntrinsics, noise: &Vec3) -> Vec3 {
    b + (-intr.gamma * b + noise)
}

/// Master-frame angular velocity over each sampling interval, from finite log
/// increments of the trajectory. The last sample repeats the previous interval.
pub fn master_rates(traj: &OrientationTrajectory) -> Vec<Vec3> {
    let ts = traj.timestamps();
    let rs = traj.rotations();
    let mut out: Vec<Vec3> = rs
        .windows(2)
        .zip(ts.windows(2))
        .map(|(r, t)| log_map(&(r[0].transpose() * r[1])) / (t[1] - t[0]))
        .collect();
    if let Some(last) = out.last().copied() {
        out.push(last);
    } else if !rs.is_empty() {
        out.push(Vec3::zeros());
    }
    out
}

/// Checks that sampling intervals stay within 1% of the median interval.
pub fn check_regular_rate(timestamps: &[f64]) -> Result<f64, ModelError> {
    let mut dts: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    if dts.is_empty() {
        return Ok(0.0);
    }
    let mut sorted = dts.clone();
    sorted.sort_by(f64::total_cmp);
    let nominal = sorted[sorted.len() / 2];
    for (index, dt) in dts.drain(..).enumerate() {
        if (dt - nominal).abs() > 0.01 * nominal {
            return Err(ModelError::RateMismatch {
                index: index + 1,
                dt,
                nominal,
            });
        }
    }
    Ok(nominal)
}

/// Synthesizes raw gyroscope streams for every IMU along a Master trajectory.
///
/// Per IMU the true body rate is `R_{I←M}·ω_M`, and the emitted sample is
/// `C⁻¹·((1 + s)∘ω + b + d(t) + n_g)`, so correcting with the true `C` and `b`
/// leaves exactly the injected systematic error `s∘ω + d(t)` plus white noise.
/// IMU `i` draws its noise from ChaCha stream `i` of `seed`.
pub fn simulate_mimu(
    true_traj: &OrientationTrajectory,
    imus: &[ImuParams],
    sys_err: &[SystematicErrorProfile],
    seed: u64,
) -> Result<Vec<(GyroTrack, BiasTrajectory)>, ModelError> {
    if imus.len() != sys_err.len() {
        return Err(ModelError::CountMismatch {
            expected: imus.len(),
            got: sys_err.len(),
        });
    }
    let ts = true_traj.timestamps();
    check_regular_rate(ts)?;
    let omega_master = master_rates(true_traj);
    let t0 = ts.first().copied().unwrap_or(0.0);

    imus.iter()
        .zip(sys_err)
        .enumerate()
        .map(|(i, (imu, profile))| {
            imu.intrinsics.validate()?;
            profile.validate()?;
            let intr = &imu.intrinsics;
            let imu_from_master = imu.extrinsics.r_master_imu.transpose();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let white = Normal::new(0.0, intr.sigma_g).expect("validated sigma");
            let walk = Normal::new(0.0, intr.sigma_b).expect("validated sigma");

            let mut b = intr.bias0;
            let mut meas = Vec::with_capacity(ts.len());
            let mut biases = Vec::with_capacity(ts.len());
            for (t, w_m) in ts.iter().zip(&omega_master) {
                let w = imu_from_master * *w_m;
                let noise = Vec3::from_fn(|_, _| white.sample(&mut rng));
                let perturbed =
                    w + profile.scale.component_mul(&w) + b + profile.offset_at(t - t0) + noise;
                let raw = intr
                    .c
                    .solve_lower_triangular(&perturbed)
                    .ok_or(ModelError::InvalidIntrinsics("C is singular"))?;
                meas.push(raw);
                biases.push(b);
                let step = Vec3::from_fn(|_, _| walk.sample(&mut rng));
                b = propagate_bias(&b, intr, &step);
            }
            Ok((
                GyroTrack::new(i, ts.to_vec(), meas)?,
                BiasTrajectory::new(ts.to_vec(), biases)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_map;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn constant_rate(omega: Vec3, rate: f64, n: usize) -> OrientationTrajectory {
        let ts: Vec<f64> = (0..n).map(|k| k as f64 / rate).collect();
        let rs = ts.iter().map(|t| exp_map(&(omega * *t))).collect();
        OrientationTrajectory::new(ts, rs).unwrap()
    }

    #[test]
    fn correction_examples() {
        let intr = ImuIntrinsics::default();
        let w = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(correct_measurement(&w, &intr, &Vec3::zeros()), w);
        let intr = ImuIntrinsics {
            c: Mat3::from_diagonal(&Vec3::new(1.1, 1.0, 1.0)),
            ..Default::default()
        };
        let out = correct_measurement(&Vec3::new(1.0, 0.0, 0.0), &intr, &Vec3::new(0.1, 0.0, 0.0));
        assert!((out - Vec3::new(1.0, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn correction_matches_explicit_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let mut c = Mat3::zeros();
            for i in 0..3 {
                for j in 0..=i {
                    c[(i, j)] = if i == j {
                        rng.random_range(0.9..1.1)
                    } else {
                        rng.random_range(-0.05..0.05)
                    };
                }
            }
            let w = Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let b = Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            let intr = ImuIntrinsics {
                c,
                ..Default::default()
            };
            let got = correct_measurement(&w, &intr, &b);
            for i in 0..3 {
                let mut acc = 0.0;
                for j in 0..3 {
                    acc += c[(i, j)] * w[j];
                }
                assert!((got[i] - (acc - b[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bias_propagation_examples() {
        let zero = ImuIntrinsics::default();
        let b = Vec3::new(0.3, -0.2, 0.1);
        assert_eq!(propagate_bias(&b, &zero, &Vec3::zeros()), b);
        let decay = ImuIntrinsics {
            gamma: 0.1,
            ..Default::default()
        };
        let out = propagate_bias(&Vec3::new(1.0, 0.0, 0.0), &decay, &Vec3::zeros());
        assert!((out - Vec3::new(0.9, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn random_walk_variance_grows_linearly() {
        let s = 1e-3;
        let intr = ImuIntrinsics {
            sigma_b: s,
            ..Default::default()
        };
        let steps = 100_000;
        let walks = 600;
        let normal = Normal::new(0.0, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum_sq = 0.0;
        for _ in 0..walks {
            let mut b = Vec3::zeros();
            for _ in 0..steps {
                let n = Vec3::from_fn(|_, _| normal.sample(&mut rng));
                b = propagate_bias(&b, &intr, &n);
            }
            sum_sq += b.norm_squared();
        }
        let var = sum_sq / (3 * walks) as f64;
        let expected = s * s * steps as f64;
        assert!(
            (var / expected - 1.0).abs() < 0.1,
            "ratio {}",
            var / expected
        );
    }

    #[test]
    fn intrinsics_validation() {
        let mut intr = ImuIntrinsics::default();
        assert!(intr.validate().is_ok());
        intr.c[(0, 1)] = 0.01;
        assert!(intr.validate().is_err());
        let intr = ImuIntrinsics {
            gamma: 1.0,
            ..Default::default()
        };
        assert!(intr.validate().is_err());
        let intr = ImuIntrinsics {
            c: Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0)),
            ..Default::default()
        };
        assert!(intr.validate().is_err());
    }

    #[test]
    fn offset_lookup_holds_last_segment() {
        let profile = SystematicErrorProfile {
            segments: [
                vec![
                    OffsetSegment {
                        duration: 1.0,
                        offset: 0.1,
                    },
                    OffsetSegment {
                        duration: 2.0,
                        offset: -0.2,
                    },
                ],
                vec![],
                vec![OffsetSegment {
                    duration: 0.5,
                    offset: 0.3,
                }],
            ],
            scale: Vec3::zeros(),
        };
        assert_eq!(profile.offset_at(0.0), Vec3::new(0.1, 0.0, 0.3));
        assert_eq!(profile.offset_at(1.5), Vec3::new(-0.2, 0.0, 0.3));
        assert_eq!(profile.offset_at(10.0), Vec3::new(-0.2, 0.0, 0.3));
    }

    #[test]
    fn noiseless_identity_chain() {
        let omega = Vec3::new(0.3, -0.8, 1.2);
        let traj = constant_rate(omega, 342.0, 400);
        let out = simulate_mimu(
            &traj,
            &[ImuParams::default()],
            &[SystematicErrorProfile::none()],
            1,
        )
        .unwrap();
        for w in out[0].0.samples() {
            assert!((w - omega).amax() < 1e-9);
        }
    }

    #[test]
    fn extrinsic_rotation_maps_axes() {
        let omega = Vec3::new(0.3, -0.8, 1.2);
        let traj = constant_rate(omega, 342.0, 100);
        let imu = ImuParams {
            extrinsics: ImuExtrinsics {
                r_master_imu: exp_map(&Vec3::new(0.0, 0.0, FRAC_PI_2)),
            },
            ..Default::default()
        };
        let out = simulate_mimu(&traj, &[imu], &[SystematicErrorProfile::none()], 1).unwrap();
        for w in out[0].0.samples() {
            // Rz(90°)ᵀ maps master y onto IMU x
            assert!((w.x - omega.y).abs() < 1e-9);
            assert!((w.y + omega.x).abs() < 1e-9);
        }
    }

    #[test]
    fn injected_offset_is_exact_residual() {
        let omega = Vec3::new(0.3, -0.8, 1.2);
        let traj = constant_rate(omega, 342.0, 50);
        let delta = 0.0123;
        let profile = SystematicErrorProfile {
            segments: [
                vec![],
                vec![OffsetSegment {
                    duration: 100.0,
                    offset: delta,
                }],
                vec![],
            ],
            scale: Vec3::zeros(),
        };
        let imu = ImuParams::default();
        let out = simulate_mimu(&traj, &[imu.clone()], &[profile], 3).unwrap();
        for w in out[0].0.samples() {
            let corrected = correct_measurement(w, &imu.intrinsics, &Vec3::zeros());
            let residual = corrected - omega;
            assert!((residual - Vec3::new(0.0, delta, 0.0)).amax() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let traj = constant_rate(Vec3::new(0.1, 0.2, 0.3), 342.0, 200);
        let imu = ImuParams {
            intrinsics: ImuIntrinsics {
                sigma_g: 2e-3,
                sigma_b: 1e-5,
                gamma: 1e-4,
                ..Default::default()
            },
            ..Default::default()
        };
        let imus = vec![imu.clone(), imu];
        let prof = vec![SystematicErrorProfile::none(); 2];
        let a = simulate_mimu(&traj, &imus, &prof, 99).unwrap();
        let b = simulate_mimu(&traj, &imus, &prof, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].0.samples(), a[1].0.samples());
    }

    #[test]
    fn irregular_sampling_rejected() {
        let mut ts: Vec<f64> = (0..10).map(|k| k as f64 / 342.0).collect();
        ts[5] += 0.2 / 342.0;
        let rs = vec![Rotation::identity(); 10];
        let traj = OrientationTrajectory::new(ts, rs).unwrap();
        let err = simulate_mimu(
            &traj,
            &[ImuParams::default()],
            &[SystematicErrorProfile::none()],
            0,
        );
        assert!(matches!(err, Err(ModelError::RateMismatch { .. })));
    }
}
