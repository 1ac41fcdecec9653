//! Open-loop orientation integration and the averaged virtual estimator (AVE).
//!
//! Angular velocities are taken as constant over each sampling interval, so a
//! single step `R(k+1) = R(k)·Exp(ω·Δt)` is exact under that assumption. The
//! virtual IMU frame of the AVE baseline coincides with the Master frame.

use thiserror::Error;

use crate::gyro_model::{correct_measurement, ImuParams};
use crate::so3::{exp_map, Rotation, Vec3};

/// Steps between polar re-projections of the running rotation.
pub const REORTHONORMALIZE_EVERY: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("timestamps not strictly increasing at index {index}")]
    NonMonotonicTime { index: usize },
    #[error("length mismatch: {timestamps} timestamps, {rotations} rotations")]
    LengthMismatch { timestamps: usize, rotations: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("expected {expected} entries, got {got}")]
    CountMismatch { expected: usize, got: usize },
}

/// Timestamped Master orientations `R_{W←M}(t_k)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OrientationTrajectory {
    timestamps: Vec<f64>,
    rotations: Vec<Rotation>,
}

impl OrientationTrajectory {
    pub fn new(timestamps: Vec<f64>, rotations: Vec<Rotation>) -> Result<Self, EstimatorError> {
        if timestamps.len() != rotations.len() {
            return Err(EstimatorError::LengthMismatch {
                timestamps: timestamps.len(),
                rotations: rotations.len(),
            });
        }
        if let Some(index) = first_non_increasing(&timestamps) {
            return Err(EstimatorError::NonMonotonicTime { index });
        }
        Ok(OrientationTrajectory {
            timestamps,
            rotations,
        })
    }

    pub(crate) fn new_unchecked(timestamps: Vec<f64>, rotations: Vec<Rotation>) -> Self {
        OrientationTrajectory {
            timestamps,
            rotations,
        }
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn last(&self) -> Option<(f64, Rotation)> {
        Some((*self.timestamps.last()?, *self.rotations.last()?))
    }

    /// Samples `range` as a new trajectory.
    pub fn slice(&self, range: std::ops::Range<usize>) -> OrientationTrajectory {
        OrientationTrajectory {
            timestamps: self.timestamps[range.clone()].to_vec(),
            rotations: self.rotations[range].to_vec(),
        }
    }

    /// Applies `q` on the left of every sample.
    pub fn left_multiplied(&self, q: &Rotation) -> OrientationTrajectory {
        OrientationTrajectory {
            timestamps: self.timestamps.clone(),
            rotations: self.rotations.iter().map(|r| *q * *r).collect(),
        }
    }

    /// Shifts all timestamps by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> OrientationTrajectory {
        OrientationTrajectory {
            timestamps: self.timestamps.iter().map(|t| t + offset).collect(),
            rotations: self.rotations.clone(),
        }
    }
}

pub(crate) fn first_non_increasing(ts: &[f64]) -> Option<usize> {
    ts.windows(2).position(|w| !(w[1] > w[0])).map(|i| i + 1)
}

pub fn integrate_step(r: &Rotation, omega: &Vec3, dt: f64) -> Rotation {
    *r * exp_map(&(omega * dt))
}

/// Integrates a stream of Master-frame rates starting at `r0`.
///
/// The rate at sample `k` is held over `[t_k, t_{k+1}]`; the last rate is not
/// used. The output has one rotation per input timestamp.
pub fn integrate_master(
    r0: &Rotation,
    omega_master: &[(f64, Vec3)],
) -> Result<OrientationTrajectory, EstimatorError> {
    if omega_master.is_empty() {
        return Err(EstimatorError::EmptyInput);
    }
    let timestamps: Vec<f64> = omega_master.iter().map(|(t, _)| *t).collect();
    if let Some(index) = first_non_increasing(&timestamps) {
        return Err(EstimatorError::NonMonotonicTime { index });
    }
    let mut rotations = Vec::with_capacity(omega_master.len());
    let mut r = *r0;
    rotations.push(r);
    for (k, w) in omega_master.windows(2).enumerate() {
        r = integrate_step(&r, &w[0].1, w[1].0 - w[0].0);
        if (k + 1) % REORTHONORMALIZE_EVERY == 0 {
            r = Rotation::project(r.matrix()).unwrap_or(r);
        }
        rotations.push(r);
    }
    Ok(OrientationTrajectory {
        timestamps,
        rotations,
    })
}

/// Averaged virtual estimator: `(1/N)·Σ R_{M←I_i}·(C_i·ω̃_i − b̂_i)`.
pub fn ave_fuse(
    samples: &[Vec3],
    imus: &[ImuParams],
    biases: &[Vec3],
) -> Result<Vec3, EstimatorError> {
    if samples.is_empty() {
        return Err(EstimatorError::EmptyInput);
    }
    if imus.len() != samples.len() {
        return Err(EstimatorError::CountMismatch {
            expected: samples.len(),
            got: imus.len(),
        });
    }
    if biases.len() != samples.len() {
        return Err(EstimatorError::CountMismatch {
            expected: samples.len(),
            got: biases.len(),
        });
    }
    let sum = samples
        .iter()
        .zip(imus)
        .zip(biases)
        .fold(Vec3::zeros(), |acc, ((w, imu), b)| {
            acc + imu.extrinsics.r_master_imu * correct_measurement(w, &imu.intrinsics, b)
        });
    Ok(sum / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gyro_model::{ImuExtrinsics, ImuIntrinsics};
    use crate::so3::Mat3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::from_fn(|_, _| rng.random_range(-s..s))
    }

    #[test]
    fn step_examples() {
        let r = exp_map(&Vec3::new(0.2, 0.1, -0.4));
        assert_eq!(integrate_step(&r, &Vec3::zeros(), 0.01), r);
        let out = integrate_step(&Rotation::identity(), &Vec3::new(0.0, 0.0, FRAC_PI_2), 1.0);
        let rz = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((out.matrix() - rz).amax() < 1e-15);
    }

    #[test]
    fn constant_rate_steps_compose_exactly() {
        let omega = Vec3::new(0.7, -1.1, 0.4);
        let mut r = Rotation::identity();
        for _ in 0..342 {
            r = integrate_step(&r, &omega, 1.0 / 342.0);
        }
        assert!((r.matrix() - exp_map(&omega).matrix()).amax() < 1e-12);
    }

    #[test]
    fn flow_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r = exp_map(&rand_vec(&mut rng, 2.0));
            let w = rand_vec(&mut rng, 3.0);
            let (a, b) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let two = integrate_step(&integrate_step(&r, &w, a), &w, b);
            let one = integrate_step(&r, &w, a + b);
            assert!((two.matrix() - one.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn master_integration_examples() {
        let r0 = exp_map(&Vec3::new(0.1, 0.2, 0.3));
        let single = integrate_master(&r0, &[(0.0, Vec3::new(1.0, 0.0, 0.0))]).unwrap();
        assert_eq!(single.rotations(), &[r0]);

        let n = 1000;
        let rate = PI / (n as f64 * 0.001);
        let stream: Vec<(f64, Vec3)> = (0..=n)
            .map(|k| (k as f64 * 0.001, Vec3::new(0.0, 0.0, rate)))
            .collect();
        let traj = integrate_master(&Rotation::identity(), &stream).unwrap();
        let expected = Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0));
        assert!((traj.last().unwrap().1.matrix() - expected).amax() < 1e-12);

        let bad = [(0.0, Vec3::zeros()), (0.0, Vec3::zeros())];
        assert_eq!(
            integrate_master(&r0, &bad),
            Err(EstimatorError::NonMonotonicTime { index: 1 })
        );
        assert_eq!(integrate_master(&r0, &[]), Err(EstimatorError::EmptyInput));
    }

    fn smooth_rate(t: f64) -> Vec3 {
        Vec3::new(
            0.8 * (2.0 * PI * 0.7 * t).sin(),
            0.5 * (2.0 * PI * 1.3 * t + 0.4).cos(),
            0.6 * (2.0 * PI * 0.4 * t + 1.0).sin(),
        )
    }

    #[test]
    fn discretization_error_vs_oversampled_integration() {
        let rate = 342.0;
        let n = (5.0 * rate) as usize;
        // each held sample represents its interval, so it is taken at the midpoint
        let coarse: Vec<(f64, Vec3)> = (0..=n)
            .map(|k| {
                let t = k as f64 / rate;
                (t, smooth_rate(t + 0.5 / rate))
            })
            .collect();
        let fine: Vec<(f64, Vec3)> = (0..=10 * n)
            .map(|k| {
                let t = k as f64 / (10.0 * rate);
                (t, smooth_rate(t + 0.05 / rate))
            })
            .collect();
        let a = integrate_master(&Rotation::identity(), &coarse).unwrap();
        let b = integrate_master(&Rotation::identity(), &fine).unwrap();
        for k in 0..=n {
            let gap = a.rotations()[k].angle_to(&b.rotations()[10 * k]);
            assert!(gap < 1e-4, "gap {gap} at {k}");
        }
    }

    #[test]
    fn left_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = exp_map(&rand_vec(&mut rng, 2.0));
        let r0 = exp_map(&rand_vec(&mut rng, 2.0));
        let stream: Vec<(f64, Vec3)> = (0..2500)
            .map(|k| (k as f64 / 342.0, rand_vec(&mut rng, 2.0)))
            .collect();
        let a = integrate_master(&(q * r0), &stream).unwrap();
        let b = integrate_master(&r0, &stream).unwrap().left_multiplied(&q);
        for (x, y) in a.rotations().iter().zip(b.rotations()) {
            assert!((x.matrix() - y.matrix()).amax() < 1e-12);
        }
    }

    fn random_imu(rng: &mut ChaCha8Rng) -> ImuParams {
        let mut c = Mat3::identity();
        c[(0, 0)] = rng.random_range(0.95..1.05);
        c[(1, 1)] = rng.random_range(0.95..1.05);
        c[(2, 2)] = rng.random_range(0.95..1.05);
        c[(1, 0)] = rng.random_range(-0.02..0.02);
        c[(2, 0)] = rng.random_range(-0.02..0.02);
        c[(2, 1)] = rng.random_range(-0.02..0.02);
        ImuParams {
            intrinsics: ImuIntrinsics {
                c,
                ..Default::default()
            },
            extrinsics: ImuExtrinsics {
                r_master_imu: exp_map(&rand_vec(rng, 2.0)),
            },
        }
    }

    #[test]
    fn ave_examples() {
        let w = Vec3::new(0.3, -0.2, 1.0);
        let imus = vec![ImuParams::default(); 4];
        let out = ave_fuse(&[w; 4], &imus, &[Vec3::zeros(); 4]).unwrap();
        assert!((out - w).amax() < 1e-15);

        let d = Vec3::new(0.01, -0.03, 0.02);
        let out = ave_fuse(&[w + d, w - d], &imus[..2], &[Vec3::zeros(); 2]).unwrap();
        assert!((out - w).amax() < 1e-15);
        assert_eq!(ave_fuse(&[], &[], &[]), Err(EstimatorError::EmptyInput));
    }

    #[test]
    fn ave_matches_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let imus: Vec<ImuParams> = (0..3).map(|_| random_imu(&mut rng)).collect();
            let samples: Vec<Vec3> = (0..3).map(|_| rand_vec(&mut rng, 3.0)).collect();
            let biases: Vec<Vec3> = (0..3).map(|_| rand_vec(&mut rng, 0.05)).collect();
            let got = ave_fuse(&samples, &imus, &biases).unwrap();
            let mut oracle = [0.0; 3];
            for i in 0..3 {
                let r = imus[i].extrinsics.r_master_imu.to_row_major();
                let c = &imus[i].intrinsics.c;
                let mut corrected = [0.0; 3];
                for a in 0..3 {
                    corrected[a] =
                        (0..3).map(|b| c[(a, b)] * samples[i][b]).sum::<f64>() - biases[i][a];
                }
                for a in 0..3 {
                    oracle[a] += (0..3).map(|b| r[3 * a + b] * corrected[b]).sum::<f64>() / 3.0;
                }
            }
            assert!((got - Vec3::from(oracle)).amax() < 1e-14);
        }
    }

    #[test]
    fn ave_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let imus: Vec<ImuParams> = (0..4).map(|_| random_imu(&mut rng)).collect();
        let samples: Vec<Vec3> = (0..4).map(|_| rand_vec(&mut rng, 3.0)).collect();
        let biases: Vec<Vec3> = (0..4).map(|_| rand_vec(&mut rng, 0.05)).collect();
        let a = ave_fuse(&samples, &imus, &biases).unwrap();
        let order = [2, 0, 3, 1];
        let s2: Vec<Vec3> = order.iter().map(|&i| samples[i]).collect();
        let i2: Vec<ImuParams> = order.iter().map(|&i| imus[i].clone()).collect();
        let b2: Vec<Vec3> = order.iter().map(|&i| biases[i]).collect();
        let b = ave_fuse(&s2, &i2, &b2).unwrap();
        assert!((a - b).amax() < 1e-13);
    }
}
