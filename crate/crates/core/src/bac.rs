//! Best Axes Composition.
//!
//! Each IMU's aided orientation estimate is compared with ground truth and the
//! error is expressed in that IMU's own frame, so that every physical sensing
//! axis gets its own error series. Per homonymous axis the IMU with the lowest
//! windowed squared error is chosen, and the three chosen scalar rates are
//! mapped back to a Master-frame angular velocity by inverting their stacked
//! sensing directions.

use thiserror::Error;

use crate::estimator::{integrate_master, EstimatorError, OrientationTrajectory};
use crate::gyro_model::{GyroTrack, ImuExtrinsics, ImuParams};
use crate::so3::{log_map, Mat3, Vec3};

/// Default selection window: one second of aided samples at 342 Hz.
pub const DEFAULT_WINDOW_P: usize = 342;

/// Minimum `|det|` of the stacked sensing directions.
pub const COPLANARITY_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacError {
    #[error("window of {window} samples exceeds the {available} available")]
    WindowTooLarge { window: usize, available: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("selected axes are coplanar (|det| = {det:.3e})")]
    CoplanarAxes { det: f64 },
    #[error(
        "track exhausted: open loop needs data until t = {needed:.6}, track ends at {available:.6}"
    )]
    TrackExhausted { needed: f64, available: f64 },
    #[error("inputs disagree: {0}")]
    Inconsistent(&'static str),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Orientation error of one IMU over the selection window, in that IMU's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisErrorSeries {
    pub imu_id: usize,
    pub timestamps: Vec<f64>,
    pub errors: Vec<Vec3>,
}

impl AxisErrorSeries {
    /// Σₖ e(k)² per axis.
    pub fn squared_error(&self) -> Vec3 {
        self.errors
            .iter()
            .fold(Vec3::zeros(), |acc, e| acc + e.component_mul(e))
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }
}

/// `e(k) = Ln(R_{I←M}·R_gtᵀ(k)·R_est(k)·R_{M←I})` over the last `window_p` samples.
pub fn axis_errors(
    imu_id: usize,
    gt: &OrientationTrajectory,
    est: &OrientationTrajectory,
    extr: &ImuExtrinsics,
    window_p: usize,
) -> Result<AxisErrorSeries, BacError> {
    if gt.timestamps() != est.timestamps() {
        return Err(BacError::Inconsistent(
            "ground truth and estimate timestamps differ",
        ));
    }
    let n = est.len();
    if window_p > n {
        return Err(BacError::WindowTooLarge {
            window: window_p,
            available: n,
        });
    }
    let m = extr.r_master_imu;
    let mt = m.transpose();
    let start = n - window_p;
    let errors = gt.rotations()[start..]
        .iter()
        .zip(&est.rotations()[start..])
        .map(|(g, r)| log_map(&(mt * (g.transpose() * *r) * m)))
        .collect();
    Ok(AxisErrorSeries {
        imu_id,
        timestamps: est.timestamps()[start..].to_vec(),
        errors,
    })
}

/// Per axis, the position in `errors` of the series with the least squared
/// error. Ties go to the lower `imu_id`.
pub fn select_best_axes(errors: &[AxisErrorSeries]) -> Result<[usize; 3], BacError> {
    if errors.is_empty() {
        return Err(BacError::EmptyInput);
    }
    if errors.iter().any(|e| e.len() != errors[0].len()) {
        return Err(BacError::Inconsistent("error windows differ in length"));
    }
    let sse: Vec<Vec3> = errors.iter().map(AxisErrorSeries::squared_error).collect();
    Ok([0, 1, 2].map(|axis| {
        (0..errors.len())
            .min_by(|&a, &b| {
                sse[a][axis]
                    .total_cmp(&sse[b][axis])
                    .then(errors[a].imu_id.cmp(&errors[b].imu_id))
            })
            .expect("non-empty")
    }))
}

/// Row α is row α of `R_{I←M}` of IMU `chosen[α]`: the Master-frame direction
/// of that sensing axis.
pub fn stacked_rows(chosen: &[usize; 3], extrinsics: &[ImuExtrinsics]) -> Result<Mat3, BacError> {
    if chosen.iter().any(|&i| i >= extrinsics.len()) {
        return Err(BacError::Inconsistent("selected IMU index out of range"));
    }
    let rows: [Vec3; 3] =
        [0, 1, 2].map(|a| extrinsics[chosen[a]].r_master_imu.matrix().column(a).into());
    Ok(Mat3::from_rows(&rows.map(|r| r.transpose())))
}

/// Inverse of [`stacked_rows`]; maps selected scalar rates to the Master-frame rate.
pub fn composition_matrix(
    chosen: &[usize; 3],
    extrinsics: &[ImuExtrinsics],
) -> Result<Mat3, BacError> {
    let s = stacked_rows(chosen, extrinsics)?;
    let det = s.determinant();
    if !(det.abs() >= COPLANARITY_THRESHOLD) {
        return Err(BacError::CoplanarAxes { det });
    }
    s.try_inverse().ok_or(BacError::CoplanarAxes { det })
}

pub fn compose_omega(a: &Mat3, components: &Vec3) -> Vec3 {
    a * components
}

/// Per-axis IMU choice with its composition matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisSelection {
    /// Index into the IMU list for the x, y and z axes.
    pub chosen: [usize; 3],
    pub composition: Mat3,
    /// Determinant of the stacked sensing directions.
    pub det: f64,
    pub window_p: usize,
}

impl AxisSelection {
    pub fn new(
        chosen: [usize; 3],
        extrinsics: &[ImuExtrinsics],
        window_p: usize,
    ) -> Result<Self, BacError> {
        let det = stacked_rows(&chosen, extrinsics)?.determinant();
        Ok(AxisSelection {
            chosen,
            composition: composition_matrix(&chosen, extrinsics)?,
            det,
            window_p,
        })
    }

    /// Selection from per-IMU error series; `extrinsics` is indexed like `errors`.
    pub fn from_errors(
        errors: &[AxisErrorSeries],
        extrinsics: &[ImuExtrinsics],
    ) -> Result<Self, BacError> {
        if errors.len() != extrinsics.len() {
            return Err(BacError::Inconsistent("one error series per IMU required"));
        }
        let window = errors.first().map_or(0, AxisErrorSeries::len);
        Self::new(select_best_axes(errors)?, extrinsics, window)
    }
}

/// Index range `start..end` of the open-loop samples and the check that the
/// track covers `duration` seconds after `timestamps[start]`.
pub fn open_loop_range(
    timestamps: &[f64],
    start: usize,
    duration: f64,
) -> Result<std::ops::Range<usize>, BacError> {
    if start >= timestamps.len() {
        return Err(BacError::TrackExhausted {
            needed: duration,
            available: timestamps.last().copied().unwrap_or(0.0),
        });
    }
    let t0 = timestamps[start];
    let half = if start + 1 < timestamps.len() {
        0.5 * (timestamps[start + 1] - t0)
    } else {
        0.0
    };
    let last = *timestamps.last().expect("non-empty");
    if last < t0 + duration - half {
        return Err(BacError::TrackExhausted {
            needed: t0 + duration,
            available: last,
        });
    }
    let end = start + timestamps[start..].partition_point(|t| *t <= t0 + duration + half);
    Ok(start..end)
}

/// Open-loop propagation from `r0` at sample `start` using the selected axes.
///
/// Row α of `C_i·ω̃_i − b_i` of IMU `chosen[α]` supplies the α component; the
/// biases stay frozen. All tracks must share one clock.
pub fn open_loop_estimate(
    r0: &crate::so3::Rotation,
    tracks: &[GyroTrack],
    start: usize,
    selection: &AxisSelection,
    params: &[ImuParams],
    biases: &[Vec3],
    duration: f64,
) -> Result<OrientationTrajectory, BacError> {
    let Some(first) = tracks.first() else {
        return Err(BacError::EmptyInput);
    };
    if params.len() != tracks.len() || biases.len() != tracks.len() {
        return Err(BacError::Inconsistent(
            "one parameter set and bias per track required",
        ));
    }
    if selection.chosen.iter().any(|&i| i >= tracks.len()) {
        return Err(BacError::Inconsistent("selected IMU index out of range"));
    }
    if tracks.iter().any(|t| t.timestamps() != first.timestamps()) {
        return Err(BacError::Inconsistent("tracks do not share timestamps"));
    }
    let range = open_loop_range(first.timestamps(), start, duration)?;
    let rates: Vec<(f64, Vec3)> = range
        .map(|k| {
            let components = Vec3::from_fn(|axis, _| {
                let i = selection.chosen[axis];
                let c = &params[i].intrinsics.c;
                c.row(axis).dot(&tracks[i].samples()[k].transpose()) - biases[i][axis]
            });
            (
                first.timestamps()[k],
                compose_omega(&selection.composition, &components),
            )
        })
        .collect();
    Ok(integrate_master(r0, &rates)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ave_fuse;
    use crate::gyro_model::ImuIntrinsics;
    use crate::so3::{exp_map, Rotation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::from_fn(|_, _| rng.random_range(-s..s))
    }

    fn ext(r: Rotation) -> ImuExtrinsics {
        ImuExtrinsics { r_master_imu: r }
    }

    fn traj(rs: Vec<Rotation>) -> OrientationTrajectory {
        let ts = (0..rs.len()).map(|k| k as f64 / 342.0).collect();
        OrientationTrajectory::new(ts, rs).unwrap()
    }

    fn series(imu_id: usize, errors: Vec<Vec3>) -> AxisErrorSeries {
        AxisErrorSeries {
            imu_id,
            timestamps: (0..errors.len()).map(|k| k as f64).collect(),
            errors,
        }
    }

    #[test]
    fn exact_estimates_have_no_axis_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = traj((0..50).map(|_| exp_map(&rand_vec(&mut rng, 2.0))).collect());
        let s = axis_errors(0, &gt, &gt, &ext(exp_map(&Vec3::new(0.3, 0.2, 0.1))), 20).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.timestamps, gt.timestamps()[30..]);
        assert!(s.errors.iter().all(|e| e.norm() < 1e-14));
    }

    #[test]
    fn master_frame_errors_appear_in_the_imu_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = exp_map(&rand_vec(&mut rng, 1.0));
        let delta = 1e-4;
        let gt = traj((0..10).map(|_| exp_map(&rand_vec(&mut rng, 2.0))).collect());
        // A rotation by δ about the IMU x axis, expressed in the Master frame.
        let perturb = exp_map(&(m * Vec3::new(delta, 0.0, 0.0)));
        let est = traj(gt.rotations().iter().map(|g| *g * perturb).collect());
        let s = axis_errors(0, &gt, &est, &ext(m), 10).unwrap();
        for e in &s.errors {
            assert!((e - Vec3::new(delta, 0.0, 0.0)).norm() < delta * delta);
        }
    }

    #[test]
    fn axis_errors_match_explicit_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = exp_map(&rand_vec(&mut rng, 1.0));
        let gt: Vec<Rotation> = (0..30).map(|_| exp_map(&rand_vec(&mut rng, 2.0))).collect();
        let est: Vec<Rotation> = gt
            .iter()
            .map(|g| *g * exp_map(&rand_vec(&mut rng, 0.1)))
            .collect();
        let s = axis_errors(4, &traj(gt.clone()), &traj(est.clone()), &ext(m), 30).unwrap();
        assert_eq!(s.imu_id, 4);
        for k in 0..30 {
            let prod =
                m.matrix().transpose() * gt[k].matrix().transpose() * est[k].matrix() * m.matrix();
            let oracle = log_map(&Rotation::from_matrix_unchecked(prod));
            assert!((s.errors[k] - oracle).norm() < 1e-12);
        }
    }

    #[test]
    fn axis_errors_reject_oversized_windows_and_misaligned_inputs() {
        let gt = traj(vec![Rotation::identity(); 5]);
        assert_eq!(
            axis_errors(0, &gt, &gt, &ext(Rotation::identity()), 6),
            Err(BacError::WindowTooLarge {
                window: 6,
                available: 5
            })
        );
        let shifted = gt.shifted(0.1);
        assert!(matches!(
            axis_errors(0, &gt, &shifted, &ext(Rotation::identity()), 2),
            Err(BacError::Inconsistent(_))
        ));
    }

    #[test]
    fn dominant_sensor_takes_every_axis() {
        let zero = series(0, vec![Vec3::zeros(); 5]);
        let bad = series(1, vec![Vec3::new(0.1, -0.2, 0.3); 5]);
        assert_eq!(
            select_best_axes(&[zero.clone(), bad.clone()]).unwrap(),
            [0, 0, 0]
        );
        assert_eq!(select_best_axes(&[bad, zero]).unwrap(), [1, 1, 1]);
    }

    #[test]
    fn homonymous_axes_are_chosen_independently() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<Vec3> = (0..40)
            .map(|_| Vec3::new(0.01, 0.1, 0.01).component_mul(&rand_vec(&mut rng, 1.0)))
            .collect();
        let b: Vec<Vec3> = (0..40)
            .map(|_| Vec3::new(0.1, 0.01, 0.1).component_mul(&rand_vec(&mut rng, 1.0)))
            .collect();
        let got = select_best_axes(&[series(0, a.clone()), series(1, b.clone())]).unwrap();
        let brute = [0, 1, 2].map(|axis| {
            let sa: f64 = a.iter().map(|e| e[axis] * e[axis]).sum();
            let sb: f64 = b.iter().map(|e| e[axis] * e[axis]).sum();
            if sb < sa {
                1
            } else {
                0
            }
        });
        assert_eq!(got, brute);
        assert_eq!(got, [0, 1, 0]);
    }

    #[test]
    fn ties_go_to_the_lowest_imu_id() {
        let e = vec![Vec3::new(0.1, 0.2, 0.3); 4];
        assert_eq!(
            select_best_axes(&[
                series(0, e.clone()),
                series(1, e.clone()),
                series(2, e.clone())
            ])
            .unwrap(),
            [0, 0, 0]
        );
        assert_eq!(
            select_best_axes(&[series(5, e.clone()), series(2, e)]).unwrap(),
            [1, 1, 1]
        );
        assert_eq!(select_best_axes(&[]), Err(BacError::EmptyInput));
    }

    #[test]
    fn identity_extrinsics_compose_to_identity() {
        let exts = vec![ext(Rotation::identity()); 3];
        for chosen in [[0, 0, 0], [0, 1, 2], [2, 0, 1]] {
            assert_eq!(
                composition_matrix(&chosen, &exts).unwrap(),
                Mat3::identity()
            );
        }
        let a = Mat3::identity();
        assert_eq!(
            compose_omega(&a, &Vec3::new(1.0, 2.0, 3.0)),
            Vec3::new(1.0, 2.0, 3.0)
        );
    }

    #[test]
    fn orthogonal_permuted_axes_give_a_permutation() {
        // IMU 1's x axis points along Master y, IMU 2's y axis along Master x.
        let rz = exp_map(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        let exts = vec![ext(Rotation::identity()), ext(rz), ext(rz.transpose())];
        let a = composition_matrix(&[1, 2, 0], &exts).unwrap();
        let perm = Mat3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((a - perm).abs().max() < 1e-15);
        let swapped = compose_omega(&perm, &Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(swapped, Vec3::new(2.0, 1.0, 3.0));
    }

    #[test]
    fn coplanar_axes_are_rejected() {
        // IMU 1's y axis coincides with IMU 0's x axis.
        let rz = exp_map(&Vec3::new(0.0, 0.0, -FRAC_PI_2));
        let exts = vec![ext(Rotation::identity()), ext(rz)];
        assert!(matches!(
            composition_matrix(&[0, 1, 0], &exts),
            Err(BacError::CoplanarAxes { .. })
        ));
        assert!(AxisSelection::new([0, 1, 0], &exts, 10).is_err());
        let nearly = exp_map(&Vec3::new(0.0, 0.0, -FRAC_PI_2 + 5e-4));
        let exts = vec![ext(Rotation::identity()), ext(nearly)];
        assert!(matches!(
            composition_matrix(&[0, 1, 0], &exts),
            Err(BacError::CoplanarAxes { .. })
        ));
    }

    #[test]
    fn composition_inverts_the_component_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 200 {
            let exts: Vec<ImuExtrinsics> = (0..3)
                .map(|_| ext(exp_map(&rand_vec(&mut rng, 3.0))))
                .collect();
            let chosen = [0, 1, 2].map(|_| rng.random_range(0..3));
            let Ok(a) = composition_matrix(&chosen, &exts) else {
                continue;
            };
            let omega = rand_vec(&mut rng, 5.0);
            let components = Vec3::from_fn(|axis, _| {
                (exts[chosen[axis]].r_master_imu.transpose() * omega)[axis]
            });
            let back = compose_omega(&a, &components);
            let cond = a.norm() * stacked_rows(&chosen, &exts).unwrap().norm();
            assert!(
                (back - omega).norm() < 1e-12 * cond.max(1.0) * omega.norm().max(1.0),
                "{cond}"
            );
            checked += 1;
        }
    }

    fn const_track(id: usize, n: usize, w: Vec3) -> GyroTrack {
        GyroTrack::new(id, (0..n).map(|k| k as f64 / 342.0).collect(), vec![w; n]).unwrap()
    }

    fn params(c: Mat3, m: Rotation) -> ImuParams {
        ImuParams {
            intrinsics: ImuIntrinsics {
                c,
                ..Default::default()
            },
            extrinsics: ext(m),
        }
    }

    #[test]
    fn perfect_axes_integrate_without_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 342 * 6 + 1;
        let omega = Vec3::new(0.3, -0.5, 0.2);
        let ms: Vec<Rotation> = (0..3).map(|_| exp_map(&rand_vec(&mut rng, 0.3))).collect();
        // Each IMU is exact on one axis and corrupted on the others.
        let tracks: Vec<GyroTrack> = (0..3)
            .map(|i| {
                let mut w = ms[i].transpose() * omega;
                for a in 0..3 {
                    if a != i {
                        w[a] += 0.05;
                    }
                }
                const_track(i, n, w)
            })
            .collect();
        let ps: Vec<ImuParams> = ms.iter().map(|m| params(Mat3::identity(), *m)).collect();
        let exts: Vec<ImuExtrinsics> = ps.iter().map(|p| p.extrinsics).collect();
        let sel = AxisSelection::new([0, 1, 2], &exts, 342).unwrap();
        let r0 = exp_map(&Vec3::new(0.1, 0.2, 0.3));
        let est =
            open_loop_estimate(&r0, &tracks, 342, &sel, &ps, &[Vec3::zeros(); 3], 5.0).unwrap();
        assert_eq!(est.len(), 5 * 342 + 1);
        let (t_end, r_end) = est.last().unwrap();
        let truth = r0 * exp_map(&(omega * (t_end - 1.0)));
        assert!(truth.angle_to(&r_end) < 1e-6);
    }

    #[test]
    fn identical_imus_reduce_to_single_imu_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1000;
        let m = exp_map(&rand_vec(&mut rng, 0.5));
        let c = Mat3::new(1.02, 0.0, 0.0, 0.01, 0.97, 0.0, -0.01, 0.02, 1.01);
        let ts: Vec<f64> = (0..n).map(|k| k as f64 / 342.0).collect();
        let samples: Vec<Vec3> = (0..n).map(|_| rand_vec(&mut rng, 1.0)).collect();
        let track = GyroTrack::new(0, ts.clone(), samples.clone()).unwrap();
        let p = params(c, m);
        let bias = Vec3::new(1e-3, -2e-3, 5e-4);
        let r0 = exp_map(&Vec3::new(0.4, 0.0, -0.2));
        let single: Vec<(f64, Vec3)> = (100..n)
            .map(|k| {
                (
                    ts[k],
                    ave_fuse(&[samples[k]], std::slice::from_ref(&p), &[bias]).unwrap(),
                )
            })
            .collect();
        let single = integrate_master(&r0, &single).unwrap();
        for imus in [1, 3] {
            let tracks = vec![track.clone(); imus];
            let ps = vec![p.clone(); imus];
            let exts: Vec<ImuExtrinsics> = ps.iter().map(|p| p.extrinsics).collect();
            let sel = AxisSelection::new([0, imus - 1, 0], &exts, 50).unwrap();
            let duration = ts[n - 1] - ts[100];
            let est = open_loop_estimate(&r0, &tracks, 100, &sel, &ps, &vec![bias; imus], duration)
                .unwrap();
            assert_eq!(est.timestamps(), single.timestamps());
            for (a, b) in est.rotations().iter().zip(single.rotations()) {
                assert!(a.angle_to(b) < 1e-12);
            }
        }
    }

    #[test]
    fn short_tracks_are_exhausted() {
        let tracks = vec![const_track(0, 400, Vec3::zeros())];
        let ps = vec![params(Mat3::identity(), Rotation::identity())];
        let sel = AxisSelection::new([0, 0, 0], &[ps[0].extrinsics], 10).unwrap();
        let err = open_loop_estimate(
            &Rotation::identity(),
            &tracks,
            342,
            &sel,
            &ps,
            &[Vec3::zeros()],
            1.0,
        );
        assert!(matches!(err, Err(BacError::TrackExhausted { .. })));
        assert!(open_loop_range(&[0.0, 1.0], 5, 1.0).is_err());
        assert_eq!(
            open_loop_range(&[0.0, 0.5, 1.0, 1.5], 1, 1.0).unwrap(),
            1..4
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn composition_and_stacking_are_mutual_inverses(
            seed in any::<u64>(),
            chosen in proptest::array::uniform3(0usize..3),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let exts: Vec<ImuExtrinsics> = (0..3).map(|_| ext(exp_map(&rand_vec(&mut rng, 3.0)))).collect();
            if let Ok(a) = composition_matrix(&chosen, &exts) {
                let s = stacked_rows(&chosen, &exts).unwrap();
                let cond = a.norm() * s.norm();
                prop_assert!((a * s - Mat3::identity()).abs().max() < 1e-12 * cond);
            }
        }

        #[test]
        fn selection_ignores_common_rescaling(seed in any::<u64>(), scale in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let all: Vec<AxisErrorSeries> = (0..4)
                .map(|i| series(i, (0..20).map(|_| rand_vec(&mut rng, 1.0)).collect()))
                .collect();
            let scaled: Vec<AxisErrorSeries> = all
                .iter()
                .map(|s| series(s.imu_id, s.errors.iter().map(|e| e * scale).collect()))
                .collect();
            prop_assert_eq!(select_best_axes(&all).unwrap(), select_best_axes(&scaled).unwrap());
        }

        #[test]
        fn a_strictly_dominant_imu_wins_every_axis(seed in any::<u64>(), best in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let all: Vec<AxisErrorSeries> = (0..4)
                .map(|i| {
                    let s = if i == best { 0.1 } else { 1.0 };
                    series(i, (0..20).map(|_| rand_vec(&mut rng, s).add_scalar(if i == best { 0.0 } else { 2.0 })).collect())
                })
                .collect();
            prop_assert_eq!(select_best_axes(&all).unwrap(), [best; 3]);
        }

        #[test]
        fn identity_extrinsics_pick_components_directly(
            chosen in proptest::array::uniform3(0usize..3),
            w in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            let exts = vec![ext(Rotation::identity()); 3];
            let a = composition_matrix(&chosen, &exts).unwrap();
            let w = Vec3::from(w);
            prop_assert_eq!(compose_omega(&a, &w), w);
        }
    }
}
