//! Deterministic synthetic MIMU suites.
//!
//! The true Master trajectory of a track is `R₀·Exp(θ(t))` with `θ` a sum of
//! sinusoids per axis. Sensor intrinsics and mountings are drawn once per
//! suite; turn-on biases and systematic-error profiles are redrawn per track.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::{HarnessError, Track};
use crate::estimator::OrientationTrajectory;
use crate::gyro_model::{
    simulate_mimu, ImuExtrinsics, ImuIntrinsics, ImuParams, OffsetSegment, SystematicErrorProfile,
};
use crate::so3::{exp_map, Mat3, Rotation, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub imus: usize,
    pub tracks: usize,
    pub aided_secs: f64,
    pub open_secs: f64,
    pub calibration_secs: f64,
    pub gyro_rate: f64,
    pub gt_rate: f64,
    pub sigma_g: f64,
    pub sigma_b: f64,
    pub gamma: f64,
    /// Half-width of the uniform spread of `C` diagonal entries around 1.
    pub c_diagonal_spread: f64,
    /// Half-width of the uniform spread of `C` entries below the diagonal.
    pub c_off_diagonal_spread: f64,
    /// Largest mounting rotation away from identity (deg).
    pub max_extrinsic_deg: f64,
    /// Half-width of the uniform nominal bias per axis (rad/s).
    pub bias_nominal: f64,
    /// Half-width of the uniform per-track turn-on bias change (rad/s).
    pub bias_turn_on: f64,
    /// Magnitude range of systematic offsets (rad/s); signs are random.
    pub offset_range: (f64, f64),
    /// Duration range of constant-offset segments (s).
    pub segment_range: (f64, f64),
    /// Half-width of the uniform per-axis scale perturbation.
    pub scale_perturbation: f64,
    /// Frequency band of the motion (Hz).
    pub motion_band: (f64, f64),
    /// Amplitude range of each sinusoid (rad).
    pub motion_amplitude: (f64, f64),
    /// Amplitude multiplier for the calibration track.
    pub calibration_excitation: f64,
    pub sinusoids_per_axis: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            imus: 3,
            tracks: 44,
            aided_secs: 10.0,
            open_secs: 5.0,
            calibration_secs: 10.0,
            gyro_rate: 342.0,
            gt_rate: 30.0,
            sigma_g: 2e-3,
            sigma_b: 1e-5,
            gamma: 1e-4,
            c_diagonal_spread: 0.05,
            c_off_diagonal_spread: 0.02,
            max_extrinsic_deg: 5.0,
            bias_nominal: 5e-3,
            bias_turn_on: 1e-3,
            offset_range: (5e-3, 2e-2),
            segment_range: (2.0, 10.0),
            scale_perturbation: 2e-3,
            motion_band: (0.05, 0.8),
            motion_amplitude: (0.05, 0.3),
            calibration_excitation: 3.0,
            sinusoids_per_axis: 4,
        }
    }
}

impl SuiteConfig {
    /// No white noise, no bias walk and no systematic error.
    pub fn noiseless(mut self) -> Self {
        self.sigma_g = 0.0;
        self.sigma_b = 0.0;
        self.offset_range = (0.0, 0.0);
        self.scale_perturbation = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidTrack(format!("suite config: {m}")));
        if self.imus == 0 {
            return bad("at least one IMU required");
        }
        if !(self.aided_secs > 0.0 && self.open_secs >= 0.0 && self.calibration_secs > 0.0) {
            return bad("durations must be positive");
        }
        if !(self.gyro_rate > 0.0 && self.gt_rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.segment_range.0 > 0.0 && self.segment_range.0 <= self.segment_range.1) {
            return bad("segment durations must be positive and ordered");
        }
        if !(self.offset_range.0 >= 0.0 && self.offset_range.0 <= self.offset_range.1) {
            return bad("offset range must be non-negative and ordered");
        }
        if !(self.motion_band.0 > 0.0 && self.motion_band.0 <= self.motion_band.1) {
            return bad("motion band must be positive and ordered");
        }
        if !(self.motion_amplitude.0 >= 0.0 && self.motion_amplitude.0 <= self.motion_amplitude.1) {
            return bad("motion amplitude range must be non-negative and ordered");
        }
        Ok(())
    }
}

/// `R₀·Exp(θ(t))` with `θ_i(t) = Σⱼ aⱼ·sin(2π·fⱼ·t + φⱼ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandLimitedMotion {
    pub r0: Rotation,
    /// `(amplitude, frequency, phase)` per axis.
    pub terms: [Vec<(f64, f64, f64)>; 3],
}

impl BandLimitedMotion {
    pub fn random(
        rng: &mut ChaCha8Rng,
        band: (f64, f64),
        amplitude: (f64, f64),
        sinusoids_per_axis: usize,
    ) -> Self {
        let r0 = exp_map(&Vec3::from_fn(|_, _| rng.random_range(-PI..PI)));
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let terms = [(); 3].map(|_| {
            (0..sinusoids_per_axis)
                .map(|_| {
                    (
                        draw(rng, amplitude),
                        draw(rng, band),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect()
        });
        BandLimitedMotion { r0, terms }
    }

    pub fn at(&self, t: f64) -> Rotation {
        let theta = Vec3::from_fn(|i, _| {
            self.terms[i]
                .iter()
                .map(|(a, f, p)| a * (2.0 * PI * f * t + p).sin())
                .sum()
        });
        self.r0 * exp_map(&theta)
    }

    pub fn sample(&self, timestamps: &[f64]) -> OrientationTrajectory {
        OrientationTrajectory::new(
            timestamps.to_vec(),
            timestamps.iter().map(|t| self.at(*t)).collect(),
        )
        .expect("increasing timestamps")
    }
}

/// `count` timestamps `k/rate` rounded to whole nanoseconds.
pub fn regular_timestamps(rate: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| (k as f64 / rate * 1e9).round() / 1e9)
        .collect()
}

pub fn smooth_trajectory(seed: u64, cfg: &SuiteConfig, duration: f64) -> OrientationTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motion = BandLimitedMotion::random(
        &mut rng,
        cfg.motion_band,
        cfg.motion_amplitude,
        cfg.sinusoids_per_axis,
    );
    motion.sample(&regular_timestamps(
        cfg.gyro_rate,
        (duration * cfg.gyro_rate).round() as usize + 1,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSuite {
    pub config: SuiteConfig,
    pub seed: u64,
    /// True parameters; `bias0` holds the nominal bias.
    pub sensors: Vec<ImuParams>,
    pub calibration: Track,
    pub calibration_truth: TrackTruth,
    pub tracks: Vec<Track>,
    /// Aligned with `tracks`.
    pub truth: Vec<TrackTruth>,
}

/// Per-track true sensor state: turn-on biases in `bias0` and systematic profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackTruth {
    pub params: Vec<ImuParams>,
    pub profiles: Vec<SystematicErrorProfile>,
}

fn uniform(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..half_width)
    } else {
        0.0
    }
}

fn draw_sensor(rng: &mut ChaCha8Rng, cfg: &SuiteConfig) -> ImuParams {
    let c = Mat3::from_fn(|r, col| match r.cmp(&col) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0 + uniform(rng, cfg.c_diagonal_spread),
        std::cmp::Ordering::Greater => uniform(rng, cfg.c_off_diagonal_spread),
    });
    let axis = loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 && v.norm() <= 1.0 {
            break v.normalize();
        }
    };
    let angle = if cfg.max_extrinsic_deg > 0.0 {
        rng.random_range(0.0..cfg.max_extrinsic_deg.to_radians())
    } else {
        0.0
    };
    ImuParams {
        intrinsics: ImuIntrinsics {
            c,
            gamma: cfg.gamma,
            sigma_g: cfg.sigma_g,
            sigma_b: cfg.sigma_b,
            bias0: Vec3::from_fn(|_, _| uniform(rng, cfg.bias_nominal)),
        },
        extrinsics: ImuExtrinsics {
            r_master_imu: exp_map(&(axis * angle)),
        },
    }
}

fn draw_profile(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, duration: f64) -> SystematicErrorProfile {
    let segments = [(); 3].map(|_| {
        let mut out = Vec::new();
        let mut covered = 0.0;
        // The first segment starts at a random phase of its duration.
        let mut first = true;
        while covered < duration {
            let (lo, hi) = cfg.segment_range;
            let mut d = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            if first {
                d *= rng.random_range(0.0..1.0f64).max(0.05);
                first = false;
            }
            let (lo, hi) = cfg.offset_range;
            let magnitude = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            out.push(OffsetSegment {
                duration: d,
                offset: sign * magnitude,
            });
            covered += d;
        }
        out
    });
    SystematicErrorProfile {
        segments,
        scale: Vec3::from_fn(|_, _| uniform(rng, cfg.scale_perturbation)),
    }
}

fn synthesize_track(
    track_id: usize,
    seed: u64,
    cfg: &SuiteConfig,
    sensors: &[ImuParams],
    duration: f64,
    excitation: f64,
    aided: f64,
    open: f64,
) -> Result<(Track, TrackTruth), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = (
        cfg.motion_amplitude.0 * excitation,
        cfg.motion_amplitude.1 * excitation,
    );
    let motion =
        BandLimitedMotion::random(&mut rng, cfg.motion_band, amplitude, cfg.sinusoids_per_axis);
    let imu_ts = regular_timestamps(
        cfg.gyro_rate,
        (duration * cfg.gyro_rate).round() as usize + 1,
    );
    let gt_ts = regular_timestamps(cfg.gt_rate, (duration * cfg.gt_rate).round() as usize + 1);
    let truth = motion.sample(&imu_ts);
    let params: Vec<ImuParams> = sensors
        .iter()
        .map(|s| {
            let mut p = s.clone();
            p.intrinsics.bias0 += Vec3::from_fn(|_, _| uniform(&mut rng, cfg.bias_turn_on));
            p
        })
        .collect();
    let profiles: Vec<SystematicErrorProfile> = (0..sensors.len())
        .map(|_| draw_profile(&mut rng, cfg, duration))
        .collect();
    let streams = simulate_mimu(&truth, &params, &profiles, rng.random())?;
    let gyro = streams.into_iter().map(|(g, _)| g).collect();
    let track = Track::new(track_id, gyro, motion.sample(&gt_ts), aided, open)?;
    Ok((track, TrackTruth { params, profiles }))
}

pub fn generate_synthetic_suite(
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<SyntheticSuite, HarnessError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let sensors: Vec<ImuParams> = (0..cfg.imus)
        .map(|_| draw_sensor(&mut master, cfg))
        .collect();
    let calibration_seed: u64 = master.random();
    let track_seeds: Vec<u64> = (0..cfg.tracks).map(|_| master.random()).collect();

    let (calibration, calibration_truth) = synthesize_track(
        0,
        calibration_seed,
        cfg,
        &sensors,
        cfg.calibration_secs,
        cfg.calibration_excitation,
        cfg.calibration_secs,
        0.0,
    )?;
    let mut truth = Vec::with_capacity(cfg.tracks);
    let mut tracks = Vec::with_capacity(cfg.tracks);
    let total = cfg.aided_secs + cfg.open_secs;
    for (id, s) in track_seeds.into_iter().enumerate() {
        let (t, p) = synthesize_track(
            id,
            s,
            cfg,
            &sensors,
            total,
            1.0,
            cfg.aided_secs,
            cfg.open_secs,
        )?;
        tracks.push(t);
        truth.push(p);
    }
    Ok(SyntheticSuite {
        config: cfg.clone(),
        seed,
        sensors,
        calibration,
        calibration_truth,
        tracks,
        truth,
    })
}
