//! Clock offset between a gyro stream and ground truth from the correlation of
//! angular speeds.

use super::HarnessError;
use crate::estimator::OrientationTrajectory;
use crate::gyro_model::GyroTrack;
use crate::so3::log_map;

/// Minimum overlap of the two streams (s).
pub const MIN_OVERLAP: f64 = 5.0;
/// Minimum standard deviation of the ground-truth angular speed (rad/s).
pub const MIN_MOTION_STD: f64 = 0.05;

/// Running integral of the held gyro speed, evaluated at arbitrary times.
struct SpeedIntegral<'a> {
    ts: &'a [f64],
    cumulative: Vec<f64>,
    speeds: Vec<f64>,
}

impl<'a> SpeedIntegral<'a> {
    fn new(track: &'a GyroTrack) -> Self {
        let ts = track.timestamps();
        let speeds: Vec<f64> = track.samples().iter().map(|w| w.norm()).collect();
        let mut cumulative = Vec::with_capacity(ts.len());
        let mut acc = 0.0;
        cumulative.push(acc);
        for k in 1..ts.len() {
            acc += speeds[k - 1] * (ts[k] - ts[k - 1]);
            cumulative.push(acc);
        }
        SpeedIntegral {
            ts,
            cumulative,
            speeds,
        }
    }

    /// Requires `ts[0] ≤ t ≤ ts[last]`.
    fn at(&self, t: f64) -> f64 {
        let k = self
            .ts
            .partition_point(|s| *s <= t)
            .saturating_sub(1)
            .min(self.ts.len() - 1);
        self.cumulative[k] + self.speeds[k] * (t - self.ts[k])
    }

    fn mean_over(&self, a: f64, b: f64) -> f64 {
        (self.at(b) - self.at(a)) / (b - a)
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Offset `τ` such that an event at ground-truth time `t` appears in the gyro
/// stream at `t + τ`, searched over `[−search_window, search_window]`.
///
/// Ground-truth speed over each keyframe interval is compared with the mean
/// gyro speed over the same interval shifted by `τ`. The best grid lag, with a
/// step of one gyro period, is refined by a parabola through its neighbours.
pub fn time_align(
    gyro: &GyroTrack,
    gt: &OrientationTrajectory,
    search_window: f64,
) -> Result<f64, HarnessError> {
    let ts = gyro.timestamps();
    let gts = gt.timestamps();
    if ts.len() < 2 || gts.len() < 2 {
        return Err(HarnessError::NoOverlap { seconds: 0.0 });
    }
    let window = search_window.abs();
    let (g0, g1) = (ts[0], ts[ts.len() - 1]);
    let intervals: Vec<(f64, f64, f64)> = gts
        .windows(2)
        .zip(gt.rotations().windows(2))
        .filter(|(t, _)| t[0] - window >= g0 && t[1] + window <= g1)
        .map(|(t, r)| {
            (
                t[0],
                t[1],
                log_map(&(r[0].transpose() * r[1])).norm() / (t[1] - t[0]),
            )
        })
        .collect();
    let overlap = match (intervals.first(), intervals.last()) {
        (Some(a), Some(b)) => b.1 - a.0,
        _ => 0.0,
    };
    if overlap < MIN_OVERLAP {
        return Err(HarnessError::NoOverlap { seconds: overlap });
    }
    let gt_speed: Vec<f64> = intervals.iter().map(|i| i.2).collect();
    let n = gt_speed.len() as f64;
    let mean = gt_speed.iter().sum::<f64>() / n;
    let std = (gt_speed.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std <= MIN_MOTION_STD {
        return Err(HarnessError::InsufficientMotion { std });
    }

    let integral = SpeedIntegral::new(gyro);
    let step = (g1 - g0) / (ts.len() - 1) as f64;
    let m = (window / step).floor() as i64;
    let score = |tau: f64| {
        let gyro_speed: Vec<f64> = intervals
            .iter()
            .map(|i| integral.mean_over(i.0 + tau, i.1 + tau))
            .collect();
        pearson(&gt_speed, &gyro_speed)
    };
    let scores: Vec<f64> = (-m..=m).map(|j| score(j as f64 * step)).collect();
    let best = (0..scores.len())
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .expect("non-empty grid");
    let mut tau = (best as i64 - m) as f64 * step;
    if best > 0 && best + 1 < scores.len() {
        let (l, c, r) = (scores[best - 1], scores[best], scores[best + 1]);
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            tau += 0.5 * step * (l - r) / denom;
        }
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{exp_map, Rotation, Vec3};

    fn pair(shift: f64) -> (GyroTrack, OrientationTrajectory) {
        let theta = |t: f64| {
            Vec3::new(
                0.8 * (1.3 * t).sin(),
                0.5 * (0.7 * t + 1.0).sin(),
                0.9 * (0.45 * t).cos(),
            )
        };
        let gts: Vec<f64> = (0..=360).map(|k| k as f64 / 30.0).collect();
        let gt = OrientationTrajectory::new(
            gts.clone(),
            gts.iter().map(|t| exp_map(&theta(*t))).collect(),
        )
        .unwrap();
        let ts: Vec<f64> = (0..=12 * 342).map(|k| k as f64 / 342.0).collect();
        let ws: Vec<Vec3> = ts
            .windows(2)
            .map(|w| log_map(&(exp_map(&theta(w[0])).transpose() * exp_map(&theta(w[1])))) * 342.0)
            .chain(std::iter::once(Vec3::zeros()))
            .collect();
        (GyroTrack::new(0, ts, ws).unwrap().shifted(shift), gt)
    }

    #[test]
    fn recovers_injected_shifts() {
        for shift in [-0.05, -0.01, 0.0, 0.01, 0.05] {
            let (g, gt) = pair(shift);
            let tau = time_align(&g, &gt, 0.1).unwrap();
            assert!((tau - shift).abs() < 1.5e-3, "{shift}: {tau}");
        }
    }

    #[test]
    fn static_data_has_insufficient_motion() {
        let ts: Vec<f64> = (0..=10 * 342).map(|k| k as f64 / 342.0).collect();
        let g = GyroTrack::new(0, ts, vec![Vec3::zeros(); 10 * 342 + 1]).unwrap();
        let gts: Vec<f64> = (0..=300).map(|k| k as f64 / 30.0).collect();
        let gt = OrientationTrajectory::new(gts, vec![Rotation::identity(); 301]).unwrap();
        assert!(matches!(
            time_align(&g, &gt, 0.1),
            Err(HarnessError::InsufficientMotion { .. })
        ));
    }

    #[test]
    fn short_overlap_is_rejected() {
        let (g, gt) = pair(0.0);
        let late = g.shifted(8.0);
        assert!(matches!(
            time_align(&late, &gt, 0.1),
            Err(HarnessError::NoOverlap { .. })
        ));
    }
}
