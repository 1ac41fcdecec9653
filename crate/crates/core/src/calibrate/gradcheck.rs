//! Finite-difference validation of tangent-space gradients.

use super::problem::{imu_cost, CostWeights, ImuProblem, ImuVariables};

/// Central-difference step applied in tangent coordinates.
pub const FD_STEP: f64 = 1e-6;

/// A differentiable cost over a point on a product manifold, with a retraction
/// that applies flat tangent steps.
pub trait TangentProblem {
    type Point: Clone;
    fn cost(&self, point: &Self::Point) -> f64;
    fn gradient(&self, point: &Self::Point) -> Vec<f64>;
    fn retract(&self, point: &Self::Point, delta: &[f64]) -> Self::Point;
}

/// Largest relative deviation between the analytic gradient and central finite
/// differences.
///
/// Each component is compared relative to the larger of its two estimates, but
/// never relative to less than 0.1% of the largest gradient component, so
/// near-zero components are judged on an absolute scale.
pub fn gradient_check<P: TangentProblem>(problem: &P, point: &P::Point) -> f64 {
    let analytic = problem.gradient(point);
    let n = analytic.len();
    let mut delta = vec![0.0; n];
    let numeric: Vec<f64> = (0..n)
        .map(|j| {
            delta[j] = FD_STEP;
            let plus = problem.cost(&problem.retract(point, &delta));
            delta[j] = -FD_STEP;
            let minus = problem.cost(&problem.retract(point, &delta));
            delta[j] = 0.0;
            (plus - minus) / (2.0 * FD_STEP)
        })
        .collect();
    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let floor = 1e-3 * scale;
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Calibration cost of several IMUs as one tangent problem.
pub struct CalibrationProblem<'a> {
    pub imus: Vec<ImuProblem<'a>>,
    pub weights: CostWeights,
}

impl TangentProblem for CalibrationProblem<'_> {
    type Point = Vec<ImuVariables>;

    fn cost(&self, point: &Self::Point) -> f64 {
        self.imus
            .iter()
            .zip(point)
            .map(|(p, v)| imu_cost(p, v, &self.weights, false).0)
            .sum()
    }

    fn gradient(&self, point: &Self::Point) -> Vec<f64> {
        self.imus
            .iter()
            .zip(point)
            .flat_map(|(p, v)| {
                imu_cost(p, v, &self.weights, true)
                    .1
                    .expect("gradient requested")
                    .to_flat()
            })
            .collect()
    }

    fn retract(&self, point: &Self::Point, delta: &[f64]) -> Self::Point {
        let mut off = 0;
        point
            .iter()
            .map(|v| {
                let d = v.dim();
                let out = v.retract(&delta[off..off + d]);
                off += d;
                out
            })
            .collect()
    }
}
