//! Rotation-group mathematics on SO(3).
//!
//! Tangent vectors are axis-angle vectors in R³: the direction is the rotation
//! axis and the norm is the angle in radians. `exp_map` and `log_map` convert
//! between the tangent space and [`Rotation`]; `hat`/`vee` convert between
//! tangent vectors and skew-symmetric matrices.
//!
//! The small-angle branches of `exp_map`/`log_map` switch to Taylor series
//! below [`SMALL_ANGLE`] radians.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::estimator::OrientationTrajectory;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Angle below which the Taylor branches of the exponential and logarithm are used.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Per-entry tolerance for orthonormality and skew-symmetry checks.
pub const MATRIX_TOL: f64 = 1e-9;

const MEAN_MAX_ITERS: usize = 100;
const MEAN_TOL: f64 = 1e-10;

/// Half-width (in keyframes) of the local window used to fit each spline segment.
const SPLINE_HALF_WINDOW: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (max |M + Mᵀ| = {deviation:e})")]
    NotSkewSymmetric { deviation: f64 },
    #[error("matrix is not a rotation (orthonormality deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("rotation mean did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("query time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("interpolation needs at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
}

/// A proper rotation matrix (orthonormal, det +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates `m` against the rotation invariants within [`MATRIX_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self, So3Error> {
        let deviation = orthonormality_deviation(&m);
        if deviation > MATRIX_TOL || !deviation.is_finite() {
            return Err(So3Error::NotOrthonormal { deviation });
        }
        Ok(Rotation(m))
    }

    /// Wraps `m` without checking. Callers guarantee the invariants hold.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Nearest rotation to `m` in the Frobenius norm (polar projection).
    pub fn project(m: &Mat3) -> Result<Self, So3Error> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(So3Error::NotOrthonormal {
                deviation: f64::INFINITY,
            });
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(So3Error::NotOrthonormal {
                    deviation: f64::INFINITY,
                })
            }
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // flip the axis of the smallest singular value
            let mut u = u;
            let smallest = (0..3)
                .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
                .unwrap_or(2);
            u.column_mut(smallest).neg_mut();
            r = u * v_t;
        }
        Ok(Rotation(r))
    }

    pub fn from_row_major(entries: &[f64; 9]) -> Result<Self, So3Error> {
        Self::from_matrix(Mat3::from_row_slice(entries))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Row `i` of the matrix as a column vector.
    pub fn row(&self, i: usize) -> Vec3 {
        self.0.row(i).transpose()
    }

    /// Geodesic angle ‖Ln(selfᵀ·other)‖ in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        log_map(&(self.transpose() * *other)).norm()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Largest of max|RᵀR − I| and |det R − 1|.
pub fn orthonormality_deviation(m: &Mat3) -> f64 {
    let gram = m.transpose() * m - Mat3::identity();
    let ortho = gram.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    ortho.max((m.determinant() - 1.0).abs())
}

/// Skew-symmetric matrix with `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`].
pub fn vee(m: &Mat3) -> Result<Vec3, So3Error> {
    let sym = m + m.transpose();
    let deviation = sym.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if deviation > MATRIX_TOL || !deviation.is_finite() {
        return Err(So3Error::NotSkewSymmetric { deviation });
    }
    Ok(Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

pub fn exp_map(theta: &Vec3) -> Rotation {
    let angle2 = theta.norm_squared();
    let angle = angle2.sqrt();
    let k = hat(theta);
    let (a, b) = if angle < SMALL_ANGLE {
        (1.0 - angle2 / 6.0, 0.5 - angle2 / 24.0)
    } else {
        (angle.sin() / angle, (1.0 - angle.cos()) / angle2)
    };
    Rotation(Mat3::identity() + k * a + k * k * b)
}

/// Logarithm with ‖θ‖ ∈ [0, π].
///
/// At angle exactly π the axis is recovered from the largest diagonal entry of
/// (R + Rᵀ)/2 − cos θ·I and its sign fixed so the first nonzero component is
/// positive.
pub fn log_map(r: &Rotation) -> Vec3 {
    let m = &r.0;
    let v = 0.5
        * Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        );
    let sin = v.norm();
    let cos = 0.5 * (m.trace() - 1.0);
    let angle = sin.atan2(cos);
    if angle < SMALL_ANGLE {
        return v * (1.0 + angle * angle / 6.0);
    }
    if sin > SMALL_ANGLE {
        return v * (angle / sin);
    }
    let cos = cos.clamp(-1.0, 1.0);
    let b = 0.5 * (m + m.transpose()) - Mat3::identity() * cos;
    let j = (0..3)
        .max_by(|&a, &c| b[(a, a)].total_cmp(&b[(c, c)]))
        .unwrap_or(0);
    let mut axis: Vec3 = b.column(j).into();
    let n = axis.norm();
    if n > 0.0 {
        axis /= n;
    }
    let flip = if sin > 0.0 {
        axis.dot(&v) < 0.0
    } else {
        axis.iter()
            .find(|c| c.abs() > 0.0)
            .is_some_and(|c| *c < 0.0)
    };
    if flip {
        axis = -axis;
    }
    axis * angle
}

/// Right Jacobian of SO(3): Exp(θ + δ) ≈ Exp(θ)·Exp(Jr(θ)·δ).
pub fn right_jacobian(theta: &Vec3) -> Mat3 {
    let angle2 = theta.norm_squared();
    let angle = angle2.sqrt();
    let k = hat(theta);
    let (a, b) = if angle < SMALL_ANGLE {
        (0.5 - angle2 / 24.0, 1.0 / 6.0 - angle2 / 120.0)
    } else {
        (
            (1.0 - angle.cos()) / angle2,
            (angle - angle.sin()) / (angle2 * angle),
        )
    };
    Mat3::identity() - k * a + k * k * b
}

/// Left Jacobian of SO(3): Exp(θ + δ) ≈ Exp(Jl(θ)·δ)·Exp(θ).
pub fn left_jacobian(theta: &Vec3) -> Mat3 {
    right_jacobian(&-theta)
}

/// Iterative tangent-space (Karcher) mean.
pub fn rotation_mean(rs: &[Rotation]) -> Result<Rotation, So3Error> {
    let first = rs.first().ok_or(So3Error::EmptyInput)?;
    if rs.len() == 1 {
        return Ok(*first);
    }
    let inv_n = 1.0 / rs.len() as f64;
    let mut mean = *first;
    for _ in 0..MEAN_MAX_ITERS {
        let mt = mean.transpose();
        let step = rs
            .iter()
            .fold(Vec3::zeros(), |acc, r| acc + log_map(&(mt * *r)))
            * inv_n;
        mean = mean * exp_map(&step);
        if step.norm() < MEAN_TOL {
            return Ok(mean);
        }
    }
    Err(So3Error::NoConvergence {
        iterations: MEAN_MAX_ITERS,
    })
}

/// Cubic-spline interpolation of an orientation trajectory.
///
/// Each segment [tₐ, tₐ₊₁] is interpolated in the tangent coordinates
/// Ln(R(tₐ)ᵀ·R(t)) of its left keyframe, using a natural cubic spline fitted to
/// the neighbouring keyframes. Queries that hit a keyframe time return that
/// keyframe exactly.
pub fn interpolate_trajectory(
    traj: &OrientationTrajectory,
    query_times: &[f64],
) -> Result<OrientationTrajectory, So3Error> {
    let ts = traj.timestamps();
    let rs = traj.rotations();
    if ts.len() < 4 {
        return Err(So3Error::TooFewSamples {
            got: ts.len(),
            need: 4,
        });
    }
    let start = ts[0];
    let end = ts[ts.len() - 1];
    let mut cache: Option<(usize, LocalSpline)> = None;
    let mut out = Vec::with_capacity(query_times.len());
    for &t in query_times {
        if !(t >= start && t <= end) {
            return Err(So3Error::OutOfRange { t, start, end });
        }
        let seg = match ts.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => {
                out.push(rs[i]);
                continue;
            }
            Err(i) => i - 1,
        };
        let spline = match &cache {
            Some((s, spline)) if *s == seg => spline,
            _ => {
                cache = Some((seg, LocalSpline::fit(ts, rs, seg)));
                &cache.as_ref().expect("just set").1
            }
        };
        out.push(rs[seg] * exp_map(&spline.eval(t)));
    }
    Ok(OrientationTrajectory::new_unchecked(
        query_times.to_vec(),
        out,
    ))
}

/// Natural cubic spline through a window of keyframes expressed in the tangent
/// coordinates of one anchor keyframe.
struct LocalSpline {
    ts: Vec<f64>,
    ys: Vec<Vec3>,
    second: Vec<Vec3>,
    seg: usize,
}

impl LocalSpline {
    fn fit(ts: &[f64], rs: &[Rotation], anchor: usize) -> Self {
        let lo = anchor.saturating_sub(SPLINE_HALF_WINDOW - 1);
        let hi = (anchor + SPLINE_HALF_WINDOW + 1).min(ts.len());
        let anchor_t = rs[anchor].transpose();
        let wts: Vec<f64> = ts[lo..hi].to_vec();
        let ys: Vec<Vec3> = rs[lo..hi]
            .iter()
            .map(|r| log_map(&(anchor_t * *r)))
            .collect();
        let second = natural_second_derivatives(&wts, &ys);
        LocalSpline {
            ts: wts,
            ys,
            second,
            seg: anchor - lo,
        }
    }

    fn eval(&self, t: f64) -> Vec3 {
        let i = self.seg;
        let h = self.ts[i + 1] - self.ts[i];
        let a = (self.ts[i + 1] - t) / h;
        let b = (t - self.ts[i]) / h;
        self.ys[i] * a
            + self.ys[i + 1] * b
            + (self.second[i] * (a * a * a - a) + self.second[i + 1] * (b * b * b - b))
                * (h * h / 6.0)
    }
}

fn natural_second_derivatives(ts: &[f64], ys: &[Vec3]) -> Vec<Vec3> {
    let n = ts.len();
    let mut m = vec![Vec3::zeros(); n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior nodes
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![Vec3::zeros(); n];
    for i in 1..n - 1 {
        let h0 = ts[i] - ts[i - 1];
        let h1 = ts[i + 1] - ts[i];
        let diag = 2.0 * (h0 + h1);
        let rhs = ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0) * 6.0;
        let sub = if i > 1 { h0 } else { 0.0 };
        let denom = diag - sub * c_prime[i - 1];
        c_prime[i] = h1 / denom;
        d_prime[i] = (rhs - d_prime[i - 1] * sub) / denom;
    }
    for i in (1..n - 1).rev() {
        let next = if i + 1 < n - 1 {
            m[i + 1]
        } else {
            Vec3::zeros()
        };
        m[i] = d_prime[i] - next * c_prime[i];
    }
    m
}
