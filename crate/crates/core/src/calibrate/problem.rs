//! Per-IMU cost and reverse-mode gradient.
//!
//! Rotation variables use right perturbations `R ← R·Exp(δ)`. In chain mode
//! the orientations are rebuilt from the first one by
//! `R(k+1) = R(k)·Exp(R_{M←I}·(C·ω̃(k) − b(k))·Δt)` and the gradient is
//! accumulated backwards along that recursion. In free mode every orientation
//! is a variable and a kinematic residual `Ln(Exp(ξ)ᵀ·R(k)ᵀ·R(k+1))` ties
//! consecutive states to the measurements.

use crate::so3::{exp_map, left_jacobian, log_map, right_jacobian, Mat3, Rotation, Vec3};

/// Indices of the free entries of a lower-triangular 3×3 matrix.
pub(crate) const LOWER: [(usize, usize); 6] = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)];

/// Weights and switches that shape the cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub sigma_theta: f64,
    pub sigma_nb: f64,
    pub gamma: f64,
    pub free_orientation_states: bool,
    pub sigma_kinematic: f64,
}

/// Measurements and aligned ground truth for one IMU.
#[derive(Clone, Debug)]
pub struct ImuProblem<'a> {
    pub(crate) meas: &'a [Vec3],
    pub(crate) dts: Vec<f64>,
    pub(crate) gt: &'a [Rotation],
}

impl<'a> ImuProblem<'a> {
    pub fn new(timestamps: &[f64], meas: &'a [Vec3], gt: &'a [Rotation]) -> Self {
        let dts = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        ImuProblem { meas, dts, gt }
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }
}

/// Optimization variables for one IMU.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuVariables {
    pub c: Mat3,
    pub extrinsic: Rotation,
    /// Chain mode reads only the first entry.
    pub orientations: Vec<Rotation>,
    pub biases: Vec<Vec3>,
}

/// Gradient with the same layout as [`ImuVariables`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImuGradient {
    pub c: [f64; 6],
    pub extrinsic: Vec3,
    pub orientations: Vec<Vec3>,
    pub biases: Vec<Vec3>,
}

impl ImuGradient {
    fn zeros(n_orient: usize, n_bias: usize) -> Self {
        ImuGradient {
            c: [0.0; 6],
            extrinsic: Vec3::zeros(),
            orientations: vec![Vec3::zeros(); n_orient],
            biases: vec![Vec3::zeros(); n_bias],
        }
    }

    /// Flattened as `[c(6), extrinsic(3), orientations(3·n), biases(3·m)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(9 + 3 * (self.orientations.len() + self.biases.len()));
        out.extend_from_slice(&self.c);
        out.extend(self.extrinsic.iter());
        for v in self.orientations.iter().chain(&self.biases) {
            out.extend(v.iter());
        }
        out
    }
}

impl ImuVariables {
    pub fn dim(&self) -> usize {
        9 + 3 * (self.orientations.len() + self.biases.len())
    }

    /// Applies a flat tangent step with the layout of [`ImuGradient::to_flat`].
    pub fn retract(&self, delta: &[f64]) -> ImuVariables {
        let mut out = self.clone();
        out.retract_in_place(delta);
        out
    }

    pub fn retract_in_place(&mut self, delta: &[f64]) {
        for (i, &(r, c)) in LOWER.iter().enumerate() {
            self.c[(r, c)] += delta[i];
        }
        let ext = Vec3::new(delta[6], delta[7], delta[8]);
        if ext != Vec3::zeros() {
            self.extrinsic = self.extrinsic * exp_map(&ext);
        }
        let mut off = 9;
        for r in self.orientations.iter_mut() {
            let d = Vec3::new(delta[off], delta[off + 1], delta[off + 2]);
            if d != Vec3::zeros() {
                *r = *r * exp_map(&d);
            }
            off += 3;
        }
        for b in self.biases.iter_mut() {
            b.x += delta[off];
            b.y += delta[off + 1];
            b.z += delta[off + 2];
            off += 3;
        }
    }
}

/// Orientation states implied by the kinematic chain from `vars.orientations[0]`.
pub fn reconstruct_chain(problem: &ImuProblem<'_>, vars: &ImuVariables) -> Vec<Rotation> {
    let n = problem.len();
    let mut out = Vec::with_capacity(n);
    let Some(&first) = vars.orientations.first() else {
        return out;
    };
    let mut r = first;
    out.push(r);
    for k in 0..n.saturating_sub(1) {
        let u = vars.c * problem.meas[k] - vars.biases[k];
        r = r * exp_map(&(vars.extrinsic * u * problem.dts[k]));
        out.push(r);
    }
    out
}

fn bias_prior(vars: &ImuVariables, w: &CostWeights, grad: Option<&mut [Vec3]>) -> f64 {
    let inv = 1.0 / (w.sigma_nb * w.sigma_nb);
    let mut cost = 0.0;
    let b = &vars.biases;
    match grad {
        Some(g) => {
            for k in 0..b.len().saturating_sub(1) {
                let rho = b[k + 1] - b[k] + b[k] * w.gamma;
                cost += rho.norm_squared() * inv;
                g[k + 1] += rho * (2.0 * inv);
                g[k] += rho * (2.0 * inv * (w.gamma - 1.0));
            }
        }
        None => {
            for k in 0..b.len().saturating_sub(1) {
                let rho = b[k + 1] - b[k] + b[k] * w.gamma;
                cost += rho.norm_squared() * inv;
            }
        }
    }
    cost
}

/// Accumulates the parameter gradient of one step given `grad_xi`, the gradient
/// with respect to the increment ξ(k) = R_{M←I}·u(k)·Δt(k).
#[inline]
fn push_increment_grad(
    grad: &mut ImuGradient,
    vars: &ImuVariables,
    meas: &Vec3,
    u: &Vec3,
    dt: f64,
    k: usize,
    grad_xi: &Vec3,
) {
    let h = vars.extrinsic.transpose() * *grad_xi * dt;
    grad.biases[k] -= h;
    for (i, &(r, c)) in LOWER.iter().enumerate() {
        grad.c[i] += h[r] * meas[c];
    }
    grad.extrinsic += u.cross(&h);
}

/// Cost of one IMU, optionally with its gradient.
pub fn imu_cost(
    problem: &ImuProblem<'_>,
    vars: &ImuVariables,
    w: &CostWeights,
    want_grad: bool,
) -> (f64, Option<ImuGradient>) {
    if w.free_orientation_states {
        free_cost(problem, vars, w, want_grad)
    } else {
        chain_cost(problem, vars, w, want_grad)
    }
}

fn chain_cost(
    problem: &ImuProblem<'_>,
    vars: &ImuVariables,
    w: &CostWeights,
    want_grad: bool,
) -> (f64, Option<ImuGradient>) {
    let n = problem.len();
    let inv_theta = 1.0 / (w.sigma_theta * w.sigma_theta);
    if n == 0 {
        return (0.0, want_grad.then(|| ImuGradient::zeros(1, 0)));
    }
    let mut r = vars.orientations[0];
    let mut cost = 0.0;

    if !want_grad {
        for k in 0..n {
            cost += log_map(&(problem.gt[k].transpose() * r)).norm_squared() * inv_theta;
            if k + 1 < n {
                let u = vars.c * problem.meas[k] - vars.biases[k];
                r = r * exp_map(&(vars.extrinsic * u * problem.dts[k]));
            }
        }
        return (cost + bias_prior(vars, w, None), None);
    }

    let mut local = Vec::with_capacity(n);
    let mut steps: Vec<(Vec3, Vec3, Rotation)> = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n {
        let res = log_map(&(problem.gt[k].transpose() * r));
        cost += res.norm_squared() * inv_theta;
        local.push(res * (2.0 * inv_theta));
        if k + 1 < n {
            let u = vars.c * problem.meas[k] - vars.biases[k];
            let xi = vars.extrinsic * u * problem.dts[k];
            let step = exp_map(&xi);
            r = r * step;
            steps.push((u, xi, step));
        }
    }

    let mut grad = ImuGradient::zeros(1, n);
    let mut g = local[n - 1];
    for k in (0..n - 1).rev() {
        let (u, xi, step) = &steps[k];
        let grad_xi = right_jacobian(xi).transpose() * g;
        push_increment_grad(
            &mut grad,
            vars,
            &problem.meas[k],
            u,
            problem.dts[k],
            k,
            &grad_xi,
        );
        g = local[k] + *step * g;
    }
    grad.orientations[0] = g;
    cost += bias_prior(vars, w, Some(&mut grad.biases));
    (cost, Some(grad))
}

fn free_cost(
    problem: &ImuProblem<'_>,
    vars: &ImuVariables,
    w: &CostWeights,
    want_grad: bool,
) -> (f64, Option<ImuGradient>) {
    let n = problem.len();
    let inv_theta = 1.0 / (w.sigma_theta * w.sigma_theta);
    let inv_kin = 1.0 / (w.sigma_kinematic * w.sigma_kinematic);
    let rs = &vars.orientations;
    let mut cost = 0.0;
    let mut grad = want_grad.then(|| ImuGradient::zeros(n, n));
    for k in 0..n {
        let res = log_map(&(problem.gt[k].transpose() * rs[k]));
        cost += res.norm_squared() * inv_theta;
        if let Some(g) = grad.as_mut() {
            g.orientations[k] += res * (2.0 * inv_theta);
        }
        if k + 1 < n {
            let u = vars.c * problem.meas[k] - vars.biases[k];
            let xi = vars.extrinsic * u * problem.dts[k];
            let d = rs[k].transpose() * rs[k + 1];
            let q = log_map(&(exp_map(&xi).transpose() * d));
            cost += q.norm_squared() * inv_kin;
            if let Some(g) = grad.as_mut() {
                let dq = d * q * (2.0 * inv_kin);
                g.orientations[k + 1] += q * (2.0 * inv_kin);
                g.orientations[k] -= dq;
                let grad_xi = -(left_jacobian(&xi).transpose() * dq);
                push_increment_grad(g, vars, &problem.meas[k], &u, problem.dts[k], k, &grad_xi);
            }
        }
    }
    match grad {
        Some(mut g) => {
            cost += bias_prior(vars, w, Some(&mut g.biases));
            (cost, Some(g))
        }
        None => (cost + bias_prior(vars, w, None), None),
    }
}
