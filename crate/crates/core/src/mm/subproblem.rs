//! Trust-region subproblem for one BS.
//!
//! Minimizes the convex model of [`BsSurrogate`] over the ball
//! `‖b − b_r‖ ≤ ε`, subject to the linearized area-rate constraint.
//! The auxiliary variables of the epigraph form are eliminated (they bind at
//! the optimum), leaving three variables. Both the ball and the rate
//! inequality enter a log barrier, minimized by damped Newton steps with
//! an increasing barrier weight.

use nalgebra::Matrix3;

use crate::comm::CommParams;
use crate::error::{Error, Result};
use crate::geometry::{SampleSet, Vec3};
use crate::mm::surrogate::{radial_hessian, BsSurrogate};

/// Convex lower model of the area rate in the position of one BS:
/// `Σ_j c_j‖b − u_j‖^α ≤ rhs` is equivalent to `(1/J)Σ R̃_j ≥ R_th`.
#[derive(Debug, Clone)]
pub struct LinearizedRate {
    pub users: Vec<Vec3>,
    pub coef: Vec<f64>,
    pub alpha: f64,
    pub rhs: f64,
}

impl LinearizedRate {
    /// Tangent (in `z_j = ‖b − u_j‖^α`) of every user's rate at the current
    /// position of BS `n`; `floor` is the required area rate.
    pub fn build(n: usize, positions: &[Vec3], users: &SampleSet, comm: &CommParams, floor: f64) -> Result<Self> {
        let a = comm.expected_gain() / comm.sigma_c2;
        let mut coef = Vec::with_capacity(users.len());
        let mut rhs = -floor;
        for (u, w) in users.iter() {
            let mut c = 1.0;
            for (m, b) in positions.iter().enumerate() {
                if m == n {
                    continue;
                }
                let d = (b - u).norm();
                if d == 0.0 {
                    return Err(Error::Coincident { bs: m, x: u.x, y: u.y, z: u.z });
                }
                c += a * d.powf(-comm.alpha);
            }
            let d_n = (positions[n] - u).norm();
            if d_n == 0.0 {
                return Err(Error::Coincident { bs: n, x: u.x, y: u.y, z: u.z });
            }
            let z_r = d_n.powf(comm.alpha);
            let inner = c + a / z_r;
            let slope = a / (z_r * z_r * inner * std::f64::consts::LN_2);
            coef.push(w * slope);
            rhs += w * (inner.log2() + slope * z_r);
        }
        Ok(Self { users: users.points().to_vec(), coef, alpha: comm.alpha, rhs })
    }

    /// Constraint function; feasible iff `≤ 0`.
    pub fn value(&self, b: &Vec3) -> f64 {
        self.users.iter().zip(&self.coef).map(|(u, c)| c * (b - u).norm().powf(self.alpha)).sum::<f64>() - self.rhs
    }

    pub fn gradient(&self, b: &Vec3) -> Vec3 {
        self.users
            .iter()
            .zip(&self.coef)
            .map(|(u, c)| {
                let diff = b - u;
                let d = diff.norm();
                if d == 0.0 {
                    Vec3::zeros()
                } else {
                    c * self.alpha * d.powf(self.alpha - 2.0) * diff
                }
            })
            .sum()
    }

    pub fn hessian(&self, b: &Vec3) -> Matrix3<f64> {
        let alpha = self.alpha;
        self.users
            .iter()
            .zip(&self.coef)
            .map(|(u, c)| {
                radial_hessian(&(b - u), |r| {
                    (c * alpha * r.powf(alpha - 1.0), c * alpha * (alpha - 1.0) * r.powf(alpha - 2.0))
                })
            })
            .sum()
    }

    /// Linearized area rate at `b` minus the floor it was built with.
    pub fn margin(&self, b: &Vec3) -> f64 {
        -self.value(b)
    }
}

/// Value, gradient and Hessian of a smooth convex function.
pub type SmoothFn<'a> = &'a dyn Fn(&Vec3) -> (f64, Vec3, Matrix3<f64>);

#[derive(Debug, Clone, Copy)]
pub struct BallSolution {
    pub point: Vec3,
    pub value: f64,
    /// Bound on the optimality gap in objective value when the barrier
    /// method terminates normally.
    pub gap: f64,
    pub iterations: usize,
}

const GROWTH: f64 = 16.0;
const MAX_NEWTON: usize = 60;
const MAX_OUTER: usize = 80;

/// Log-barrier Newton method for `min f` over the ball `‖x − center‖ ≤
/// radius`, intersected with `g ≤ 0` when a constraint is given. `start`
/// must be strictly feasible. Stops once the barrier gap `m/t` is below
/// `gap_tol`.
fn barrier_solve(
    f: SmoothFn<'_>,
    g: Option<SmoothFn<'_>>,
    center: &Vec3,
    radius: f64,
    start: &Vec3,
    gap_tol: f64,
) -> BallSolution {
    let r2 = radius * radius;
    let m = if g.is_some() { 2.0 } else { 1.0 };
    let slack_ball = |x: &Vec3| r2 - (x - center).norm_squared();
    // barrier value, gradient, Hessian; None outside the domain
    let barrier = |x: &Vec3| -> Option<(f64, Vec3, Matrix3<f64>)> {
        let s = slack_ball(x);
        if !(s > 0.0) {
            return None;
        }
        let dx = x - center;
        let mut val = -s.ln();
        let mut grad = 2.0 * dx / s;
        let mut hess = Matrix3::identity() * (2.0 / s) + (4.0 / (s * s)) * dx * dx.transpose();
        if let Some(g) = g {
            let (gv, gg, gh) = g(x);
            if !(gv < 0.0) {
                return None;
            }
            val -= (-gv).ln();
            grad += gg / -gv;
            hess += gh / -gv + gg * gg.transpose() / (gv * gv);
        }
        Some((val, grad, hess))
    };

    let mut x = *start;
    let (_, df0, _) = f(&x);
    let slope = df0.norm() * radius;
    let mut t = if slope > 0.0 { m / slope } else { 1.0 };
    let mut iterations = 0;
    for _ in 0..MAX_OUTER {
        for _ in 0..MAX_NEWTON {
            let (fv, fg, fh) = f(&x);
            let Some((bv, bg, bh)) = barrier(&x) else { break };
            let grad = t * fg + bg;
            let hess = t * fh + bh;
            let Some(step) = hess.cholesky().map(|c| c.solve(&(-grad))) else { break };
            let decrement = -grad.dot(&step);
            if !(decrement > 1e-14) {
                break;
            }
            let phi0 = t * fv + bv;
            let mut lambda = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = x + lambda * step;
                if let Some((bv1, _, _)) = barrier(&trial) {
                    let phi1 = t * f(&trial).0 + bv1;
                    if phi1 <= phi0 - 0.25 * lambda * decrement {
                        x = trial;
                        moved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            iterations += 1;
            if !moved || decrement < 1e-10 {
                break;
            }
        }
        if m / t <= gap_tol {
            break;
        }
        t *= GROWTH;
    }
    let value = f(&x).0;
    let gap = if value.is_finite() { m / t } else { f64::INFINITY };
    BallSolution { point: x, value, gap, iterations }
}

/// Minimize a smooth convex function over `‖x − center‖ ≤ radius` to an
/// absolute optimality gap of `gap_tol`.
pub fn minimize_on_ball(f: SmoothFn<'_>, center: &Vec3, radius: f64, gap_tol: f64) -> BallSolution {
    barrier_solve(f, None, center, radius, center, gap_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubproblemStatus {
    /// Rate constraint absent or inactive.
    Free,
    /// Rate constraint present and satisfied at the returned point.
    RateConstrained,
    /// No point of the ball satisfies the linearized rate constraint; the
    /// expansion point is returned.
    Blocked,
}

#[derive(Debug, Clone, Copy)]
pub struct SubproblemResult {
    pub point: Vec3,
    pub model_value: f64,
    pub status: SubproblemStatus,
    /// Optimality gap bound of the returned point for the model.
    pub gap: f64,
}

/// Candidate position for the BS of `surrogate` inside the trust ball.
///
/// `tol` is relative to the largest first-order change of the model over
/// the ball, `radius·‖∇model(b_r)‖`.
pub fn solve_subproblem(
    surrogate: &BsSurrogate,
    rate: Option<&LinearizedRate>,
    epsilon: f64,
    tol: f64,
) -> SubproblemResult {
    let center = surrogate.expansion;
    let model_r = surrogate.value(&center);
    let stay = |status| SubproblemResult { point: center, model_value: model_r, status, gap: 0.0 };
    if !(epsilon > 1e-12 * (1.0 + center.norm())) {
        return stay(SubproblemStatus::Free);
    }
    let model = |b: &Vec3| (surrogate.value(b), surrogate.gradient(b), surrogate.hessian(b));
    let scale = epsilon * surrogate.gradient(&center).norm();
    let gap_tol = (tol * scale).max(f64::MIN_POSITIVE);

    let Some(rate) = rate else {
        let sol = minimize_on_ball(&model, &center, epsilon, gap_tol);
        return finish(sol, SubproblemStatus::Free, model_r, &center, true);
    };
    let constraint = |b: &Vec3| (rate.value(b), rate.gradient(b), rate.hessian(b));
    let c_center = rate.value(&center);
    let start = if c_center < 0.0 {
        center
    } else {
        // phase I: most feasible point of the ball
        let c_scale = epsilon * rate.gradient(&center).norm();
        let best = minimize_on_ball(&constraint, &center, epsilon, (1e-3 * c_scale).max(f64::MIN_POSITIVE));
        if !(best.value < 0.0) {
            return stay(SubproblemStatus::Blocked);
        }
        best.point
    };
    let sol = barrier_solve(&model, Some(&constraint), &center, epsilon, &start, gap_tol);
    finish(sol, SubproblemStatus::RateConstrained, model_r, &center, c_center <= 0.0)
}

/// Never return a point the model rates worse than a feasible expansion point.
fn finish(sol: BallSolution, status: SubproblemStatus, model_r: f64, center: &Vec3, center_ok: bool) -> SubproblemResult {
    if !sol.value.is_finite() || (center_ok && sol.value > model_r) {
        return SubproblemResult { point: *center, model_value: model_r, status, gap: sol.gap };
    }
    SubproblemResult { point: sol.point, model_value: sol.value, status, gap: sol.gap }
}
