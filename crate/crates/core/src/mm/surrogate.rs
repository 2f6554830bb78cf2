//! Majorizer of the sampled A-CRLB in the position of a single BS.
//!
//! With every other BS fixed, the FIM at target `t_k` splits as
//! `F = U D Uᵀ + M`: the columns of `U` are `v_i + v_n` (and `2v_n` for the
//! monostatic link of BS `n`), `D` carries the matching pathloss weights and
//! `M` collects the links that do not touch BS `n`. Woodbury turns the CRLB
//! into `tr(M⁻¹) − tr(M⁻¹ U Z⁻¹ Uᵀ M⁻¹)` with `Z = D⁻¹ + UᵀM⁻¹U`. The
//! matrix-fractional term is jointly convex in `(U, Z)`, so its tangent
//! plane bounds the negative term from above; the remaining quadratic form
//! in the unit vector `v_n` is bounded with `M⁻¹ ⪯ λ_max(M⁻¹)·I`. What is
//! left is
//!
//! ```text
//! c_k + a2·δ² + a3·δ + q2ᵀ v_n(b),   δ = ‖b − t_k‖^β,
//! ```
//!
//! a global upper bound of the CRLB at `t_k` that touches it at the
//! expansion point. The trust-region model further linearizes `v_n(b)`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{SampleSet, Vec3};
use crate::sensing::{crlb_from_positions, link_geometry, SensingParams, SINGULAR_CONDITION};

/// Coefficients for one (BS, target) pair.
#[derive(Debug, Clone)]
pub struct TargetSurrogate {
    pub target: Vec3,
    pub weight: f64,
    /// FIM contribution of the links not involving BS `n`.
    pub m: Matrix3<f64>,
    pub m_inv: Matrix3<f64>,
    pub u: Matrix3xX<f64>,
    /// Diagonal of `D`.
    pub d: DVector<f64>,
    pub z: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub p: Matrix3xX<f64>,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub q1: Vec3,
    pub q2: Vec3,
    pub lambda_max: f64,
    pub m_tilde: Matrix3<f64>,
    /// Everything independent of `b_n`.
    pub constant: f64,
    /// `constant` minus its closed-form evaluation (rounding only).
    pub closed_form_residual: f64,
    /// CRLB at the expansion point.
    pub value_r: f64,
    /// `v_n`, `‖b_n − t_k‖` and `‖b_n − t_k‖^β` at the expansion point.
    pub v_r: Vec3,
    pub dist_r: f64,
    pub delta_r: f64,
}

/// Surrogate of the sampled objective in the position of BS `n`.
#[derive(Debug, Clone)]
pub struct BsSurrogate {
    pub bs: usize,
    pub expansion: Vec3,
    pub beta: f64,
    pub terms: Vec<TargetSurrogate>,
}

fn inverse_spd(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let eig = SymmetricEigen::new(*m).eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    if !(max > 0.0) || min <= max / SINGULAR_CONDITION {
        return None;
    }
    m.cholesky().map(|c| c.inverse())
}

fn build_term(
    n: usize,
    target: &Vec3,
    weight: f64,
    positions: &[Vec3],
    params: &SensingParams,
) -> std::result::Result<TargetSurrogate, Option<Error>> {
    let big_n = positions.len();
    let kappa = params.kappa_s;
    let beta = params.beta;
    let (units, w) = link_geometry(target, positions, beta).map_err(Some)?;

    // M = κ Σ_{i,j≠n} w_i w_j (v_i+v_j)(v_i+v_j)ᵀ
    let mut w_sum = 0.0;
    let mut s = Vec3::zeros();
    let mut outer = Matrix3::zeros();
    for i in (0..big_n).filter(|i| *i != n) {
        w_sum += w[i];
        s += w[i] * units[i];
        outer += w[i] * units[i] * units[i].transpose();
    }
    let m = 2.0 * kappa * (w_sum * outer + s * s.transpose());
    let m = 0.5 * (m + m.transpose());
    let m_inv = inverse_spd(&m).ok_or(None)?;

    let v_n = units[n];
    let mut u = Matrix3xX::zeros(big_n);
    let mut uc = Matrix3xX::zeros(big_n);
    let mut d = DVector::zeros(big_n);
    let mut d_inv = DVector::zeros(big_n);
    for i in 0..big_n {
        if i == n {
            u.set_column(i, &(2.0 * v_n));
            d[i] = kappa * w[n] * w[n];
        } else {
            u.set_column(i, &(units[i] + v_n));
            uc.set_column(i, &units[i]);
            d[i] = 2.0 * kappa * w[i] * w[n];
        }
        d_inv[i] = 1.0 / d[i];
    }

    let x = m_inv * &u;
    let mut z = u.transpose() * &x;
    for i in 0..big_n {
        z[(i, i)] += d_inv[i];
    }
    let z = 0.5 * (&z + z.transpose());
    let z_inv = z.clone().cholesky().ok_or(None)?.inverse();

    let y = &x * &z_inv;
    // G = Z⁻¹UᵀM⁻²UZ⁻¹ = YᵀY, P = 2M⁻²UZ⁻¹ = 2M⁻¹Y
    let g = y.transpose() * &y;
    let p = 2.0 * m_inv * &y;
    let frac = (&y * x.transpose()).trace();

    // D⁻¹ holds δ²/κ at n and d_m^β·δ/(2κ) elsewhere, with d^β = 1/w
    let a2 = g[(n, n)] / kappa;
    let a3 = (0..big_n).filter(|m| *m != n).map(|m| g[(m, m)] / w[m]).sum::<f64>() / (2.0 * kappa);

    let mut e = DVector::from_element(big_n, 1.0);
    e[n] += 1.0;
    let ge = &g * &e;
    let a1 = e.dot(&ge);
    let q1: Vec3 = 2.0 * m_inv * (&uc * &ge);
    let pe: Vec3 = &p * &e;

    let lambda_max = SymmetricEigen::new(m_inv).eigenvalues.max();
    let m_tilde = m_inv - lambda_max * Matrix3::identity();
    let q2 = q1 - pe + 2.0 * a1 * (m_tilde * v_n);

    let tr_p_u = p.component_mul(&u).sum();
    let tr_p_uc = p.component_mul(&uc).sum();
    let tr_g_z = g.component_mul(&z).sum();
    let tr_g_c = g.component_mul(&(uc.transpose() * m_inv * &uc)).sum();
    let closed_form = m_inv.trace() - frac + tr_p_u - tr_g_z + tr_g_c - tr_p_uc
        + a1 * (lambda_max - v_n.dot(&(m_tilde * v_n)));
    // At the expansion point the majorizer equals the CRLB exactly. The
    // closed-form constant cancels large terms when M is poorly conditioned,
    // so anchor it on the directly computed CRLB instead.
    let dist_r = (positions[n] - target).norm();
    let delta_r = dist_r.powf(beta);
    let varying = a2 * delta_r * delta_r + a3 * delta_r + q2.dot(&v_n);
    let full = crlb_from_positions(target, positions, params).map_err(Some)?;
    let (value_r, constant) = if full.is_finite() { (full, full - varying) } else { (closed_form + varying, closed_form) };

    Ok(TargetSurrogate {
        target: *target,
        weight,
        m,
        m_inv,
        u,
        d,
        z,
        g,
        p,
        a1,
        a2,
        a3,
        q1,
        q2,
        lambda_max,
        m_tilde,
        constant,
        closed_form_residual: constant - closed_form,
        value_r,
        v_r: v_n,
        dist_r,
        delta_r,
    })
}

/// Build the per-target coefficients for BS `n` at the current deployment.
///
/// Fails with [`Error::SingularRemainder`] when the links not involving BS
/// `n` leave some target unlocalizable; the caller skips that update.
pub fn build_surrogate(n: usize, positions: &[Vec3], targets: &SampleSet, params: &SensingParams) -> Result<BsSurrogate> {
    if n >= positions.len() {
        return Err(crate::error::invalid("BS index out of range"));
    }
    let terms = targets
        .iter()
        .enumerate()
        .map(|(k, (t, w))| {
            build_term(n, t, w, positions, params).map_err(|e| e.unwrap_or(Error::SingularRemainder { bs: n, target: k }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BsSurrogate { bs: n, expansion: positions[n], beta: params.beta, terms })
}

impl TargetSurrogate {
    /// Majorizer with `v_n` given, written as offsets from the expansion
    /// point so nearby values do not cancel large terms.
    fn offset_value(&self, b: &Vec3, beta: f64, v: &Vec3) -> f64 {
        let delta = (b - self.target).norm().powf(beta);
        let dd = delta - self.delta_r;
        self.value_r + self.a2 * dd * (delta + self.delta_r) + self.a3 * dd + self.q2.dot(&(v - self.v_r))
    }

    /// Tangent of `v_n(b)` at the expansion point, evaluated at `b`.
    fn linearized_unit(&self, b: &Vec3, expansion: &Vec3) -> Vec3 {
        let v = self.v_r;
        let step = b - expansion;
        self.v_r + (step - v * v.dot(&step)) / self.dist_r
    }

    /// `a2·δ² + a3·δ + q2ᵀv` with the exact unit vector.
    pub fn majorizer(&self, b: &Vec3, beta: f64) -> f64 {
        let diff = b - self.target;
        self.offset_value(b, beta, &(diff / diff.norm()))
    }
}

impl BsSurrogate {
    /// Trust-region model: the majorizer with `v_n(b)` linearized.
    /// Includes the constants, so at the expansion point it equals the
    /// sampled A-CRLB.
    pub fn value(&self, b: &Vec3) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * t.offset_value(b, self.beta, &t.linearized_unit(b, &self.expansion)))
            .sum()
    }

    pub fn gradient(&self, b: &Vec3) -> Vec3 {
        let beta = self.beta;
        self.terms
            .iter()
            .map(|t| {
                let diff = b - t.target;
                let dist = diff.norm();
                let delta = dist.powf(beta);
                let grad_delta = if dist > 0.0 { beta * dist.powf(beta - 2.0) * diff } else { Vec3::zeros() };
                let v = t.v_r;
                let lin = (t.q2 - v * v.dot(&t.q2)) / t.dist_r;
                t.weight * ((2.0 * t.a2 * delta + t.a3) * grad_delta + lin)
            })
            .sum()
    }

    pub fn hessian(&self, b: &Vec3) -> Matrix3<f64> {
        let beta = self.beta;
        self.terms
            .iter()
            .map(|t| {
                let (a2, a3) = (t.a2, t.a3);
                // φ(r) = a2 r^{2β} + a3 r^β
                radial_hessian(&(b - t.target), |r| {
                    let d1 = 2.0 * beta * a2 * r.powf(2.0 * beta - 1.0) + beta * a3 * r.powf(beta - 1.0);
                    let d2 = 2.0 * beta * (2.0 * beta - 1.0) * a2 * r.powf(2.0 * beta - 2.0)
                        + beta * (beta - 1.0) * a3 * r.powf(beta - 2.0);
                    (d1, d2)
                }) * t.weight
            })
            .sum()
    }

    /// Global upper bound of the sampled A-CRLB in `b` (others fixed).
    pub fn majorizer(&self, b: &Vec3) -> f64 {
        self.terms.iter().map(|t| t.weight * t.majorizer(b, self.beta)).sum()
    }
}

/// Hessian of `x ↦ φ(‖x‖)` given `r ↦ (φ'(r), φ''(r))`.
pub(crate) fn radial_hessian(x: &Vec3, derivs: impl Fn(f64) -> (f64, f64)) -> Matrix3<f64> {
    let r = x.norm();
    if r == 0.0 {
        // φ'(r)/r → φ''(0) for the smooth radial functions used here
        let (_, d2) = derivs(0.0);
        return if d2.is_finite() { d2 * Matrix3::identity() } else { Matrix3::zeros() };
    }
    let u = x / r;
    let (d1, d2) = derivs(r);
    let uu = u * u.transpose();
    d2 * uu + (d1 / r) * (Matrix3::identity() - uu)
}

/// Evaluate `surrogate` at `b`.
pub fn surrogate_value(surrogate: &BsSurrogate, b: &Vec3) -> f64 {
    surrogate.value(b)
}

/// `−tr(M⁻¹ U Z⁻¹ Uᵀ M⁻¹)`.
pub fn matrix_fractional(m_inv: &Matrix3<f64>, u: &Matrix3xX<f64>, z: &DMatrix<f64>) -> Option<f64> {
    let x = m_inv * u;
    let z_inv = z.clone().cholesky()?.inverse();
    Some(-(&x * z_inv * x.transpose()).trace())
}

/// Tangent-plane upper bound of [`matrix_fractional`] around `(u_r, z_r)`.
pub fn matrix_fractional_tangent(
    m_inv: &Matrix3<f64>,
    u_r: &Matrix3xX<f64>,
    z_r: &DMatrix<f64>,
    u: &Matrix3xX<f64>,
    z: &DMatrix<f64>,
) -> Option<f64> {
    let x = m_inv * u_r;
    let z_inv = z_r.clone().cholesky()?.inverse();
    let y = &x * &z_inv;
    let p = 2.0 * m_inv * &y;
    let g = y.transpose() * &y;
    let value_r = -(&y * x.transpose()).trace();
    Some(value_r - p.component_mul(&(u - u_r)).sum() + g.component_mul(&(z - z_r)).sum())
}

/// Upper bound of `vᵀ M⁻¹ v` for unit `v`, linear in `v`, tangent at `v_r`.
pub fn quadratic_form_bound(m_inv: &Matrix3<f64>, v_r: &Vec3, v: &Vec3) -> f64 {
    let lambda = SymmetricEigen::new(*m_inv).eigenvalues.max();
    let m_tilde = m_inv - lambda * Matrix3::identity();
    2.0 * (m_tilde * v_r).dot(&(v - v_r)) + lambda + v_r.dot(&(m_tilde * v_r))
}
