//! Flexible-joint robot plants.
//!
//! A plant couples link dynamics `M(q) q̈ + C(q, q̇) q̇ + ∇V(q)` to motor inertias `J`
//! through a joint spring `K` and damper `D`. In momentum coordinates
//! `(q, θ, p, s)` with `p = M(q) q̇` and `s = J θ̇` the dynamics are
//!
//! ```text
//! q̇ = M⁻¹p
//! θ̇ = J⁻¹s
//! ṗ = −∇V(q) + K(θ − q) + D(J⁻¹s − M⁻¹p) − ½∇_q(pᵀM⁻¹p) + τ_e
//! ṡ = −K(θ − q) − D(J⁻¹s − M⁻¹p) + τ
//! ```
//!
//! with stored energy `½pᵀM⁻¹p + ½sᵀJ⁻¹s + ½(θ−q)ᵀK(θ−q) + V(q)`.

mod two_link;

pub use two_link::{two_link_arm, TwoLinkArm, TwoLinkParams, GRAVITY};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Configuration-dependent link dynamics plus the constant joint/motor matrices.
///
/// Implementors provide `M(q)` and its partial derivatives; the Coriolis matrix is
/// built from Christoffel symbols so that `Ṁ − 2C` is skew-symmetric.
pub trait RobotModel: Send + Sync {
    fn dof(&self) -> usize;

    fn mass(&self, q: &Vector) -> Mat;

    /// `∂M/∂q_k` at `q`.
    fn mass_partial(&self, q: &Vector, k: usize) -> Mat;

    fn potential(&self, q: &Vector) -> f64;

    /// `∇_q V(q)`.
    fn gravity_grad(&self, q: &Vector) -> Vector;

    fn motor_inertia(&self) -> &Mat;

    fn stiffness(&self) -> &Mat;

    fn damping(&self) -> &Mat;

    /// True when `M` does not depend on `q` (assumption A1 of the linear design).
    fn has_constant_mass(&self) -> bool {
        false
    }

    fn mass_inverse(&self, q: &Vector) -> Result<Mat> {
        linalg::inverse(&self.mass(q), "mass matrix M(q)")
    }

    fn motor_inertia_inverse(&self) -> Result<Mat> {
        linalg::inverse(self.motor_inertia(), "motor inertia J")
    }

    fn stiffness_inverse(&self) -> Result<Mat> {
        linalg::inverse(self.stiffness(), "joint stiffness K")
    }

    /// `Ṁ = Σ_k ∂M/∂q_k · q̇_k`.
    fn mass_rate(&self, q: &Vector, qdot: &Vector) -> Mat {
        let n = self.dof();
        let mut out = Mat::zeros(n, n);
        if self.has_constant_mass() {
            return out;
        }
        for k in 0..n {
            if qdot[k] != 0.0 {
                out += self.mass_partial(q, k) * qdot[k];
            }
        }
        out
    }

    /// Christoffel-symbol Coriolis matrix,
    /// `C_ij = Σ_k ½(∂M_ij/∂q_k + ∂M_ik/∂q_j − ∂M_jk/∂q_i) q̇_k`.
    fn coriolis(&self, q: &Vector, qdot: &Vector) -> Mat {
        let n = self.dof();
        let mut c = Mat::zeros(n, n);
        if self.has_constant_mass() {
            return c;
        }
        let partials: Vec<Mat> = (0..n).map(|k| self.mass_partial(q, k)).collect();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    let gamma =
                        0.5 * (partials[k][(i, j)] + partials[j][(i, k)] - partials[i][(j, k)]);
                    acc += gamma * qdot[k];
                }
                c[(i, j)] = acc;
            }
        }
        c
    }

    /// `∇_q(½ pᵀM(q)⁻¹p) = −½ [vᵀ ∂_kM v]_k` with `v = M⁻¹p`.
    fn kinetic_gradient(&self, q: &Vector, p: &Vector) -> Result<Vector> {
        let n = self.dof();
        if self.has_constant_mass() {
            return Ok(Vector::zeros(n));
        }
        let v = self.mass_inverse(q)? * p;
        Ok(Vector::from_fn(n, |k, _| {
            -0.5 * v.dot(&(self.mass_partial(q, k) * &v))
        }))
    }
}

/// Constant-mass plant without gravity: the linear case.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRobotParams {
    mass: Mat,
    motor_inertia: Mat,
    stiffness: Mat,
    damping: Mat,
    mass_inv: Mat,
}

impl LinearRobotParams {
    /// Validates `M, J, K` SPD and `D` symmetric PSD, all `n × n`.
    pub fn new(mass: Mat, motor_inertia: Mat, stiffness: Mat, damping: Mat) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("plant must have at least one joint".into()));
        }
        linalg::require_square(&mass, n, "M")?;
        linalg::require_square(&motor_inertia, n, "J")?;
        linalg::require_square(&stiffness, n, "K")?;
        linalg::require_square(&damping, n, "D")?;
        linalg::require_spd(&mass, "M")?;
        linalg::require_spd(&motor_inertia, "J")?;
        linalg::require_spd(&stiffness, "K")?;
        linalg::require_psd(&damping, "D")?;
        let mass_inv = linalg::inverse(&mass, "M")?;
        Ok(Self {
            mass,
            motor_inertia,
            stiffness,
            damping,
            mass_inv,
        })
    }

    /// One-joint plant from scalars.
    pub fn scalar(mass: f64, motor_inertia: f64, stiffness: f64, damping: f64) -> Result<Self> {
        Self::new(
            linalg::diag(&[mass]),
            linalg::diag(&[motor_inertia]),
            linalg::diag(&[stiffness]),
            linalg::diag(&[damping]),
        )
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass_matrix(&self) -> &Mat {
        &self.mass
    }
}

impl RobotModel for LinearRobotParams {
    fn dof(&self) -> usize {
        self.n()
    }

    fn mass(&self, _q: &Vector) -> Mat {
        self.mass.clone()
    }

    fn mass_partial(&self, _q: &Vector, _k: usize) -> Mat {
        Mat::zeros(self.n(), self.n())
    }

    fn potential(&self, _q: &Vector) -> f64 {
        0.0
    }

    fn gravity_grad(&self, _q: &Vector) -> Vector {
        Vector::zeros(self.n())
    }

    fn motor_inertia(&self) -> &Mat {
        &self.motor_inertia
    }

    fn stiffness(&self) -> &Mat {
        &self.stiffness
    }

    fn damping(&self) -> &Mat {
        &self.damping
    }

    fn has_constant_mass(&self) -> bool {
        true
    }

    fn mass_inverse(&self, _q: &Vector) -> Result<Mat> {
        Ok(self.mass_inv.clone())
    }
}

/// Plant state in momentum coordinates. Also used for its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopState {
    pub q: Vector,
    pub theta: Vector,
    pub p: Vector,
    pub s: Vector,
}

impl OpenLoopState {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: Vector::zeros(n),
            theta: Vector::zeros(n),
            p: Vector::zeros(n),
            s: Vector::zeros(n),
        }
    }

    /// Builds the momenta from velocities via `p = M(q) q̇`, `s = J θ̇`.
    pub fn from_velocities(
        model: &dyn RobotModel,
        q: Vector,
        theta: Vector,
        qdot: &Vector,
        thetadot: &Vector,
    ) -> Self {
        let p = model.mass(&q) * qdot;
        let s = model.motor_inertia() * thetadot;
        Self { q, theta, p, s }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        linalg::require_len(&self.q, n, "q")?;
        linalg::require_len(&self.theta, n, "theta")?;
        linalg::require_len(&self.p, n, "p")?;
        linalg::require_len(&self.s, n, "s")
    }

    pub fn to_vector(&self) -> Vector {
        linalg::stack(&[&self.q, &self.theta, &self.p, &self.s])
    }

    pub fn from_vector(v: &Vector, n: usize) -> Self {
        Self {
            q: v.rows(0, n).into_owned(),
            theta: v.rows(n, n).into_owned(),
            p: v.rows(2 * n, n).into_owned(),
            s: v.rows(3 * n, n).into_owned(),
        }
    }
}

/// `H_OL = ½pᵀM⁻¹p + ½sᵀJ⁻¹s + ½(θ−q)ᵀK(θ−q) + V(q)`.
pub fn open_loop_energy(x: &OpenLoopState, m: &dyn RobotModel) -> Result<f64> {
    x.check(m.dof())?;
    let m_inv = m.mass_inverse(&x.q)?;
    let j_inv = m.motor_inertia_inverse()?;
    let defl = &x.theta - &x.q;
    Ok(0.5 * x.p.dot(&(m_inv * &x.p))
        + 0.5 * x.s.dot(&(j_inv * &x.s))
        + 0.5 * defl.dot(&(m.stiffness() * &defl))
        + m.potential(&x.q))
}

/// Joint torque transmitted by the elastic coupling, `τ_a = K(θ − q) + D(θ̇ − q̇)`.
pub fn joint_torque(x: &OpenLoopState, m: &dyn RobotModel) -> Result<Vector> {
    let qdot = m.mass_inverse(&x.q)? * &x.p;
    let thetadot = m.motor_inertia_inverse()? * &x.s;
    Ok(m.stiffness() * (&x.theta - &x.q) + m.damping() * (thetadot - qdot))
}

/// Open-loop port-Hamiltonian vector field with external torque `tau_e` on the
/// links and motor torque `tau`.
pub fn open_loop_field(
    x: &OpenLoopState,
    tau_e: &Vector,
    tau: &Vector,
    m: &dyn RobotModel,
) -> Result<OpenLoopState> {
    let n = m.dof();
    x.check(n)?;
    linalg::require_len(tau_e, n, "tau_e")?;
    linalg::require_len(tau, n, "tau")?;
    let qdot = m.mass_inverse(&x.q)? * &x.p;
    let thetadot = m.motor_inertia_inverse()? * &x.s;
    let spring = m.stiffness() * (&x.theta - &x.q);
    let damper = m.damping() * (&thetadot - &qdot);
    let pdot = -m.gravity_grad(&x.q) + &spring + &damper - m.kinetic_gradient(&x.q, &x.p)?
        + tau_e;
    let sdot = -spring - damper + tau;
    Ok(OpenLoopState {
        q: qdot,
        theta: thetadot,
        p: pdot,
        s: sdot,
    })
}

/// The constant-mass field written directly from the linear equations, without
/// going through the [`RobotModel`] providers.
pub fn linear_open_loop_field(
    x: &OpenLoopState,
    tau_e: &Vector,
    tau: &Vector,
    params: &LinearRobotParams,
) -> Result<OpenLoopState> {
    let n = params.n();
    x.check(n)?;
    linalg::require_len(tau_e, n, "tau_e")?;
    linalg::require_len(tau, n, "tau")?;
    let qdot = linalg::solve(&params.mass, &x.p, "M")?;
    let thetadot = linalg::solve(&params.motor_inertia, &x.s, "J")?;
    let coupling =
        &params.stiffness * (&x.theta - &x.q) + &params.damping * (&thetadot - &qdot);
    Ok(OpenLoopState {
        q: qdot,
        theta: thetadot,
        p: &coupling + tau_e,
        s: -coupling + tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_plant() -> LinearRobotParams {
        LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn energy_zero_at_equilibrium() {
        let m = reference_plant();
        let x = OpenLoopState {
            q: v(&[0.4]),
            theta: v(&[0.4]),
            p: v(&[0.0]),
            s: v(&[0.0]),
        };
        assert_eq!(open_loop_energy(&x, &m).unwrap(), 0.0);
    }

    #[test]
    fn energy_spring_and_kinetic_terms() {
        let m = reference_plant();
        let mut x = OpenLoopState::zeros(1);
        x.theta[0] = 1e-3;
        assert!((open_loop_energy(&x, &m).unwrap() - 0.5).abs() < 1e-12);
        let mut x = OpenLoopState::zeros(1);
        x.p[0] = 3.0;
        assert!((open_loop_energy(&x, &m).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn field_zero_at_equilibrium() {
        let m = reference_plant();
        let z = Vector::zeros(1);
        let f = open_loop_field(&OpenLoopState::zeros(1), &z, &z, &m).unwrap();
        assert_eq!(f.to_vector().amax(), 0.0);
    }

    #[test]
    fn field_of_deflected_spring() {
        let m = reference_plant();
        let mut x = OpenLoopState::zeros(1);
        x.theta[0] = 1e-3;
        let z = Vector::zeros(1);
        let f = open_loop_field(&x, &z, &z, &m).unwrap();
        assert_eq!(f.q[0], 0.0);
        assert_eq!(f.theta[0], 0.0);
        assert!((f.p[0] - 1e3).abs() < 1e-9);
        assert!((f.s[0] + 1e3).abs() < 1e-9);
    }

    #[test]
    fn generic_field_matches_linear_equations() {
        let m = LinearRobotParams::new(
            Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            linalg::diag(&[0.5, 0.7]),
            Mat::from_row_slice(2, 2, &[900.0, 50.0, 50.0, 700.0]),
            Mat::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]),
        )
        .unwrap();
        let x = OpenLoopState {
            q: v(&[0.1, -0.2]),
            theta: v(&[0.12, -0.19]),
            p: v(&[0.5, 0.3]),
            s: v(&[-0.2, 0.4]),
        };
        let te = v(&[1.0, -2.0]);
        let tau = v(&[0.3, 0.1]);
        let a = open_loop_field(&x, &te, &tau, &m).unwrap().to_vector();
        let b = linear_open_loop_field(&x, &te, &tau, &m).unwrap().to_vector();
        assert!(linalg::rel_diff(&a, &b, 1e-300) <= 1e-12);
    }

    #[test]
    fn invalid_plants_rejected() {
        assert!(LinearRobotParams::scalar(3.0, 3.0, 1e6, -1.0).is_err());
        assert!(LinearRobotParams::scalar(0.0, 3.0, 1e6, 1.0).is_err());
        assert!(LinearRobotParams::scalar(3.0, 3.0, 1e6, 0.0).is_ok());
    }

    #[test]
    fn dimension_mismatch_reported() {
        let m = reference_plant();
        let z = Vector::zeros(2);
        let err = open_loop_field(&OpenLoopState::zeros(1), &z, &z, &m).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
