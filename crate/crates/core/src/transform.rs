//! Change of coordinates between the plant chart `(q, θ, p, s)` and the closed-loop
//! chart `(q, φ, p, z)`:
//!
//! ```text
//! φ = K_e⁻¹(K_e − K) q + K_e⁻¹K θ
//! z = J_e K_e⁻¹(K_e − K) M(q)⁻¹ p + J_e K_e⁻¹ K J⁻¹ s
//! ```
//!
//! In the new chart the controlled robot is again a flexible-joint mechanism with
//! motor inertia `J_e`, joint stiffness `K_e` and joint damping `D_e`.

use crate::control::{gains_at, nonlinear_control, ImpedanceGains, ShapedParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{open_loop_field, OpenLoopState, RobotModel};

/// Closed-loop state; also used for its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub q: Vector,
    pub phi: Vector,
    pub p: Vector,
    pub z: Vector,
}

impl ClosedLoopState {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: Vector::zeros(n),
            phi: Vector::zeros(n),
            p: Vector::zeros(n),
            z: Vector::zeros(n),
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        linalg::require_len(&self.q, n, "q")?;
        linalg::require_len(&self.phi, n, "phi")?;
        linalg::require_len(&self.p, n, "p")?;
        linalg::require_len(&self.z, n, "z")
    }

    pub fn to_vector(&self) -> Vector {
        linalg::stack(&[&self.q, &self.phi, &self.p, &self.z])
    }

    pub fn from_vector(v: &Vector, n: usize) -> Self {
        Self {
            q: v.rows(0, n).into_owned(),
            phi: v.rows(n, n).into_owned(),
            p: v.rows(2 * n, n).into_owned(),
            z: v.rows(3 * n, n).into_owned(),
        }
    }
}

/// Precomputed constant blocks of the coordinate change for one plant/shaping pair.
#[derive(Debug, Clone)]
pub struct ShapingTransform {
    n: usize,
    stiffness: Mat,
    stiffness_inv: Mat,
    motor_inertia: Mat,
    motor_inertia_inv: Mat,
    shaped_stiffness: Mat,
    shaped_inertia: Mat,
    shaped_inertia_inv: Mat,
    /// K_e⁻¹(K_e − K)
    phi_from_q: Mat,
    /// K_e⁻¹K
    phi_from_theta: Mat,
    /// J_e K_e⁻¹(K_e − K)
    z_from_qdot: Mat,
    /// J_e K_e⁻¹ K J⁻¹
    z_from_s: Mat,
}

impl ShapingTransform {
    pub fn new(sp: &ShapedParams, m: &dyn RobotModel) -> Result<Self> {
        let n = m.dof();
        linalg::require_square(&sp.inertia, n, "J_e")?;
        linalg::require_square(&sp.stiffness, n, "K_e")?;
        linalg::require_square(&sp.damping, n, "D_e")?;
        let ke_inv = linalg::try_inverse(&sp.stiffness)
            .ok_or_else(|| Error::TransformSingular("K_e is singular".into()))?;
        let je_inv = linalg::try_inverse(&sp.inertia)
            .ok_or_else(|| Error::TransformSingular("J_e is singular".into()))?;
        let k = m.stiffness().clone();
        let k_inv = m.stiffness_inverse()?;
        let j = m.motor_inertia().clone();
        let j_inv = m.motor_inertia_inverse()?;
        let ke_minus_k = &sp.stiffness - &k;
        let phi_from_q = &ke_inv * &ke_minus_k;
        let phi_from_theta = &ke_inv * &k;
        let z_from_qdot = &sp.inertia * &phi_from_q;
        let z_from_s = &sp.inertia * &phi_from_theta * &j_inv;
        Ok(Self {
            n,
            stiffness: k,
            stiffness_inv: k_inv,
            motor_inertia: j,
            motor_inertia_inv: j_inv,
            shaped_stiffness: sp.stiffness.clone(),
            shaped_inertia: sp.inertia.clone(),
            shaped_inertia_inv: je_inv,
            phi_from_q,
            phi_from_theta,
            z_from_qdot,
            z_from_s,
        })
    }

    pub fn to_closed(&self, x: &OpenLoopState, m: &dyn RobotModel) -> Result<ClosedLoopState> {
        x.check(self.n)?;
        let qdot = m.mass_inverse(&x.q)? * &x.p;
        Ok(ClosedLoopState {
            q: x.q.clone(),
            phi: &self.phi_from_q * &x.q + &self.phi_from_theta * &x.theta,
            p: x.p.clone(),
            z: &self.z_from_qdot * qdot + &self.z_from_s * &x.s,
        })
    }

    pub fn from_closed(&self, y: &ClosedLoopState, m: &dyn RobotModel) -> Result<OpenLoopState> {
        y.check(self.n)?;
        let ke_minus_k = &self.shaped_stiffness - &self.stiffness;
        let theta = &self.stiffness_inv * (&self.shaped_stiffness * &y.phi - &ke_minus_k * &y.q);
        let qdot = m.mass_inverse(&y.q)? * &y.p;
        let s = &self.motor_inertia
            * &self.stiffness_inv
            * (&self.shaped_stiffness * &self.shaped_inertia_inv * &y.z - ke_minus_k * qdot);
        Ok(OpenLoopState {
            q: y.q.clone(),
            theta,
            p: y.p.clone(),
            s,
        })
    }

    /// `φ̇ = K_e⁻¹((K_e − K) q̇ + K θ̇)` from plant velocities.
    pub fn phi_rate(&self, qdot: &Vector, thetadot: &Vector) -> Vector {
        &self.phi_from_q * qdot + &self.phi_from_theta * thetadot
    }

    /// Time derivative of the closed-loop coordinates along a plant trajectory with
    /// derivative `f` at `x`. The `z` block carries the `d/dt M(q)⁻¹` term.
    pub fn push_forward(
        &self,
        x: &OpenLoopState,
        f: &OpenLoopState,
        m: &dyn RobotModel,
    ) -> Result<ClosedLoopState> {
        let m_inv = m.mass_inverse(&x.q)?;
        let qdot = &f.q;
        let mut qddot = &m_inv * &f.p;
        if !m.has_constant_mass() {
            qddot -= &m_inv * m.mass_rate(&x.q, qdot) * (&m_inv * &x.p);
        }
        Ok(ClosedLoopState {
            q: f.q.clone(),
            phi: self.phi_rate(&f.q, &f.theta),
            p: f.p.clone(),
            z: &self.z_from_qdot * qddot + &self.z_from_s * &f.s,
        })
    }

    pub fn shaped_inertia_inverse(&self) -> &Mat {
        &self.shaped_inertia_inv
    }

    pub fn motor_inertia_inverse(&self) -> &Mat {
        &self.motor_inertia_inv
    }

    pub fn shaped_inertia(&self) -> &Mat {
        &self.shaped_inertia
    }

    pub fn motor_inertia(&self) -> &Mat {
        &self.motor_inertia
    }
}

pub fn to_closed(x: &OpenLoopState, sp: &ShapedParams, m: &dyn RobotModel) -> Result<ClosedLoopState> {
    ShapingTransform::new(sp, m)?.to_closed(x, m)
}

pub fn from_closed(y: &ClosedLoopState, sp: &ShapedParams, m: &dyn RobotModel) -> Result<OpenLoopState> {
    ShapingTransform::new(sp, m)?.from_closed(y, m)
}

/// `H_CL = ½pᵀM(q)⁻¹p + ½zᵀJ_e⁻¹z + ½(φ−q)ᵀK_e(φ−q) + V(q)`.
pub fn closed_loop_energy(y: &ClosedLoopState, sp: &ShapedParams, m: &dyn RobotModel) -> Result<f64> {
    y.check(m.dof())?;
    let m_inv = m.mass_inverse(&y.q)?;
    let je_inv = linalg::inverse(&sp.inertia, "J_e")?;
    let defl = &y.phi - &y.q;
    Ok(0.5 * y.p.dot(&(m_inv * &y.p))
        + 0.5 * y.z.dot(&(je_inv * &y.z))
        + 0.5 * defl.dot(&(&sp.stiffness * &defl))
        + m.potential(&y.q))
}

/// Port velocities `(q̇, φ̇) = (M⁻¹p, J_e⁻¹z)`.
pub fn port_velocities(
    y: &ClosedLoopState,
    sp: &ShapedParams,
    m: &dyn RobotModel,
) -> Result<(Vector, Vector)> {
    let v = m.mass_inverse(&y.q)? * &y.p;
    let w = linalg::solve(&sp.inertia, &y.z, "J_e")?;
    Ok((v, w))
}

/// Power dissipated by the shaped damper,
/// `[∇_pH; ∇_zH]ᵀ [D_e, −D_e; −D_e, D_e] [∇_pH; ∇_zH] = (q̇ − φ̇)ᵀ D_e (q̇ − φ̇)`.
pub fn dissipation(y: &ClosedLoopState, sp: &ShapedParams, m: &dyn RobotModel) -> Result<f64> {
    let (v, w) = port_velocities(y, sp, m)?;
    let rel = v - w;
    Ok(rel.dot(&(&sp.damping * &rel)))
}

/// Closed-loop port-Hamiltonian vector field.
pub fn closed_loop_field(
    y: &ClosedLoopState,
    tau_e: &Vector,
    tau_u: &Vector,
    sp: &ShapedParams,
    m: &dyn RobotModel,
) -> Result<ClosedLoopState> {
    let n = m.dof();
    y.check(n)?;
    linalg::require_len(tau_e, n, "tau_e")?;
    linalg::require_len(tau_u, n, "tau_u")?;
    let (v, w) = port_velocities(y, sp, m)?;
    let spring = &sp.stiffness * (&y.phi - &y.q);
    let damper = &sp.damping * (&w - &v);
    let pdot = &spring + &damper - m.gravity_grad(&y.q) - m.kinetic_gradient(&y.q, &y.p)? + tau_e;
    let zdot = -spring - damper + tau_u;
    Ok(ClosedLoopState {
        q: v,
        phi: w,
        p: pdot,
        z: zdot,
    })
}

/// Absolute floor on the residual denominator for near-equilibrium states.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Relative gain mismatch tolerated before a gain/shaping pair counts as inconsistent.
pub const GAIN_CONSISTENCY_RTOL: f64 = 1e-8;

/// Drives the plant with the Coriolis-compensating law, maps the resulting vector
/// field into the closed-loop chart and compares it with [`closed_loop_field`]
/// evaluated at the transformed state. Returns the max-norm residual relative to
/// the field magnitude.
pub fn equivalence_residual(
    x: &OpenLoopState,
    tau_e: &Vector,
    tau_u: &Vector,
    g: &ImpedanceGains,
    sp: &ShapedParams,
    m: &dyn RobotModel,
) -> Result<f64> {
    let expected = gains_at(m, &x.q, sp)?;
    for (name, a, b) in [
        ("K_F", &g.force, &expected.force),
        ("K_G", &g.joint_torque, &expected.joint_torque),
        ("K_H", &g.input, &expected.input),
    ] {
        linalg::require_square(a, m.dof(), "gain")?;
        let scale = linalg::fro(b).max(1.0);
        if (a - b).norm() > GAIN_CONSISTENCY_RTOL * scale {
            return Err(Error::Configuration(format!(
                "{name} does not realize the given shaped parameters"
            )));
        }
    }
    let tr = ShapingTransform::new(sp, m)?;
    let tau = nonlinear_control(x, tau_e, tau_u, g, m)?;
    let f = open_loop_field(x, tau_e, &tau, m)?;
    let pushed = tr.push_forward(x, &f, m)?.to_vector();
    let y = tr.to_closed(x, m)?;
    let target = closed_loop_field(&y, tau_e, tau_u, sp, m)?.to_vector();
    Ok(linalg::rel_diff(&pushed, &target, RESIDUAL_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{recover_shaped, synthesize_gains};
    use crate::model::{open_loop_energy, LinearRobotParams};

    fn reference_plant() -> LinearRobotParams {
        LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap()
    }

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn identity_shaping_collapses_transform() {
        let m = reference_plant();
        let sp = ShapedParams::identity(&m);
        let x = OpenLoopState {
            q: v1(0.1),
            theta: v1(0.3),
            p: v1(0.2),
            s: v1(-0.7),
        };
        let y = to_closed(&x, &sp, &m).unwrap();
        assert_eq!(y.phi[0], 0.3);
        assert!((y.z[0] + 0.7).abs() < 1e-15);
        let back = from_closed(&y, &sp, &m).unwrap();
        assert!((back.theta[0] - 0.3).abs() < 1e-15);
        assert!((back.s[0] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_maps_to_zero() {
        let m = reference_plant();
        let sp = recover_shaped(&m, &Vector::zeros(1), &linalg::diag(&[0.9]), &linalg::diag(&[4.0])).unwrap();
        let y = to_closed(&OpenLoopState::zeros(1), &sp, &m).unwrap();
        assert_eq!(y.to_vector().amax(), 0.0);
        let x = from_closed(&ClosedLoopState::zeros(1), &sp, &m).unwrap();
        assert_eq!(x.to_vector().amax(), 0.0);
    }

    #[test]
    fn scalar_phi_value() {
        let m = reference_plant();
        let sp = ShapedParams {
            inertia: linalg::diag(&[0.157895]),
            stiffness: linalg::diag(&[1e5]),
            damping: linalg::diag(&[0.1]),
        };
        let x = OpenLoopState {
            q: v1(0.01),
            theta: v1(0.02),
            p: v1(0.0),
            s: v1(0.0),
        };
        let y = to_closed(&x, &sp, &m).unwrap();
        assert!((y.phi[0] - 0.11).abs() < 1e-14);
    }

    #[test]
    fn singular_stiffness_rejected() {
        let m = reference_plant();
        let sp = ShapedParams {
            inertia: linalg::diag(&[1.0]),
            stiffness: linalg::diag(&[0.0]),
            damping: linalg::diag(&[0.0]),
        };
        let err = to_closed(&OpenLoopState::zeros(1), &sp, &m).unwrap_err();
        assert!(matches!(err, Error::TransformSingular(_)));
    }

    #[test]
    fn closed_loop_energy_values() {
        let m = reference_plant();
        let sp = ShapedParams {
            inertia: linalg::diag(&[1.5]),
            stiffness: linalg::diag(&[5e5]),
            damping: linalg::diag(&[0.5]),
        };
        let mut y = ClosedLoopState::zeros(1);
        assert_eq!(closed_loop_energy(&y, &sp, &m).unwrap(), 0.0);
        y.phi[0] = 1e-3;
        assert!((closed_loop_energy(&y, &sp, &m).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identity_shaping_energy_matches_open_loop() {
        let m = reference_plant();
        let sp = ShapedParams::identity(&m);
        let x = OpenLoopState {
            q: v1(0.01),
            theta: v1(0.0105),
            p: v1(0.3),
            s: v1(-0.2),
        };
        let h_ol = open_loop_energy(&x, &m).unwrap();
        let h_cl = closed_loop_energy(&to_closed(&x, &sp, &m).unwrap(), &sp, &m).unwrap();
        assert!((h_ol - h_cl).abs() <= 1e-12 * h_ol.abs());
    }

    #[test]
    fn equilibrium_field_is_zero() {
        let m = reference_plant();
        let sp = ShapedParams::identity(&m);
        let z = Vector::zeros(1);
        let f = closed_loop_field(&ClosedLoopState::zeros(1), &z, &z, &sp, &m).unwrap();
        assert_eq!(f.to_vector().amax(), 0.0);
    }

    #[test]
    fn identity_shaping_residual_is_zero() {
        let m = reference_plant();
        let syn = synthesize_gains(&m, &Vector::zeros(1), &linalg::diag(&[3.0]), &linalg::diag(&[1e6])).unwrap();
        let x = OpenLoopState {
            q: v1(0.01),
            theta: v1(0.0103),
            p: v1(0.3),
            s: v1(-0.2),
        };
        let r = equivalence_residual(&x, &v1(1.0), &v1(0.5), &syn.gains, &syn.shaped, &m).unwrap();
        assert!(r < 1e-15, "residual {r}");
    }

    #[test]
    fn inconsistent_gains_rejected() {
        let m = reference_plant();
        let syn = synthesize_gains(&m, &Vector::zeros(1), &linalg::diag(&[1.5]), &linalg::diag(&[5e5])).unwrap();
        let mut g = syn.gains.clone();
        g.input[(0, 0)] += 0.1;
        let err = equivalence_residual(&OpenLoopState::zeros(1), &v1(0.0), &v1(0.0), &g, &syn.shaped, &m)
            .unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }
}
