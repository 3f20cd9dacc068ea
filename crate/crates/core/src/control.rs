//! Impedance controller synthesis and control laws.
//!
//! The controller feeds back the measured external torque `τ_e` and the transmitted
//! joint torque `τ_a`:
//!
//! ```text
//! τ = K_F τ_e − K_G τ_a − K_F C(q, q̇) q̇ − K_F ∇V(q) + K_H τ_u
//! ```
//!
//! (the Coriolis term only in the nonlinear law). The gains are tied to the
//! closed-loop inertia `J_e` and stiffness `K_e` by
//!
//! ```text
//! K_F = −J K⁻¹ (K_e − K) M⁻¹
//! K_H =  J K⁻¹ K_e J_e⁻¹
//! K_G =  K_H − K_F − I
//! ```
//!
//! and the closed-loop damping follows as `D_e = D K⁻¹ K_e`. When `M` depends on the
//! configuration the gains are re-evaluated at the measured `q`.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{joint_torque, OpenLoopState, RobotModel};

/// Closed-loop motor inertia, joint stiffness and joint damping.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedParams {
    /// `J_e`
    pub inertia: Mat,
    /// `K_e`
    pub stiffness: Mat,
    /// `D_e = D K⁻¹ K_e`
    pub damping: Mat,
}

impl ShapedParams {
    pub fn dof(&self) -> usize {
        self.inertia.nrows()
    }

    /// Leaves the plant unchanged: `J_e = J`, `K_e = K`, `D_e = D`.
    pub fn identity(m: &dyn RobotModel) -> Self {
        Self {
            inertia: m.motor_inertia().clone(),
            stiffness: m.stiffness().clone(),
            damping: m.damping().clone(),
        }
    }

    /// Checks `J_e, K_e` SPD and `D_e` symmetric PSD. Returns the warnings that do
    /// not prevent use.
    pub fn validate(&self) -> Result<Vec<ShapingWarning>> {
        let n = self.dof();
        for (name, mat) in [
            ("J_e", &self.inertia),
            ("K_e", &self.stiffness),
            ("D_e", &self.damping),
        ] {
            linalg::require_square(mat, n, name)?;
            if !linalg::all_finite(mat) {
                return Err(infeasible(name, "has non-finite entries"));
            }
        }
        for (name, mat) in [("J_e", &self.inertia), ("K_e", &self.stiffness)] {
            if !linalg::is_symmetric(mat, linalg::SYMMETRY_RTOL) {
                return Err(infeasible(name, "is not symmetric"));
            }
            if linalg::cholesky(&linalg::symmetrize(mat)).is_none() {
                return Err(infeasible(name, "is not positive definite"));
            }
        }
        check_damping(&self.damping)
    }
}

fn infeasible(matrix: &'static str, reason: &str) -> Error {
    Error::ShapingInfeasible {
        matrix,
        reason: reason.to_string(),
    }
}

fn check_damping(de: &Mat) -> Result<Vec<ShapingWarning>> {
    if !linalg::is_symmetric(de, linalg::SYMMETRY_RTOL) {
        return Err(infeasible("D_e", "is not symmetric"));
    }
    let scale = linalg::fro(de);
    if scale == 0.0 {
        return Ok(vec![ShapingWarning::DampingSemidefinite]);
    }
    let min_eig = linalg::min_sym_eigenvalue(de);
    if min_eig < -linalg::SYMMETRY_RTOL * scale {
        return Err(infeasible("D_e", "is not positive semidefinite"));
    }
    if linalg::cholesky(&linalg::symmetrize(de)).is_none() {
        return Ok(vec![ShapingWarning::DampingSemidefinite]);
    }
    Ok(Vec::new())
}

/// Non-fatal findings about a shaping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapingWarning {
    /// `D_e` is positive semidefinite but not definite (for example `D = 0`).
    DampingSemidefinite,
}

/// Controller gains `(K_F, K_G, K_H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceGains {
    /// `K_F`, feedback of the external torque.
    pub force: Mat,
    /// `K_G`, feedback of the transmitted joint torque.
    pub joint_torque: Mat,
    /// `K_H`, gain on the auxiliary input `τ_u`.
    pub input: Mat,
}

impl ImpedanceGains {
    /// `K_F = K_G = 0`, `K_H = I`: the motor torque is `τ_u`.
    pub fn passthrough(n: usize) -> Self {
        Self {
            force: Mat::zeros(n, n),
            joint_torque: Mat::zeros(n, n),
            input: Mat::identity(n, n),
        }
    }

    pub fn dof(&self) -> usize {
        self.force.nrows()
    }

    /// `‖K_H − K_G − K_F − I‖_F / max(1, ‖K_H‖_F, ‖K_G‖_F, ‖K_F‖_F)`.
    pub fn consistency_residual(&self) -> f64 {
        let n = self.dof();
        let r = &self.input - &self.joint_torque - &self.force - Mat::identity(n, n);
        let scale = 1f64
            .max(linalg::fro(&self.input))
            .max(linalg::fro(&self.joint_torque))
            .max(linalg::fro(&self.force));
        r.norm() / scale
    }
}

/// Output of [`synthesize_gains`].
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub gains: ImpedanceGains,
    pub shaped: ShapedParams,
    pub warnings: Vec<ShapingWarning>,
}

/// Gains realizing `shaped` with the mass matrix evaluated at `q`. No admissibility
/// checks; see [`synthesize_gains`].
pub fn gains_at(m: &dyn RobotModel, q: &Vector, shaped: &ShapedParams) -> Result<ImpedanceGains> {
    let n = m.dof();
    let j = m.motor_inertia();
    let k = m.stiffness();
    let jk_inv = j * m.stiffness_inverse()?;
    let m_inv = m.mass_inverse(q)?;
    let je_inv = linalg::inverse(&shaped.inertia, "J_e")?;
    let force = -(&jk_inv * (&shaped.stiffness - k) * m_inv);
    let input = &jk_inv * &shaped.stiffness * je_inv;
    let joint_torque = &input - &force - Mat::identity(n, n);
    Ok(ImpedanceGains {
        force,
        joint_torque,
        input,
    })
}

/// Gains for the desired closed-loop inertia and stiffness, with `M` evaluated at
/// `q` (any `q` for a constant-mass plant).
///
/// Fails with [`Error::ShapingInfeasible`] when `J_e` or `K_e` is not SPD or the
/// induced damping `D K⁻¹ K_e` is not symmetric positive semidefinite.
pub fn synthesize_gains(
    m: &dyn RobotModel,
    q: &Vector,
    inertia: &Mat,
    stiffness: &Mat,
) -> Result<Synthesis> {
    let n = m.dof();
    linalg::require_len(q, n, "q")?;
    linalg::require_square(inertia, n, "J_e")?;
    linalg::require_square(stiffness, n, "K_e")?;
    let damping = m.damping() * m.stiffness_inverse()? * stiffness;
    let shaped = ShapedParams {
        inertia: inertia.clone(),
        stiffness: stiffness.clone(),
        damping,
    };
    let warnings = shaped.validate()?;
    let shaped = ShapedParams {
        damping: linalg::symmetrize(&shaped.damping),
        ..shaped
    };
    let gains = gains_at(m, q, &shaped)?;
    Ok(Synthesis {
        gains,
        shaped,
        warnings,
    })
}

/// Inverse map from `(K_F, K_G)` to the closed-loop parameters:
///
/// ```text
/// J_e = (K_F + K_G + I)⁻¹ (J − K_F M)
/// K_e = K J⁻¹ (J − K_F M)
/// D_e = D J⁻¹ (J − K_F M)
/// ```
pub fn recover_shaped(
    m: &dyn RobotModel,
    q: &Vector,
    force: &Mat,
    joint_torque: &Mat,
) -> Result<ShapedParams> {
    let n = m.dof();
    linalg::require_len(q, n, "q")?;
    linalg::require_square(force, n, "K_F")?;
    linalg::require_square(joint_torque, n, "K_G")?;
    let sum = force + joint_torque + Mat::identity(n, n);
    let j = m.motor_inertia();
    let w = j - force * m.mass(q);
    let j_inv_w = m.motor_inertia_inverse()? * &w;
    let shaped = ShapedParams {
        inertia: linalg::try_solve_mat(&sum, &w).ok_or(Error::ParametrizationSingular)?,
        stiffness: m.stiffness() * &j_inv_w,
        damping: m.damping() * &j_inv_w,
    };
    shaped.validate()?;
    Ok(ShapedParams {
        inertia: linalg::symmetrize(&shaped.inertia),
        stiffness: linalg::symmetrize(&shaped.stiffness),
        damping: linalg::symmetrize(&shaped.damping),
    })
}

/// Open interval `(lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenInterval {
    pub lower: f64,
    pub upper: f64,
}

impl OpenInterval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// Range of pure force-feedback gains (`K_G = 0`) that keep a single flexible joint
/// passive from `τ_e` to `q̇`: `−1 < K_F < J/M`.
pub fn force_gain_interval(m: &dyn RobotModel) -> Result<OpenInterval> {
    if m.dof() != 1 {
        return Err(Error::NotApplicable(format!(
            "the force-feedback passivity interval is defined for one joint, plant has {}",
            m.dof()
        )));
    }
    let q = Vector::zeros(1);
    Ok(OpenInterval {
        lower: -1.0,
        upper: m.motor_inertia()[(0, 0)] / m.mass(&q)[(0, 0)],
    })
}

fn check_inputs(
    m: &dyn RobotModel,
    x: &OpenLoopState,
    tau_e: &Vector,
    tau_u: &Vector,
    g: &ImpedanceGains,
) -> Result<()> {
    let n = m.dof();
    x.check(n)?;
    linalg::require_len(tau_e, n, "tau_e")?;
    linalg::require_len(tau_u, n, "tau_u")?;
    linalg::require_square(&g.force, n, "K_F")?;
    linalg::require_square(&g.joint_torque, n, "K_G")?;
    linalg::require_square(&g.input, n, "K_H")
}

/// `τ = K_F τ_e − K_G τ_a − K_F ∇V(q) + K_H τ_u`.
pub fn linear_control(
    x: &OpenLoopState,
    tau_e: &Vector,
    tau_u: &Vector,
    g: &ImpedanceGains,
    m: &dyn RobotModel,
) -> Result<Vector> {
    check_inputs(m, x, tau_e, tau_u, g)?;
    let tau_a = joint_torque(x, m)?;
    Ok(&g.force * (tau_e - m.gravity_grad(&x.q)) - &g.joint_torque * tau_a + &g.input * tau_u)
}

/// Linear law plus Coriolis compensation: `… − K_F C(q, q̇) q̇`.
pub fn nonlinear_control(
    x: &OpenLoopState,
    tau_e: &Vector,
    tau_u: &Vector,
    g: &ImpedanceGains,
    m: &dyn RobotModel,
) -> Result<Vector> {
    let tau = linear_control(x, tau_e, tau_u, g, m)?;
    if m.has_constant_mass() {
        return Ok(tau);
    }
    let qdot = m.mass_inverse(&x.q)? * &x.p;
    let coriolis_force = m.coriolis(&x.q, &qdot) * &qdot;
    Ok(tau - &g.force * coriolis_force)
}

/// Position/damping loop on the shaped motor coordinate with optional gravity
/// compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterLoop {
    /// `K_φ`
    pub stiffness: Mat,
    /// `D_φ`
    pub damping: Mat,
    /// `φ_d`
    pub setpoint: Vector,
    /// Adds `∇V(φ)` when set.
    pub gravity_compensation: bool,
}

impl OuterLoop {
    pub fn new(stiffness: Mat, damping: Mat, setpoint: Vector, gravity_compensation: bool) -> Result<Self> {
        let n = setpoint.len();
        linalg::require_square(&stiffness, n, "K_phi")?;
        linalg::require_square(&damping, n, "D_phi")?;
        linalg::require_psd(&stiffness, "K_phi")?;
        linalg::require_psd(&damping, "D_phi")?;
        Ok(Self {
            stiffness,
            damping,
            setpoint,
            gravity_compensation,
        })
    }

    pub fn dof(&self) -> usize {
        self.setpoint.len()
    }
}

/// `τ_u = −K_φ(φ − φ_d) − D_φ φ̇ + ḡ(φ)`.
pub fn outer_loop_torque(
    phi: &Vector,
    phi_dot: &Vector,
    o: &OuterLoop,
    m: &dyn RobotModel,
) -> Result<Vector> {
    let n = o.dof();
    linalg::require_len(phi, n, "phi")?;
    linalg::require_len(phi_dot, n, "phi_dot")?;
    let mut tau_u = -(&o.stiffness * (phi - &o.setpoint)) - &o.damping * phi_dot;
    if o.gravity_compensation {
        tau_u += m.gravity_grad(phi);
    }
    Ok(tau_u)
}
