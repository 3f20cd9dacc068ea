use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

use super::RobotModel;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Physical description of a planar two-link arm with uniform rods and elastic
/// joints. Gravity, when on, acts along −y in the plane of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLinkParams {
    pub link_lengths: [f64; 2],
    pub link_masses: [f64; 2],
    pub motor_inertias: [f64; 2],
    pub stiffness: [f64; 2],
    pub damping: [f64; 2],
    pub gravity: bool,
}

impl Default for TwoLinkParams {
    /// Desk-scale arm used by the nonlinear experiments.
    fn default() -> Self {
        Self {
            link_lengths: [0.4, 0.4],
            link_masses: [4.0, 3.0],
            motor_inertias: [0.5, 0.3],
            stiffness: [5000.0, 3000.0],
            damping: [0.0, 0.0],
            gravity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkArm {
    params: TwoLinkParams,
    motor_inertia: Mat,
    stiffness: Mat,
    damping: Mat,
    // rod inertia terms
    a1: f64,
    a2: f64,
    a3: f64,
}

/// Builds the arm after checking that lengths, masses, inertias and stiffnesses are
/// positive and damping is nonnegative.
pub fn two_link_arm(params: TwoLinkParams) -> Result<TwoLinkArm> {
    let positive = [
        ("link length", params.link_lengths),
        ("link mass", params.link_masses),
        ("motor inertia", params.motor_inertias),
        ("joint stiffness", params.stiffness),
    ];
    for (what, vals) in positive {
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!("{what} must be positive")));
        }
    }
    if params.damping.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("joint damping must be nonnegative".into()));
    }
    let [l1, l2] = params.link_lengths;
    let [m1, m2] = params.link_masses;
    let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
    let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
    Ok(TwoLinkArm {
        motor_inertia: linalg::diag(&params.motor_inertias),
        stiffness: linalg::diag(&params.stiffness),
        damping: linalg::diag(&params.damping),
        a1: m1 * lc1 * lc1 + i1 + m2 * (l1 * l1 + lc2 * lc2) + i2,
        a2: m2 * l1 * lc2,
        a3: m2 * lc2 * lc2 + i2,
        params,
    })
}

impl TwoLinkArm {
    pub fn params(&self) -> &TwoLinkParams {
        &self.params
    }

    /// Same arm with different motor inertias, stiffness or damping.
    pub fn with_joint(&self, motor_inertias: [f64; 2], stiffness: [f64; 2], damping: [f64; 2]) -> Result<Self> {
        two_link_arm(TwoLinkParams {
            motor_inertias,
            stiffness,
            damping,
            ..self.params
        })
    }
}

impl RobotModel for TwoLinkArm {
    fn dof(&self) -> usize {
        2
    }

    fn mass(&self, q: &Vector) -> Mat {
        let c2 = q[1].cos();
        let m11 = self.a1 + 2.0 * self.a2 * c2;
        let m12 = self.a3 + self.a2 * c2;
        Mat::from_row_slice(2, 2, &[m11, m12, m12, self.a3])
    }

    fn mass_partial(&self, q: &Vector, k: usize) -> Mat {
        if k == 0 {
            return Mat::zeros(2, 2);
        }
        let s2 = q[1].sin();
        let d11 = -2.0 * self.a2 * s2;
        let d12 = -self.a2 * s2;
        Mat::from_row_slice(2, 2, &[d11, d12, d12, 0.0])
    }

    fn potential(&self, q: &Vector) -> f64 {
        if !self.params.gravity {
            return 0.0;
        }
        let [l1, l2] = self.params.link_lengths;
        let [m1, m2] = self.params.link_masses;
        // zero with both links hanging straight down, so V ≥ 0 everywhere
        let lowest = m1 * 0.5 * l1 + m2 * (l1 + 0.5 * l2);
        GRAVITY
            * (lowest
                + m1 * 0.5 * l1 * q[0].sin()
                + m2 * (l1 * q[0].sin() + 0.5 * l2 * (q[0] + q[1]).sin()))
    }

    fn gravity_grad(&self, q: &Vector) -> Vector {
        if !self.params.gravity {
            return Vector::zeros(2);
        }
        let [l1, l2] = self.params.link_lengths;
        let [m1, m2] = self.params.link_masses;
        let c12 = (q[0] + q[1]).cos();
        let g2 = GRAVITY * m2 * 0.5 * l2 * c12;
        let g1 = GRAVITY * (m1 * 0.5 * l1 + m2 * l1) * q[0].cos() + g2;
        Vector::from_column_slice(&[g1, g2])
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
}
