use num_complex::Complex64;

use crate::control::{OuterLoop, ShapedParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

use super::poly;

/// Relative remainder allowed when dividing out a shared factor.
pub const CANCEL_RTOL: f64 = 1e-8;

/// Root distance (relative to `max(1, |r|)`) below which a pole and a zero are
/// candidates for cancellation.
const CANCEL_MATCH_RTOL: f64 = 1e-6;

/// SISO rational function `num(s) / den(s)`, coefficients ascending in `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTF {
    num: Vec<f64>,
    den: Vec<f64>,
    /// Pole/zero locations removed by [`RationalTF::cancel_common_factors`].
    cancelled: Vec<Complex64>,
}

impl RationalTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let num = poly::trim(&num);
        let den = poly::trim(&den);
        if num.iter().chain(den.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("transfer function has non-finite coefficients".into()));
        }
        if poly::is_zero(&den) {
            return Err(Error::InvalidParameter("denominator is identically zero".into()));
        }
        Ok(Self {
            num,
            den,
            cancelled: Vec::new(),
        })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn cancelled(&self) -> &[Complex64] {
        &self.cancelled
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Both polynomials divided by the leading denominator coefficient.
    pub fn normalized(&self) -> Self {
        let lead = *self.den.last().unwrap();
        Self {
            num: poly::scale(&self.num, 1.0 / lead),
            den: poly::scale(&self.den, 1.0 / lead),
            cancelled: self.cancelled.clone(),
        }
    }

    /// Removes pole/zero pairs that coincide to within tolerance. A pair is
    /// removed only if dividing both polynomials by the shared real factor leaves
    /// remainders below `CANCEL_RTOL` of the coefficient norms.
    pub fn cancel_common_factors(&self) -> Result<Self> {
        if poly::degree(&self.num) == 0 || poly::degree(&self.den) == 0 {
            return Ok(self.clone());
        }
        let zeros = poly::roots(&self.num)?;
        let poles = poly::roots(&self.den)?;
        let mut num = self.num.clone();
        let mut den = self.den.clone();
        let mut cancelled = self.cancelled.clone();
        let mut used = vec![false; poles.len()];
        for z in zeros.iter().filter(|z| z.im >= 0.0) {
            let nearest = poles
                .iter()
                .enumerate()
                .filter(|(i, p)| !used[*i] && p.im >= 0.0)
                .min_by(|a, b| (*a.1 - z).norm().total_cmp(&(*b.1 - z).norm()));
            let Some((idx, p)) = nearest else { continue };
            if (p - z).norm() > CANCEL_MATCH_RTOL * p.norm().max(1.0) {
                continue;
            }
            let r = 0.5 * (p + z);
            let factor = if r.im == 0.0 {
                vec![-r.re, 1.0]
            } else {
                vec![r.norm_sqr(), -2.0 * r.re, 1.0]
            };
            let (qn, rn) = poly::divide(&num, &factor);
            let (qd, rd) = poly::divide(&den, &factor);
            let small = |rem: &[f64], c: &[f64]| {
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                rem.iter().map(|x| x * x).sum::<f64>().sqrt() <= CANCEL_RTOL * norm
            };
            if small(&rn, &num) && small(&rd, &den) {
                num = poly::trim(&qn);
                den = poly::trim(&qd);
                used[idx] = true;
                cancelled.push(r);
                if r.im != 0.0 {
                    cancelled.push(r.conj());
                }
            }
        }
        Ok(Self {
            num,
            den,
            cancelled,
        })
    }
}

/// Poles and zeros of a rational function.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleZero {
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
}

/// Roots of the denominator and numerator.
pub fn poles_zeros(tf: &RationalTF) -> Result<PoleZero> {
    if poly::degree(tf.den()) == 0 && poly::degree(tf.num()) == 0 {
        return Err(Error::InvalidParameter(
            "pole/zero map needs a non-constant transfer function".into(),
        ));
    }
    let zeros = if poly::is_zero(tf.num()) {
        Vec::new()
    } else {
        poly::roots(tf.num())?
    };
    Ok(PoleZero {
        poles: poly::roots(tf.den())?,
        zeros,
    })
}

fn scalar_of(m: &Mat, what: &str) -> Result<f64> {
    if m.nrows() != 1 || m.ncols() != 1 {
        return Err(Error::NotApplicable(format!(
            "{what} must be 1x1 for a single-joint transfer function"
        )));
    }
    Ok(m[(0, 0)])
}

/// Admittance `q̇/τ_e` of the shaped closed loop for one joint without outer loop:
///
/// ```text
/// Y(s) = (J_e s² + D_e s + K_e) / (s [J_e M s² + D_e (J_e + M) s + K_e (J_e + M)])
/// ```
pub fn admittance_1dof(sp: &ShapedParams, mass: f64) -> Result<RationalTF> {
    let je = scalar_of(&sp.inertia, "J_e")?;
    let ke = scalar_of(&sp.stiffness, "K_e")?;
    let de = scalar_of(&sp.damping, "D_e")?;
    RationalTF::new(
        vec![ke, de, je],
        vec![0.0, ke * (je + mass), de * (je + mass), je * mass],
    )
}

/// Admittance with the outer loop `τ_u = −K_φ φ − D_φ φ̇` closed:
///
/// ```text
/// P(s) = J_e s² + (D_e + D_φ) s + K_e + K_φ
/// Y(s) = s P / (M s² P + (D_e s + K_e)(J_e s² + D_φ s + K_φ))
/// ```
pub fn admittance_1dof_with_outer(sp: &ShapedParams, mass: f64, outer: &OuterLoop) -> Result<RationalTF> {
    let je = scalar_of(&sp.inertia, "J_e")?;
    let ke = scalar_of(&sp.stiffness, "K_e")?;
    let de = scalar_of(&sp.damping, "D_e")?;
    let kp = scalar_of(&outer.stiffness, "K_phi")?;
    let dp = scalar_of(&outer.damping, "D_phi")?;
    let p = [ke + kp, de + dp, je];
    let num = poly::mul(&[0.0, 1.0], &p);
    let den = poly::add(
        &poly::mul(&[0.0, 0.0, mass], &p),
        &poly::mul(&[ke, de], &[kp, dp, je]),
    );
    RationalTF::new(num, den)
}

/// Target behaviour `M_d q̈ + K_d q̇ + D_d q = τ_e`. Note the coefficient order: `K_d`
/// multiplies the velocity and `D_d` the position.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetImpedance {
    /// `M_d`
    pub mass: Mat,
    /// `K_d`, velocity coefficient.
    pub stiffness: Mat,
    /// `D_d`, position coefficient.
    pub damping: Mat,
}

impl TargetImpedance {
    pub fn new(mass: Mat, stiffness: Mat, damping: Mat) -> Result<Self> {
        let n = mass.nrows();
        for (name, m) in [("M_d", &mass), ("K_d", &stiffness), ("D_d", &damping)] {
            linalg::require_square(m, n, name)?;
            linalg::require_spd(m, name)?;
        }
        Ok(Self {
            mass,
            stiffness,
            damping,
        })
    }

    pub fn scalar(mass: f64, stiffness: f64, damping: f64) -> Result<Self> {
        Self::new(
            linalg::diag(&[mass]),
            linalg::diag(&[stiffness]),
            linalg::diag(&[damping]),
        )
    }
}

/// `Y_d(s) = s / (M_d s² + K_d s + D_d)`.
pub fn target_admittance(t: &TargetImpedance) -> Result<RationalTF> {
    let md = scalar_of(&t.mass, "M_d")?;
    let kd = scalar_of(&t.stiffness, "K_d")?;
    let dd = scalar_of(&t.damping, "D_d")?;
    RationalTF::new(vec![0.0, 1.0], vec![dd, kd, md])
}

/// Human/environment load `τ_h = M_h q̈ + D_h q̇ + K_h q`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentImpedance {
    pub mass: Mat,
    pub damping: Mat,
    pub stiffness: Mat,
}

impl EnvironmentImpedance {
    pub fn new(mass: Mat, damping: Mat, stiffness: Mat) -> Result<Self> {
        let n = mass.nrows();
        for (name, m) in [("M_h", &mass), ("D_h", &damping), ("K_h", &stiffness)] {
            linalg::require_square(m, n, name)?;
            linalg::require_psd(m, name)?;
        }
        Ok(Self {
            mass,
            damping,
            stiffness,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            mass: Mat::zeros(n, n),
            damping: Mat::zeros(n, n),
            stiffness: Mat::zeros(n, n),
        }
    }

    pub fn scalar(mass: f64, damping: f64, stiffness: f64) -> Result<Self> {
        Self::new(
            linalg::diag(&[mass]),
            linalg::diag(&[damping]),
            linalg::diag(&[stiffness]),
        )
    }

    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.mass.amax() == 0.0 && self.damping.amax() == 0.0 && self.stiffness.amax() == 0.0
    }
}

/// `Z_h(s) = M_h s + D_h + K_h / s = (M_h s² + D_h s + K_h) / s`.
pub fn env_impedance_tf(env: &EnvironmentImpedance) -> Result<RationalTF> {
    let mh = scalar_of(&env.mass, "M_h")?;
    let dh = scalar_of(&env.damping, "D_h")?;
    let kh = scalar_of(&env.stiffness, "K_h")?;
    RationalTF::new(vec![kh, dh, mh], vec![0.0, 1.0])
}
