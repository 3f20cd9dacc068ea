use nalgebra::Complex;
use num_complex::Complex64;

use crate::control::{OuterLoop, ShapedParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::LinearRobotParams;

use super::freq::{logspace, Channel, FrequencyResponse};
use super::poly;
use super::tf::{EnvironmentImpedance, RationalTF};

/// Largest state dimension accepted by [`ss_to_tf`].
pub const MAX_TF_STATES: usize = 20;

/// Continuous-time `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        linalg::require_square(&a, n, "A")?;
        if b.nrows() != n {
            return Err(Error::dim("B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::dim("C columns", n, c.ncols()));
        }
        if d.nrows() != c.nrows() {
            return Err(Error::dim("D rows", c.nrows(), d.nrows()));
        }
        if d.ncols() != b.ncols() {
            return Err(Error::dim("D columns", b.ncols(), d.ncols()));
        }
        if ![&a, &b, &c, &d].iter().all(|m| linalg::all_finite(m)) {
            return Err(Error::Assembly("state-space matrices must be finite".into()));
        }
        let label = |prefix: &str, k: usize| (0..k).map(|i| format!("{prefix}{i}")).collect();
        Ok(Self {
            state_labels: label("x", n),
            input_labels: label("u", b.ncols()),
            output_labels: label("y", c.nrows()),
            a,
            b,
            c,
            d,
        })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut ev: Vec<Complex64> = self
            .a
            .complex_eigenvalues()
            .iter()
            .map(|z: &Complex<f64>| Complex64::new(z.re, z.im))
            .collect();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ev
    }

    fn labelled(mut self, n: usize) -> Self {
        let names = ["q", "phi", "p", "z"];
        self.state_labels = names
            .iter()
            .flat_map(|nm| (1..=n).map(move |i| format!("{nm}_{i}")))
            .collect();
        self.input_labels = (1..=n).map(|i| format!("tau_e_{i}")).collect();
        self.output_labels = (1..=n).map(|i| format!("qdot_{i}")).collect();
        self
    }
}

fn check_shaping(sp: &ShapedParams, n: usize) -> Result<()> {
    linalg::require_square(&sp.inertia, n, "J_e")?;
    linalg::require_square(&sp.stiffness, n, "K_e")?;
    linalg::require_square(&sp.damping, n, "D_e")
}

fn build(
    link_mass: &Mat,
    sp: &ShapedParams,
    env: &EnvironmentImpedance,
    outer: Option<&OuterLoop>,
) -> Result<StateSpace> {
    let n = link_mass.nrows();
    check_shaping(sp, n)?;
    let m_inv = linalg::try_inverse(link_mass)
        .ok_or_else(|| Error::Assembly("link mass matrix is singular".into()))?;
    let je_inv = linalg::try_inverse(&sp.inertia)
        .ok_or_else(|| Error::Assembly("J_e is singular".into()))?;
    let ke = &sp.stiffness;
    let de = &sp.damping;
    let mut a = Mat::zeros(4 * n, 4 * n);
    let (q, phi, p, z) = (0, n, 2 * n, 3 * n);
    a.view_mut((q, p), (n, n)).copy_from(&m_inv);
    a.view_mut((phi, z), (n, n)).copy_from(&je_inv);

    let de_m = de * &m_inv;
    let de_j = de * &je_inv;
    // link momentum: K_e(φ − q) + D_e(φ̇ − q̇) − D_h q̇ − K_h q
    a.view_mut((p, q), (n, n)).copy_from(&(-ke - &env.stiffness));
    a.view_mut((p, phi), (n, n)).copy_from(ke);
    a.view_mut((p, p), (n, n)).copy_from(&(-&de_m - &env.damping * &m_inv));
    a.view_mut((p, z), (n, n)).copy_from(&de_j);
    // shaped motor momentum: −K_e(φ − q) − D_e(φ̇ − q̇) + τ_u
    a.view_mut((z, q), (n, n)).copy_from(ke);
    a.view_mut((z, phi), (n, n)).copy_from(&(-ke));
    a.view_mut((z, p), (n, n)).copy_from(&de_m);
    a.view_mut((z, z), (n, n)).copy_from(&(-&de_j));
    if let Some(o) = outer {
        linalg::require_square(&o.stiffness, n, "K_phi")?;
        linalg::require_square(&o.damping, n, "D_phi")?;
        let mut zphi = a.view((z, phi), (n, n)).into_owned();
        zphi -= &o.stiffness;
        a.view_mut((z, phi), (n, n)).copy_from(&zphi);
        let mut zz = a.view((z, z), (n, n)).into_owned();
        zz -= &o.damping * &je_inv;
        a.view_mut((z, z), (n, n)).copy_from(&zz);
    }
    let mut b = Mat::zeros(4 * n, n);
    b.view_mut((p, 0), (n, n)).copy_from(&Mat::identity(n, n));
    let mut c = Mat::zeros(n, 4 * n);
    c.view_mut((0, p), (n, n)).copy_from(&m_inv);
    Ok(StateSpace::new(a, b, c, Mat::zeros(n, n))?.labelled(n))
}

/// Shaped closed loop in `(q, φ, p, z)` with input `τ_e` and output `q̇`. With an
/// outer loop, `τ_u = −K_φ φ − D_φ J_e⁻¹ z` is folded into `A`; the setpoint only
/// shifts the equilibrium and does not appear.
pub fn assemble_closed_loop(
    m: &LinearRobotParams,
    sp: &ShapedParams,
    outer: Option<&OuterLoop>,
) -> Result<StateSpace> {
    build(m.mass_matrix(), sp, &EnvironmentImpedance::zero(m.n()), outer)
}

/// Closed loop coupled to a passive environment. The environment mass is merged
/// into the link mass, so `p` is the momentum `(M + M_h) q̇`:
///
/// ```text
/// (M + M_h) q̈ = K_e(φ − q) + D_e(φ̇ − q̇) − D_h q̇ − K_h q + τ_e
/// J_e φ̈       = −K_e(φ − q) − D_e(φ̇ − q̇) + τ_u
/// ```
///
/// `τ_e` remains as an input for any additional drive on the links.
pub fn assemble_coupled(
    m: &LinearRobotParams,
    sp: &ShapedParams,
    env: &EnvironmentImpedance,
    outer: Option<&OuterLoop>,
) -> Result<StateSpace> {
    let n = m.n();
    if env.dof() != n {
        return Err(Error::dim("environment", n, env.dof()));
    }
    build(&(m.mass_matrix() + &env.mass), sp, env, outer)
}

/// Characteristic polynomial `det(sI − A)` (ascending) and the adjugate
/// coefficient matrices `M_1..M_n`, with `adj(sI − A) = Σ M_k s^(n−k)`.
/// Diagonal similarity `T⁻¹ A T` with power-of-two entries that evens out row and
/// column norms. Returns the balanced matrix and the diagonal of `T`.
fn balance(a: &Mat) -> (Mat, Vec<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut t = vec![1.0; n];
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let col: f64 = (0..n).filter(|&j| j != i).map(|j| a[(j, i)].abs()).sum();
            let row: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let (mut c, mut r) = (col, row);
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c > r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r) < 0.95 * (col + row) {
                converged = false;
                t[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    (a, t)
}

/// Faddeev–LeVerrier recursion: coefficients of `det(sI − A)` (ascending, monic)
/// and the adjugate coefficient matrices `M_1 … M_n`.
fn faddeev_leverrier(a: &Mat) -> (Vec<f64>, Vec<Mat>) {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut mats = Vec::with_capacity(n);
    let mut prev = Mat::zeros(n, n);
    let a_norm = a.norm();
    for k in 1..=n {
        let mk = a * &prev + Mat::identity(n, n) * coeffs[n - k + 1];
        let amk = a * &mk;
        let mut ck = -amk.trace() / k as f64;
        // rounding floor of the trace
        let floor = 16.0 * n as f64 * f64::EPSILON * a_norm * mk.norm() / k as f64;
        if ck.abs() <= floor {
            ck = 0.0;
        }
        coeffs[n - k] = ck;
        mats.push(mk.clone());
        prev = mk;
    }
    (coeffs, mats)
}

/// Agreement with the resolvent at which the recursion's result is taken as is.
const LEVERRIER_RTOL: f64 = 1e-7;

/// Worst agreement with the resolvent for which any conversion is returned.
pub const CONVERSION_RTOL: f64 = 1e-6;

/// Transfer function from `input` to `output` via the Faddeev–LeVerrier recursion,
/// with approximately common pole/zero factors cancelled.
///
/// The recursion runs on a balanced copy of `A` divided by its norm. Above roughly
/// ten states with a wide spectral spread the recursion can still lose digits, so
/// the result is checked against the resolvent across the spectrum and, when it
/// misses, rebuilt from eigenvalues and the closer of the two kept. If neither
/// comes within [`CONVERSION_RTOL`] the call fails with [`Error::ConversionAccuracy`].
pub fn ss_to_tf(ss: &StateSpace, input: usize, output: usize) -> Result<RationalTF> {
    let n = ss.states();
    if n > MAX_TF_STATES {
        return Err(Error::TooManyStates {
            states: n,
            limit: MAX_TF_STATES,
        });
    }
    if input >= ss.b.ncols() {
        return Err(Error::dim("input index bound", ss.b.ncols(), input));
    }
    if output >= ss.c.nrows() {
        return Err(Error::dim("output index bound", ss.c.nrows(), output));
    }
    let d = ss.d[(output, input)];
    if n == 0 {
        return RationalTF::new(vec![d], vec![1.0]);
    }
    let channel = Channel::new(ss, input, output)?;
    let probes = probe_frequencies(ss);
    let mut best = leverrier_pair(ss, input, output);
    let mut error = conversion_error(&best.0, &best.1, &channel, &probes);
    if error > LEVERRIER_RTOL {
        let alt = eigen_pair(ss, input, output);
        let alt_error = conversion_error(&alt.0, &alt.1, &channel, &probes);
        if alt_error < error {
            (best, error) = (alt, alt_error);
        }
    }
    if error > CONVERSION_RTOL {
        return Err(Error::ConversionAccuracy { error });
    }
    RationalTF::new(best.0, best.1)?.cancel_common_factors()
}

fn leverrier_pair(ss: &StateSpace, input: usize, output: usize) -> (Vec<f64>, Vec<f64>) {
    let n = ss.states();
    let d = ss.d[(output, input)];
    let (balanced, t) = balance(&ss.a);
    let sigma = match balanced.norm() {
        x if x > 0.0 => x,
        _ => 1.0,
    };
    // s = σ s': det(sI − A) = σⁿ det(s'I − A/σ)
    let (den_scaled, mats) = faddeev_leverrier(&(balanced / sigma));
    let b = Vector::from_iterator(n, (0..n).map(|i| ss.b[(i, input)] / t[i]));
    let c = Vector::from_iterator(n, (0..n).map(|i| ss.c[(output, i)] * t[i]));
    let bc = b.norm() * c.norm();
    let mut num_scaled = poly::scale(&den_scaled, d);
    for (k, mk) in mats.iter().enumerate() {
        let power = n - (k + 1);
        let mut v = c.dot(&(mk * &b));
        if v.abs() <= 16.0 * n as f64 * f64::EPSILON * bc * mk.norm() {
            v = 0.0;
        }
        // (sI − A)⁻¹ = σ⁻¹ (s'I − A/σ)⁻¹
        num_scaled[power] += v / sigma;
    }
    // coefficient k of a degree-n polynomial picks up σ^(n−k) on the way back to s
    let unscale = |c: &[f64]| -> Vec<f64> {
        c.iter().enumerate().map(|(k, x)| x * sigma.powi((n - k) as i32)).collect()
    };
    (unscale(&num_scaled), unscale(&den_scaled))
}

/// Monic characteristic polynomial from the eigenvalues of `a`, with coefficients
/// below their rounding floor set to zero. Also returns that floor per coefficient.
fn eigen_char_poly(a: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    // eigenvalues within the solver's backward error of the origin are zero
    let origin = 64.0 * n as f64 * f64::EPSILON * a.norm();
    let ev: Vec<Complex64> = a
        .complex_eigenvalues()
        .iter()
        .map(|z: &Complex<f64>| Complex64::new(z.re, z.im))
        .map(|z| if z.norm() <= origin { Complex64::new(0.0, 0.0) } else { z })
        .collect();
    let mut c = poly::from_roots(&ev, 1.0);
    // the coefficients of ∏(s + |λ|) bound every partial sum in the expansion
    let mags: Vec<Complex64> = ev.iter().map(|z| Complex64::new(-z.norm(), 0.0)).collect();
    let floor: Vec<f64> = poly::from_roots(&mags, 1.0)
        .iter()
        .map(|b| 64.0 * n as f64 * f64::EPSILON * b)
        .collect();
    for (ck, fk) in c.iter_mut().zip(&floor) {
        if ck.abs() <= *fk {
            *ck = 0.0;
        }
    }
    (c, floor)
}

/// `c (sI − A)⁻¹ b = [det(sI − A + α b c) − det(sI − A)] / (α det(sI − A))`, with `α`
/// bringing the rank-one term to the size of `A` so the difference keeps its digits.
fn eigen_pair(ss: &StateSpace, input: usize, output: usize) -> (Vec<f64>, Vec<f64>) {
    let n = ss.states();
    let (den, den_floor) = eigen_char_poly(&ss.a);
    let b = ss.b.column(input).into_owned();
    let c = ss.c.row(output).into_owned();
    let bc = b.norm() * c.norm();
    let mut num = poly::scale(&den, ss.d[(output, input)]);
    if bc > 0.0 {
        let alpha = ss.a.norm().max(1.0) / bc;
        let (shifted, shifted_floor) = eigen_char_poly(&(&ss.a - &b * &c * alpha));
        for k in 0..n {
            let diff = shifted[k] - den[k];
            if diff.abs() > den_floor[k].max(shifted_floor[k]) {
                num[k] += diff / alpha;
            }
        }
    }
    (num, den)
}

/// Log-spaced frequencies covering the nonzero spectrum of `A` with two decades
/// of margin on both sides.
fn probe_frequencies(ss: &StateSpace) -> Vec<f64> {
    let mags: Vec<f64> = ss.eigenvalues().iter().map(|z| z.norm()).filter(|m| *m > 0.0).collect();
    let lo = mags.iter().copied().fold(1.0, f64::min) / 100.0;
    let hi = mags.iter().copied().fold(1.0, f64::max) * 100.0;
    logspace(lo, hi, 256)
}

/// Largest relative deviation of `num/den` from the resolvent over `probes`.
/// Points where the response is below `1e-8` of its peak are compared against
/// that floor instead; points on a pole are skipped.
fn conversion_error(num: &[f64], den: &[f64], channel: &Channel<'_>, probes: &[f64]) -> f64 {
    let pairs: Vec<(Complex64, Complex64)> = probes
        .iter()
        .filter_map(|&w| {
            let s = Complex64::new(0.0, w);
            let reference = channel.response_at(w)?;
            let d = poly::eval(den, s);
            (d.norm() > 0.0).then(|| (poly::eval(num, s) / d, reference))
        })
        .collect();
    let peak = pairs.iter().map(|(_, r)| r.norm()).fold(0.0, f64::max);
    pairs
        .iter()
        .map(|(x, r)| (x - r).norm() / r.norm().max(1e-8 * peak).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::tf::admittance_1dof;

    #[test]
    fn first_order_lag() {
        let ss = StateSpace::new(
            Mat::from_element(1, 1, -1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let tf = ss_to_tf(&ss, 0, 0).unwrap();
        assert_eq!(tf.num(), &[1.0]);
        assert_eq!(tf.den(), &[1.0, 1.0]);
    }

    #[test]
    fn double_integrator() {
        let ss = StateSpace::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let tf = ss_to_tf(&ss, 0, 0).unwrap();
        assert_eq!(tf.num(), &[1.0]);
        assert_eq!(tf.den(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn refuses_large_systems() {
        let n = MAX_TF_STATES + 1;
        let ss = StateSpace::new(
            -Mat::identity(n, n),
            Mat::zeros(n, 1),
            Mat::zeros(1, n),
            Mat::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(ss_to_tf(&ss, 0, 0), Err(Error::TooManyStates { .. })));
    }

    #[test]
    fn identity_shaping_keeps_open_loop_modes() {
        let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap();
        let sp = ShapedParams::identity(&m);
        let ev = assemble_closed_loop(&m, &sp, None).unwrap().eigenvalues();
        // open loop: rigid mode (double zero) and the joint mode from
        // s² + D(1/M + 1/J) s + K(1/M + 1/J)
        let rigid: Vec<_> = ev.iter().filter(|z| z.norm() < 1e-6).collect();
        assert_eq!(rigid.len(), 2);
        let flex = poly::roots(&[1e6 * (2.0 / 3.0), 2.0 / 3.0, 1.0]).unwrap();
        for f in flex {
            assert!(ev.iter().any(|z| (z - f).norm() < 1e-6 * f.norm()));
        }
    }

    #[test]
    fn coupled_with_zero_environment_equals_closed_loop() {
        let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap();
        let sp = ShapedParams::identity(&m);
        let a = assemble_closed_loop(&m, &sp, None).unwrap();
        let b = assemble_coupled(&m, &sp, &EnvironmentImpedance::zero(1), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn environment_mass_adds_to_link_mass() {
        let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap();
        let sp = ShapedParams::identity(&m);
        let env = EnvironmentImpedance::scalar(1.0, 0.0, 0.0).unwrap();
        let a0 = assemble_closed_loop(&m, &sp, None).unwrap();
        let a1 = assemble_coupled(&m, &sp, &env, None).unwrap();
        assert!((a0.a[(0, 2)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a1.a[(0, 2)], 0.25);
    }

    #[test]
    fn closed_loop_tf_matches_analytic_admittance() {
        let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap();
        let sp = ShapedParams {
            inertia: linalg::diag(&[0.3 / 5.9]),
            stiffness: linalg::diag(&[1e5]),
            damping: linalg::diag(&[0.1]),
        };
        let tf = ss_to_tf(&assemble_closed_loop(&m, &sp, None).unwrap(), 0, 0).unwrap();
        assert_eq!(tf.cancelled().len(), 1);
        let y = admittance_1dof(&sp, 3.0).unwrap();
        let a = tf.normalized();
        let b = y.normalized();
        assert_eq!(a.num().len(), b.num().len());
        assert_eq!(a.den().len(), b.den().len());
        for (x, y) in a.num().iter().zip(b.num()).chain(a.den().iter().zip(b.den())) {
            assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn recursion_and_eigenvalue_constructions_agree() {
        let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap();
        let sp = ShapedParams {
            inertia: linalg::diag(&[0.5]),
            stiffness: linalg::diag(&[2e6]),
            damping: linalg::diag(&[2.0]),
        };
        let outer = OuterLoop::new(linalg::diag(&[100.0]), linalg::diag(&[10.0]), Vector::zeros(1), false).unwrap();
        let ss = assemble_closed_loop(&m, &sp, Some(&outer)).unwrap();
        let (n1, d1) = leverrier_pair(&ss, 0, 0);
        let (n2, d2) = eigen_pair(&ss, 0, 0);
        for (a, b) in n1.iter().zip(&n2).chain(d1.iter().zip(&d2)) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
        let channel = Channel::new(&ss, 0, 0).unwrap();
        assert!(conversion_error(&n1, &d1, &channel, &probe_frequencies(&ss)) <= LEVERRIER_RTOL);
    }
}
