//! Positive-real test for SISO transfer functions.
//!
//! The grid check alone cannot tell a function that touches zero from above from
//! one that dips slightly below it between samples. When the grid minimum of
//! `Re G(jω)` lands in the doubtful band, the sign of the real part is settled
//! exactly through the even polynomial `R(ω²) = Re[N(jω)·conj(D(jω))]`, whose
//! sign matches `Re G(jω)` wherever `D(jω) ≠ 0`.

use num_complex::Complex64;

use super::freq::FrequencyResponse;
use super::poly;
use super::tf::RationalTF;

/// Smallest acceptable value of `Re G(jω)`.
pub const RE_FLOOR: f64 = -1e-9;
/// Grid minima below this (and above [`RE_FLOOR`]) are not trusted on their own.
pub const DOUBT_CEILING: f64 = 1e-6;
/// Poles with `|Re p| ≤ AXIS_RTOL·max(1, |p|)` are treated as lying on the axis.
pub const AXIS_RTOL: f64 = 1e-7;

const MULTIPLICITY_RTOL: f64 = 1e-6;
const RESIDUE_IMAG_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Passive,
    NotPassive,
    Inconclusive,
}

/// Evidence for a non-passive or inconclusive verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    UnstablePole(Complex64),
    RepeatedAxisPole(Complex64),
    NegativeResidue { pole: Complex64, residue: Complex64 },
    /// Relative degree above one, or a pole at infinity with negative residue.
    ImproperAtInfinity { relative_degree: i64 },
    NegativeRealPart { omega: f64, re: f64 },
    /// The grid minimum was in the doubtful band and could not be refined.
    GridDoubt { omega: f64, re: f64 },
    RootFindingFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveRealReport {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Minimum of `Re G(jω)` over finite grid samples (`+∞` for an empty grid).
    pub grid_min_re: f64,
    pub grid_min_omega: f64,
    /// Whether the exact sign analysis was needed.
    pub refined: bool,
}

impl PositiveRealReport {
    pub fn is_passive(&self) -> bool {
        self.verdict == Verdict::Passive
    }

    fn fail(witness: Witness, grid_min_re: f64, grid_min_omega: f64) -> Self {
        Self {
            verdict: Verdict::NotPassive,
            witness: Some(witness),
            grid_min_re,
            grid_min_omega,
            refined: false,
        }
    }
}

/// Checks, in order: pole locations, imaginary-axis poles (simple, nonnegative
/// real residue), behaviour at infinity, then `Re G(jω) ≥ RE_FLOOR` on `grid`.
/// The first violated condition decides the verdict.
pub fn positive_real_check(tf: &RationalTF, grid: &[f64]) -> PositiveRealReport {
    let nan = f64::NAN;
    let num = tf.num();
    let den = tf.den();

    if !poly::is_zero(num) {
        let poles = match poly::roots(den) {
            Ok(p) => p,
            Err(e) => {
                return PositiveRealReport {
                    verdict: Verdict::Inconclusive,
                    witness: Some(Witness::RootFindingFailed(e.to_string())),
                    grid_min_re: nan,
                    grid_min_omega: nan,
                    refined: false,
                }
            }
        };
        if let Some(w) = pole_violation(num, den, &poles) {
            return PositiveRealReport::fail(w, nan, nan);
        }
        let rel = poly::degree(num) as i64 - poly::degree(den) as i64;
        let ratio = num.last().unwrap() / den.last().unwrap();
        if rel > 1 || (rel == 1 && ratio < 0.0) {
            return PositiveRealReport::fail(Witness::ImproperAtInfinity { relative_degree: rel }, nan, nan);
        }
    }

    let (mut min_re, mut min_omega) = (f64::INFINITY, nan);
    for &omega in grid {
        if let Some(v) = tf.response_at(omega) {
            if v.re < min_re {
                min_re = v.re;
                min_omega = omega;
            }
        }
    }

    if min_re < RE_FLOOR {
        return PositiveRealReport::fail(
            Witness::NegativeRealPart {
                omega: min_omega,
                re: min_re,
            },
            min_re,
            min_omega,
        );
    }
    if min_re > DOUBT_CEILING {
        return PositiveRealReport {
            verdict: Verdict::Passive,
            witness: None,
            grid_min_re: min_re,
            grid_min_omega: min_omega,
            refined: false,
        };
    }

    let (verdict, witness) = match refine(tf) {
        Ok(None) => (Verdict::Passive, None),
        Ok(Some((omega, re))) => (Verdict::NotPassive, Some(Witness::NegativeRealPart { omega, re })),
        Err(_) => (
            Verdict::Inconclusive,
            Some(Witness::GridDoubt {
                omega: min_omega,
                re: min_re,
            }),
        ),
    };
    PositiveRealReport {
        verdict,
        witness,
        grid_min_re: min_re,
        grid_min_omega: min_omega,
        refined: true,
    }
}

fn pole_violation(num: &[f64], den: &[f64], poles: &[Complex64]) -> Option<Witness> {
    let on_axis = |p: &Complex64| p.re.abs() <= AXIS_RTOL * p.norm().max(1.0);
    if let Some(&p) = poles.iter().find(|p| !on_axis(p) && p.re > 0.0) {
        return Some(Witness::UnstablePole(p));
    }
    let axis: Vec<Complex64> = poles.iter().copied().filter(on_axis).collect();
    let dden = poly::derivative(den);
    for (i, &p) in axis.iter().enumerate() {
        let scale = p.norm().max(1.0);
        if axis
            .iter()
            .enumerate()
            .any(|(j, q)| j != i && (p - q).norm() <= MULTIPLICITY_RTOL * scale)
        {
            return Some(Witness::RepeatedAxisPole(p));
        }
        let s = Complex64::new(0.0, p.im);
        let residue = poly::eval(num, s) / poly::eval(&dden, s);
        let size = residue.norm();
        if residue.im.abs() > RESIDUE_IMAG_RTOL * size.max(f64::MIN_POSITIVE) && size > 0.0
            || residue.re < -1e-9 * size.max(1.0)
        {
            return Some(Witness::NegativeResidue { pole: p, residue });
        }
    }
    None
}

/// Coefficients of `R(x)`, ascending in `x = ω²`.
fn hermitian_part(num: &[f64], den: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; (num.len() + den.len()) / 2 + 1];
    for (k, &nk) in num.iter().enumerate() {
        for (l, &dl) in den.iter().enumerate() {
            let diff = k as i64 - l as i64;
            if diff % 2 != 0 {
                continue;
            }
            let sign = if diff.rem_euclid(4) == 0 { 1.0 } else { -1.0 };
            r[(k + l) / 2] += sign * nk * dl;
        }
    }
    poly::trim(&r)
}

/// Returns the most negative sample of `Re G(jω)` between consecutive sign
/// changes of `R`, if any falls below [`RE_FLOOR`].
fn refine(tf: &RationalTF) -> crate::error::Result<Option<(f64, f64)>> {
    let r = hermitian_part(tf.num(), tf.den());
    let norm = r.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 || r.iter().all(|c| c.abs() <= 1e-14 * norm) {
        return Ok(None);
    }
    let mut breaks: Vec<f64> = poly::roots(&r)?
        .into_iter()
        .filter(|z| z.re > 0.0 && z.im.abs() <= 1e-6 * z.re)
        .map(|z| z.re)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut probes = Vec::new();
    match (breaks.first(), breaks.last()) {
        (Some(&lo), Some(&hi)) => {
            probes.push(lo * 0.5);
            probes.extend(breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            probes.push(hi * 2.0);
        }
        _ => probes.push(1.0),
    }

    let mut worst: Option<(f64, f64)> = None;
    for x in probes {
        let omega = x.sqrt();
        if let Some(v) = tf.response_at(omega) {
            if v.re < RE_FLOOR && worst.is_none_or(|(_, re)| v.re < re) {
                worst = Some((omega, v.re));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::freq::logspace;

    fn grid() -> Vec<f64> {
        logspace(1e-2, 1e3, 400)
    }

    fn tf(num: &[f64], den: &[f64]) -> RationalTF {
        RationalTF::new(num.to_vec(), den.to_vec()).unwrap()
    }

    #[test]
    fn first_order_lag_is_positive_real() {
        let r = positive_real_check(&tf(&[1.0], &[1.0, 1.0]), &grid());
        assert_eq!(r.verdict, Verdict::Passive);
        assert!(r.witness.is_none());
    }

    #[test]
    fn integrator_and_spring_are_positive_real() {
        assert!(positive_real_check(&tf(&[1.0], &[0.0, 1.0]), &grid()).is_passive());
        // s/(s² + 4): lossless, Re ≡ 0
        assert!(positive_real_check(&tf(&[0.0, 1.0], &[4.0, 0.0, 1.0]), &grid()).is_passive());
    }

    #[test]
    fn unstable_pole_is_reported() {
        let r = positive_real_check(&tf(&[1.0], &[-1.0, 1.0]), &grid());
        assert_eq!(r.verdict, Verdict::NotPassive);
        assert!(matches!(r.witness, Some(Witness::UnstablePole(p)) if (p.re - 1.0).abs() < 1e-12));
    }

    #[test]
    fn double_integrator_fails() {
        let r = positive_real_check(&tf(&[1.0], &[0.0, 0.0, 1.0]), &grid());
        assert_eq!(r.verdict, Verdict::NotPassive);
        assert!(matches!(r.witness, Some(Witness::RepeatedAxisPole(_))));
    }

    #[test]
    fn negative_residue_fails() {
        let r = positive_real_check(&tf(&[-1.0], &[0.0, 1.0]), &grid());
        assert!(matches!(r.witness, Some(Witness::NegativeResidue { .. })));
    }

    #[test]
    fn second_order_lag_fails_on_grid() {
        // 1/(s+1)² has Re < 0 above ω = 1
        let r = positive_real_check(&tf(&[1.0], &[1.0, 2.0, 1.0]), &grid());
        assert_eq!(r.verdict, Verdict::NotPassive);
        assert!(matches!(r.witness, Some(Witness::NegativeRealPart { .. })));
    }

    #[test]
    fn sparse_grid_misses_what_dense_grid_finds() {
        // Re G(jω) = 1 − 1.001·ω²/|D(jω)|², dipping to −1e-3 at ω = 1
        let g = tf(&[1.0, -1e-3, 1.0], &[1.0, 1.0, 1.0]);
        let sparse = positive_real_check(&g, &[0.1, 10.0]);
        assert_eq!(sparse.verdict, Verdict::Passive);
        let dense = positive_real_check(&g, &grid());
        assert_eq!(dense.verdict, Verdict::NotPassive);
    }

    #[test]
    fn refinement_settles_doubtful_grid() {
        // Re G(jω) = 1/(1+ω²) ≈ 1e-7 at the top of the grid
        let g = tf(&[1.0], &[1.0, 1.0]);
        let r = positive_real_check(&g, &logspace(1e-2, 3.2e3, 100));
        assert!(r.refined);
        assert_eq!(r.verdict, Verdict::Passive);
    }

    #[test]
    fn refinement_catches_dip_hidden_in_band() {
        // N = e·D − d·s gives Re G(jω) = e − d·ω²/|D(jω)|², minimum e − d at ω = 1
        let (e, d) = (1e-6, 1e-6 + 1e-8);
        let g = tf(&[e, e - d, e], &[1.0, 1.0, 1.0]);
        let r = positive_real_check(&g, &[0.5, 2.0]);
        assert!(r.grid_min_re > RE_FLOOR && r.grid_min_re < DOUBT_CEILING);
        assert!(r.refined);
        assert_eq!(r.verdict, Verdict::NotPassive);
        assert!(matches!(r.witness, Some(Witness::NegativeRealPart { re, .. }) if re < RE_FLOOR));
    }

    #[test]
    fn hermitian_polynomial_matches_direct_evaluation() {
        let num = [2.0, -1.0, 0.5, 3.0];
        let den = [1.0, 4.0, 2.0, 1.0, 0.3];
        let r = hermitian_part(&num, &den);
        for w in [0.1, 0.7, 2.0, 5.0] {
            let s = Complex64::new(0.0, w);
            let direct = (poly::eval(&num, s) * poly::eval(&den, s).conj()).re;
            assert!((poly::eval_real(&r, w * w) - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }
}
