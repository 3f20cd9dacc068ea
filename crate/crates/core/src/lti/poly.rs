//! Real polynomials with ascending coefficients (`c[k]` multiplies `s^k`) and
//! simultaneous root finding by Aberth–Ehrlich iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum Aberth sweeps before giving up.
pub const MAX_ITERATIONS: usize = 500;

/// Accepted backward error `|p(r)| / Σ|c_k||r|^k` for a computed root.
pub const ROOT_BACKWARD_TOL: f64 = 1e-8;

/// Roots whose imaginary part is below this fraction of their modulus are real.
const REAL_SNAP_RTOL: f64 = 1e-10;

/// Drops zero coefficients at the high-degree end (keeps at least one entry).
pub fn trim(c: &[f64]) -> Vec<f64> {
    let mut out = c.to_vec();
    while out.len() > 1 && *out.last().unwrap() == 0.0 {
        out.pop();
    }
    if out.is_empty() {
        out.push(0.0);
    }
    out
}

pub fn degree(c: &[f64]) -> usize {
    trim(c).len() - 1
}

pub fn is_zero(c: &[f64]) -> bool {
    c.iter().all(|x| *x == 0.0)
}

pub fn eval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

pub fn eval_real(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// `p(s)` and `p'(s)` in one Horner pass.
fn eval_with_derivative(c: &[f64], s: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * s + p;
        p = p * s + a;
    }
    (p, dp)
}

/// `Σ |c_k| |s|^k`, the natural scale of rounding errors in `p(s)`.
pub fn magnitude_bound(c: &[f64], s: Complex64) -> f64 {
    let r = s.norm();
    c.iter().rev().fold(0.0, |acc, &a| acc * r + a.abs())
}

pub fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * k as f64)
        .collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|x| x * k).collect()
}

/// Real polynomial with the given (conjugate-closed) roots and leading coefficient.
pub fn from_roots(roots: &[Complex64], leading: f64) -> Vec<f64> {
    let mut acc = vec![Complex64::new(leading, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (k, a) in acc.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= a * r;
        }
        acc = next;
    }
    acc.iter().map(|z| z.re).collect()
}

/// Divides `c` by a monic real factor (`s − r` or `s² + a s + b`), returning
/// quotient and remainder.
pub fn divide(c: &[f64], divisor: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c = trim(c);
    let d = trim(divisor);
    let dn = d.len() - 1;
    if c.len() - 1 < dn {
        return (vec![0.0], c);
    }
    let lead = d[dn];
    let mut rem = c.clone();
    let mut quot = vec![0.0; c.len() - dn];
    for k in (0..quot.len()).rev() {
        let coef = rem[k + dn] / lead;
        quot[k] = coef;
        for (j, &dj) in d.iter().enumerate() {
            rem[k + j] -= coef * dj;
        }
    }
    rem.truncate(dn.max(1));
    (quot, rem)
}

/// All complex roots of `c`, conjugate-closed and sorted by (re, im).
///
/// Exact zero roots are factored out first; the remaining monic polynomial is
/// solved by Aberth–Ehrlich iteration and each root is checked against a backward
/// error bound.
pub fn roots(c: &[f64]) -> Result<Vec<Complex64>> {
    let c = trim(c);
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("polynomial has non-finite coefficients".into()));
    }
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let zeros_at_origin = c.iter().take_while(|x| **x == 0.0).count();
    let mut out = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
    let reduced: Vec<f64> = c[zeros_at_origin..].to_vec();
    let lead = *reduced.last().unwrap();
    let monic: Vec<f64> = reduced.iter().map(|x| x / lead).collect();
    let m = monic.len() - 1;
    if m == 1 {
        out.push(Complex64::new(-monic[0], 0.0));
    } else if m > 1 {
        out.extend(aberth(&monic)?);
    }
    let mut out = conjugate_close(out)?;
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

fn initial_guesses(monic: &[f64]) -> Vec<Complex64> {
    let m = monic.len() - 1;
    // Fujiwara-style bound on root moduli, geometric mean with a lower bound
    let upper = (0..m)
        .map(|k| monic[k].abs().powf(1.0 / (m - k) as f64))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let lower = if monic[0] != 0.0 {
        let rev: Vec<f64> = monic.iter().rev().map(|x| x / monic[0]).collect();
        1.0 / (0..m)
            .map(|k| rev[k].abs().powf(1.0 / (m - k) as f64))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE)
    } else {
        upper
    };
    let radius = (upper * lower).sqrt();
    (0..m)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / m as f64 + 0.4;
            Complex64::from_polar(radius, ang)
        })
        .collect()
}

fn aberth(monic: &[f64]) -> Result<Vec<Complex64>> {
    let mut z = initial_guesses(monic);
    let m = z.len();
    let mut converged = vec![false; m];
    for _ in 0..MAX_ITERATIONS {
        let mut all_done = true;
        for k in 0..m {
            if converged[k] {
                continue;
            }
            let (p, dp) = eval_with_derivative(monic, z[k]);
            if p == Complex64::new(0.0, 0.0) {
                converged[k] = true;
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..m)
                .filter(|&j| j != k)
                .map(|j| Complex64::new(1.0, 0.0) / (z[k] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                all_done = false;
                continue;
            }
            z[k] -= step;
            if step.norm() <= 4.0 * f64::EPSILON * z[k].norm().max(f64::MIN_POSITIVE) {
                converged[k] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    // Stagnation near multiple roots is acceptable when the backward error is small.
    let max_residual = z
        .iter()
        .map(|&r| backward_error(monic, r))
        .fold(0.0, f64::max);
    if !(max_residual <= ROOT_BACKWARD_TOL) {
        return Err(Error::RootFinding {
            iterations: MAX_ITERATIONS,
            max_residual,
        });
    }
    Ok(z)
}

/// `|p(r)| / Σ|c_k||r|^k`.
pub fn backward_error(c: &[f64], r: Complex64) -> f64 {
    let bound = magnitude_bound(c, r);
    if bound == 0.0 {
        return 0.0;
    }
    eval(c, r).norm() / bound
}

/// Snaps nearly real roots onto the real axis and replaces each nearly conjugate
/// pair by an exactly conjugate pair.
fn conjugate_close(mut roots: Vec<Complex64>) -> Result<Vec<Complex64>> {
    for r in roots.iter_mut() {
        if r.im.abs() <= REAL_SNAP_RTOL * r.norm() {
            r.im = 0.0;
        }
    }
    let mut upper: Vec<usize> = (0..roots.len()).filter(|&i| roots[i].im > 0.0).collect();
    let mut lower: Vec<usize> = (0..roots.len()).filter(|&i| roots[i].im < 0.0).collect();
    upper.sort_by(|&a, &b| roots[a].im.total_cmp(&roots[b].im));
    while let Some(u) = upper.pop() {
        let target = roots[u].conj();
        let best = lower
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (roots[*a.1] - target)
                    .norm()
                    .total_cmp(&(roots[*b.1] - target).norm())
            })
            .map(|(pos, &idx)| (pos, idx));
        match best {
            Some((pos, l)) => {
                lower.swap_remove(pos);
                let re = 0.5 * (roots[u].re + roots[l].re);
                let im = 0.5 * (roots[u].im - roots[l].im);
                roots[u] = Complex64::new(re, im);
                roots[l] = Complex64::new(re, -im);
            }
            None => {
                if roots[u].im.abs() > 1e-6 * roots[u].norm() {
                    return Err(Error::RootFinding {
                        iterations: MAX_ITERATIONS,
                        max_residual: roots[u].im.abs(),
                    });
                }
                roots[u].im = 0.0;
            }
        }
    }
    for l in lower {
        if roots[l].im.abs() > 1e-6 * roots[l].norm() {
            return Err(Error::RootFinding {
                iterations: MAX_ITERATIONS,
                max_residual: roots[l].im.abs(),
            });
        }
        roots[l].im = 0.0;
    }
    Ok(roots)
}
