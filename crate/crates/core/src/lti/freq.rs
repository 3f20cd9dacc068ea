use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::poly;
use super::ss::StateSpace;
use super::tf::RationalTF;

/// Something that can be evaluated on the imaginary axis. `None` marks a pole on
/// the axis at that frequency.
pub trait FrequencyResponse {
    fn response_at(&self, omega: f64) -> Option<Complex64>;
}

impl FrequencyResponse for RationalTF {
    fn response_at(&self, omega: f64) -> Option<Complex64> {
        let s = Complex64::new(0.0, omega);
        let den = poly::eval(self.den(), s);
        if den.norm() <= f64::EPSILON * poly::magnitude_bound(self.den(), s) {
            return None;
        }
        Some(poly::eval(self.num(), s) / den)
    }
}

/// One input/output channel of a state-space model, evaluated through linear
/// solves with `(jωI − A)` rather than through polynomials.
#[derive(Debug, Clone, Copy)]
pub struct Channel<'a> {
    pub ss: &'a StateSpace,
    pub input: usize,
    pub output: usize,
}

impl<'a> Channel<'a> {
    pub fn new(ss: &'a StateSpace, input: usize, output: usize) -> Result<Self> {
        if input >= ss.b.ncols() {
            return Err(Error::dim("input index bound", ss.b.ncols(), input));
        }
        if output >= ss.c.nrows() {
            return Err(Error::dim("output index bound", ss.c.nrows(), output));
        }
        Ok(Self { ss, input, output })
    }
}

impl FrequencyResponse for Channel<'_> {
    fn response_at(&self, omega: f64) -> Option<Complex64> {
        let n = self.ss.states();
        let d = Complex64::new(self.ss.d[(self.output, self.input)], 0.0);
        if n == 0 {
            return Some(d);
        }
        let jw = Complex64::new(0.0, omega);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let a = Complex64::new(-self.ss.a[(i, j)], 0.0);
            if i == j {
                a + jw
            } else {
                a
            }
        });
        let norm = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let lu = m.lu();
        let u = lu.u();
        if (0..n).any(|i| u[(i, i)].norm() <= 1e-14 * norm) {
            return None;
        }
        let b = DMatrix::from_fn(n, 1, |i, _| Complex64::new(self.ss.b[(i, self.input)], 0.0));
        let x = lu.solve(&b)?;
        let y: Complex64 = (0..n)
            .map(|i| x[(i, 0)] * self.ss.c[(self.output, i)])
            .sum();
        Some(y + d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqSample {
    pub omega: f64,
    pub value: Complex64,
    /// Set when `ω` hits a pole on the imaginary axis; `value` is then infinite.
    pub infinite: bool,
}

impl FreqSample {
    pub fn mag_db(&self) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            20.0 * self.value.norm().log10()
        }
    }

    pub fn phase_deg(&self) -> f64 {
        self.value.arg().to_degrees()
    }
}

/// Evaluates `sys` at `s = jω` for every `ω` (all must be positive).
pub fn freq_response<S: FrequencyResponse + ?Sized>(sys: &S, omegas: &[f64]) -> Result<Vec<FreqSample>> {
    omegas
        .iter()
        .map(|&omega| {
            if !(omega > 0.0 && omega.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "frequency must be positive, got {omega}"
                )));
            }
            Ok(match sys.response_at(omega) {
                Some(value) => FreqSample {
                    omega,
                    value,
                    infinite: false,
                },
                None => FreqSample {
                    omega,
                    value: Complex64::new(f64::INFINITY, 0.0),
                    infinite: true,
                },
            })
        })
        .collect()
}

/// Bode magnitude/phase pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodePoint {
    pub omega: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

/// Magnitude in dB and phase in degrees, with the phase unwrapped along the grid.
pub fn bode(samples: &[FreqSample]) -> Vec<BodePoint> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev: Option<f64> = None;
    for s in samples {
        let mut phase = s.phase_deg();
        if let Some(p) = prev {
            phase += 360.0 * ((p - phase) / 360.0).round();
        }
        if !s.infinite {
            prev = Some(phase);
        }
        out.push(BodePoint {
            omega: s.omega,
            mag_db: s.mag_db(),
            phase_deg: phase,
        });
    }
    out
}

/// `count` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[test]
    fn first_order_corner() {
        let tf = RationalTF::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let s = freq_response(&tf, &[1.0]).unwrap()[0];
        assert!((s.mag_db() + 3.0103).abs() < 1e-4);
        assert!((s.phase_deg() + 45.0).abs() < 1e-12);
    }

    #[test]
    fn tf_and_ss_paths_agree() {
        let ss = StateSpace::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -100.0, -10.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let tf = RationalTF::new(vec![0.0, 1.0], vec![100.0, 10.0, 1.0]).unwrap();
        let w = logspace(1e-2, 1e3, 50);
        let a = freq_response(&tf, &w).unwrap();
        let b = freq_response(&Channel::new(&ss, 0, 0).unwrap(), &w).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).norm() <= 1e-8 * x.value.norm());
        }
    }

    #[test]
    fn imaginary_pole_is_flagged() {
        let tf = RationalTF::new(vec![1.0], vec![4.0, 0.0, 1.0]).unwrap();
        let s = freq_response(&tf, &[2.0]).unwrap()[0];
        assert!(s.infinite);
        assert_eq!(s.mag_db(), f64::INFINITY);
        assert!(freq_response(&tf, &[0.0]).is_err());
    }

    #[test]
    fn logspace_endpoints() {
        let w = logspace(1e-2, 1e3, 400);
        assert_eq!(w.len(), 400);
        assert_eq!(w[0], 1e-2);
        assert_eq!(w[399], 1e3);
    }

    #[test]
    fn phase_unwrapping_is_continuous() {
        // triple lag crosses −180°
        let tf = RationalTF::new(vec![1.0], vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        let b = bode(&freq_response(&tf, &logspace(1e-2, 1e2, 200)).unwrap());
        assert!(b.windows(2).all(|w| (w[1].phase_deg - w[0].phase_deg).abs() < 30.0));
        assert!((b.last().unwrap().phase_deg + 270.0).abs() < 5.0);
    }
}
