#![allow(dead_code)]

use impedance_core::control::ShapedParams;
use impedance_core::linalg::{Mat, Vector};
use impedance_core::model::{LinearRobotParams, OpenLoopState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric positive definite matrix with eigenvalues roughly in `[lo, hi]`.
pub fn spd(r: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Mat {
    let b = Mat::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    let (q, _) = b.qr().unpack();
    let d = Mat::from_diagonal(&Vector::from_fn(n, |_, _| lo * (hi / lo).powf(r.random::<f64>())));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

pub fn vector(r: &mut impl Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| r.random_range(-scale..scale))
}

/// A linear plant together with an admissible shaping. Plant damping is a
/// multiple of the stiffness so the induced shaped damping stays symmetric.
pub struct LinearCase {
    pub plant: LinearRobotParams,
    pub shaped: ShapedParams,
}

pub fn linear_case(r: &mut impl Rng, n: usize) -> LinearCase {
    let mass = spd(r, n, 0.5, 5.0);
    let motor = spd(r, n, 0.1, 5.0);
    let stiffness = spd(r, n, 1e2, 1e5);
    let alpha = r.random_range(0.0..1e-3);
    let plant = LinearRobotParams::new(mass, motor, stiffness.clone(), &stiffness * alpha).unwrap();
    let ke = spd(r, n, 1e2, 1e5);
    let shaped = ShapedParams {
        inertia: spd(r, n, 0.05, 5.0),
        damping: &ke * alpha,
        stiffness: ke,
    };
    LinearCase { plant, shaped }
}

pub fn state(r: &mut impl Rng, n: usize) -> OpenLoopState {
    OpenLoopState {
        q: vector(r, n, 1.0),
        theta: vector(r, n, 1.0),
        p: vector(r, n, 2.0),
        s: vector(r, n, 2.0),
    }
}

pub fn scalar(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)` over whole series.
pub fn series_rel_diff(a: &[Vector], b: &[Vector], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().map(|v| v.amax()).fold(floor, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max) / scale
}
