mod common;

use common::{rng, vector};
use impedance_core::linalg::{Mat, Vector};
use impedance_core::model::{two_link_arm, RobotModel, TwoLinkArm, TwoLinkParams};
use proptest::prelude::*;

fn arm(gravity: bool) -> TwoLinkArm {
    two_link_arm(TwoLinkParams {
        gravity,
        ..TwoLinkParams::default()
    })
    .unwrap()
}

fn unit(k: usize) -> Vector {
    let mut e = Vector::zeros(2);
    e[k] = 1.0;
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mass_rate_minus_twice_coriolis_is_skew(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = arm(false);
        let q = vector(&mut r, 2, 3.0);
        let qdot = vector(&mut r, 2, 2.0);
        let n: Mat = a.mass_rate(&q, &qdot) - a.coriolis(&q, &qdot) * 2.0;
        prop_assert!((&n + n.transpose()).amax() <= 1e-12 * n.amax().max(1.0));
        // the mass rate itself agrees with a finite difference along q̇
        let h = 1e-6;
        let fd = (a.mass(&(&q + &qdot * h)) - a.mass(&(&q - &qdot * h))) / (2.0 * h);
        prop_assert!((fd - a.mass_rate(&q, &qdot)).amax() <= 1e-7);
    }

    #[test]
    fn gravity_gradient_matches_potential(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = arm(true);
        let q = vector(&mut r, 2, 3.0);
        let h = 1e-6;
        let grad = a.gravity_grad(&q);
        for k in 0..2 {
            let fd = (a.potential(&(&q + unit(k) * h)) - a.potential(&(&q - unit(k) * h))) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-6 * grad.amax().max(1.0));
        }
    }

    #[test]
    fn kinetic_gradient_matches_energy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = arm(false);
        let q = vector(&mut r, 2, 3.0);
        let p = vector(&mut r, 2, 2.0);
        let kinetic = |q: &Vector| 0.5 * p.dot(&(a.mass_inverse(q).unwrap() * &p));
        let grad = a.kinetic_gradient(&q, &p).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let fd = (kinetic(&(&q + unit(k) * h)) - kinetic(&(&q - unit(k) * h))) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-6 * grad.amax().max(1.0));
        }
    }

    #[test]
    fn mass_matrix_stays_positive_definite(q2 in -10.0f64..10.0) {
        let a = arm(false);
        let m = a.mass(&Vector::from_column_slice(&[0.0, q2]));
        prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn stretched_arm_has_largest_inertia() {
    let a = arm(false);
    let straight = a.mass(&Vector::zeros(2))[(0, 0)];
    let folded = a.mass(&Vector::from_column_slice(&[0.0, std::f64::consts::PI]))[(0, 0)];
    assert!(straight > folded);
}

#[test]
fn gravity_pulls_horizontal_arm_down() {
    // both links horizontal: the base joint carries both weights
    let a = arm(true);
    let g = a.gravity_grad(&Vector::zeros(2));
    let p = a.params();
    let expected0 = 9.81 * (p.link_masses[0] * 0.5 * p.link_lengths[0] + p.link_masses[1] * (p.link_lengths[0] + 0.5 * p.link_lengths[1]));
    assert!((g[0] - expected0).abs() < 1e-9);
    assert!((g[1] - 9.81 * p.link_masses[1] * 0.5 * p.link_lengths[1]).abs() < 1e-9);
}
