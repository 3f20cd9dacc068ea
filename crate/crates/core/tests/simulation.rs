mod common;

use common::{scalar, series_rel_diff};
use impedance_core::control::{recover_shaped, OuterLoop, ShapedParams};
use impedance_core::linalg::{Mat, Vector};
use impedance_core::lti::{assemble_coupled, EnvironmentImpedance};
use impedance_core::model::{two_link_arm, LinearRobotParams, OpenLoopState, RobotModel, TwoLinkParams};
use impedance_core::sim::{
    integrate, passivity_audit, simulate_closed_form, simulate_coupled, simulate_plant_with_controller,
    simulate_target, ControlLaw, Controller, InputSignal, Scenario, TargetDynamics,
};
use impedance_core::transform::to_closed;

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

fn deflected(n: usize, amount: f64) -> OpenLoopState {
    let mut x = OpenLoopState::zeros(n);
    x.theta[0] = amount;
    x
}

fn controller(shaped: ShapedParams, outer: Option<OuterLoop>) -> Controller {
    Controller {
        law: ControlLaw::Nonlinear,
        shaped,
        outer,
    }
}

#[test]
fn rk4_error_drops_sixteenfold_when_halving_step() {
    let oscillator = |_, x: &Vector| Ok(v(&[x[1], -4.0 * x[0]]));
    let exact = (2.0f64).cos();
    let err = |dt: f64| (integrate(oscillator, &v(&[1.0, 0.0]), dt, 1.0).unwrap().x.last().unwrap()[0] - exact).abs();
    let ratio = err(0.05) / err(0.025);
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn controller_with_plant_shaping_matches_bare_plant() {
    let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 1.0).unwrap();
    let input = InputSignal::Step {
        amplitude: 1.0,
        joint: 0,
        start: 0.01,
    };
    let bare = Scenario::new(&m, 0.1, 5e-5).with_input(input.clone());
    let shaped = bare.clone().with_controller(controller(ShapedParams::identity(&m), None));
    let a = simulate_plant_with_controller(&bare).unwrap();
    let b = simulate_closed_form(&shaped).unwrap();
    assert!(series_rel_diff(&b.q, &a.q, 1e-300) <= 1e-9);
    assert!(series_rel_diff(&b.phi, &a.theta, 1e-300) <= 1e-9);
}

#[test]
fn plant_and_closed_form_runs_agree_on_arm() {
    let arm = two_link_arm(TwoLinkParams {
        gravity: true,
        damping: [1.0, 0.6],
        ..TwoLinkParams::default()
    })
    .unwrap();
    let shaped = ShapedParams {
        inertia: arm.motor_inertia() * 0.5,
        stiffness: arm.stiffness() * 2.0,
        damping: arm.damping() * 2.0,
    };
    let outer = OuterLoop::new(Mat::identity(2, 2) * 200.0, Mat::identity(2, 2) * 20.0, Vector::zeros(2), true).unwrap();
    let x0 = OpenLoopState::from_velocities(&arm, v(&[0.3, -0.2]), v(&[0.3, -0.2]), &v(&[0.8, -0.6]), &v(&[0.8, -0.6]));
    let sc = Scenario::new(&arm, 0.5, 5e-5)
        .with_controller(controller(shaped, Some(outer)))
        .with_initial(x0)
        .with_input(InputSignal::Sinusoid {
            amplitude: 2.0,
            frequency: 7.0,
            joint: 1,
        })
        .with_record_every(20);
    let a = simulate_plant_with_controller(&sc).unwrap();
    let b = simulate_closed_form(&sc).unwrap();
    assert!(series_rel_diff(&a.q, &b.q, 1e-12) <= 1e-6);
    assert!(series_rel_diff(&a.phi, &b.phi, 1e-12) <= 1e-6);
    assert!(passivity_audit(&a) <= 1e-6 * a.max_energy());
    assert!(passivity_audit(&b) <= 1e-6 * b.max_energy());
}

#[test]
fn lossless_closed_loop_conserves_energy() {
    let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 0.0).unwrap();
    let sc = Scenario::new(&m, 1.0, 1e-5)
        .with_controller(controller(ShapedParams::identity(&m), None))
        .with_initial(deflected(1, 1e-3))
        .with_record_every(1000);
    let r = simulate_closed_form(&sc).unwrap();
    let h0 = r.energy[0];
    assert!(h0 > 0.0);
    assert!(passivity_audit(&r).abs() <= 1e-8 * h0);
    assert!(r.energy.iter().all(|h| (h - h0).abs() <= 1e-8 * h0));
}

#[test]
fn damping_dissipates_energy() {
    let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 10.0).unwrap();
    let sp = recover_shaped(&m, &Vector::zeros(1), &scalar(0.5), &scalar(1.0)).unwrap();
    let sc = Scenario::new(&m, 0.2, 2e-5)
        .with_controller(controller(sp, None))
        .with_initial(deflected(1, 1e-3))
        .with_record_every(100);
    let r = simulate_plant_with_controller(&sc).unwrap();
    assert!(*r.passivity_residual.last().unwrap() < 0.0);
    assert!(r.energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

#[test]
fn zero_environment_changes_nothing() {
    let m = LinearRobotParams::scalar(3.0, 3.0, 1e4, 2.0).unwrap();
    let sp = recover_shaped(&m, &Vector::zeros(1), &scalar(0.5), &scalar(1.0)).unwrap();
    let base = Scenario::new(&m, 0.3, 1e-4)
        .with_controller(controller(sp, None))
        .with_input(InputSignal::Step {
            amplitude: 1.0,
            joint: 0,
            start: 0.0,
        });
    let coupled = simulate_coupled(&base.clone().with_environment(EnvironmentImpedance::zero(1))).unwrap();
    let free = simulate_closed_form(&base).unwrap();
    assert!(series_rel_diff(&coupled.q, &free.q, 1e-300) <= 1e-12);
    assert!(simulate_coupled(&base).is_err());
}

#[test]
fn passive_environment_drains_energy() {
    let arm = two_link_arm(TwoLinkParams::default()).unwrap();
    let shaped = ShapedParams {
        inertia: arm.motor_inertia() * 0.5,
        stiffness: arm.stiffness() * 2.0,
        damping: Mat::zeros(2, 2),
    };
    let outer = OuterLoop::new(Mat::identity(2, 2) * 500.0, Mat::identity(2, 2) * 50.0, Vector::zeros(2), false).unwrap();
    let env = EnvironmentImpedance::new(Mat::identity(2, 2) * 0.5, Mat::identity(2, 2) * 3.0, Mat::identity(2, 2) * 200.0).unwrap();
    let x0 = OpenLoopState::from_velocities(&arm, v(&[0.2, 0.1]), v(&[0.25, 0.05]), &v(&[0.5, -1.0]), &v(&[0.0, 0.0]));
    let sc = Scenario::new(&arm, 1.0, 5e-5)
        .with_controller(controller(shaped, Some(outer)))
        .with_environment(env)
        .with_initial(x0)
        .with_record_every(10);
    for r in [simulate_coupled(&sc).unwrap(), simulate_plant_with_controller(&sc).unwrap()] {
        let scale = r.max_energy();
        // the outer loop acts as a spring on φ whose storage is not part of H
        let total: Vec<f64> = r.energy.iter().zip(&r.phi).map(|(h, phi)| h + 250.0 * phi.norm_squared()).collect();
        assert!(total.windows(2).all(|w| w[1] <= w[0] + 1e-9 * scale));
        assert!(total.last().unwrap() < &(0.5 * total[0]));
        assert!(passivity_audit(&r) <= 1e-6 * scale);
    }
}

#[test]
fn coupled_single_joint_matches_matrix_exponential() {
    let m = LinearRobotParams::scalar(3.0, 3.0, 1e4, 5.0).unwrap();
    let sp = recover_shaped(&m, &Vector::zeros(1), &scalar(0.5), &scalar(1.0)).unwrap();
    let env = EnvironmentImpedance::scalar(1.0, 2.0, 50.0).unwrap();
    let outer = OuterLoop::new(scalar(100.0), scalar(10.0), Vector::zeros(1), false).unwrap();
    let x0 = OpenLoopState::from_velocities(&m, v(&[0.01]), v(&[0.02]), &v(&[0.1]), &v(&[-0.1]));
    let sc = Scenario::new(&m, 1.0, 1e-4)
        .with_controller(controller(sp.clone(), Some(outer.clone())))
        .with_environment(env.clone())
        .with_initial(x0.clone())
        .with_record_every(100);
    let r = simulate_coupled(&sc).unwrap();

    let a = assemble_coupled(&m, &sp, &env, Some(&outer)).unwrap().a;
    let y0 = to_closed(&x0, &sp, &m).unwrap();
    // the state-space momentum is that of the loaded link
    let start = v(&[y0.q[0], y0.phi[0], y0.p[0] * 4.0 / 3.0, y0.z[0]]);
    let scale = r.q.iter().chain(&r.phi).map(|x| x.amax()).fold(0.0, f64::max);
    for (k, &t) in r.t.iter().enumerate() {
        let exact = (&a * t).exp() * &start;
        assert!((r.q[k][0] - exact[0]).abs() <= 1e-6 * scale, "t = {t}");
        assert!((r.phi[k][0] - exact[1]).abs() <= 1e-6 * scale, "t = {t}");
    }
}

#[test]
fn stiff_plant_stays_bounded_at_guarded_step() {
    let m = LinearRobotParams::scalar(3.0, 3.0, 1e6, 0.0).unwrap();
    let sc = Scenario::new(&m, 5.0, 6e-5)
        .with_input(InputSignal::Step {
            amplitude: 1.0,
            joint: 0,
            start: 0.0,
        })
        .with_record_every(1000);
    assert!(sc.max_dt().unwrap() >= 6e-5);
    let r = simulate_plant_with_controller(&sc).unwrap();
    assert!(r.q.iter().chain(&r.theta).all(|x| x.iter().all(|v| v.is_finite())));
    assert!(passivity_audit(&r) <= 1e-6 * r.max_energy());
}

#[test]
fn target_dynamics_settle_at_spring_equilibrium() {
    let arm = two_link_arm(TwoLinkParams::default()).unwrap();
    let target = TargetDynamics::new(Mat::identity(2, 2) * 1000.0, Mat::identity(2, 2) * 135.0, Vector::zeros(2)).unwrap();
    let sc = Scenario::new(&arm, 3.0, 1e-4).with_input(InputSignal::Step {
        amplitude: 10.0,
        joint: 1,
        start: 0.0,
    });
    let r = simulate_target(&sc, &target).unwrap();
    let q = r.q.last().unwrap();
    assert!((q[1] - 0.01).abs() < 1e-6);
    assert!(q[0].abs() < 1e-6);
    assert!(passivity_audit(&r) <= 1e-6 * r.max_energy());
}
