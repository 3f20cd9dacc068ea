//! Time-domain simulation of the controlled robot, in either coordinate chart,
//! with energy and supply bookkeeping.

mod rk4;

pub use rk4::{integrate, integrate_strided, step_count, StageTime, Trajectory};

use crate::control::{
    gains_at, linear_control, nonlinear_control, outer_loop_torque, ImpedanceGains, OuterLoop, ShapedParams,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lti::ss::assemble_coupled;
use crate::lti::tf::EnvironmentImpedance;
use crate::model::{open_loop_field, LinearRobotParams, OpenLoopState, RobotModel};
use crate::transform::{closed_loop_energy, closed_loop_field, port_velocities, ClosedLoopState, ShapingTransform};

/// The step must resolve the fastest linearized mode this many times per radian.
pub const STEPS_PER_RADIAN: f64 = 20.0;

/// External torque applied to the links.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero,
    /// Switches on at the first grid point at or after `start` and stays on.
    Step { amplitude: f64, joint: usize, start: f64 },
    /// `amplitude·sin(frequency·t)`, frequency in rad/s.
    Sinusoid { amplitude: f64, frequency: f64, joint: usize },
}

impl InputSignal {
    fn joint(&self) -> Option<usize> {
        match *self {
            InputSignal::Zero => None,
            InputSignal::Step { joint, .. } | InputSignal::Sinusoid { joint, .. } => Some(joint),
        }
    }

    /// Value during the stage `at` of a run with step `dt`.
    pub fn eval(&self, n: usize, at: StageTime, dt: f64) -> Vector {
        let mut out = Vector::zeros(n);
        match *self {
            InputSignal::Zero => {}
            InputSignal::Step {
                amplitude,
                joint,
                start,
            } => {
                let first = ((start / dt) - 1e-9).ceil().max(0.0) as usize;
                if at.step >= first {
                    out[joint] = amplitude;
                }
            }
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                joint,
            } => out[joint] = amplitude * (frequency * at.t).sin(),
        }
        out
    }
}

/// How the controller treats the configuration dependence of `M(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlLaw {
    /// Gains fixed at the initial configuration, no Coriolis compensation.
    Linear,
    /// Gains re-evaluated at the measured `q`, with Coriolis compensation.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub law: ControlLaw,
    pub shaped: ShapedParams,
    pub outer: Option<OuterLoop>,
}

/// One simulation run. Without a controller the motors receive zero torque.
#[derive(Clone)]
pub struct Scenario<'a> {
    pub plant: &'a dyn RobotModel,
    pub controller: Option<Controller>,
    pub environment: Option<EnvironmentImpedance>,
    pub input: InputSignal,
    pub horizon: f64,
    pub dt: f64,
    /// Plant-chart initial state; all zeros when `None`.
    pub initial: Option<OpenLoopState>,
    /// Record every `record_every`-th step (at least 1).
    pub record_every: usize,
}

impl<'a> Scenario<'a> {
    pub fn new(plant: &'a dyn RobotModel, horizon: f64, dt: f64) -> Self {
        Self {
            plant,
            controller: None,
            environment: None,
            input: InputSignal::Zero,
            horizon,
            dt,
            initial: None,
            record_every: 1,
        }
    }

    pub fn with_controller(mut self, c: Controller) -> Self {
        self.controller = Some(c);
        self
    }

    pub fn with_environment(mut self, env: EnvironmentImpedance) -> Self {
        self.environment = Some(env);
        self
    }

    pub fn with_input(mut self, input: InputSignal) -> Self {
        self.input = input;
        self
    }

    pub fn with_initial(mut self, x0: OpenLoopState) -> Self {
        self.initial = Some(x0);
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn initial_state(&self) -> OpenLoopState {
        self.initial
            .clone()
            .unwrap_or_else(|| OpenLoopState::zeros(self.plant.dof()))
    }

    fn shaped(&self) -> ShapedParams {
        self.controller
            .as_ref()
            .map(|c| c.shaped.clone())
            .unwrap_or_else(|| ShapedParams::identity(self.plant))
    }

    fn outer(&self) -> Option<&OuterLoop> {
        self.controller.as_ref().and_then(|c| c.outer.as_ref())
    }

    /// Largest admissible step: `1/(20·ω_max)` with `ω_max` the largest eigenvalue
    /// modulus of the closed loop linearized at the initial configuration.
    pub fn max_dt(&self) -> Result<f64> {
        let m = self.plant;
        let n = m.dof();
        let x0 = self.initial_state();
        let lin = LinearRobotParams::new(
            m.mass(&x0.q),
            m.motor_inertia().clone(),
            m.stiffness().clone(),
            m.damping().clone(),
        )?;
        let env = self.environment.clone().unwrap_or_else(|| EnvironmentImpedance::zero(n));
        let ss = assemble_coupled(&lin, &self.shaped(), &env, self.outer())?;
        let omega = ss.eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(if omega > 0.0 {
            1.0 / (STEPS_PER_RADIAN * omega)
        } else {
            f64::INFINITY
        })
    }

    /// Checks dimensions, the time grid and the step-size cap.
    pub fn validate(&self) -> Result<()> {
        self.validate_grid()?;
        let cap = self.max_dt()?;
        if self.dt > cap {
            return Err(Error::InvalidParameter(format!(
                "dt = {:e} s exceeds the stability cap {:e} s",
                self.dt, cap
            )));
        }
        Ok(())
    }

    fn validate_grid(&self) -> Result<()> {
        let n = self.plant.dof();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be at least dt = {}",
                self.horizon, self.dt
            )));
        }
        self.initial_state().check(n)?;
        if let Some(j) = self.input.joint() {
            if j >= n {
                return Err(Error::InvalidParameter(format!(
                    "input joint {j} out of range for {n} joints"
                )));
            }
        }
        if let Some(env) = &self.environment {
            if env.dof() != n {
                return Err(Error::dim("environment", n, env.dof()));
            }
        }
        if let Some(c) = &self.controller {
            if c.shaped.dof() != n {
                return Err(Error::dim("shaped parameters", n, c.shaped.dof()));
            }
            if let Some(o) = &c.outer {
                if o.dof() != n {
                    return Err(Error::dim("outer loop", n, o.dof()));
                }
            }
        }
        Ok(())
    }
}

/// Recorded time series. `phi`/`z` are the closed-loop coordinates and `theta`/`s`
/// the plant coordinates of the same states; without a controller they coincide.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub q: Vec<Vector>,
    pub phi: Vec<Vector>,
    pub p: Vec<Vector>,
    pub z: Vec<Vector>,
    pub theta: Vec<Vector>,
    pub s: Vec<Vector>,
    /// Motor torque applied to the plant.
    pub tau: Vec<Vector>,
    /// External drive on the links (environment reaction not included).
    pub tau_e: Vec<Vector>,
    pub tau_u: Vec<Vector>,
    /// Stored energy, including environment storage when coupled.
    pub energy: Vec<f64>,
    /// `∫(q̇ᵀτ_e + φ̇ᵀτ_u) dt`
    pub supply: Vec<f64>,
    /// `H(t) − H(0) − supply(t)`
    pub passivity_residual: Vec<f64>,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.q.first().map_or(0, |q| q.len())
    }

    /// One coordinate of a vector series.
    pub fn component(series: &[Vector], i: usize) -> Vec<f64> {
        series.iter().map(|v| v[i]).collect()
    }

    pub fn max_energy(&self) -> f64 {
        self.energy.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }
}

/// Largest value of `H(t) − H(0) − supply(t)` over the run (0 for an empty run).
pub fn passivity_audit(r: &SimResult) -> f64 {
    r.passivity_residual
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(if r.is_empty() { 0.0 } else { f64::NEG_INFINITY })
}

/// `sqrt(∫ (a_j(t) − b_j(t))² dt)` by the trapezoidal rule on a shared time grid.
pub fn l2_distance(a: &SimResult, b: &SimResult, joint: usize) -> Result<f64> {
    if a.len() != b.len() || a.t.iter().zip(&b.t).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0)) {
        return Err(Error::InvalidParameter("results are not on the same time grid".into()));
    }
    if joint >= a.dof() || joint >= b.dof() {
        return Err(Error::InvalidParameter(format!("joint {joint} out of range")));
    }
    let d: Vec<f64> = a.q.iter().zip(&b.q).map(|(x, y)| (x[joint] - y[joint]).powi(2)).collect();
    let integral: f64 = a
        .t
        .windows(2)
        .zip(d.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0] + e[1]))
        .sum();
    Ok(integral.sqrt())
}

/// Reaction of the environment `−(M_h q̈ + D_h q̇ + K_h q)`, solved together with
/// the link acceleration. `free_pdot` is the link momentum rate without it.
fn environment_force(
    m: &dyn RobotModel,
    env: &EnvironmentImpedance,
    q: &Vector,
    qdot: &Vector,
    free_pdot: &Vector,
) -> Result<Vector> {
    let spring_damper = &env.damping * qdot + &env.stiffness * q;
    let mut rhs = free_pdot - &spring_damper;
    if !m.has_constant_mass() {
        rhs -= m.mass_rate(q, qdot) * qdot;
    }
    let loaded = m.mass(q) + &env.mass;
    let qddot = linalg::try_inverse(&loaded)
        .ok_or_else(|| Error::DegenerateModel("M(q) + M_h is singular".into()))?
        * rhs;
    Ok(-(&env.mass * qddot) - spring_damper)
}

fn environment_energy(env: &EnvironmentImpedance, q: &Vector, qdot: &Vector) -> f64 {
    0.5 * qdot.dot(&(&env.mass * qdot)) + 0.5 * q.dot(&(&env.stiffness * q))
}

/// Everything the controller and the bookkeeping need at one state.
struct Signals {
    tau_ext: Vector,
    tau_env: Vector,
    tau_u: Vector,
    qdot: Vector,
    phidot: Vector,
}

impl Signals {
    fn tau_e_total(&self) -> Vector {
        &self.tau_ext + &self.tau_env
    }

    fn supply_rate(&self) -> f64 {
        self.qdot.dot(&self.tau_ext) + self.phidot.dot(&self.tau_u)
    }
}

/// Shared machinery for both charts.
struct Runner<'s, 'a> {
    sc: &'s Scenario<'a>,
    n: usize,
    law: ControlLaw,
    shaped: ShapedParams,
    tr: ShapingTransform,
    fixed_gains: ImpedanceGains,
}

impl<'s, 'a> Runner<'s, 'a> {
    fn new(sc: &'s Scenario<'a>) -> Result<Self> {
        sc.validate()?;
        let m = sc.plant;
        let shaped = sc.shaped();
        let x0 = sc.initial_state();
        let (law, fixed_gains) = match &sc.controller {
            Some(c) => (c.law, gains_at(m, &x0.q, &shaped)?),
            None => (ControlLaw::Linear, ImpedanceGains::passthrough(m.dof())),
        };
        Ok(Self {
            sc,
            n: m.dof(),
            law,
            tr: ShapingTransform::new(&shaped, m)?,
            shaped,
            fixed_gains,
        })
    }

    fn m(&self) -> &dyn RobotModel {
        self.sc.plant
    }

    fn outer_torque(&self, phi: &Vector, phidot: &Vector) -> Result<Vector> {
        match self.sc.outer() {
            Some(o) => outer_loop_torque(phi, phidot, o, self.m()),
            None => Ok(Vector::zeros(self.n)),
        }
    }

    fn env_force(&self, q: &Vector, qdot: &Vector, free_pdot: &Vector) -> Result<Vector> {
        match &self.sc.environment {
            Some(env) => environment_force(self.m(), env, q, qdot, free_pdot),
            None => Ok(Vector::zeros(self.n)),
        }
    }

    fn energy(&self, y: &ClosedLoopState, qdot: &Vector) -> Result<f64> {
        let h = closed_loop_energy(y, &self.shaped, self.m())?;
        Ok(h + self
            .sc
            .environment
            .as_ref()
            .map_or(0.0, |env| environment_energy(env, &y.q, qdot)))
    }

    fn motor_torque(&self, x: &OpenLoopState, sig: &Signals) -> Result<Vector> {
        if self.sc.controller.is_none() {
            return Ok(Vector::zeros(self.n));
        }
        let tau_e = sig.tau_e_total();
        match self.law {
            ControlLaw::Linear => linear_control(x, &tau_e, &sig.tau_u, &self.fixed_gains, self.m()),
            ControlLaw::Nonlinear => {
                let g = if self.m().has_constant_mass() {
                    self.fixed_gains.clone()
                } else {
                    gains_at(self.m(), &x.q, &self.shaped)?
                };
                nonlinear_control(x, &tau_e, &sig.tau_u, &g, self.m())
            }
        }
    }

    fn plant_signals(&self, at: StageTime, x: &OpenLoopState) -> Result<Signals> {
        let m = self.m();
        let qdot = m.mass_inverse(&x.q)? * &x.p;
        let thetadot = self.tr.motor_inertia_inverse() * &x.s;
        let tau_ext = self.sc.input.eval(self.n, at, self.sc.dt);
        let tau_env = if self.sc.environment.is_some() {
            let free = open_loop_field(x, &tau_ext, &Vector::zeros(self.n), m)?.p;
            self.env_force(&x.q, &qdot, &free)?
        } else {
            Vector::zeros(self.n)
        };
        let phi = self.tr.to_closed(x, m)?.phi;
        let phidot = self.tr.phi_rate(&qdot, &thetadot);
        let tau_u = self.outer_torque(&phi, &phidot)?;
        Ok(Signals {
            tau_ext,
            tau_env,
            tau_u,
            qdot,
            phidot,
        })
    }

    fn closed_signals(&self, at: StageTime, y: &ClosedLoopState) -> Result<(Signals, ClosedLoopState)> {
        let m = self.m();
        let (qdot, phidot) = port_velocities(y, &self.shaped, m)?;
        let tau_ext = self.sc.input.eval(self.n, at, self.sc.dt);
        let tau_u = self.outer_torque(&y.phi, &phidot)?;
        let mut f = closed_loop_field(y, &tau_ext, &tau_u, &self.shaped, m)?;
        let tau_env = self.env_force(&y.q, &qdot, &f.p)?;
        f.p += &tau_env;
        Ok((
            Signals {
                tau_ext,
                tau_env,
                tau_u,
                qdot,
                phidot,
            },
            f,
        ))
    }

    fn plant_field(&self, at: StageTime, xv: &Vector) -> Result<Vector> {
        let n = self.n;
        let x = OpenLoopState::from_vector(&xv.rows(0, 4 * n).into_owned(), n);
        let sig = self.plant_signals(at, &x)?;
        let tau = self.motor_torque(&x, &sig)?;
        let f = open_loop_field(&x, &sig.tau_e_total(), &tau, self.m())?;
        Ok(augment(f.to_vector(), sig.supply_rate()))
    }

    fn closed_field(&self, at: StageTime, yv: &Vector) -> Result<Vector> {
        let n = self.n;
        let y = ClosedLoopState::from_vector(&yv.rows(0, 4 * n).into_owned(), n);
        let (sig, f) = self.closed_signals(at, &y)?;
        Ok(augment(f.to_vector(), sig.supply_rate()))
    }

    fn run(&self, closed_chart: bool) -> Result<SimResult> {
        let n = self.n;
        let m = self.m();
        let x0 = self.sc.initial_state();
        let start = if closed_chart {
            self.tr.to_closed(&x0, m)?.to_vector()
        } else {
            x0.to_vector()
        };
        let (traj, diverged) = rk4::integrate_partial(
            |at, v| {
                if closed_chart {
                    self.closed_field(at, v)
                } else {
                    self.plant_field(at, v)
                }
            },
            &augment(start, 0.0),
            self.sc.dt,
            self.sc.horizon,
            self.sc.record_every,
        )?;

        let mut r = SimResult::default();
        for ((&step, &t), v) in traj.step.iter().zip(&traj.t).zip(&traj.x) {
            let at = StageTime::at_grid(step, self.sc.dt);
            let state = v.rows(0, 4 * n).into_owned();
            let (x, y, sig) = if closed_chart {
                let y = ClosedLoopState::from_vector(&state, n);
                let x = self.tr.from_closed(&y, m)?;
                let (sig, _) = self.closed_signals(at, &y)?;
                (x, y, sig)
            } else {
                let x = OpenLoopState::from_vector(&state, n);
                let y = self.tr.to_closed(&x, m)?;
                let sig = self.plant_signals(at, &x)?;
                (x, y, sig)
            };
            let tau = self.motor_torque(&x, &sig)?;
            let energy = self.energy(&y, &sig.qdot)?;
            let supply = v[4 * n];
            r.t.push(t);
            r.energy.push(energy);
            r.supply.push(supply);
            r.passivity_residual.push(energy - r.energy[0] - supply);
            r.tau.push(tau);
            r.tau_e.push(sig.tau_ext);
            r.tau_u.push(sig.tau_u);
            r.q.push(y.q);
            r.phi.push(y.phi);
            r.p.push(y.p);
            r.z.push(y.z);
            r.theta.push(x.theta);
            r.s.push(x.s);
        }
        match diverged {
            None => Ok(r),
            Some(time) => Err(Error::Divergence {
                time,
                partial: Some(Box::new(r)),
            }),
        }
    }
}

fn augment(v: Vector, extra: f64) -> Vector {
    let n = v.len();
    let mut out = v.resize_vertically(n + 1, 0.0);
    out[n] = extra;
    out
}

/// Integrates the plant `(q, θ, p, s)` with the motor torque computed by the
/// controller at every stage. With an environment, the measured external torque
/// includes the environment reaction.
pub fn simulate_plant_with_controller(sc: &Scenario) -> Result<SimResult> {
    Runner::new(sc)?.run(false)
}

/// Integrates the shaped closed loop directly in `(q, φ, p, z)`, using the
/// scenario's shaped parameters (the plant's own when there is no controller).
pub fn simulate_closed_form(sc: &Scenario) -> Result<SimResult> {
    Runner::new(sc)?.run(true)
}

/// [`simulate_closed_form`] for a scenario that must carry an environment.
pub fn simulate_coupled(sc: &Scenario) -> Result<SimResult> {
    if sc.environment.is_none() {
        return Err(Error::Configuration("coupled simulation needs an environment".into()));
    }
    simulate_closed_form(sc)
}

/// Rigid target behaviour `M(q)q̈ + (C(q, q̇) + D_t)q̇ + K_t(q − q_d) = τ_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDynamics {
    pub stiffness: Mat,
    pub damping: Mat,
    pub setpoint: Vector,
}

impl TargetDynamics {
    pub fn new(stiffness: Mat, damping: Mat, setpoint: Vector) -> Result<Self> {
        let n = setpoint.len();
        linalg::require_square(&stiffness, n, "target stiffness")?;
        linalg::require_square(&damping, n, "target damping")?;
        linalg::require_psd(&stiffness, "target stiffness")?;
        linalg::require_psd(&damping, "target damping")?;
        Ok(Self {
            stiffness,
            damping,
            setpoint,
        })
    }
}

/// Integrates the target behaviour on the links of `sc.plant` with the scenario's
/// input, grid and initial `(q, p)`. The controller and environment are ignored;
/// motor-side series are left at zero and `phi` mirrors `q`.
pub fn simulate_target(sc: &Scenario, target: &TargetDynamics) -> Result<SimResult> {
    let m = sc.plant;
    let n = m.dof();
    sc.validate_grid()?;
    if target.setpoint.len() != n {
        return Err(Error::dim("target setpoint", n, target.setpoint.len()));
    }
    let x0 = sc.initial_state();
    let energy = |q: &Vector, p: &Vector| -> Result<f64> {
        let e = q - &target.setpoint;
        Ok(0.5 * p.dot(&(m.mass_inverse(q)? * p)) + 0.5 * e.dot(&(&target.stiffness * &e)))
    };
    let field = |at: StageTime, v: &Vector| -> Result<Vector> {
        let q = v.rows(0, n).into_owned();
        let p = v.rows(n, n).into_owned();
        let qdot = m.mass_inverse(&q)? * &p;
        let tau_e = sc.input.eval(n, at, sc.dt);
        let pdot = -m.kinetic_gradient(&q, &p)? - &target.damping * &qdot
            - &target.stiffness * (&q - &target.setpoint)
            + &tau_e;
        let mut out = linalg::stack(&[&qdot, &pdot]);
        out = augment(out, qdot.dot(&tau_e));
        Ok(out)
    };
    let start = augment(linalg::stack(&[&x0.q, &x0.p]), 0.0);
    let (traj, diverged) = rk4::integrate_partial(field, &start, sc.dt, sc.horizon, sc.record_every)?;
    let mut r = SimResult::default();
    let zero = Vector::zeros(n);
    for ((&step, &t), v) in traj.step.iter().zip(&traj.t).zip(&traj.x) {
        let q = v.rows(0, n).into_owned();
        let p = v.rows(n, n).into_owned();
        let h = energy(&q, &p)?;
        let supply = v[2 * n];
        r.t.push(t);
        r.energy.push(h);
        r.supply.push(supply);
        r.passivity_residual.push(h - r.energy[0] - supply);
        r.tau_e.push(sc.input.eval(n, StageTime::at_grid(step, sc.dt), sc.dt));
        r.tau.push(zero.clone());
        r.tau_u.push(zero.clone());
        r.phi.push(q.clone());
        r.theta.push(q.clone());
        r.z.push(zero.clone());
        r.s.push(zero.clone());
        r.q.push(q);
        r.p.push(p);
    }
    match diverged {
        None => Ok(r),
        Some(time) => Err(Error::Divergence {
            time,
            partial: Some(Box::new(r)),
        }),
    }
}
