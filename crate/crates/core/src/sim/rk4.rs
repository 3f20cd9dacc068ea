use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Where a field evaluation sits inside the current step. Signals that must change
/// only on grid points (steps) key off `step`/`step_start`; smooth signals use `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTime {
    pub step: usize,
    pub step_start: f64,
    pub t: f64,
}

impl StageTime {
    pub fn at_grid(step: usize, dt: f64) -> Self {
        let t = step as f64 * dt;
        Self {
            step,
            step_start: t,
            t,
        }
    }
}

/// States recorded on the time grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub step: Vec<usize>,
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
}

impl Trajectory {
    fn push(&mut self, step: usize, dt: f64, x: &Vector) {
        self.step.push(step);
        self.t.push(step as f64 * dt);
        self.x.push(x.clone());
    }
}

/// Number of fixed steps needed to reach `horizon`.
pub fn step_count(dt: f64, horizon: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(0.0) as usize
}

fn check_grid(dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be finite and at least dt = {dt}"
        )));
    }
    Ok(())
}

/// Classical fixed-step fourth-order Runge–Kutta, recording every state.
pub fn integrate<F>(field: F, x0: &Vector, dt: f64, horizon: f64) -> Result<Trajectory>
where
    F: FnMut(StageTime, &Vector) -> Result<Vector>,
{
    integrate_strided(field, x0, dt, horizon, 1)
}

/// Like [`integrate`] but records only every `stride`-th state (the initial and
/// final states are always kept).
pub fn integrate_strided<F>(field: F, x0: &Vector, dt: f64, horizon: f64, stride: usize) -> Result<Trajectory>
where
    F: FnMut(StageTime, &Vector) -> Result<Vector>,
{
    match integrate_partial(field, x0, dt, horizon, stride)? {
        (traj, None) => Ok(traj),
        (_, Some(time)) => Err(Error::Divergence { time, partial: None }),
    }
}

/// Runs the integration and, on a non-finite state, returns what was recorded so
/// far together with the time of the offending step.
pub(crate) fn integrate_partial<F>(
    mut field: F,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    stride: usize,
) -> Result<(Trajectory, Option<f64>)>
where
    F: FnMut(StageTime, &Vector) -> Result<Vector>,
{
    check_grid(dt, horizon)?;
    let stride = stride.max(1);
    let steps = step_count(dt, horizon);
    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    if !x.iter().all(|v| v.is_finite()) {
        return Ok((traj, Some(0.0)));
    }
    traj.push(0, dt, &x);
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let stage = |t: f64| StageTime {
            step: k,
            step_start: t0,
            t,
        };
        let k1 = field(stage(t0), &x)?;
        let k2 = field(stage(t0 + 0.5 * dt), &(&x + &k1 * (0.5 * dt)))?;
        let k3 = field(stage(t0 + 0.5 * dt), &(&x + &k2 * (0.5 * dt)))?;
        let k4 = field(stage(t0 + dt), &(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Ok((traj, Some((k + 1) as f64 * dt)));
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            traj.push(k + 1, dt, &x);
        }
    }
    Ok((traj, None))
}
