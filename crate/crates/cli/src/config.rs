//! Experiment configuration, read from TOML.
//!
//! Matrices may be written as a number (a multiple of the identity), a list of
//! rows, or a `"diag(a, b, …)"` string. Joint numbers are 1-based, matching the
//! CSV column suffixes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use impedance_core::control::{OuterLoop, ShapedParams};
use impedance_core::linalg::{self, Mat, Vector};
use impedance_core::lti::{EnvironmentImpedance, TargetImpedance};
use impedance_core::model::{two_link_arm, LinearRobotParams, OpenLoopState, RobotModel, TwoLinkParams};
use impedance_core::sim::{ControlLaw, InputSignal, TargetDynamics};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_loop: Option<OuterLoopConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dynamics: Option<TargetDynamicsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<FrequencyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    /// Constant-mass plant.
    Linear {
        mass: MatrixSpec,
        motor_inertia: MatrixSpec,
        stiffness: MatrixSpec,
        damping: MatrixSpec,
        /// Joint count when every matrix is given as a number.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    /// Planar two-link arm; omitted fields take the library defaults.
    TwoLink {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        link_lengths: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        link_masses: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        motor_inertias: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        damping: Option<[f64; 2]>,
        #[serde(default)]
        gravity: bool,
    },
}

/// Exactly one of the shaped form (`inertia`, `stiffness`) or the gain form
/// (`force_gain`, `joint_torque_gain`, optionally `input_gain`) must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub law: LawConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_gain: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_torque_gain: Option<MatrixSpec>,
    /// Normally implied as `K_F + K_G + I`; an explicit value is checked against it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_gain: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawConfig {
    Linear,
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterLoopConfig {
    pub stiffness: MatrixSpec,
    pub damping: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<Vec<f64>>,
    #[serde(default)]
    pub gravity_compensation: bool,
}

/// Linear target `mass·q̈ + velocity_gain·q̇ + position_gain·q = τ_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub mass: MatrixSpec,
    pub velocity_gain: MatrixSpec,
    pub position_gain: MatrixSpec,
}

/// Rigid target on the plant's own links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDynamicsConfig {
    pub stiffness: MatrixSpec,
    pub damping: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub mass: MatrixSpec,
    pub damping: MatrixSpec,
    pub stiffness: MatrixSpec,
}

/// Gain sweeps form the product `force_gain × joint_torque_gain`; `inertia` sweeps
/// the shaped inertia with the controller's stiffness held fixed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_gain: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_torque_gain: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<Vec<MatrixSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    #[default]
    Zero,
    Step {
        amplitude: f64,
        joint: usize,
        #[serde(default)]
        start: f64,
    },
    Sinusoid {
        amplitude: f64,
        /// rad/s
        frequency: f64,
        joint: usize,
    },
}

/// Initial positions and velocities; missing entries are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdot: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetadot: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

pub const DEFAULT_OMEGA_LO: f64 = 1e-2;
pub const DEFAULT_OMEGA_HI: f64 = 1e3;
pub const DEFAULT_GRID_POINTS: usize = 400;

fn default_lo() -> f64 {
    DEFAULT_OMEGA_LO
}
fn default_hi() -> f64 {
    DEFAULT_OMEGA_HI
}
fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self {
            lo: DEFAULT_OMEGA_LO,
            hi: DEFAULT_OMEGA_HI,
            points: DEFAULT_GRID_POINTS,
        }
    }
}

/// A matrix as written in the config file.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
    Diag(Vec<f64>),
}

impl MatrixSpec {
    /// Size implied by the spec itself, if any.
    pub fn size(&self) -> Option<usize> {
        match self {
            MatrixSpec::Scalar(_) => None,
            MatrixSpec::Rows(r) => Some(r.len()),
            MatrixSpec::Diag(d) => Some(d.len()),
        }
    }

    pub fn to_matrix(&self, n: usize, name: &str) -> Result<Mat, CliError> {
        match self {
            MatrixSpec::Scalar(x) => Ok(Mat::identity(n, n) * *x),
            MatrixSpec::Diag(d) if d.len() == n => Ok(linalg::diag(d)),
            MatrixSpec::Rows(rows) if rows.len() == n && rows.iter().all(|r| r.len() == n) => {
                Ok(Mat::from_row_iterator(n, n, rows.iter().flatten().copied()))
            }
            _ => Err(CliError::Config(format!("{name} must be {n}×{n}"))),
        }
    }
}

impl fmt::Display for MatrixSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSpec::Scalar(x) => write!(f, "{x}"),
            MatrixSpec::Diag(d) => {
                let parts: Vec<String> = d.iter().map(|x| format!("{x:?}")).collect();
                write!(f, "diag({})", parts.join(", "))
            }
            MatrixSpec::Rows(r) => write!(f, "{r:?}"),
        }
    }
}

impl FromStr for MatrixSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix("diag(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("expected \"diag(…)\", found {s:?}"))?;
        let values = inner
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad diag entry {x:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("diag() needs at least one entry".into());
        }
        Ok(MatrixSpec::Diag(values))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
    Text(String),
}

impl Serialize for MatrixSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MatrixSpec::Scalar(x) => RawMatrix::Scalar(*x),
            MatrixSpec::Rows(r) => RawMatrix::Rows(r.clone()),
            MatrixSpec::Diag(_) => RawMatrix::Text(self.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatrixSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawMatrix::deserialize(d)? {
            RawMatrix::Scalar(x) => Ok(MatrixSpec::Scalar(x)),
            RawMatrix::Rows(r) => Ok(MatrixSpec::Rows(r)),
            RawMatrix::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// The plant a config describes.
pub enum Plant {
    Linear(LinearRobotParams),
    Arm(impedance_core::model::TwoLinkArm),
}

impl Plant {
    pub fn model(&self) -> &dyn RobotModel {
        match self {
            Plant::Linear(m) => m,
            Plant::Arm(a) => a,
        }
    }

    pub fn linear(&self) -> Option<&LinearRobotParams> {
        match self {
            Plant::Linear(m) => Some(m),
            Plant::Arm(_) => None,
        }
    }
}

/// Controller parameters in both forms.
#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub law: ControlLaw,
    pub shaped: ShapedParams,
    /// Set when the config gave gains rather than shaped parameters.
    pub gains: Option<(Mat, Mat, Option<Mat>)>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check_structure()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks that do not need the plant to be built.
    fn check_structure(&self) -> Result<(), CliError> {
        if let Some(c) = &self.controller {
            let shaped = c.inertia.is_some() || c.stiffness.is_some();
            let gains = c.force_gain.is_some() || c.joint_torque_gain.is_some() || c.input_gain.is_some();
            if shaped == gains {
                return Err(CliError::Config(
                    "controller needs exactly one of {inertia, stiffness} or {force_gain, joint_torque_gain}".into(),
                ));
            }
            if shaped && (c.inertia.is_none() || c.stiffness.is_none()) {
                return Err(CliError::Config("shaped controller needs both inertia and stiffness".into()));
            }
            if gains && (c.force_gain.is_none() || c.joint_torque_gain.is_none()) {
                return Err(CliError::Config(
                    "gain controller needs both force_gain and joint_torque_gain".into(),
                ));
            }
        }
        if let Some(s) = &self.sweep {
            let lists = [
                s.force_gain.as_ref().map(Vec::len),
                s.joint_torque_gain.as_ref().map(Vec::len),
                s.inertia.as_ref().map(Vec::len),
            ];
            if lists.contains(&Some(0)) {
                return Err(CliError::Config("sweep lists must be non-empty".into()));
            }
            if lists.iter().all(Option::is_none) {
                return Err(CliError::Config("sweep section has no lists".into()));
            }
            if s.inertia.is_some() && (s.force_gain.is_some() || s.joint_torque_gain.is_some()) {
                return Err(CliError::Config("sweep either gains or inertia, not both".into()));
            }
        }
        if let Some(sim) = &self.sim {
            if !(sim.dt > 0.0 && sim.horizon > 0.0 && sim.dt.is_finite() && sim.horizon.is_finite()) {
                return Err(CliError::Config("sim.dt and sim.horizon must be positive".into()));
            }
            if sim.record_every == 0 {
                return Err(CliError::Config("sim.record_every must be at least 1".into()));
            }
        }
        if let Some(f) = &self.frequency {
            if !(f.lo > 0.0 && f.hi > f.lo && f.points >= 2) {
                return Err(CliError::Config("frequency grid needs 0 < lo < hi and at least 2 points".into()));
            }
        }
        Ok(())
    }

    pub fn build_plant(&self) -> Result<Plant, CliError> {
        match &self.plant {
            PlantConfig::Linear {
                mass,
                motor_inertia,
                stiffness,
                damping,
                n,
            } => {
                let sizes: Vec<usize> = [mass, motor_inertia, stiffness, damping]
                    .iter()
                    .filter_map(|m| m.size())
                    .chain(*n)
                    .collect();
                let dof = sizes.first().copied().unwrap_or(1);
                if sizes.iter().any(|s| *s != dof) || dof == 0 {
                    return Err(CliError::Config("plant matrices disagree on the joint count".into()));
                }
                Ok(Plant::Linear(LinearRobotParams::new(
                    mass.to_matrix(dof, "plant.mass")?,
                    motor_inertia.to_matrix(dof, "plant.motor_inertia")?,
                    stiffness.to_matrix(dof, "plant.stiffness")?,
                    damping.to_matrix(dof, "plant.damping")?,
                )?))
            }
            PlantConfig::TwoLink {
                link_lengths,
                link_masses,
                motor_inertias,
                stiffness,
                damping,
                gravity,
            } => {
                let d = TwoLinkParams::default();
                Ok(Plant::Arm(two_link_arm(TwoLinkParams {
                    link_lengths: link_lengths.unwrap_or(d.link_lengths),
                    link_masses: link_masses.unwrap_or(d.link_masses),
                    motor_inertias: motor_inertias.unwrap_or(d.motor_inertias),
                    stiffness: stiffness.unwrap_or(d.stiffness),
                    damping: damping.unwrap_or(d.damping),
                    gravity: *gravity,
                })?))
            }
        }
    }

    /// Controller from the config, or identity shaping when the section is absent.
    pub fn build_controller(&self, m: &dyn RobotModel) -> Result<ControllerSpec, CliError> {
        let n = m.dof();
        let q0 = self.initial_state(m)?.q;
        let Some(c) = &self.controller else {
            return Ok(ControllerSpec {
                law: ControlLaw::Nonlinear,
                shaped: ShapedParams::identity(m),
                gains: None,
            });
        };
        let law = match c.law {
            LawConfig::Linear => ControlLaw::Linear,
            LawConfig::Nonlinear => ControlLaw::Nonlinear,
        };
        if let (Some(je), Some(ke)) = (&c.inertia, &c.stiffness) {
            let syn = impedance_core::control::synthesize_gains(
                m,
                &q0,
                &je.to_matrix(n, "controller.inertia")?,
                &ke.to_matrix(n, "controller.stiffness")?,
            )?;
            return Ok(ControllerSpec {
                law,
                shaped: syn.shaped,
                gains: None,
            });
        }
        let kf = c.force_gain.as_ref().expect("checked on load").to_matrix(n, "controller.force_gain")?;
        let kg = c
            .joint_torque_gain
            .as_ref()
            .expect("checked on load")
            .to_matrix(n, "controller.joint_torque_gain")?;
        let kh = c.input_gain.as_ref().map(|k| k.to_matrix(n, "controller.input_gain")).transpose()?;
        let shaped = impedance_core::control::recover_shaped(m, &q0, &kf, &kg)?;
        Ok(ControllerSpec {
            law,
            shaped,
            gains: Some((kf, kg, kh)),
        })
    }

    pub fn build_outer_loop(&self, n: usize) -> Result<Option<OuterLoop>, CliError> {
        let Some(o) = &self.outer_loop else {
            return Ok(None);
        };
        Ok(Some(OuterLoop::new(
            o.stiffness.to_matrix(n, "outer_loop.stiffness")?,
            o.damping.to_matrix(n, "outer_loop.damping")?,
            vector_or_zero(o.setpoint.as_deref(), n, "outer_loop.setpoint")?,
            o.gravity_compensation,
        )?))
    }

    pub fn build_target(&self, n: usize) -> Result<Option<TargetImpedance>, CliError> {
        let Some(t) = &self.target else {
            return Ok(None);
        };
        Ok(Some(TargetImpedance::new(
            t.mass.to_matrix(n, "target.mass")?,
            t.velocity_gain.to_matrix(n, "target.velocity_gain")?,
            t.position_gain.to_matrix(n, "target.position_gain")?,
        )?))
    }

    pub fn build_target_dynamics(&self, n: usize) -> Result<Option<TargetDynamics>, CliError> {
        let Some(t) = &self.target_dynamics else {
            return Ok(None);
        };
        Ok(Some(TargetDynamics::new(
            t.stiffness.to_matrix(n, "target_dynamics.stiffness")?,
            t.damping.to_matrix(n, "target_dynamics.damping")?,
            vector_or_zero(t.setpoint.as_deref(), n, "target_dynamics.setpoint")?,
        )?))
    }

    pub fn build_environment(&self, n: usize) -> Result<Option<EnvironmentImpedance>, CliError> {
        let Some(e) = &self.environment else {
            return Ok(None);
        };
        Ok(Some(EnvironmentImpedance::new(
            e.mass.to_matrix(n, "environment.mass")?,
            e.damping.to_matrix(n, "environment.damping")?,
            e.stiffness.to_matrix(n, "environment.stiffness")?,
        )?))
    }

    pub fn build_input(&self, n: usize) -> Result<InputSignal, CliError> {
        let input = self.sim.as_ref().map(|s| s.input.clone()).unwrap_or_default();
        let joint = |j: usize| {
            if (1..=n).contains(&j) {
                Ok(j - 1)
            } else {
                Err(CliError::Config(format!("input joint {j} is outside 1..={n}")))
            }
        };
        Ok(match input {
            InputConfig::Zero => InputSignal::Zero,
            InputConfig::Step {
                amplitude,
                joint: j,
                start,
            } => InputSignal::Step {
                amplitude,
                joint: joint(j)?,
                start,
            },
            InputConfig::Sinusoid {
                amplitude,
                frequency,
                joint: j,
            } => InputSignal::Sinusoid {
                amplitude,
                frequency,
                joint: joint(j)?,
            },
        })
    }

    pub fn initial_state(&self, m: &dyn RobotModel) -> Result<OpenLoopState, CliError> {
        let n = m.dof();
        let init = self.sim.as_ref().and_then(|s| s.initial.clone()).unwrap_or_default();
        let q = vector_or_zero(init.q.as_deref(), n, "sim.initial.q")?;
        let theta = vector_or_zero(init.theta.as_deref(), n, "sim.initial.theta")?;
        let qdot = vector_or_zero(init.qdot.as_deref(), n, "sim.initial.qdot")?;
        let thetadot = vector_or_zero(init.thetadot.as_deref(), n, "sim.initial.thetadot")?;
        Ok(OpenLoopState::from_velocities(m, q, theta, &qdot, &thetadot))
    }

    pub fn frequency_grid(&self) -> FrequencyConfig {
        self.frequency.clone().unwrap_or_default()
    }
}

fn vector_or_zero(v: Option<&[f64]>, n: usize, name: &str) -> Result<Vector, CliError> {
    match v {
        None => Ok(Vector::zeros(n)),
        Some(x) if x.len() == n => Ok(Vector::from_column_slice(x)),
        Some(x) => Err(CliError::Config(format!("{name} has {} entries, expected {n}", x.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
output_dir = "out"

[plant]
type = "linear"
mass = 3.0
motor_inertia = 3.0
stiffness = 1e6
damping = 1.0

[controller]
force_gain = 0.9
joint_torque_gain = 4.0

[outer_loop]
stiffness = 100.0
damping = 10.0

[target]
mass = 3.0
velocity_gain = 10.0
position_gain = 100.0

[sweep]
force_gain = [-0.9, 0.0, 0.9]
joint_torque_gain = [0.0, 1.0, 4.0]

[sim]
dt = 5e-5
horizon = 2.0
input = { kind = "step", amplitude = 1.0, joint = 1 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn matrix_forms() {
        let d: MatrixSpec = "diag(1, 2.5e1)".parse().unwrap();
        assert_eq!(d.to_matrix(2, "x").unwrap(), linalg::diag(&[1.0, 25.0]));
        let r = MatrixSpec::Rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(r.to_matrix(2, "x").unwrap()[(0, 1)], 2.0);
        assert!(r.to_matrix(3, "x").is_err());
        assert_eq!(MatrixSpec::Scalar(2.0).to_matrix(3, "x").unwrap(), Mat::identity(3, 3) * 2.0);
        assert!("diag()".parse::<MatrixSpec>().is_err());
        assert!("eye(2)".parse::<MatrixSpec>().is_err());
    }

    #[test]
    fn controller_needs_exactly_one_form() {
        let both = SAMPLE.replace("force_gain = 0.9\n", "force_gain = 0.9\ninertia = 1.0\nstiffness = 1e5\n");
        assert!(matches!(ExperimentConfig::from_toml(&both), Err(CliError::Config(_))));
        let half = SAMPLE.replace("joint_torque_gain = 4.0\n", "");
        assert!(matches!(ExperimentConfig::from_toml(&half), Err(CliError::Config(_))));
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let empty = SAMPLE.replace("force_gain = [-0.9, 0.0, 0.9]", "force_gain = []");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
    }

    #[test]
    fn negative_plant_damping_fails_validation() {
        let bad = SAMPLE.replace("damping = 1.0\n\n[controller]", "damping = -1.0\n\n[controller]");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(cfg.build_plant().is_err());
    }

    #[test]
    fn one_based_joint_numbers() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert!(matches!(cfg.build_input(1).unwrap(), InputSignal::Step { joint: 0, .. }));
        let bad = SAMPLE.replace("joint = 1", "joint = 2");
        assert!(ExperimentConfig::from_toml(&bad).unwrap().build_input(1).is_err());
    }
}
