//! The experiments behind each subcommand. Every `run_*` returns its results and
//! writes its CSV files into `out`.

use std::path::{Path, PathBuf};

use impedance_core::control::{
    force_gain_interval, gains_at, recover_shaped, synthesize_gains, ImpedanceGains, ShapedParams,
    ShapingWarning,
};
use impedance_core::linalg::{Mat, Vector};
use impedance_core::lti::{
    admittance_1dof, admittance_1dof_with_outer, bode, freq_response, logspace, poles_zeros, positive_real_check,
    target_admittance, BodePoint, PositiveRealReport, RationalTF, Verdict,
};
use impedance_core::model::{LinearRobotParams, OpenLoopState};
use impedance_core::sim::{
    l2_distance, passivity_audit, simulate_plant_with_controller, simulate_target, Controller, InputSignal, Scenario,
    SimResult,
};
use impedance_core::transform::{equivalence_residual, GAIN_CONSISTENCY_RTOL};
use impedance_core::Error as CoreError;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{
    ControllerConfig, ExperimentConfig, InputConfig, MatrixSpec, OuterLoopConfig, PlantConfig, SimConfig,
    SweepConfig, TargetConfig, TargetDynamicsConfig,
};
use crate::error::CliError;
use crate::output::{num, write_csv, write_sim};

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub grid_points: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if self.dt.is_some() || self.horizon.is_some() {
            let sim = cfg.sim.get_or_insert(SimConfig {
                dt: 1e-4,
                horizon: 1.0,
                record_every: 1,
                input: InputConfig::Zero,
                initial: None,
            });
            if let Some(dt) = self.dt {
                sim.dt = dt;
            }
            if let Some(h) = self.horizon {
                sim.horizon = h;
            }
            if !(sim.dt > 0.0 && sim.horizon > 0.0) {
                return Err(CliError::Config("dt and horizon must be positive".into()));
            }
        }
        if let Some(points) = self.grid_points {
            if points < 2 {
                return Err(CliError::Config("the frequency grid needs at least 2 points".into()));
            }
            cfg.frequency.get_or_insert_with(Default::default).points = points;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Clone)]
pub struct SynthReport {
    pub gains: ImpedanceGains,
    pub shaped: ShapedParams,
    pub warnings: Vec<ShapingWarning>,
    /// Passive range of `K_F` for a single joint with `K_G = 0`.
    pub force_gain_interval: Option<(f64, f64)>,
}

pub fn run_synth(cfg: &ExperimentConfig, out: &Path) -> Result<SynthReport, CliError> {
    let plant = cfg.build_plant()?;
    let m = plant.model();
    let q0 = cfg.initial_state(m)?.q;
    let spec = cfg.build_controller(m)?;
    let warnings = spec.shaped.validate()?;
    let gains = match &spec.gains {
        Some((kf, kg, kh)) => ImpedanceGains {
            force: kf.clone(),
            joint_torque: kg.clone(),
            input: kh.clone().unwrap_or_else(|| kf + kg + Mat::identity(m.dof(), m.dof())),
        },
        None => gains_at(m, &q0, &spec.shaped)?,
    };
    let force_gain_interval = (m.dof() == 1).then(|| force_gain_interval(m)).transpose()?.map(|i| (i.lower, i.upper));

    let mut rows = Vec::new();
    for (name, mat) in [
        ("force_gain", &gains.force),
        ("joint_torque_gain", &gains.joint_torque),
        ("input_gain", &gains.input),
        ("shaped_inertia", &spec.shaped.inertia),
        ("shaped_stiffness", &spec.shaped.stiffness),
        ("shaped_damping", &spec.shaped.damping),
    ] {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                rows.push(vec![name.to_string(), (i + 1).to_string(), (j + 1).to_string(), num(mat[(i, j)])]);
            }
        }
    }
    if let Some((lo, hi)) = force_gain_interval {
        rows.push(vec!["force_gain_interval_lower".into(), "1".into(), "1".into(), num(lo)]);
        rows.push(vec!["force_gain_interval_upper".into(), "1".into(), "1".into(), num(hi)]);
    }
    rows.push(vec!["gain_consistency_residual".into(), "1".into(), "1".into(), num(gains.consistency_residual())]);
    write_csv(out, "synth.csv", &["quantity", "row", "col", "value"], rows)?;
    Ok(SynthReport {
        gains,
        shaped: spec.shaped,
        warnings,
        force_gain_interval,
    })
}

// ---------------------------------------------------------------------------
// single-joint frequency studies

/// One closed loop of a single-joint gain study.
#[derive(Debug, Clone)]
pub struct StudySystem {
    pub id: String,
    pub force_gain: Option<f64>,
    pub joint_torque_gain: Option<f64>,
    pub tf: RationalTF,
}

fn gain_id(kf: f64, kg: f64) -> String {
    format!("kf={kf}/kg={kg}")
}

pub const TARGET_ID: &str = "target";

/// Closed loops of a single-joint linear plant: the gain sweep when present,
/// otherwise the configured controller alone.
pub fn single_joint_systems(cfg: &ExperimentConfig) -> Result<(LinearRobotParams, Vec<StudySystem>), CliError> {
    let plant = cfg.build_plant()?;
    let m = match plant.linear() {
        Some(m) if m.n() == 1 => m.clone(),
        _ => {
            return Err(CoreError::NotApplicable("frequency studies need a single-joint linear plant".into()).into());
        }
    };
    let outer = cfg.build_outer_loop(1)?;
    let mass = m.mass_matrix()[(0, 0)];
    let q0 = Vector::zeros(1);
    let admittance = |sp: &ShapedParams| match &outer {
        Some(o) => admittance_1dof_with_outer(sp, mass, o),
        None => admittance_1dof(sp, mass),
    };
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let systems = match (&sweep.force_gain, &sweep.joint_torque_gain) {
        (None, None) => {
            let spec = cfg.build_controller(&m)?;
            let (kf, kg) = spec.gains.as_ref().map_or((None, None), |(f, g, _)| (Some(f[(0, 0)]), Some(g[(0, 0)])));
            let id = match (&cfg.controller, kf, kg) {
                (None, ..) => "plant".to_string(),
                (Some(_), Some(f), Some(g)) => gain_id(f, g),
                (Some(_), ..) => "controller".to_string(),
            };
            vec![StudySystem {
                id,
                force_gain: kf,
                joint_torque_gain: kg,
                tf: admittance(&spec.shaped)?,
            }]
        }
        (kfs, kgs) => {
            let kfs = kfs.clone().unwrap_or_else(|| vec![0.0]);
            let kgs = kgs.clone().unwrap_or_else(|| vec![0.0]);
            let combos: Vec<(f64, f64)> = kfs.iter().flat_map(|&f| kgs.iter().map(move |&g| (f, g))).collect();
            combos
                .par_iter()
                .map(|&(kf, kg)| -> Result<StudySystem, CliError> {
                    let sp = recover_shaped(&m, &q0, &scalar(kf), &scalar(kg))?;
                    Ok(StudySystem {
                        id: gain_id(kf, kg),
                        force_gain: Some(kf),
                        joint_torque_gain: Some(kg),
                        tf: admittance(&sp)?,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok((m, systems))
}

fn scalar(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

#[derive(Debug, Clone)]
pub struct BodeSystem {
    pub system: StudySystem,
    pub points: Vec<BodePoint>,
    /// `max |mag_dB − mag_dB(Y_d)|` over the grid; 0 without a target.
    pub err: f64,
    pub positive_real: PositiveRealReport,
}

#[derive(Debug, Clone)]
pub struct BodeStudy {
    pub systems: Vec<BodeSystem>,
    pub target: Option<Vec<BodePoint>>,
    pub csv: PathBuf,
}

impl BodeStudy {
    pub fn err(&self, kf: f64, kg: f64) -> Option<f64> {
        self.systems
            .iter()
            .find(|s| s.system.force_gain == Some(kf) && s.system.joint_torque_gain == Some(kg))
            .map(|s| s.err)
    }
}

pub fn run_bode(cfg: &ExperimentConfig, out: &Path) -> Result<BodeStudy, CliError> {
    let (_, systems) = single_joint_systems(cfg)?;
    let grid_cfg = cfg.frequency_grid();
    let grid = logspace(grid_cfg.lo, grid_cfg.hi, grid_cfg.points);
    let target = cfg
        .build_target(1)?
        .map(|t| -> Result<Vec<BodePoint>, CliError> {
            Ok(bode(&freq_response(&target_admittance(&t)?, &grid)?))
        })
        .transpose()?;
    let systems: Vec<BodeSystem> = systems
        .into_par_iter()
        .map(|system| -> Result<BodeSystem, CliError> {
            let points = bode(&freq_response(&system.tf, &grid)?);
            let err = target.as_ref().map_or(0.0, |t| {
                points.iter().zip(t).map(|(a, b)| (a.mag_db - b.mag_db).abs()).fold(0.0, f64::max)
            });
            let positive_real = positive_real_check(&system.tf, &grid);
            Ok(BodeSystem {
                system,
                points,
                err,
                positive_real,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for s in &systems {
        for p in &s.points {
            rows.push(vec![s.system.id.clone(), num(p.omega), num(p.mag_db), num(p.phase_deg), num(s.err)]);
        }
    }
    if let Some(t) = &target {
        for p in t {
            rows.push(vec![TARGET_ID.to_string(), num(p.omega), num(p.mag_db), num(p.phase_deg), num(0.0)]);
        }
    }
    let csv = write_csv(out, "bode.csv", &["system_id", "omega_rad_s", "mag_db", "phase_deg", "err"], rows)?;

    let summary = systems.iter().map(|s| {
        vec![
            s.system.id.clone(),
            s.system.force_gain.map(num).unwrap_or_default(),
            s.system.joint_torque_gain.map(num).unwrap_or_default(),
            num(s.err),
            verdict_name(s.positive_real.verdict).to_string(),
            num(s.positive_real.grid_min_re),
        ]
    });
    write_csv(
        out,
        "bode_summary.csv",
        &["system_id", "force_gain", "joint_torque_gain", "err", "positive_real", "min_re"],
        summary,
    )?;
    Ok(BodeStudy { systems, target, csv })
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Passive => "passive",
        Verdict::NotPassive => "not_passive",
        Verdict::Inconclusive => "inconclusive",
    }
}

#[derive(Debug, Clone)]
pub struct PoleZeroSystem {
    pub system: StudySystem,
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    /// Upper member of the conjugate pair of smallest modulus (or the slowest pole).
    pub dominant: Complex64,
    /// `|dominant − target pole|`, when a target is configured.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PoleZeroStudy {
    pub systems: Vec<PoleZeroSystem>,
    pub target_poles: Option<Vec<Complex64>>,
    pub target_zeros: Option<Vec<Complex64>>,
}

impl PoleZeroStudy {
    pub fn distance(&self, kf: f64, kg: f64) -> Option<f64> {
        self.systems
            .iter()
            .find(|s| s.system.force_gain == Some(kf) && s.system.joint_torque_gain == Some(kg))
            .and_then(|s| s.distance)
    }
}

/// Poles sorted by modulus, then by imaginary part.
fn sorted(mut z: Vec<Complex64>) -> Vec<Complex64> {
    z.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    z
}

fn dominant_pole(poles: &[Complex64]) -> Option<Complex64> {
    let slowest = sorted(poles.to_vec()).into_iter().next()?;
    Some(Complex64::new(slowest.re, slowest.im.abs()))
}

pub fn run_pzmap(cfg: &ExperimentConfig, out: &Path) -> Result<PoleZeroStudy, CliError> {
    let (_, systems) = single_joint_systems(cfg)?;
    let target = cfg.build_target(1)?.map(|t| target_admittance(&t)).transpose()?;
    let target_pz = target.as_ref().map(poles_zeros).transpose()?;
    let target_dominant = target_pz.as_ref().and_then(|pz| dominant_pole(&pz.poles));
    let systems: Vec<PoleZeroSystem> = systems
        .into_par_iter()
        .map(|system| -> Result<PoleZeroSystem, CliError> {
            let pz = poles_zeros(&system.tf)?;
            let poles = sorted(pz.poles);
            let dominant = dominant_pole(&poles)
                .ok_or_else(|| CoreError::NotApplicable(format!("{} has no poles", system.id)))?;
            Ok(PoleZeroSystem {
                distance: target_dominant.map(|t| (dominant - t).norm()),
                zeros: sorted(pz.zeros),
                poles,
                dominant,
                system,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut push = |id: &str, kind: &str, z: &[Complex64]| {
        for p in z {
            rows.push(vec![id.to_string(), kind.to_string(), num(p.re), num(p.im)]);
        }
    };
    for s in &systems {
        push(&s.system.id, "pole", &s.poles);
        push(&s.system.id, "zero", &s.zeros);
    }
    let (target_poles, target_zeros) = match target_pz {
        Some(pz) => {
            let (p, z) = (sorted(pz.poles), sorted(pz.zeros));
            push(TARGET_ID, "pole", &p);
            push(TARGET_ID, "zero", &z);
            (Some(p), Some(z))
        }
        None => (None, None),
    };
    write_csv(out, "pzmap.csv", &["system_id", "kind", "re", "im"], rows)?;
    let summary = systems.iter().map(|s| {
        vec![
            s.system.id.clone(),
            s.system.force_gain.map(num).unwrap_or_default(),
            s.system.joint_torque_gain.map(num).unwrap_or_default(),
            num(s.dominant.re),
            num(s.dominant.im),
            s.distance.map(num).unwrap_or_default(),
        ]
    });
    write_csv(
        out,
        "pzmap_summary.csv",
        &["system_id", "force_gain", "joint_torque_gain", "dominant_re", "dominant_im", "distance_to_target"],
        summary,
    )?;
    Ok(PoleZeroStudy {
        systems,
        target_poles,
        target_zeros,
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone)]
pub struct SimRun {
    pub id: String,
    pub inertia: Mat,
    pub result: SimResult,
    pub audit: f64,
    /// L2 distance of the input joint (or joint 1) to the target run.
    pub l2_to_target: Option<f64>,
    pub csv: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SimStudy {
    pub runs: Vec<SimRun>,
    pub target: Option<SimResult>,
}

fn input_joint(input: &InputSignal) -> usize {
    match *input {
        InputSignal::Zero => 0,
        InputSignal::Step { joint, .. } | InputSignal::Sinusoid { joint, .. } => joint,
    }
}

fn diverged(out: &Path, name: &str, e: CoreError) -> CliError {
    match e {
        CoreError::Divergence {
            time,
            partial: Some(r),
        } => match write_sim(out, name, &r) {
            Ok(partial) => CliError::Diverged { time, partial },
            Err(w) => w,
        },
        other => other.into(),
    }
}

pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimStudy, CliError> {
    let sim = cfg
        .sim
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs a [sim] section".into()))?;
    let plant = cfg.build_plant()?;
    let m = plant.model();
    let n = m.dof();
    let base = cfg.build_controller(m)?;
    let outer = cfg.build_outer_loop(n)?;
    let env = cfg.build_environment(n)?;
    let input = cfg.build_input(n)?;
    let x0 = cfg.initial_state(m)?;
    let target = cfg.build_target_dynamics(n)?;

    // one run per swept inertia, or the configured controller alone
    let inertias: Vec<(String, ShapedParams)> = match cfg.sweep.as_ref().and_then(|s| s.inertia.clone()) {
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(k, je)| -> Result<(String, ShapedParams), CliError> {
                let je = je.to_matrix(n, "sweep.inertia")?;
                let syn = synthesize_gains(m, &x0.q, &je, &base.shaped.stiffness)?;
                Ok((format!("inertia_{}", k + 1), syn.shaped))
            })
            .collect::<Result<_, _>>()?,
        None => vec![("run".to_string(), base.shaped.clone())],
    };
    let single = inertias.len() == 1 && cfg.sweep.is_none();
    let scenario = |shaped: ShapedParams| {
        let mut sc = Scenario::new(m, sim.horizon, sim.dt)
            .with_controller(Controller {
                law: base.law,
                shaped,
                outer: outer.clone(),
            })
            .with_input(input.clone())
            .with_initial(x0.clone())
            .with_record_every(sim.record_every);
        if let Some(e) = &env {
            sc = sc.with_environment(e.clone());
        }
        sc
    };
    for (_, sp) in &inertias {
        scenario(sp.clone()).validate()?;
    }

    let target_result = match &target {
        Some(t) => {
            let sc = Scenario::new(m, sim.horizon, sim.dt)
                .with_input(input.clone())
                .with_initial(x0.clone())
                .with_record_every(sim.record_every);
            let r = simulate_target(&sc, t).map_err(|e| diverged(out, "sim_target.csv", e))?;
            write_sim(out, "sim_target.csv", &r)?;
            Some(r)
        }
        None => None,
    };

    let results: Vec<(String, ShapedParams, Result<SimResult, CoreError>)> = inertias
        .into_par_iter()
        .map(|(id, sp)| {
            let r = simulate_plant_with_controller(&scenario(sp.clone()));
            (id, sp, r)
        })
        .collect();

    let joint = input_joint(&input);
    let mut runs = Vec::new();
    for (id, sp, r) in results {
        let name = if single { "sim.csv".to_string() } else { format!("sim_{id}.csv") };
        let result = r.map_err(|e| diverged(out, &name, e))?;
        let csv = write_sim(out, &name, &result)?;
        let l2_to_target = target_result.as_ref().map(|t| l2_distance(&result, t, joint)).transpose()?;
        runs.push(SimRun {
            audit: passivity_audit(&result),
            id,
            inertia: sp.inertia,
            result,
            l2_to_target,
            csv,
        });
    }

    let mut header = vec!["run_id".to_string()];
    header.extend((1..=n).map(|i| format!("inertia_{i}")));
    header.extend(["l2_to_target", "passivity_audit", "max_energy"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let summary = runs.iter().map(|r| {
        let mut row = vec![r.id.clone()];
        row.extend((0..n).map(|i| num(r.inertia[(i, i)])));
        row.extend([r.l2_to_target.map(num).unwrap_or_default(), num(r.audit), num(r.result.max_energy())]);
        row
    });
    write_csv(out, "sim_summary.csv", &header, summary)?;
    Ok(SimStudy {
        runs,
        target: target_result,
    })
}

// ---------------------------------------------------------------------------
// verify

pub const ROUND_TRIP_RTOL: f64 = 1e-10;
pub const EQUIVALENCE_RTOL: f64 = 1e-8;
pub const AUDIT_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} value={:e} threshold={:e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Runs the consistency checks and returns them all; the caller decides the exit.
pub fn run_verify(cfg: &ExperimentConfig, out: &Path, samples: usize, seed: u64) -> Result<Vec<Check>, CliError> {
    let plant = cfg.build_plant()?;
    let m = plant.model();
    let n = m.dof();
    let x0 = cfg.initial_state(m)?;
    let spec = cfg.build_controller(m)?;
    let outer = cfg.build_outer_loop(n)?;
    let env = cfg.build_environment(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let gains = match &spec.gains {
        Some((kf, kg, Some(kh))) => ImpedanceGains {
            force: kf.clone(),
            joint_torque: kg.clone(),
            input: kh.clone(),
        },
        _ => gains_at(m, &x0.q, &spec.shaped)?,
    };
    checks.push(Check::at_most("gain_consistency", gains.consistency_residual(), GAIN_CONSISTENCY_RTOL));

    // gains ↔ shaped parameters, for the configured shaping and random rescalings of it
    let mut worst_round_trip: f64 = 0.0;
    let mut worst_equivalence: f64 = 0.0;
    let cases = std::iter::once((1.0, 1.0)).chain((0..samples).map(|_| (rng.random_range(0.2..2.0), rng.random_range(0.5..4.0))));
    for (a, b) in cases.collect::<Vec<_>>() {
        let q = if m.has_constant_mass() { x0.q.clone() } else { random_vector(&mut rng, n, 3.0) };
        let inertia = &spec.shaped.inertia * a;
        let stiffness = &spec.shaped.stiffness * b;
        let syn = synthesize_gains(m, &q, &inertia, &stiffness)?;
        let back = recover_shaped(m, &q, &syn.gains.force, &syn.gains.joint_torque)?;
        worst_round_trip = worst_round_trip
            .max(rel(&back.inertia, &syn.shaped.inertia))
            .max(rel(&back.stiffness, &syn.shaped.stiffness))
            .max(rel(&back.damping, &syn.shaped.damping));
        let x = OpenLoopState::from_velocities(
            m,
            q,
            random_vector(&mut rng, n, 1.0),
            &random_vector(&mut rng, n, 1.0),
            &random_vector(&mut rng, n, 1.0),
        );
        let g = gains_at(m, &x.q, &syn.shaped)?;
        let r = equivalence_residual(
            &x,
            &random_vector(&mut rng, n, 5.0),
            &random_vector(&mut rng, n, 5.0),
            &g,
            &syn.shaped,
            m,
        )?;
        worst_equivalence = worst_equivalence.max(r);
    }
    checks.push(Check::at_most("round_trip", worst_round_trip, ROUND_TRIP_RTOL));
    checks.push(Check::at_most("equivalence", worst_equivalence, EQUIVALENCE_RTOL));

    // dissipation inequality on a standard run
    let default_sim = SimConfig {
        dt: 0.0,
        horizon: 0.5,
        record_every: 10,
        input: InputConfig::Step {
            amplitude: 1.0,
            joint: 1,
            start: 0.0,
        },
        initial: None,
    };
    let sim = cfg.sim.clone().unwrap_or(default_sim);
    let input = match cfg.sim {
        Some(_) => cfg.build_input(n)?,
        None => InputSignal::Step {
            amplitude: 1.0,
            joint: 0,
            start: 0.0,
        },
    };
    let mut sc = Scenario::new(m, sim.horizon, 1.0)
        .with_controller(Controller {
            law: spec.law,
            shaped: spec.shaped.clone(),
            outer: outer.clone(),
        })
        .with_input(input)
        .with_initial(x0)
        .with_record_every(sim.record_every);
    if let Some(e) = &env {
        sc = sc.with_environment(e.clone());
    }
    sc.dt = if sim.dt > 0.0 { sim.dt } else { sc.max_dt()?.min(1e-4) };
    let r = simulate_plant_with_controller(&sc).map_err(|e| diverged(out, "verify_sim.csv", e))?;
    let scale = r.max_energy().max(f64::MIN_POSITIVE);
    checks.push(Check::at_most("passivity_audit", passivity_audit(&r) / scale, AUDIT_RTOL));

    if let Some(lin) = plant.linear().filter(|l| l.n() == 1) {
        let mass = lin.mass_matrix()[(0, 0)];
        let tf = match &outer {
            Some(o) => admittance_1dof_with_outer(&spec.shaped, mass, o)?,
            None => admittance_1dof(&spec.shaped, mass)?,
        };
        let g = cfg.frequency_grid();
        let report = positive_real_check(&tf, &logspace(g.lo, g.hi, g.points));
        checks.push(Check {
            name: "positive_real".into(),
            passed: report.is_passive(),
            value: report.grid_min_re,
            threshold: impedance_core::lti::passivity::RE_FLOOR,
        });
    }

    let rows = checks.iter().map(|c| {
        vec![c.name.clone(), c.passed.to_string(), num(c.value), num(c.threshold)]
    });
    write_csv(out, "verify.csv", &["check", "passed", "value", "threshold"], rows)?;
    Ok(checks)
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-scale..scale)))
}

// ---------------------------------------------------------------------------
// full reproduction bundle

/// Single-joint study: `M = J = 3`, `K = 10⁶`, `D = 1`, outer loop `K_φ = 100`,
/// `D_φ = 10`, target `3 q̈ + 10 q̇ + 100 q`, gain grid `{−0.9, 0, 0.9} × {0, 1, 4}`.
pub fn reference_single_joint() -> ExperimentConfig {
    ExperimentConfig {
        plant: PlantConfig::Linear {
            mass: MatrixSpec::Scalar(3.0),
            motor_inertia: MatrixSpec::Scalar(3.0),
            stiffness: MatrixSpec::Scalar(1e6),
            damping: MatrixSpec::Scalar(1.0),
            n: Some(1),
        },
        controller: Some(ControllerConfig {
            force_gain: Some(MatrixSpec::Scalar(0.9)),
            joint_torque_gain: Some(MatrixSpec::Scalar(4.0)),
            ..Default::default()
        }),
        outer_loop: Some(OuterLoopConfig {
            stiffness: MatrixSpec::Scalar(100.0),
            damping: MatrixSpec::Scalar(10.0),
            setpoint: None,
            gravity_compensation: false,
        }),
        target: Some(TargetConfig {
            mass: MatrixSpec::Scalar(3.0),
            velocity_gain: MatrixSpec::Scalar(10.0),
            position_gain: MatrixSpec::Scalar(100.0),
        }),
        target_dynamics: None,
        environment: None,
        sweep: Some(SweepConfig {
            force_gain: Some(vec![-0.9, 0.0, 0.9]),
            joint_torque_gain: Some(vec![0.0, 1.0, 4.0]),
            inertia: None,
        }),
        sim: Some(SimConfig {
            dt: 2.5e-5,
            horizon: 2.0,
            record_every: 40,
            input: InputConfig::Step {
                amplitude: 1.0,
                joint: 1,
                start: 0.0,
            },
            initial: None,
        }),
        frequency: None,
        output_dir: None,
    }
}

/// Two-link study: `K_e = 2K`, `D_e = 0`, outer loop and target gains 1000 / 135 per
/// joint, a 10 N·m step on joint 2, shaped inertia swept over `J, J/2, J/4`.
pub fn reference_two_link() -> ExperimentConfig {
    let d = impedance_core::model::TwoLinkParams::default();
    let j = d.motor_inertias;
    let diag = |v: [f64; 2]| MatrixSpec::Diag(v.to_vec());
    ExperimentConfig {
        plant: PlantConfig::TwoLink {
            link_lengths: None,
            link_masses: None,
            motor_inertias: None,
            stiffness: None,
            damping: None,
            gravity: false,
        },
        controller: Some(ControllerConfig {
            inertia: Some(diag(j)),
            stiffness: Some(diag([2.0 * d.stiffness[0], 2.0 * d.stiffness[1]])),
            ..Default::default()
        }),
        outer_loop: Some(OuterLoopConfig {
            stiffness: MatrixSpec::Scalar(1000.0),
            damping: MatrixSpec::Scalar(135.0),
            setpoint: None,
            gravity_compensation: false,
        }),
        target: None,
        target_dynamics: Some(TargetDynamicsConfig {
            stiffness: MatrixSpec::Scalar(1000.0),
            damping: MatrixSpec::Scalar(135.0),
            setpoint: None,
        }),
        environment: None,
        sweep: Some(SweepConfig {
            inertia: Some(vec![diag(j), diag([j[0] / 2.0, j[1] / 2.0]), diag([j[0] / 4.0, j[1] / 4.0])]),
            ..Default::default()
        }),
        sim: Some(SimConfig {
            dt: 2.5e-5,
            horizon: 2.0,
            record_every: 40,
            input: InputConfig::Step {
                amplitude: 10.0,
                joint: 2,
                start: 0.0,
            },
            initial: None,
        }),
        frequency: None,
        output_dir: None,
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub bode: BodeStudy,
    pub pzmap: PoleZeroStudy,
    pub arm: SimStudy,
    pub checks: Vec<OrderingCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn ordering(name: impl Into<String>, passed: bool, detail: String) -> OrderingCheck {
    OrderingCheck {
        name: name.into(),
        passed,
        detail,
    }
}

const FORCE_GAINS: [f64; 3] = [-0.9, 0.0, 0.9];
const TORQUE_GAINS: [f64; 3] = [0.0, 1.0, 4.0];

/// Ordering claims of the gain study.
pub fn gain_study_checks(bode: &BodeStudy, pz: &PoleZeroStudy) -> Vec<OrderingCheck> {
    let mut checks = vec![ordering(
        "bode_system_count",
        bode.systems.len() + usize::from(bode.target.is_some()) == 10,
        format!("{} closed loops + target", bode.systems.len()),
    )];
    let err = |f, g| bode.err(f, g).unwrap_or(f64::NAN);
    for kf in FORCE_GAINS {
        let e: Vec<f64> = TORQUE_GAINS.iter().map(|&kg| err(kf, kg)).collect();
        checks.push(ordering(
            format!("bode_err_nonincreasing_in_joint_torque_gain(kf={kf})"),
            e.windows(2).all(|w| w[1] <= w[0]),
            format!("{:.6e} {:.6e} {:.6e}", e[0], e[1], e[2]),
        ));
    }
    for kg in TORQUE_GAINS {
        let (lo, hi) = (err(-0.9, kg), err(0.9, kg));
        checks.push(ordering(
            format!("bode_err_force_gain_toward_inertia_ratio(kg={kg})"),
            hi <= lo,
            format!("kf=0.9: {hi:.6e}  kf=-0.9: {lo:.6e}"),
        ));
    }
    // every single step up in either gain must not move the dominant pair away
    let dist = |f, g| pz.distance(f, g).unwrap_or(f64::NAN);
    let mut steps = Vec::new();
    for (i, &kf) in FORCE_GAINS.iter().enumerate() {
        for (j, &kg) in TORQUE_GAINS.iter().enumerate() {
            if i + 1 < FORCE_GAINS.len() {
                steps.push((dist(kf, kg), dist(FORCE_GAINS[i + 1], kg)));
            }
            if j + 1 < TORQUE_GAINS.len() {
                steps.push((dist(kf, kg), dist(kf, TORQUE_GAINS[j + 1])));
            }
        }
    }
    checks.push(ordering(
        "pole_distance_nonincreasing",
        steps.iter().all(|(a, b)| b <= a),
        format!("{:.6e} -> {:.6e}", dist(-0.9, 0.0), dist(0.9, 4.0)),
    ));
    let passive = bode.systems.iter().filter(|s| s.positive_real.is_passive()).count();
    checks.push(ordering(
        "positive_real_all_gains",
        passive == bode.systems.len(),
        format!("{passive}/{} passive", bode.systems.len()),
    ));
    checks
}

/// Ordering claim of the two-link study: L2 distance to the target strictly falls
/// as the shaped inertia shrinks.
pub fn inertia_study_check(arm: &SimStudy) -> OrderingCheck {
    let l2: Vec<f64> = arm.runs.iter().map(|r| r.l2_to_target.unwrap_or(f64::NAN)).collect();
    ordering(
        "l2_to_target_decreasing_in_inertia",
        l2.windows(2).all(|w| w[1] < w[0]),
        l2.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" "),
    )
}

pub fn reproduce(out: &Path) -> Result<Reproduction, CliError> {
    let single = reference_single_joint();
    let arm_cfg = reference_two_link();
    crate::output::ensure_dir(out)?;
    for (name, cfg) in [("single_joint.toml", &single), ("two_link.toml", &arm_cfg)] {
        std::fs::write(out.join(name), cfg.to_toml()?)
            .map_err(|e| CliError::io(format!("cannot write {name}"), e))?;
    }
    let bode = run_bode(&single, out)?;
    let pzmap = run_pzmap(&single, out)?;
    let arm = run_simulate(&arm_cfg, &out.join("two_link"))?;
    let mut checks = gain_study_checks(&bode, &pzmap);
    checks.push(inertia_study_check(&arm));
    let audit_ok = arm.runs.iter().all(|r| r.audit <= AUDIT_RTOL * r.result.max_energy());
    checks.push(ordering(
        "passivity_audit_two_link",
        audit_ok,
        arm.runs.iter().map(|r| format!("{:.3e}", r.audit)).collect::<Vec<_>>().join(" "),
    ));
    let rows = checks.iter().map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]);
    write_csv(out, "summary.csv", &["check", "passed", "detail"], rows)?;
    Ok(Reproduction {
        bode,
        pzmap,
        arm,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_pole_is_upper_member_of_slowest_pair() {
        let p = [
            Complex64::new(-1.0, -1000.0),
            Complex64::new(-2.0, -5.0),
            Complex64::new(-1.0, 1000.0),
            Complex64::new(-2.0, 5.0),
        ];
        assert_eq!(dominant_pole(&p), Some(Complex64::new(-2.0, 5.0)));
        assert_eq!(dominant_pole(&[]), None);
    }

    #[test]
    fn reference_configs_round_trip() {
        for cfg in [reference_single_joint(), reference_two_link()] {
            let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, again);
        }
    }
}
