use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use impedance_cli::experiments::{self, Overrides};
use impedance_cli::{exit, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "impctl", version, about = "Impedance control experiments for flexible-joint robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report controller gains and shaped parameters for a configuration.
    Synth(Common),
    /// Closed-loop Bode data for a single-joint gain sweep.
    Bode(Common),
    /// Poles and zeros for a single-joint gain sweep.
    Pzmap(Common),
    /// Time-domain simulation with energy accounting.
    Simulate(Common),
    /// Consistency, equivalence and passivity checks.
    Verify(Common),
    /// Run the reference single-joint and two-link studies.
    #[command(name = "reproduce", alias = "reproduce-paper")]
    Reproduce {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Seed for randomized verification samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random samples drawn by `verify`.
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        Overrides {
            dt: self.dt,
            horizon: self.horizon,
            grid_points: self.grid_points,
        }
        .apply(&mut cfg)?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(c) => {
            let (cfg, out) = c.load()?;
            let r = experiments::run_synth(&cfg, &out)?;
            println!("force_gain = {}", r.gains.force);
            println!("joint_torque_gain = {}", r.gains.joint_torque);
            println!("input_gain = {}", r.gains.input);
            println!("shaped_inertia = {}", r.shaped.inertia);
            println!("shaped_stiffness = {}", r.shaped.stiffness);
            println!("shaped_damping = {}", r.shaped.damping);
            for w in &r.warnings {
                println!("warning: {w:?}");
            }
            if let Some((lo, hi)) = r.force_gain_interval {
                println!("passive force-gain interval (K_G = 0): ({lo}, {hi})");
            }
        }
        Command::Bode(c) => {
            let (cfg, out) = c.load()?;
            let study = experiments::run_bode(&cfg, &out)?;
            for s in &study.systems {
                println!(
                    "{} err={:.6e} positive_real={}",
                    s.system.id,
                    s.err,
                    experiments::verdict_name(s.positive_real.verdict)
                );
            }
            println!("wrote {}", study.csv.display());
        }
        Command::Pzmap(c) => {
            let (cfg, out) = c.load()?;
            let study = experiments::run_pzmap(&cfg, &out)?;
            for s in &study.systems {
                let d = s.distance.map(|d| format!("{d:.6e}")).unwrap_or_else(|| "-".into());
                println!("{} dominant={:.6}{:+.6}j distance={d}", s.system.id, s.dominant.re, s.dominant.im);
            }
        }
        Command::Simulate(c) => {
            let (cfg, out) = c.load()?;
            let study = experiments::run_simulate(&cfg, &out)?;
            for r in &study.runs {
                let l2 = r.l2_to_target.map(|d| format!("{d:.6e}")).unwrap_or_else(|| "-".into());
                println!("{} l2_to_target={l2} audit={:.3e} -> {}", r.id, r.audit, r.csv.display());
            }
        }
        Command::Verify(c) => {
            let (cfg, out) = c.load()?;
            let checks = experiments::run_verify(&cfg, &out, c.samples, c.seed)?;
            for ch in &checks {
                println!("{}", ch.line());
            }
            let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification { failed });
            }
        }
        Command::Reproduce { out } => {
            let r = experiments::reproduce(&out)?;
            for c in &r.checks {
                println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed: Vec<String> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification { failed });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
