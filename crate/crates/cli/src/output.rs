//! CSV emission with fixed 17-significant-digit formatting.

use std::fs;
use std::path::{Path, PathBuf};

use impedance_core::sim::SimResult;

use crate::error::CliError;

/// `{:.16e}`: 17 significant digits, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

/// Writes `header` then `rows` to `dir/name`, returning the path.
pub fn write_csv<I, R>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    ensure_dir(dir)?;
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())?;
    }
    w.flush().map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
    Ok(path)
}

pub fn sim_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["q", "phi", "p", "z", "tau", "tau_e", "tau_u"] {
        h.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    h.extend(["H", "supply", "passivity_residual"].map(String::from));
    h
}

pub fn write_sim(dir: &Path, name: &str, r: &SimResult) -> Result<PathBuf, CliError> {
    let n = r.dof();
    let header = sim_header(n);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..r.len()).map(|k| {
        let mut row = vec![num(r.t[k])];
        for series in [&r.q, &r.phi, &r.p, &r.z, &r.tau, &r.tau_e, &r.tau_u] {
            row.extend(series[k].iter().map(|x| num(*x)));
        }
        row.extend([num(r.energy[k]), num(r.supply[k]), num(r.passivity_residual[k])]);
        row
    });
    write_csv(dir, name, &header, rows)
}
