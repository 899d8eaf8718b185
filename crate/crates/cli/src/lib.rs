//! Command implementations behind the `phaselock` binary.
//!
//! Every command takes already-parsed scenarios and returns its report; the
//! binary only handles argument parsing, printing and exit codes.

use std::path::{Path, PathBuf};

use phaselock_core::scenario::{Scenario, ScenarioError};
use thiserror::Error;

pub mod commands;
pub mod figures;
pub mod sweep;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

/// Integration settings given on the command line, applied over each scenario's `[run]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub t_end: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, sc: &mut Scenario) -> Result<(), CliError> {
        if let Some(v) = self.rel_tol {
            sc.run.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            sc.run.abs_tol = v;
        }
        if let Some(v) = self.t_end {
            sc.run.t_end = v;
        }
        sc.run
            .validate()
            .map_err(|source| CliError::Scenario(ScenarioError::Integrator { name: sc.name.clone(), source }))
    }
}

/// Loads one scenario file, or every `*.toml` in a directory sorted by file name.
pub fn load_scenarios(path: &Path, overrides: &Overrides) -> Result<Vec<Scenario>, CliError> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::Invalid(format!("{}: no .toml scenarios found", path.display())));
        }
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut out: Vec<Scenario> = Vec::with_capacity(files.len());
    for f in files {
        let mut sc = Scenario::load(&f)?;
        overrides.apply(&mut sc)?;
        if out.iter().any(|o| o.name == sc.name) {
            return Err(CliError::Invalid(format!("{}: duplicate scenario name {:?}", f.display(), sc.name)));
        }
        out.push(sc);
    }
    Ok(out)
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
