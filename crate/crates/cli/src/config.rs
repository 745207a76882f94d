//! Run configuration: TOML sections `[params]`, `[numerics]` and
//! `[trajectory]`, layered as defaults, then the config file, then flags.

use std::path::Path;

use cascade_core::hilbert::{SpaceLayout, DEFAULT_TRUNCATION_TOL};
use cascade_core::params::SystemParams;
use cascade_core::trajectories::{InitialState, Observable, Scheme, TrajectoryConfig, TrajectoryTolerances};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: SystemParams,
    pub numerics: Numerics,
    pub trajectory: TrajectorySettings,
}

/// Grids and truncation for the master-equation and mean-field pipelines.
/// Delays are in units of 1/γ, frequencies in units of γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_fock: usize,
    pub truncation_tol: f64,
    /// γτ range of g² curves.
    pub tau_max: f64,
    pub tau_steps: usize,
    /// γτ range of the correlators behind numeric spectra.
    pub spectrum_tau_max: f64,
    pub spectrum_tau_steps: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_steps: usize,
    pub meanfield_t_end: f64,
    pub meanfield_steps: usize,
    /// Initial intracavity amplitude of the mean-field integration; both
    /// atoms start in the ground state.
    pub meanfield_alpha_re: f64,
    pub meanfield_alpha_im: f64,
    /// Husimi grid covers [−q_extent, q_extent]² with q_points² samples.
    pub q_extent: f64,
    pub q_points: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_fock: 6,
            truncation_tol: DEFAULT_TRUNCATION_TOL,
            tau_max: 10.0,
            tau_steps: 200,
            spectrum_tau_max: 40.0,
            spectrum_tau_steps: 8000,
            omega_min: -30.0,
            omega_max: 30.0,
            omega_steps: 240,
            meanfield_t_end: 50.0,
            meanfield_steps: 500,
            meanfield_alpha_re: 0.0,
            meanfield_alpha_im: 0.0,
            q_extent: 9.0,
            q_points: 73,
        }
    }
}

/// Trajectory controls. Times are in the units of the rates in `[params]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySettings {
    pub scheme: Scheme,
    /// First seed; an ensemble uses `seed .. seed + ensemble`.
    pub seed: u64,
    pub ensemble: usize,
    pub t_end: f64,
    pub sample_dt: f64,
    pub initial: InitialState,
    pub observables: Vec<Observable>,
    pub tolerances: TrajectoryTolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_average_from: Option<f64>,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        let base = TrajectoryConfig::new(SystemParams::default(), SpaceLayout { n_fock: 2, internal_atom: true });
        Self {
            scheme: base.scheme,
            seed: base.seed,
            ensemble: 1,
            t_end: base.t_end,
            sample_dt: base.sample_dt,
            initial: base.initial,
            observables: base.observables,
            tolerances: base.tolerances,
            field_average_from: None,
        }
    }
}

impl TrajectorySettings {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.ensemble as u64).map(|k| self.seed + k).collect()
    }

    pub fn to_config(&self, params: SystemParams, n_fock: usize) -> Result<TrajectoryConfig> {
        Ok(TrajectoryConfig {
            scheme: self.scheme,
            seed: self.seed,
            t_end: self.t_end,
            sample_dt: self.sample_dt,
            initial: self.initial,
            observables: self.observables.clone(),
            tolerances: self.tolerances,
            field_average_from: self.field_average_from,
            ..TrajectoryConfig::new(params, SpaceLayout::new(n_fock)?)
        })
    }
}

impl RunConfig {
    /// Rejects configurations that no pipeline can use.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let n = &self.numerics;
        if n.tau_steps == 0 || n.spectrum_tau_steps == 0 || n.omega_steps == 0 || n.meanfield_steps == 0 || n.q_points < 3 {
            return Err(CliError::Input("grid sizes must be positive (q_points at least 3)".into()));
        }
        if !(n.tau_max > 0.0 && n.spectrum_tau_max > 0.0 && n.meanfield_t_end > 0.0 && n.q_extent > 0.0) {
            return Err(CliError::Input("grid extents must be positive".into()));
        }
        if !(n.omega_max > n.omega_min) {
            return Err(CliError::Input("omega_max must exceed omega_min".into()));
        }
        if self.trajectory.ensemble == 0 {
            return Err(CliError::Input("ensemble must be at least 1".into()));
        }
        Ok(())
    }
}

/// Merges `top` into `base`, descending into tables.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `section.key=value` with a TOML value; bare words become strings.
pub fn parse_assignment(s: &str) -> Result<Table> {
    let (path, raw) = s.split_once('=').ok_or_else(|| CliError::Input(format!("`{s}` is not KEY=VALUE")))?;
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.to_string())),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Input(format!("bad key `{path}`")));
    }
    let last = keys.pop().unwrap();
    let mut table = Table::new();
    table.insert(last.to_string(), value);
    while let Some(k) = keys.pop() {
        let mut outer = Table::new();
        outer.insert(k.to_string(), Value::Table(table));
        table = outer;
    }
    Ok(table)
}

/// Defaults, then the file, then the overrides; unknown keys are rejected.
pub fn resolve(defaults: &RunConfig, file: Option<&Path>, overrides: Vec<Table>) -> Result<RunConfig> {
    let mut base = Table::try_from(defaults).map_err(|e| CliError::Input(format!("serializing defaults: {e}")))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        let table: Table = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        merge(&mut base, table);
    }
    for o in overrides {
        merge(&mut base, o);
    }
    let cfg: RunConfig = Value::Table(base).try_into().map_err(|e: toml::de::Error| CliError::Input(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_builds_nested_table() {
        let t = parse_assignment("numerics.n_fock=9").unwrap();
        assert_eq!(t["numerics"]["n_fock"].as_integer(), Some(9));
        let s = parse_assignment("trajectory.scheme=jump").unwrap();
        assert_eq!(s["trajectory"]["scheme"].as_str(), Some("jump"));
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn layering_and_unknown_keys() {
        let cfg = resolve(&RunConfig::default(), None, vec![parse_assignment("params.gamma=2.5").unwrap()]).unwrap();
        assert_eq!(cfg.params.gamma, 2.5);
        assert_eq!(cfg.numerics, Numerics::default());
        assert!(resolve(&RunConfig::default(), None, vec![parse_assignment("params.gama=1").unwrap()]).is_err());
        assert!(resolve(&RunConfig::default(), None, vec![parse_assignment("extra.x=1").unwrap()]).is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.trajectory.field_average_from = Some(2.0);
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
