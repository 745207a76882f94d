//! Command pipelines. Each writes its artifacts and a manifest that
//! reproduces the run through `replay`.

use std::path::Path;

use cascade_core::experiments::{self, channel_g2, delays, forwards_spectra, linspace, span};
use cascade_core::hilbert::{husimi_q, partial_trace_field, PhaseGrid};
use cascade_core::lindblad::{self, ChannelKind};
use cascade_core::meanfield::{integrate_meanfield, MeanFieldState};
use cascade_core::params::{derive, neoclassical_field, SystemParams};
use cascade_core::resfluor;
use cascade_core::trajectories::{
    bistability_statistics, ensemble_statistics, run_ensemble, BistabilityOptions, Observable, TrajectoryRecord,
};
use cascade_core::C64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Result, WithParams};
use crate::figures::{self, FigureName};
use crate::output::{Manifest, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Job {
    Spectrum,
    Squeezing,
    G2 { channel: ChannelKind },
    SteadyState,
    Meanfield,
    Trajectory,
    Bistability,
    Figure { name: FigureName },
}

impl Job {
    /// Configuration the job starts from before file and flag overrides.
    pub fn defaults(self) -> RunConfig {
        match self {
            Job::Figure { name } => figures::defaults(name),
            _ => RunConfig::default(),
        }
    }
}

pub fn execute(job: Job, cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mut o = Outputs::new(out)?;
    match job {
        Job::Spectrum => spectrum(cfg, &mut o)?,
        Job::Squeezing => squeezing(cfg, &mut o)?,
        Job::G2 { channel } => g2(cfg, channel, &mut o)?,
        Job::SteadyState => steady_state(cfg, &mut o)?,
        Job::Meanfield => meanfield(cfg, &mut o)?,
        Job::Trajectory => {
            trajectories(cfg, &cfg.params, "", &mut o)?;
        }
        Job::Bistability => bistability(cfg, &mut o)?,
        Job::Figure { name } => figures::run(name, cfg, &mut o)?,
    }
    o.finish(job, cfg)
}

pub fn omega_grid(cfg: &RunConfig) -> Vec<f64> {
    let n = &cfg.numerics;
    span(n.omega_min, n.omega_max, n.omega_steps)
}

pub fn spectra(p: &SystemParams, cfg: &RunConfig) -> Result<experiments::ForwardsSpectra> {
    let n = &cfg.numerics;
    forwards_spectra(p, n.n_fock, &linspace(n.spectrum_tau_max, n.spectrum_tau_steps), &omega_grid(cfg)).with_params(p)
}

/// Closed forms describe the empty-cavity source only.
fn closed_forms_apply(p: &SystemParams) -> bool {
    p.g == 0.0
}

fn spectrum(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let p = &cfg.params;
    let s = spectra(p, cfg)?;
    if closed_forms_apply(p) {
        o.csv_columns(
            "spectrum.csv",
            &["omega", "incoherent_numeric", "incoherent_analytic"],
            &[&s.omega, &s.incoherent_numeric, &s.incoherent_analytic],
        )
    } else {
        o.csv_columns("spectrum.csv", &["omega", "incoherent_numeric"], &[&s.omega, &s.incoherent_numeric])
    }
}

fn squeezing(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let p = &cfg.params;
    let s = spectra(p, cfg)?;
    if closed_forms_apply(p) {
        o.csv_columns(
            "squeezing.csv",
            &["omega", "squeezing_numeric", "squeezing_analytic", "sum_rule_numeric", "sum_rule_analytic"],
            &[&s.omega, &s.squeezing_numeric, &s.squeezing_analytic, &s.sum_rule_numeric, &s.sum_rule_analytic],
        )
    } else {
        o.csv_columns(
            "squeezing.csv",
            &["omega", "squeezing_numeric", "sum_rule_numeric"],
            &[&s.omega, &s.squeezing_numeric, &s.sum_rule_numeric],
        )
    }
}

pub fn gamma_tau(cfg: &RunConfig) -> Vec<f64> {
    linspace(cfg.numerics.tau_max, cfg.numerics.tau_steps)
}

fn g2(cfg: &RunConfig, channel: ChannelKind, o: &mut Outputs) -> Result<()> {
    let p = &cfg.params;
    let gt = gamma_tau(cfg);
    let numeric = channel_g2(p, cfg.numerics.n_fock, channel, &gt).with_params(p)?;
    let name = format!("g2_{}.csv", channel_label(channel));
    let analytic = if closed_forms_apply(p) {
        let taus = delays(p, &gt).with_params(p)?;
        match channel {
            ChannelKind::Forwards => Some(resfluor::g2_forwards_badcavity(p, &taus).with_params(p)?),
            ChannelKind::Sideways => Some(resfluor::g2_sideways(p, &taus).with_params(p)?),
            ChannelKind::Internal => None,
        }
    } else {
        None
    };
    match analytic {
        Some(a) => o.csv_columns(&name, &["gamma_tau", "g2_numeric", "g2_analytic"], &[&gt, &numeric, &a]),
        None => o.csv_columns(&name, &["gamma_tau", "g2_numeric"], &[&gt, &numeric]),
    }
}

pub fn channel_label(c: ChannelKind) -> &'static str {
    match c {
        ChannelKind::Forwards => "forwards",
        ChannelKind::Sideways => "sideways",
        ChannelKind::Internal => "internal",
    }
}

fn steady_state(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let p = &cfg.params;
    let (l, rho) = experiments::stationary(p, cfg.numerics.n_fock, cfg.numerics.truncation_tol).with_params(p)?;
    let ops = &l.ops;
    let a = rho.expect(&ops.a.matrix);
    let field = partial_trace_field(&rho);
    let pn: Vec<f64> = (0..field.nrows()).map(|k| field[(k, k)].re).collect();
    let n: Vec<f64> = (0..pn.len()).map(|k| k as f64).collect();
    o.csv_columns("photon_distribution.csv", &["n", "p_n"], &[&n, &pn])?;
    let summary = json!({
        "n": rho.expect(&ops.number()).re,
        "a_re": a.re,
        "a_im": a.im,
        "s1z": rho.expect(&ops.s1z.matrix).re,
        "s1y": rho.expect(&ops.s1y()).re,
        "s2z": rho.expect(&ops.s2z.matrix).re,
        "s2y": rho.expect(&ops.s2y()).re,
        "forwards_flux": lindblad::forwards_flux(&l, &rho),
        "purity": rho.purity(),
        "top_fock_population": rho.top_fock_population(),
        "derived": derive(p).with_params(p)?,
    });
    o.json("steady_state.json", &summary)
}

fn meanfield(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let p = &cfg.params;
    let n = &cfg.numerics;
    let s0 = MeanFieldState { alpha: C64::new(n.meanfield_alpha_re, n.meanfield_alpha_im), ..MeanFieldState::ground() };
    let ts = linspace(n.meanfield_t_end, n.meanfield_steps);
    let states = integrate_meanfield(p, &s0, &ts[1..]).with_params(p)?;
    let header: Vec<String> =
        ["t", "alpha_re", "alpha_im", "beta1_re", "beta1_im", "zeta1", "beta2_re", "beta2_im", "zeta2"].map(String::from).into();
    let rows: Vec<Vec<f64>> = std::iter::once(&s0)
        .chain(states.iter())
        .zip(&ts)
        .map(|(s, &t)| vec![t, s.alpha.re, s.alpha.im, s.beta1.re, s.beta1.im, s.zeta1, s.beta2.re, s.beta2.im, s.zeta2])
        .collect();
    o.csv_rows("meanfield.csv", &header, &rows)?;
    let branches: Vec<[f64; 2]> = neoclassical_field(p).amplitudes().iter().map(|a| [a.re, a.im]).collect();
    o.json("neoclassical.json", &json!({ "field_branches": branches, "above_threshold": p.above_threshold() }))
}

/// Runs the configured seeds and writes one record per seed, the ensemble
/// mean when there is more than one seed, and the averaged Husimi map when a
/// field average was requested. Returns the records.
pub fn trajectories(cfg: &RunConfig, p: &SystemParams, prefix: &str, o: &mut Outputs) -> Result<Vec<TrajectoryRecord>> {
    let tcfg = cfg.trajectory.to_config(*p, cfg.numerics.n_fock)?;
    let seeds = cfg.trajectory.seeds();
    let records = run_ensemble(&tcfg, &seeds).with_params(p)?;
    for r in &records {
        write_record(cfg, r, prefix, o)?;
    }
    if records.len() > 1 {
        let hermitian: Vec<Observable> = tcfg.observables.iter().copied().filter(|o| o.is_hermitian()).collect();
        let mut header = vec!["t".to_string()];
        let mut columns = vec![records[0].times.clone()];
        for ob in hermitian {
            let st = ensemble_statistics(&records, ob).with_params(p)?;
            header.push(format!("{ob}_mean"));
            header.push(format!("{ob}_stderr"));
            columns.push(st.mean);
            columns.push(st.std_err);
        }
        let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
        let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        o.csv_columns(&format!("{prefix}ensemble.csv"), &h, &refs)?;
    }
    let stats: Vec<_> = records.iter().map(|r| json!({ "seed": r.config.seed, "stats": r.stats })).collect();
    o.json(&format!("{prefix}trajectory_stats.json"), &stats)?;
    Ok(records)
}

fn write_record(cfg: &RunConfig, r: &TrajectoryRecord, prefix: &str, o: &mut Outputs) -> Result<()> {
    let seed = r.config.seed;
    o.csv_rows(&format!("{prefix}trajectory_seed{seed}.csv"), &r.column_names(), &r.rows())?;
    if !r.events.is_empty() {
        let header = ["t".to_string(), "channel".to_string()];
        let rows = r.events.iter().map(|e| vec![crate::output::fmt(e.time), channel_label(e.channel).to_string()]);
        o.csv_records(&format!("{prefix}jumps_seed{seed}.csv"), &header, rows)?;
    }
    if let Some(rho) = &r.field_density {
        let n = &cfg.numerics;
        let grid = PhaseGrid::uniform((-n.q_extent, n.q_extent), (-n.q_extent, n.q_extent), n.q_points, n.q_points);
        o.husimi(&format!("{prefix}q_seed{seed}.csv"), &husimi_q(rho, &grid))?;
    }
    Ok(())
}

/// Observables the switching analysis reads.
pub fn with_bistability_observables(cfg: &RunConfig) -> RunConfig {
    let mut cfg = cfg.clone();
    for ob in [Observable::A, Observable::S1y, Observable::S2y] {
        if !cfg.trajectory.observables.contains(&ob) {
            cfg.trajectory.observables.push(ob);
        }
    }
    cfg
}

fn bistability(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let p = &cfg.params;
    let records = trajectories(&with_bistability_observables(cfg), p, "", o)?;
    let report = bistability_statistics(&records, &BistabilityOptions::for_params(p)).with_params(p)?;
    let header: Vec<String> = ["start", "end", "label", "complete", "mean_s1y", "mean_s2y"].map(String::from).into();
    let rows: Vec<Vec<f64>> = report
        .segments
        .iter()
        .map(|s| vec![s.start, s.end, s.label as f64, if s.complete { 1.0 } else { 0.0 }, s.mean_s1y, s.mean_s2y])
        .collect();
    o.csv_rows("dwell.csv", &header, &rows)?;
    o.json("bistability.json", &report)
}
