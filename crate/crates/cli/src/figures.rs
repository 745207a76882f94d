//! Figure pipelines with the caption parameters as defaults. Figs. 2–5 are
//! in units of γ (delays γτ, frequencies ω/γ) and Figs. 6–8 in units of κ.

use cascade_core::experiments::{channel_g2, delays};
use cascade_core::lindblad::ChannelKind;
use cascade_core::meanfield::y_pp_gamma_s_zero;
use cascade_core::params::SystemParams;
use cascade_core::resfluor::{self, AnalyticCorrelators};
use cascade_core::trajectories::{run_model_ensemble, Observable, TrajectoryTolerances, UnravelModel};
use cascade_core::meanfield::adiabatic_steady_state;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Result, WithParams};
use crate::jobs::{gamma_tau, spectra, trajectories, with_bistability_observables};
use crate::output::Outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FigureName {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

pub const FIG2_FOCUSING: [f64; 4] = [0.05, 0.1, 0.4, 0.8];
pub const FIG3A_FOCUSING: [f64; 4] = [0.2, 0.3, 0.4, 0.5];
pub const FIG3B_FOCUSING: [f64; 4] = [0.7, 0.75, 0.8, 0.82];
pub const FIG4_GAMMA_OVER_KAPPA: [f64; 3] = [0.025, 0.01, 0.001];
pub const FIG5_G_OVER_EPS: [f64; 3] = [0.05, 1.0, 2.5];
pub const FIG6_GAMMA_OVER_EPS: [f64; 2] = [0.0156, 0.0069];
pub const FIG7_FOCUSING: [f64; 2] = [0.1, 0.9];
pub const FIG8_EPS_OVER_G: [f64; 2] = [0.501, 0.495];

/// Drive of Figs. 5 and 6 relative to κ.
const FIG56_EPS_OVER_KAPPA: f64 = 0.04;

/// Trajectory tolerances of the bistable regimes (⟨n⟩ ≈ 43).
pub const BISTABLE_TOLERANCES: TrajectoryTolerances = TrajectoryTolerances {
    step_tol: 1e-3,
    norm_tol: 1e-3,
    max_level: 30,
    truncation_tol: 1.0,
    ode_rtol: 1e-8,
    ode_atol: 1e-12,
};

pub fn defaults(name: FigureName) -> RunConfig {
    let mut c = RunConfig::default();
    match name {
        FigureName::Fig2 | FigureName::Fig3 => {}
        FigureName::Fig4 => {
            c.numerics.n_fock = 4;
            c.numerics.tau_max = 8.0;
            c.numerics.tau_steps = 160;
        }
        FigureName::Fig5 => c.numerics.n_fock = 4,
        FigureName::Fig6 => {
            c.numerics.n_fock = 5;
            c.trajectory.t_end = 40000.0;
            c.trajectory.sample_dt = 10.0;
            c.trajectory.observables = vec![Observable::Pe2, Observable::S1z, Observable::N];
        }
        FigureName::Fig7 | FigureName::Fig8 => {
            c.numerics.n_fock = 150;
            c.trajectory.seed = 7;
            c.trajectory.t_end = 200.0;
            c.trajectory.sample_dt = 0.05;
            c.trajectory.tolerances = BISTABLE_TOLERANCES;
            c.trajectory.field_average_from = Some(10.0);
            c.trajectory.observables = vec![Observable::S1y, Observable::S2y, Observable::A, Observable::N];
        }
    }
    c
}

pub fn run(name: FigureName, cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    match name {
        FigureName::Fig2 => fig2(cfg, o),
        FigureName::Fig3 => fig3(cfg, o),
        FigureName::Fig4 => fig4(cfg, o),
        FigureName::Fig5 => fig5(cfg, o),
        FigureName::Fig6 => fig6(cfg, o),
        FigureName::Fig7 => bistable(cfg, o, "fig7", &FIG7_FOCUSING.map(fig7_params)),
        FigureName::Fig8 => bistable(cfg, o, "fig8", &FIG8_EPS_OVER_G.map(fig8_params)),
    }
}

pub fn fig2_params(focusing: f64) -> SystemParams {
    SystemParams { kappa: 200.0, gamma: 1.0, eps_d: 50.0, focusing, ..Default::default() }
}

fn fig2(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    for f in FIG2_FOCUSING {
        let p = fig2_params(f);
        let s = spectra(&p, cfg)?;
        let file = format!("fig2_focusing{f}.csv");
        o.csv_columns(
            &file,
            &["omega", "incoherent_numeric", "incoherent_analytic", "squeezing_numeric", "squeezing_analytic"],
            &[&s.omega, &s.incoherent_numeric, &s.incoherent_analytic, &s.squeezing_numeric, &s.squeezing_analytic],
        )?;
        o.curve(&file, format!("Gamma={f}"), &p);
    }
    Ok(())
}

/// Weak-excitation g² depends on Γ alone once delays are scaled by γ.
fn fig3(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let gt = gamma_tau(cfg);
    for (panel, set) in [("a", FIG3A_FOCUSING), ("b", FIG3B_FOCUSING)] {
        for f in set {
            let p = SystemParams { kappa: 1.0, gamma: 1.0, focusing: f, ..Default::default() };
            let g2 = resfluor::g2_forwards_weak(&p, &delays(&p, &gt).with_params(&p)?).with_params(&p)?;
            let file = format!("fig3{panel}_focusing{f}.csv");
            o.csv_columns(&file, &["gamma_tau", "g2"], &[&gt, &g2])?;
            o.curve(&file, format!("Gamma={f}"), &p);
        }
    }
    Ok(())
}

pub fn fig4_params(gamma_over_kappa: f64) -> SystemParams {
    SystemParams { kappa: 1.0, gamma: gamma_over_kappa, eps_d: 0.1, focusing: 0.7, ..Default::default() }
}

fn fig4(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let gt = gamma_tau(cfg);
    let n = cfg.numerics.n_fock;
    for r in FIG4_GAMMA_OVER_KAPPA {
        let p = fig4_params(r);
        let taus = delays(&p, &gt).with_params(&p)?;
        let c1 = channel_g2(&p, n, ChannelKind::Forwards, &gt).with_params(&p)?;
        let c2 = channel_g2(&p, n, ChannelKind::Sideways, &gt).with_params(&p)?;
        let a1 = resfluor::g2_forwards_badcavity(&p, &taus).with_params(&p)?;
        let a2 = resfluor::g2_sideways(&p, &taus).with_params(&p)?;
        let file = format!("fig4_gamma_over_kappa{r}.csv");
        o.csv_columns(
            &file,
            &["gamma_tau", "g2_c1_numeric", "g2_c1_analytic", "g2_c2_numeric", "g2_c2_analytic"],
            &[&gt, &c1, &a1, &c2, &a2],
        )?;
        o.curve(&file, format!("gamma/kappa={r}"), &p);
    }
    Ok(())
}

pub fn fig5_params(g_over_eps: f64) -> SystemParams {
    let eps_d = FIG56_EPS_OVER_KAPPA;
    SystemParams { kappa: 1.0, eps_d, g: g_over_eps * eps_d, gamma: 0.0156 * eps_d, focusing: 0.9, ..Default::default() }
}

/// Sideways g² of the full master equation with γₛ = 0 against ordinary
/// resonance fluorescence at the adiabatic drive Ȳ″.
fn fig5(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    let gt = gamma_tau(cfg);
    for r in FIG5_G_OVER_EPS {
        let p = fig5_params(r);
        let numeric = channel_g2(&p, cfg.numerics.n_fock, ChannelKind::Sideways, &gt).with_params(&p)?;
        let ac = AnalyticCorrelators::new(p.gamma, y_pp_gamma_s_zero(&p)).with_params(&p)?;
        let adiabatic: Vec<f64> = delays(&p, &gt).with_params(&p)?.iter().map(|&t| ac.g2_ss(t)).collect();
        let file = format!("fig5_g_over_eps{r}.csv");
        o.csv_columns(&file, &["gamma_tau", "g2_numeric", "g2_adiabatic"], &[&gt, &numeric, &adiabatic])?;
        o.curve(&file, format!("g/eps={r}"), &p);
    }
    Ok(())
}

pub fn fig6_params(gamma_over_eps: f64) -> SystemParams {
    let eps_d = FIG56_EPS_OVER_KAPPA;
    SystemParams {
        kappa: 1.0,
        eps_d,
        g: 0.5 * eps_d,
        gamma_s: 0.25 * eps_d,
        gamma: gamma_over_eps * eps_d,
        focusing: 0.9,
        ..Default::default()
    }
}

/// Curve (i) unravels the full model; curve (ii) unravels ordinary resonance
/// fluorescence at the adiabatic drive with the same seeds.
fn fig6(cfg: &RunConfig, o: &mut Outputs) -> Result<()> {
    for (panel, r) in ["a", "b"].into_iter().zip(FIG6_GAMMA_OVER_EPS) {
        let p = fig6_params(r);
        let full = format!("fig6{panel}_full_");
        trajectories(cfg, &p, &full, o)?;
        o.curve(&full, format!("(i) gamma/eps={r}"), &p);

        let mut reduced_cfg = cfg.trajectory.to_config(p, 2)?;
        reduced_cfg.observables = vec![Observable::Pe2, Observable::S2z];
        reduced_cfg.field_average_from = None;
        let y = adiabatic_steady_state(&p).with_params(&p)?.y_pp;
        let model = UnravelModel::reduced_resonance_fluorescence(&p, y, &reduced_cfg.observables).with_params(&p)?;
        let prefix = format!("fig6{panel}_reduced_");
        for rec in run_model_ensemble(&model, &reduced_cfg, &cfg.trajectory.seeds()).with_params(&p)? {
            o.csv_rows(&format!("{prefix}trajectory_seed{}.csv", rec.config.seed), &rec.column_names(), &rec.rows())?;
        }
        o.curve(&prefix, format!("(ii) gamma/eps={r}, Y''={y}"), &p);
    }
    Ok(())
}

pub fn fig7_params(focusing: f64) -> SystemParams {
    SystemParams { kappa: 1.0, g: 100.0, gamma: 40.0, eps_d: 0.501 * 100.0, focusing, ..Default::default() }
}

pub fn fig8_params(eps_over_g: f64) -> SystemParams {
    SystemParams { kappa: 1.0, g: 100.0, gamma: 0.004, eps_d: eps_over_g * 100.0, focusing: 0.95, ..Default::default() }
}

/// Single trajectories per panel with the averaged Husimi map and the
/// time-averaged photon number after `field_average_from`.
fn bistable(cfg: &RunConfig, o: &mut Outputs, fig: &str, panels: &[SystemParams]) -> Result<()> {
    let cfg = with_bistability_observables(cfg);
    let mut cfg = cfg;
    if !cfg.trajectory.observables.contains(&Observable::N) {
        cfg.trajectory.observables.push(Observable::N);
    }
    let settle = cfg.trajectory.field_average_from.unwrap_or(0.0);
    let mut summary = Vec::new();
    for (panel, p) in ["a", "b"].into_iter().zip(panels) {
        let prefix = format!("{fig}{panel}_");
        let records = trajectories(&cfg, p, &prefix, o)?;
        o.curve(&prefix, format!("panel {panel}"), p);
        for r in &records {
            let n = r.real_series(Observable::N).with_params(p)?;
            let late: Vec<f64> = r.times.iter().zip(&n).filter(|(t, _)| **t >= settle).map(|(_, v)| *v).collect();
            let mean_n = late.iter().sum::<f64>() / late.len().max(1) as f64;
            summary.push(json!({ "panel": panel, "seed": r.config.seed, "mean_photon_number": mean_n, "from": settle }));
        }
    }
    o.json(&format!("{fig}_summary.json"), &summary)
}
