//! Plot-ready data for the bundled corpus.
//!
//! Each panel groups a few scenarios and gets its own directory with one CSV
//! per trajectory, reference curves where the verdict predicts a power law,
//! and a `summary.json` with the verdict and the measured quantities.

use std::f64::consts::PI;
use std::path::Path;

use phaselock_core::analysis::{detect_phase_traj, fit_decay, model_rate_candidates, FitOptions, FitResult, LockReport, PhaseOptions};
use phaselock_core::classifier::{RateForm, VerdictReport};
use phaselock_core::integrator::{Outcome, Trajectory};
use phaselock_core::scenario::{Analysis, Scenario};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::run_one;
use crate::sweep::{class_name, late_slope};
use crate::{create_dir, write_file, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlay {
    /// `r(1)·t^p` through each initial point, `p` the predicted power.
    Growth,
    /// `c·R*·t^p` and `2R*·t^{2p}` for a predicted `R*`.
    Envelope,
}

#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub name: &'static str,
    pub scenarios: &'static [&'static str],
    pub overlay: Option<Overlay>,
}

pub const PANELS: &[Panel] = &[
    Panel { name: "parametric_resonance", scenarios: &["example16_k1", "example16_k2"], overlay: None },
    Panel { name: "ex1_drift", scenarios: &["ex1_caseI", "ex1_caseI_unstable", "ex1_caseI_weighted"], overlay: None },
    Panel { name: "ex1_lock", scenarios: &["ex1_caseII_stable", "ex1_caseII_unstable"], overlay: None },
    Panel { name: "ex1_isochronous_lock", scenarios: &["fig3_isochronous"], overlay: Some(Overlay::Growth) },
    Panel { name: "ex1_slow_drift", scenarios: &["ex1_caseIII_stable", "ex1_caseIII_unstable"], overlay: None },
    Panel { name: "ex2_lock", scenarios: &["ex2_lock", "ex2_lock_unstable"], overlay: None },
    Panel { name: "ex2_drift", scenarios: &["ex2_drift_stable", "ex2_drift_unstable"], overlay: None },
    Panel { name: "ex3_cubic_unstable", scenarios: &["ex3_caseI_unstable"], overlay: None },
    Panel { name: "ex3_cubic_stable", scenarios: &["ex3_caseI_balance", "ex3_caseI_poly"], overlay: Some(Overlay::Envelope) },
    Panel { name: "ex3_lock", scenarios: &["ex3_caseII_stable", "ex3_caseII_unstable"], overlay: None },
    Panel { name: "ex3_isochronous_drift", scenarios: &["ex3_caseIII_unstable", "ex3_caseIII_stable"], overlay: None },
];

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub file: String,
    pub x0: f64,
    pub y0: f64,
    pub outcome: Outcome,
    /// `d ln r / d ln t` over the last two decades.
    pub late_slope: f64,
    /// Same for the weighted amplitude `t^{l/2q} √(2E)`.
    pub weighted_slope: f64,
    pub fit: Option<FitResult>,
    pub phase: LockReport,
    /// Final averaged phase reduced to `(−π/2, π/2]`.
    pub psi_end_mod_pi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub class: &'static str,
    pub verdict: VerdictReport,
    /// Power `p` of the reference curves, when drawn.
    pub reference_exponent: Option<f64>,
    pub trajectories: Vec<TrajectorySummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelSummary {
    pub panel: String,
    pub overlay: Option<Overlay>,
    pub scenarios: Vec<ScenarioSummary>,
}

pub fn reduce_mod_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r > PI / 2.0 {
        r - PI
    } else {
        r
    }
}

fn weight(a: &Analysis) -> f64 {
    a.model.l as f64 / (2.0 * a.model.q as f64)
}

fn trajectory_csv(traj: &Trajectory, w: f64) -> String {
    let mut out = String::from("t,x,y,E,theta,v_est,psi_est,r,R\n");
    for i in 0..traj.len() {
        let v = traj.v_est.as_ref().map_or(f64::NAN, |v| v[i]);
        let p = traj.psi_est.as_ref().map_or(f64::NAN, |p| p[i]);
        let amp = if traj.e[i] > 0.0 { (2.0 * traj.e[i]).sqrt() } else { traj.r(i) };
        out.push_str(&format!(
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            traj.t[i],
            traj.x[i],
            traj.y[i],
            traj.e[i],
            traj.theta[i],
            v,
            p,
            traj.r(i),
            traj.t[i].powf(w) * amp
        ));
    }
    out
}

fn summarize(file: String, traj: &Trajectory, a: &Analysis, roots: &[f64]) -> TrajectorySummary {
    let w = weight(a);
    let weighted: Vec<f64> =
        traj.log_r.iter().zip(&traj.t).zip(&traj.e).map(|((&lr, &t), &e)| w * t.ln() + if e > 0.0 { 0.5 * (2.0 * e).ln() } else { lr }).collect();
    let phase = detect_phase_traj(traj, roots, &PhaseOptions::default());
    let last_phase = traj.psi_est.as_ref().and_then(|p| p.last()).or(traj.theta.last()).copied().unwrap_or(f64::NAN);
    TrajectorySummary {
        file,
        x0: traj.x[0],
        y0: traj.y[0],
        outcome: traj.outcome,
        late_slope: late_slope(&traj.t, &traj.log_r, 2.0),
        weighted_slope: late_slope(&traj.t, &weighted, 2.0),
        fit: fit_decay(traj, &FitOptions::default(), &model_rate_candidates(&a.model)).ok(),
        phase,
        psi_end_mod_pi: reduce_mod_pi(last_phase),
    }
}

fn overlay_csv(kind: Overlay, trajs: &[Trajectory], verdict: &VerdictReport) -> Option<(f64, String)> {
    let rate = verdict.rate.filter(|r| r.form == RateForm::Power)?;
    let p = rate.exponent;
    let t = &trajs.first()?.t;
    let mut out = String::from("t");
    match kind {
        Overlay::Growth => {
            for i in 0..trajs.len() {
                out.push_str(&format!(",ic{i}"));
            }
            out.push('\n');
            for &ti in t {
                out.push_str(&format!("{ti:.10e}"));
                for tr in trajs {
                    out.push_str(&format!(",{:.10e}", tr.r(0) * (ti / tr.t[0]).powf(p)));
                }
                out.push('\n');
            }
        }
        Overlay::Envelope => {
            let r_star = verdict.scalars.r_star?;
            out.push_str(",two_rstar,sqrt2_rstar,two_rstar_squared_power\n");
            for &ti in t {
                out.push_str(&format!(
                    "{ti:.10e},{:.10e},{:.10e},{:.10e}\n",
                    2.0 * r_star * ti.powf(p),
                    2f64.sqrt() * r_star * ti.powf(p),
                    2.0 * r_star * ti.powf(2.0 * p)
                ));
            }
        }
    }
    Some((p, out))
}

/// Runs one panel and writes its directory under `out_dir`.
pub fn render_panel(panel: &Panel, scenarios: &[Scenario], out_dir: &Path) -> Result<PanelSummary, CliError> {
    let dir = out_dir.join(panel.name);
    let mut picked = Vec::new();
    for name in panel.scenarios {
        let sc = scenarios
            .iter()
            .find(|s| s.name == *name)
            .ok_or_else(|| CliError::Invalid(format!("panel {}: scenario {name} not found", panel.name)))?;
        picked.push(sc);
    }
    let analyses: Vec<Analysis> = picked.iter().map(|sc| sc.analyze()).collect::<Result<_, _>>()?;
    let runs: Vec<Vec<Trajectory>> = picked
        .par_iter()
        .zip(&analyses)
        .map(|(sc, a)| sc.initial.par_iter().map(|&ic| run_one(sc, a, ic)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    create_dir(&dir)?;
    let mut summaries = Vec::new();
    for ((sc, a), trajs) in picked.iter().zip(&analyses).zip(&runs) {
        let verdict = a.classification.report();
        let mut items = Vec::new();
        for (i, tr) in trajs.iter().enumerate() {
            let file = format!("{}_ic{i}.csv", sc.name);
            write_file(&dir.join(&file), trajectory_csv(tr, weight(a)).as_bytes())?;
            items.push(summarize(file, tr, a, &verdict.psi_star));
        }
        let mut reference_exponent = None;
        if let Some((p, csv)) = panel.overlay.and_then(|k| overlay_csv(k, trajs, &verdict)) {
            write_file(&dir.join(format!("{}_reference.csv", sc.name)), csv.as_bytes())?;
            reference_exponent = Some(p);
        }
        summaries.push(ScenarioSummary {
            scenario: sc.name.clone(),
            class: class_name(a.classification.summary),
            verdict,
            reference_exponent,
            trajectories: items,
        });
    }
    let summary = PanelSummary { panel: panel.name.to_string(), overlay: panel.overlay, scenarios: summaries };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}

/// Renders every panel in [`PANELS`], or the named subset, and writes `index.json`.
pub fn render_all(scenarios: &[Scenario], out_dir: &Path, only: &[String]) -> Result<Vec<PanelSummary>, CliError> {
    let chosen: Vec<&Panel> = PANELS.iter().filter(|p| only.is_empty() || only.iter().any(|o| o == p.name)).collect();
    if chosen.is_empty() {
        return Err(CliError::Invalid(format!("no panel named {}", only.join(", "))));
    }
    let out = chosen.par_iter().map(|p| render_panel(p, scenarios, out_dir)).collect::<Result<Vec<_>, _>>()?;
    let index: Vec<&str> = out.iter().map(|p| p.panel.as_str()).collect();
    write_file(&out_dir.join("index.json"), serde_json::to_string_pretty(&index).expect("index").as_bytes())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_into_half_open_interval() {
        assert!((reduce_mod_pi(1.8196) + 1.3220).abs() < 1e-3);
        assert!((reduce_mod_pi(-0.615) + 0.615).abs() < 1e-12);
        assert!((reduce_mod_pi(PI / 2.0) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn panels_name_distinct_scenarios() {
        let mut all: Vec<&str> = PANELS.iter().flat_map(|p| p.scenarios.iter().copied()).collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
    }
}
