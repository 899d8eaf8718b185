//! `analyze`, `simulate` and `verify`.

use std::path::Path;

use phaselock_core::analysis::{verify as verify_trajectories, VerifyOptions, VerifyReport};
use phaselock_core::classifier::{Stability, VerdictReport};
use phaselock_core::integrator::{integrate_full, IntegratorConfig, Outcome, Trajectory};
use phaselock_core::scenario::{Analysis, ExpectedOutcome, InitialCondition, Scenario, ScenarioError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::sweep::class_name;
use crate::{create_dir, write_file, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub scenario: String,
    pub l: u32,
    pub n: usize,
    pub m: usize,
    #[serde(skip)]
    pub dump: String,
    pub verdict: VerdictReport,
}

impl AnalyzeReport {
    pub fn inconclusive(&self) -> bool {
        self.verdict.class == Stability::Inconclusive
    }
}

pub fn analyze(sc: &Scenario) -> Result<AnalyzeReport, CliError> {
    let a = sc.analyze()?;
    Ok(AnalyzeReport {
        scenario: sc.name.clone(),
        l: a.model.l,
        n: a.model.n,
        m: a.model.m,
        dump: a.model.dump(),
        verdict: a.classification.report(),
    })
}

/// Integrates one initial condition with the averaged transforms attached.
pub fn run_one(sc: &Scenario, a: &Analysis, ic: InitialCondition) -> Result<Trajectory, CliError> {
    integrate_full(&a.spec, ic.x, ic.y, &sc.run, Some(&a.model))
        .map_err(|source| CliError::Scenario(ScenarioError::Integrator { name: sc.name.clone(), source }))
}

/// Initial conditions of `sc`, followed by `extra` points drawn uniformly from the disc of
/// radius `radius` when a seed is given.
pub fn initial_conditions(sc: &Scenario, seed: Option<u64>, extra: usize, radius: f64) -> Vec<InitialCondition> {
    let mut out = sc.initial.clone();
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..extra {
            let r = radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            out.push(InitialCondition { x: r * a.cos(), y: r * a.sin() });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub scenario: String,
    pub index: usize,
    pub x0: f64,
    pub y0: f64,
    pub file: String,
    pub samples: usize,
    pub outcome: Outcome,
    pub l: u32,
    pub n: usize,
    pub m: usize,
    pub run: IntegratorConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub seed: Option<u64>,
    pub columns: Vec<&'static str>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulateOptions {
    pub seed: Option<u64>,
    pub random_ics: usize,
    pub random_radius: f64,
}

/// Writes `<scenario>_ic<i>.csv` per initial condition and `manifest.json` into `out_dir`.
pub fn simulate(scenarios: &[Scenario], out_dir: &Path, opts: &SimulateOptions) -> Result<Manifest, CliError> {
    let mut jobs = Vec::new();
    let mut analyses = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let ics = initial_conditions(sc, opts.seed, opts.random_ics, opts.random_radius);
        if ics.is_empty() {
            return Err(CliError::Scenario(ScenarioError::Invalid {
                name: sc.name.clone(),
                message: "no initial conditions to simulate".into(),
            }));
        }
        analyses.push(sc.analyze()?);
        for (i, ic) in ics.into_iter().enumerate() {
            jobs.push((analyses.len() - 1, i, ic));
        }
    }
    let results: Vec<(ManifestEntry, Vec<u8>)> = jobs
        .par_iter()
        .map(|&(s, i, ic)| {
            let (sc, a) = (&scenarios[s], &analyses[s]);
            let traj = run_one(sc, a, ic)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv).expect("writing to memory");
            let entry = ManifestEntry {
                scenario: sc.name.clone(),
                index: i,
                x0: ic.x,
                y0: ic.y,
                file: format!("{}_ic{}.csv", sc.name, i),
                samples: traj.len(),
                outcome: traj.outcome,
                l: a.model.l,
                n: a.model.n,
                m: a.model.m,
                run: sc.run,
            };
            Ok((entry, csv))
        })
        .collect::<Result<_, CliError>>()?;
    create_dir(out_dir)?;
    let mut entries = Vec::with_capacity(results.len());
    for (entry, csv) in results {
        write_file(&out_dir.join(&entry.file), &csv)?;
        entries.push(entry);
    }
    let manifest = Manifest { seed: opts.seed, columns: vec!["t", "x", "y", "E", "theta", "v_est"], entries };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub scenario: String,
    pub expected: Option<String>,
    pub verdict: String,
    pub regime: String,
    pub theorem_path: String,
    pub pass: bool,
    /// Why the row failed, empty on PASS.
    pub problems: Vec<String>,
    pub report: VerifyReport,
}

impl VerifyRow {
    pub fn status(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

fn expected_label(e: ExpectedOutcome) -> &'static str {
    match e {
        ExpectedOutcome::Stable => "stable",
        ExpectedOutcome::Unstable => "unstable",
        ExpectedOutcome::Weighted => "weighted",
    }
}

fn matches_expectation(e: ExpectedOutcome, s: Stability) -> bool {
    match e {
        ExpectedOutcome::Stable => s.is_stable(),
        ExpectedOutcome::Unstable => s == Stability::Unstable,
        ExpectedOutcome::Weighted => matches!(s, Stability::UnstableWithWeight { .. }),
    }
}

/// Classifies, integrates every initial condition and cross-checks the two.
/// A scenario passes when the trajectories agree with the verdict and the
/// verdict matches the scenario's `[expect]` block, if any.
pub fn verify(scenarios: &[Scenario], opts: &VerifyOptions) -> Result<Vec<VerifyRow>, CliError> {
    let mut analyses = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        if sc.initial.is_empty() {
            return Err(CliError::Scenario(ScenarioError::Invalid {
                name: sc.name.clone(),
                message: "no initial conditions to verify against".into(),
            }));
        }
        analyses.push(sc.analyze()?);
    }
    let jobs: Vec<(usize, InitialCondition)> =
        scenarios.iter().enumerate().flat_map(|(s, sc)| sc.initial.iter().map(move |&ic| (s, ic))).collect();
    let trajectories: Vec<(usize, Trajectory)> = jobs
        .par_iter()
        .map(|&(s, ic)| run_one(&scenarios[s], &analyses[s], ic).map(|t| (s, t)))
        .collect::<Result<_, CliError>>()?;
    let mut rows = Vec::with_capacity(scenarios.len());
    for (s, (sc, a)) in scenarios.iter().zip(&analyses).enumerate() {
        let own: Vec<Trajectory> = trajectories.iter().filter(|(i, _)| *i == s).map(|(_, t)| t.clone()).collect();
        let report = verify_trajectories(&a.model, &a.classification, &own, opts);
        let verdict = a.classification.report();
        let mut problems = Vec::new();
        if !report.agree {
            problems.push("trajectories disagree with the verdict".to_string());
        }
        if let Some(exp) = &sc.expect {
            if !matches_expectation(exp.outcome, a.classification.summary) {
                problems.push(format!("expected {}, classified {}", expected_label(exp.outcome), a.classification.summary.label()));
            }
            if let Some(r) = &exp.regime {
                if *r != verdict.regime {
                    problems.push(format!("expected {r} regime, found {}", verdict.regime));
                }
            }
        }
        rows.push(VerifyRow {
            scenario: sc.name.clone(),
            expected: sc.expect.as_ref().map(|e| expected_label(e.outcome).to_string()),
            verdict: class_name(a.classification.summary).to_string(),
            regime: verdict.regime,
            theorem_path: verdict.theorem_path,
            pass: problems.is_empty(),
            problems,
            report,
        });
    }
    Ok(rows)
}

/// Fixed-width PASS/FAIL table.
pub fn verify_table(rows: &[VerifyRow]) -> String {
    let width = rows.iter().map(|r| r.scenario.len()).max().unwrap_or(8).max(8);
    let mut out = format!("{:<width$}  {:<9}  {:<8}  {:<17}  {:<8}  status\n", "scenario", "expected", "regime", "verdict", "verify");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:<9}  {:<8}  {:<17}  {:<8}  {}\n",
            r.scenario,
            r.expected.as_deref().unwrap_or("-"),
            r.regime,
            r.verdict,
            r.report.status(),
            r.status()
        ));
        for p in &r.problems {
            out.push_str(&format!("    {p}\n"));
        }
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    out.push_str(&format!("{passed}/{} passed\n", rows.len()));
    out
}
