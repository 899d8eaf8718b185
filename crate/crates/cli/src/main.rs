use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaselock_cli::commands::{self, SimulateOptions};
use phaselock_cli::figures;
use phaselock_cli::sweep::{self, SweepOptions};
use phaselock_cli::{load_scenarios, CliError, Overrides};
use phaselock_core::analysis::VerifyOptions;
use phaselock_core::scenario::Scenario;

/// Averaging, classification and simulation of resonantly perturbed oscillators.
#[derive(Parser, Debug)]
#[command(name = "phaselock", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario file, or a directory of `*.toml` scenarios.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Relative tolerance of the integrator.
    #[arg(long, global = true)]
    tol_rel: Option<f64>,
    /// Absolute tolerance of the integrator.
    #[arg(long, global = true)]
    tol_abs: Option<f64>,
    /// End time of every integration.
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Seed for randomly drawn initial conditions.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the averaged model and the verdict. Exits 2 if any verdict is inconclusive.
    Analyze,
    /// Integrate every initial condition and write CSV files plus a manifest.
    Simulate {
        /// Extra initial conditions drawn from `--seed`.
        #[arg(long, default_value_t = 0)]
        random_ics: usize,
        /// Radius of the disc the extra initial conditions are drawn from.
        #[arg(long, default_value_t = 0.3)]
        random_radius: f64,
    },
    /// Compare each verdict with direct simulation. Exits 1 if any scenario fails.
    Verify,
    /// Sweep the damping coefficient and locate the stability boundary.
    Sweep {
        #[arg(long, default_value_t = SweepOptions::default().lambda_min, allow_hyphen_values = true)]
        lambda_min: f64,
        #[arg(long, default_value_t = SweepOptions::default().lambda_max, allow_hyphen_values = true)]
        lambda_max: f64,
        #[arg(long, default_value_t = SweepOptions::default().steps)]
        steps: usize,
        /// Trailing decades used for the growth slope.
        #[arg(long, default_value_t = SweepOptions::default().fit_decades)]
        fit_decades: f64,
    },
    /// Write plot data for every figure panel.
    Figures {
        /// Render only the named panel; repeatable.
        #[arg(long)]
        panel: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn scenarios(g: &Global, default: Option<&str>) -> Result<Vec<Scenario>, CliError> {
    let overrides = Overrides { rel_tol: g.tol_rel, abs_tol: g.tol_abs, t_end: g.t_end };
    let path = match (&g.config, default) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => return Err(CliError::Invalid("--config is required".into())),
    };
    load_scenarios(&path, &overrides)
}

fn out_dir(g: &Global) -> &Path {
    g.out.as_deref().unwrap_or(Path::new("out"))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Analyze => {
            let scs = scenarios(g, None)?;
            let reports = scs.iter().map(commands::analyze).collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                println!("# scenario: {}", r.scenario);
                print!("{}", r.dump);
                println!("{}", to_json(r));
            }
            let code = if reports.iter().any(|r| r.inconclusive()) { 2 } else { 0 };
            Ok(ExitCode::from(code))
        }
        Command::Simulate { random_ics, random_radius } => {
            let scs = scenarios(g, None)?;
            let opts = SimulateOptions { seed: g.seed, random_ics: *random_ics, random_radius: *random_radius };
            let manifest = commands::simulate(&scs, out_dir(g), &opts)?;
            for e in &manifest.entries {
                println!("{}", out_dir(g).join(&e.file).display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let scs = scenarios(g, None)?;
            let rows = commands::verify(&scs, &VerifyOptions::default())?;
            print!("{}", commands::verify_table(&rows));
            if let Some(dir) = &g.out {
                phaselock_cli::create_dir(dir)?;
                phaselock_cli::write_file(&dir.join("verify.json"), to_json(&rows).as_bytes())?;
            }
            Ok(if rows.iter().all(|r| r.pass) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sweep { lambda_min, lambda_max, steps, fit_decades } => {
            let mut scs = scenarios(g, None)?;
            if g.t_end.is_none() {
                for sc in &mut scs {
                    sc.run.t_end = sc.run.t_end.min(1e4);
                }
            }
            let opts = SweepOptions { lambda_min: *lambda_min, lambda_max: *lambda_max, steps: *steps, fit_decades: *fit_decades };
            let dir = out_dir(g);
            phaselock_cli::create_dir(dir)?;
            for sc in &scs {
                let rep = sweep::sweep(sc, &opts)?;
                phaselock_cli::write_file(&dir.join(format!("sweep_{}.csv", sc.name)), rep.to_csv().as_bytes())?;
                phaselock_cli::write_file(&dir.join(format!("sweep_{}.json", sc.name)), to_json(&rep).as_bytes())?;
                let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
                println!(
                    "{} (kappa={}): empirical boundary [{}], averaged-model boundary [{}]",
                    sc.name,
                    rep.kappa,
                    fmt(&rep.empirical_boundaries),
                    fmt(&rep.predicted_boundaries)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figures { panel } => {
            let scs = scenarios(g, Some("scenarios"))?;
            let dir = out_dir(g);
            phaselock_cli::create_dir(dir)?;
            for p in figures::render_all(&scs, dir, panel)? {
                println!("{}", dir.join(&p.panel).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
