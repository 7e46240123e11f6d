use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use flexgrid::grid::{apply_scenario, load_network, load_scenario};
use flexgrid::powerflow::{solve_pf, SolverOptions};
use flexgrid::runner::{
    build_report, hull_of_file, initial_point_near, render_scatter, run_suite, scenario_key, RunConfig, RunOptions,
    ScenarioStatus, SuiteReport,
};

const OUTPUT_ENV: &str = "FLEXGRID_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "flexgrid",
    version,
    about = "TSO-DSO flexibility area estimation by power-flow sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample every scenario of a suite and write all reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Run only these scenarios (repeatable); the reference always runs.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
    },
    /// Solve one power flow and print bus voltages and branch flows.
    Pf {
        #[arg(long)]
        config: PathBuf,
        /// Scenario name; defaults to the reference scenario.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Rebuild report.csv and table1.csv from the files of a previous run.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory of the run; overrides the config.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Convex hull of the feasible rows of a samples file.
    Hull {
        #[arg(long)]
        samples: PathBuf,
        /// Hull vertices CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scatter plot with the hull overlaid.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn summarize(report: &SuiteReport) -> ExitCode {
    for row in &report.rows {
        match &row.status {
            ScenarioStatus::Ok => eprintln!(
                "{:>10}  area {:>9.4}  diff {:>8}  feasible {:>7}  infeasible {:>7}  non-converged {:>5}",
                row.scenario,
                row.hull_area.unwrap_or(f64::NAN),
                flexgrid::observability::format_percent(row.area_diff_percent),
                row.n_feasible,
                row.n_infeasible,
                row.n_nonconverged
            ),
            ScenarioStatus::Failed(reason) => eprintln!("{:>10}  FAILED: {reason}", row.scenario),
        }
    }
    eprintln!("reports written to {}", report.output_dir.display());
    if report.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            budget,
            seed,
            jobs,
            scenarios,
        } => {
            let cfg = load_config(&config)?;
            let opts = RunOptions {
                budget,
                seed,
                jobs,
                scenarios,
                output_dir: Some(output_dir(&cfg)),
            };
            let report = run_suite(&cfg, &opts)?;
            Ok(summarize(&report))
        }
        Command::Pf { config, scenario } => {
            let cfg = load_config(&config)?;
            let name = scenario
                .unwrap_or_else(|| cfg.reference_scenario.clone())
                .to_lowercase();
            let Some(path) = cfg.scenario_paths.iter().find(|p| scenario_key(p) == name) else {
                bail!("scenario `{name}` is not in {}", config.display());
            };
            let base = load_network(&cfg.network_path)?;
            let net = apply_scenario(&base, &load_scenario(path)?)?;
            let sol = solve_pf(&net, SolverOptions::default())?;
            eprintln!(
                "{name}: converged {} after {} iterations, mismatch {:.3e}",
                sol.converged,
                sol.iterations,
                sol.residual()
            );
            println!("bus,vm_pu,va_degree");
            for (i, id) in sol.bus_ids.iter().enumerate() {
                println!("{id},{:.6},{:.6}", sol.v_pu[i], sol.theta_rad[i].to_degrees());
            }
            println!();
            println!("branch,p_from_mw,q_from_mvar,p_to_mw,q_to_mvar,loading_percent");
            for f in &sol.branch_flows {
                println!(
                    "{},{:.6},{:.6},{:.6},{:.6},{:.3}",
                    f.branch, f.p_from_mw, f.q_from_mvar, f.p_to_mw, f.q_to_mvar, f.loading_percent
                );
            }
            println!();
            println!("ext_grid_p_mw,ext_grid_q_mvar");
            println!("{:.6},{:.6}", sol.slack_p_mw, sol.slack_q_mvar);
            Ok(if sol.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report { config, dir } => {
            let dir = match (dir, config) {
                (Some(d), _) => d,
                (None, Some(c)) => output_dir(&load_config(&c)?),
                (None, None) => bail!("either --dir or --config is required"),
            };
            let report = build_report(&dir)?;
            Ok(summarize(&report))
        }
        Command::Hull { samples, out, svg } => {
            let (rows, hull) = hull_of_file(&samples)?;
            if rows.is_empty() {
                eprintln!("warning: {} has no samples, plot will be empty", samples.display());
            }
            println!("area_mw_mvar,{}", hull.area);
            if let Some(out) = out {
                fs::write(&out, hull.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            }
            if let Some(svg) = svg {
                let initial = initial_point_near(&samples)?;
                fs::write(&svg, render_scatter(&rows, initial, &hull))
                    .with_context(|| format!("writing {}", svg.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
