use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smlmc::cdf::{reference_cdf, sup_distance};
use smlmc::config::ExperimentConfig;
use smlmc::cost::WorkModel;
use smlmc::experiment::{load_or_compute_reference, plan, run_experiment, RunOptions};
use smlmc::models::ModelKind;
use smlmc::report::{write_json, OutputLayout, RunStatus};
use smlmc::smoothing::GilesPolynomial;

#[derive(Parser)]
#[command(name = "smlmc", version, about = "Multilevel CDF estimation for PDEs with a random input")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator comparison and write reports and cost tables.
    Run {
        #[command(flatten)]
        setup: Setup,
        /// Print the planned runs and exit.
        #[arg(long)]
        dry_run: bool,
        /// Also write cost-versus-tolerance series.
        #[arg(long)]
        plot_data: bool,
    },
    /// Compute (or load the cached) reference CDF and report its convergence.
    Reference {
        #[command(flatten)]
        setup: Setup,
        /// Skip the half-resolution mesh check.
        #[arg(long)]
        no_mesh_check: bool,
    },
    /// Print diagnostic data as CSV.
    Inspect {
        #[command(subcommand)]
        what: Inspect,
    },
}

#[derive(Args)]
struct Setup {
    /// Model preset.
    #[arg(long, value_parser = ["diffusion", "burgers"], conflicts_with = "config")]
    preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// `wallclock` or `deterministic`; overrides the configuration.
    #[arg(long)]
    work_model: Option<WorkModel>,
}

impl Setup {
    fn load(&self) -> smlmc::Result<(ExperimentConfig, PathBuf)> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name.parse()?),
            (None, None) => ExperimentConfig::preset(ModelKind::Diffusion),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(w) = self.work_model {
            config.work_model = w;
        }
        config.validate()?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&config.output_dir));
        Ok((config, out))
    }
}

#[derive(Subcommand)]
enum Inspect {
    /// Coefficients and values of the polynomial smoother.
    GilesPoly {
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Final-time solution field for one input value.
    SolverField {
        #[arg(long, value_parser = ["diffusion", "burgers"], default_value = "diffusion")]
        model: String,
        #[arg(long)]
        input: f64,
        #[arg(long, default_value_t = 128)]
        cells: usize,
    },
    /// Stratum bounds and probabilities of the preset input law.
    Strata {
        #[arg(long, value_parser = ["diffusion", "burgers"], default_value = "diffusion")]
        preset: String,
        #[arg(long, default_value_t = 8)]
        strata: usize,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> smlmc::Result<ExitCode> {
    match cli.command {
        Command::Run {
            setup,
            dry_run,
            plot_data,
        } => {
            let (config, out) = setup.load()?;
            if dry_run {
                let mut stdout = io::stdout().lock();
                writeln!(stdout, "model,eps,run,seed,method")?;
                for p in plan(&config) {
                    writeln!(stdout, "{},{},{},{},{}", config.model, p.eps, p.run, p.seed, p.method)?;
                }
                return Ok(ExitCode::SUCCESS);
            }
            let summary = run_experiment(&config, &out, &RunOptions { plot_data }, |r| match r.status {
                RunStatus::Completed => eprintln!(
                    "{} eps={} run={} cost={:.4e}{}{}",
                    r.method,
                    r.eps,
                    r.run,
                    r.cost.unwrap_or(0.0),
                    r.reference_error
                        .map(|e| format!(" sup_err={:.4}", e.raw))
                        .unwrap_or_default(),
                    if r.warnings.is_empty() {
                        String::new()
                    } else {
                        format!(" warning: {}", r.warnings.join("; "))
                    }
                ),
                RunStatus::Failed => eprintln!(
                    "{} eps={} run={} FAILED: {}",
                    r.method,
                    r.eps,
                    r.run,
                    r.error.as_deref().unwrap_or("")
                ),
            })?;
            let mut stdout = io::stdout().lock();
            summary.table.write_csv(&mut stdout)?;
            let failures = summary.failures();
            eprintln!(
                "{} runs, {} failed; outputs in {}",
                summary.reports.len(),
                failures,
                out.display()
            );
            Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Reference { setup, no_mesh_check } => {
            let (config, out) = setup.load()?;
            let layout = OutputLayout::new(&out);
            let reference = load_or_compute_reference(&config, &layout)?;
            let mut report = serde_json::json!({
                "model": config.model,
                "settings": reference.settings,
                "anchor_halving_change": reference.anchor_halving_change,
            });
            if !no_mesh_check {
                let mut coarse = reference.settings;
                coarse.mesh_cells /= 2;
                let half = reference_cdf(&config.model_spec(), &config.distribution()?, &config.nodes, coarse)?;
                let change = sup_distance(half.estimate.raw_curve(), reference.estimate.raw_curve())?;
                report["mesh_halving_change"] = change.into();
            }
            write_json(&out.join("reference_convergence.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { what } => {
            inspect(what)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn inspect(what: Inspect) -> smlmc::Result<()> {
    let mut out = io::stdout().lock();
    match what {
        Inspect::GilesPoly { degree, points } => {
            let g = GilesPolynomial::new(degree)?;
            let coeffs: Vec<String> = g.coeffs().iter().map(f64::to_string).collect();
            writeln!(out, "# coefficients (ascending powers): {}", coeffs.join(" "))?;
            writeln!(out, "s,g")?;
            let n = points.max(2);
            for k in 0..n {
                let s = -1.5 + 3.0 * k as f64 / (n - 1) as f64;
                writeln!(out, "{s},{}", g.eval(s))?;
            }
        }
        Inspect::SolverField { model, input, cells } => {
            let spec = smlmc::models::ModelSpec::preset(model.parse()?);
            let sol = spec.solve(input, cells)?;
            let q = smlmc::models::qoi(&sol.values, sol.dx, spec.qoi_scale, sol.grid);
            writeln!(out, "# qoi {q} steps {}", sol.steps)?;
            writeln!(out, "x,u")?;
            for (x, u) in sol.coordinates().iter().zip(&sol.values) {
                writeln!(out, "{x},{u}")?;
            }
        }
        Inspect::Strata { preset, strata } => {
            let config = ExperimentConfig::preset(preset.parse()?);
            let s = config.stratification(strata)?;
            writeln!(out, "stratum,lo,hi,probability")?;
            for i in 0..s.len() {
                let (lo, hi) = s.bounds(i);
                writeln!(out, "{i},{lo},{hi},{}", s.probs()[i])?;
            }
        }
    }
    Ok(())
}
