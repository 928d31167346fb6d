use std::path::{Path, PathBuf};
use std::process::ExitCode;

use buying_rights::analysis::Trader;
use buying_rights::scenarios::ClaimScale;
use buying_rights::{DistributionMechanism, Variant};
use buying_rights_cli::commands::{self, AuditRequest, SweepRequest};
use buying_rights_cli::presets::{preset, PRESETS};
use buying_rights_cli::{CliError, Overrides, Result, ScenarioFile, Verdict};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "buying-rights",
    version,
    about = "Repeated market with tradable buying rights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write one CSV row per round.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// CSV destination; the scenario's output path, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the market with single-round deviations from greedy play.
    /// Exits 3 if any deviation is profitable.
    Audit {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Coalition as comma-separated traders, e.g. `b0,b1`. Repeatable;
        /// replaces the scenario's coalitions.
        #[arg(long = "coalition")]
        coalitions: Vec<String>,
        /// Skip coalitions even if the scenario lists some.
        #[arg(long, conflicts_with = "coalitions")]
        unilateral_only: bool,
        /// Report destination; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frustration and price over generated populations of several sizes.
    Sweep {
        #[arg(long, default_value_t = 3)]
        min_buyers: usize,
        #[arg(long, default_value_t = 10)]
        max_buyers: usize,
        /// Scenarios per size.
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Seed of the first scenario of each size.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scale::Scarce)]
        claim_scale: Scale,
        /// Dirichlet concentration; `none` for noiseless means.
        #[arg(long, default_value = "1.0", value_parser = parse_concentration)]
        concentration: Concentration,
        #[arg(long, value_enum, default_value_t = Mechanism::Proportional)]
        mechanism: Mechanism,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the distribution-mechanism axioms on random instances. Exits 3
    /// if a mechanism violates one.
    VerifyMechanisms {
        /// Check only this scenario's mechanism.
        #[arg(long, conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    Presets,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Bundled scenario by name; see `presets`.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct OverrideArgs {
    /// Seed for generated buyers.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// rights, free_market or myopic_rights.
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    /// Claims sum to twice the supply.
    Scarce,
    /// Scarce claims divided by the number of buyers.
    PerBuyer,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mechanism {
    Proportional,
    ContestedGarment,
}

/// Dirichlet concentration, `None` meaning no noise.
#[derive(Clone, Copy)]
struct Concentration(Option<f64>);

fn parse_concentration(s: &str) -> std::result::Result<Concentration, String> {
    if s == "none" {
        return Ok(Concentration(None));
    }
    match s.parse::<f64>() {
        Ok(a) if a.is_finite() && a > 0.0 => Ok(Concentration(Some(a))),
        _ => Err(format!("`{s}` is not a positive number or `none`")),
    }
}

fn load(source: &Source, overrides: Option<&OverrideArgs>) -> Result<ScenarioFile> {
    let mut file = match (&source.scenario, &source.preset) {
        (Some(path), _) => ScenarioFile::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(CliError::Parse("give --scenario or --preset".into())),
    };
    if let Some(o) = overrides {
        file.apply(Overrides {
            seed: o.seed,
            horizon: o.horizon,
            variant: o.variant,
        });
    }
    Ok(file)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Simulate {
            source,
            overrides,
            out,
        } => {
            let file = load(&source, Some(&overrides))?;
            let csv = commands::simulate(&file)?;
            let target = out.or_else(|| file.output.as_ref().and_then(|o| o.path.clone()));
            emit(&csv, target.as_deref())?;
            Ok(Verdict::Clean)
        }
        Command::Audit {
            source,
            overrides,
            coalitions,
            unilateral_only,
            out,
        } => {
            // the horizon flag sets the audit horizon, not the scenario's
            let horizon = overrides.horizon;
            let file = load(
                &source,
                Some(&OverrideArgs {
                    horizon: None,
                    ..overrides
                }),
            )?;
            let coalitions = if unilateral_only {
                Some(Vec::new())
            } else if coalitions.is_empty() {
                None
            } else {
                Some(group_coalitions(&coalitions)?)
            };
            let (report, verdict) = commands::audit(
                &file,
                &AuditRequest {
                    horizon,
                    coalitions,
                },
            )?;
            emit(&report, out.as_deref())?;
            Ok(verdict)
        }
        Command::Sweep {
            min_buyers,
            max_buyers,
            seeds,
            seed,
            claim_scale,
            concentration,
            mechanism,
            out,
        } => {
            let request = SweepRequest {
                min_buyers,
                max_buyers,
                seeds,
                first_seed: seed,
                claim_scale: match claim_scale {
                    Scale::Scarce => ClaimScale::Scarce,
                    Scale::PerBuyer => ClaimScale::PerBuyer,
                },
                concentration: concentration.0,
                mechanism: match mechanism {
                    Mechanism::Proportional => DistributionMechanism::Proportional,
                    Mechanism::ContestedGarment => DistributionMechanism::ContestedGarment,
                },
            };
            emit(&commands::sweep(&request)?, out.as_deref())?;
            Ok(Verdict::Clean)
        }
        Command::VerifyMechanisms {
            scenario,
            preset,
            samples,
            seed,
            out,
        } => {
            let mechs = if scenario.is_some() || preset.is_some() {
                let file = load(&Source { scenario, preset }, None)?;
                vec![file.mechanism]
            } else {
                commands::default_mechanisms()
            };
            let (table, verdict) = commands::verify_mechanisms(&mechs, samples, seed)?;
            emit(&table, out.as_deref())?;
            Ok(verdict)
        }
        Command::Presets => {
            for (name, text) in PRESETS {
                let summary = text.lines().next().unwrap_or("").trim_start_matches("# ");
                println!("{name:<30} {summary}");
            }
            Ok(Verdict::Clean)
        }
    }
}

/// One coalition per `--coalition` occurrence.
fn group_coalitions(values: &[String]) -> Result<Vec<Vec<Trader>>> {
    values
        .iter()
        .map(|v| {
            let names: Vec<String> = v.split(',').map(|n| n.trim().to_string()).collect();
            buying_rights_cli::scenario::parse_coalition(&names)
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(verdict) => verdict.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
