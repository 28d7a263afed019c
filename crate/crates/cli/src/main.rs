mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "lgcp", version, about = "Case-control log-Gaussian Cox process models")]
struct Cli {
    /// JSON file mirroring the run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more progress output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cells along the longer side of output grids.
    #[arg(long)]
    grid_res: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelFlags {
    #[arg(long)]
    pattern: Option<PathBuf>,
    #[arg(long)]
    window: Option<PathBuf>,
    /// Model 0 to 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    model: Option<u8>,
    /// Exposure form of every source: fixed, rw1 or spde1.
    #[arg(long)]
    exposure: Option<lgcp::ExposureForm>,
    /// Source location as `X,Y`; replaces the configured sources.
    #[arg(long, value_parser = commands::parse_point)]
    source: Option<lgcp::Point>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the exposure study datasets.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Window GeoJSON; the synthetic study window when absent.
        #[arg(long)]
        window: Option<PathBuf>,
        /// Keep only this decay scale.
        #[arg(long)]
        phi: Option<f64>,
        /// Keep only this number of cases.
        #[arg(long)]
        n_cases: Option<usize>,
        #[arg(long)]
        n_controls: Option<usize>,
    },
    /// Fit one model and write its report and grids.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Tabulate criteria of fit reports on the same dataset.
    Compare {
        #[arg(required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior risk maps of the disease-specific fields.
    Riskmap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Report whose dataset and model to reuse.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Difference maps `U,V` of two diseases; repeatable.
        #[arg(long, value_parser = commands::parse_pair)]
        diff: Vec<(usize, usize)>,
    },
    /// Print the effective configuration as JSON.
    Config,
}

fn base_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.verbosity = cfg.verbosity.max(cli.verbose);
    Ok(cfg)
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(g) = c.grid_res {
        cfg.grid_res = g;
    }
}

fn apply_model(cfg: &mut RunConfig, m: &ModelFlags) -> CliResult<()> {
    if let Some(p) = &m.pattern {
        cfg.pattern = Some(p.clone());
    }
    if let Some(w) = &m.window {
        cfg.window = Some(w.clone());
    }
    if let Some(id) = m.model {
        cfg.model.model = lgcp::ModelId::try_from(id).map_err(error::CliError::Input)?;
    }
    if let Some(at) = m.source {
        let form = m.exposure.unwrap_or(lgcp::ExposureForm::Fixed);
        cfg.model.sources = vec![lgcp::SourceSpec { name: "source".into(), x: at.x, y: at.y, form }];
    } else if let Some(form) = m.exposure {
        cfg.model.sources.iter_mut().for_each(|s| s.form = form);
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Simulate { common, window, phi, n_cases, n_controls } => {
            apply_common(&mut cfg, common);
            cfg.command = Some("simulate".into());
            if let Some(w) = window {
                cfg.window = Some(w.clone());
            }
            if let Some(p) = phi {
                cfg.simulation.phis = vec![*p];
            }
            if let Some(n) = n_cases {
                cfg.simulation.case_counts = vec![*n];
            }
            if let Some(n) = n_controls {
                cfg.simulation.n_controls = *n;
            }
            commands::simulate(&cfg)
        }
        Command::Fit { common, model } => {
            apply_common(&mut cfg, common);
            apply_model(&mut cfg, model)?;
            cfg.command = Some("fit".into());
            commands::fit(&cfg)
        }
        Command::Compare { reports, out } => commands::compare(reports, out.as_deref()),
        Command::Riskmap { common, model, report, diff } => {
            apply_common(&mut cfg, common);
            cfg.command = Some("riskmap".into());
            let reference = match report {
                Some(p) => Some(commands::adopt_report(&mut cfg, p)?),
                None => None,
            };
            apply_model(&mut cfg, model)?;
            commands::riskmap(&cfg, reference.as_ref(), diff)
        }
        Command::Config => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
