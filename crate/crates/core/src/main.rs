use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evolvability::exec::with_jobs;
use evolvability::experiment::{self, command_dir, ExperimentConfig, Profile};
use evolvability::Error;

#[derive(Parser)]
#[command(
    name = "evolvability",
    version,
    about = "Behavior-landscape walks and evolvability estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Walks at several selection pressures; correlates pressure with final evolvability.
    PressureSweep(Common),
    /// Walks under several diversity metrics; Kruskal-Wallis on final evolvability.
    MetricComparison(Common),
    /// Niche transition matrix and l-evolvability table.
    MarkovEstimate(Common),
    /// Ranks sampled genotypes by their r* ratio.
    DissimilaScan(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the config value, where 0 means all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
}

impl Common {
    fn resolve(&self) -> evolvability::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path, self.profile)?,
            None => ExperimentConfig::profile(self.profile),
        };
        if let Some(s) = self.seed {
            cfg.global_seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.parallelism = j;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> evolvability::Result<()> {
    let (name, common) = match &cli.command {
        Command::PressureSweep(c) => ("pressure-sweep", c),
        Command::MetricComparison(c) => ("metric-comparison", c),
        Command::MarkovEstimate(c) => ("markov-estimate", c),
        Command::DissimilaScan(c) => ("dissimila-scan", c),
    };
    let cfg = common.resolve()?;
    with_jobs(cfg.jobs(), |exec| -> evolvability::Result<()> {
        match &cli.command {
            Command::PressureSweep(_) => {
                let s = experiment::pressure_sweep(&cfg, exec)?;
                match s.spearman {
                    Some(c) => println!("spearman rho = {:.4}, p = {:.3e}", c.rho, c.p),
                    None => println!("spearman undefined (constant input)"),
                }
            }
            Command::MetricComparison(_) => {
                let s = experiment::metric_comparison(&cfg, exec)?;
                let kw = s.kruskal_wallis;
                println!(
                    "kruskal-wallis H = {:.4}, p = {:.3e}, dof = {}",
                    kw.h, kw.p, kw.dof
                );
            }
            Command::MarkovEstimate(_) => {
                let s = experiment::markov_estimate(&cfg, exec)?;
                println!(
                    "{} niches, {} observed rows, diagonal mass {:.4}",
                    s.niches, s.observed_rows, s.diagonal_mass
                );
            }
            Command::DissimilaScan(_) => {
                let s = experiment::dissimila_scan(&cfg, exec)?;
                println!(
                    "{} samples, global sensitivity {:.4}",
                    s.samples, s.global_sensitivity
                );
            }
        }
        Ok(())
    })?;
    println!("wrote {}", command_dir(&cfg, name).display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidShape(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
