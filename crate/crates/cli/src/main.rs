use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use invkit::harness::{self, RunOptions, RunOutcome, RunReport};

#[derive(Parser)]
#[command(name = "invkit", version, about = "Controlled invariant sets of switched systems by interval branch-and-prune")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Inertial,
    First,
    Random,
}

#[derive(Args)]
struct Common {
    /// System definition file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the precision from the config.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "INVKIT_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            epsilon: self.epsilon,
            workers: self.workers,
            seed: self.seed,
            policy: self.policy.map(|p| {
                match p {
                    Policy::Inertial => "inertial",
                    Policy::First => "first",
                    Policy::Random => "random",
                }
                .to_string()
            }),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Outer approximation of the maximal controlled invariant set.
    Outer(Common),
    /// Certified inner approximation and controller.
    Inner(Common),
    /// Shrinks the precision until the inner approximation is nonempty.
    Margin {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        eps0: f64,
        #[arg(long, default_value_t = 0.5)]
        shrink: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps_min: f64,
    },
    /// Closed-loop simulation under a saved controller.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: PathBuf,
        /// Initial state as "a,b,..."; defaults to the config's x0.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Writes the transition system induced by a saved controller.
    ExportAbstraction {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: PathBuf,
    },
    /// Runs every config in a directory and writes a summary table.
    Bench {
        #[arg(long, default_value = "configs")]
        configs: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, env = "INVKIT_WORKERS")]
        workers: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<Vec<RunReport>> {
    Ok(match cli.command {
        Command::Outer(c) => vec![harness::cmd_outer(&c.config, &c.out, &c.options())?],
        Command::Inner(c) => vec![harness::cmd_inner(&c.config, &c.out, &c.options())?],
        Command::Margin {
            common,
            eps0,
            shrink,
            eps_min,
        } => vec![harness::cmd_margin(
            &common.config,
            eps0,
            shrink,
            eps_min,
            &common.out,
            &common.options(),
        )?],
        Command::Simulate {
            common,
            controller,
            x0,
            steps,
        } => {
            let x0 = x0.as_deref().map(harness::parse_point).transpose()?;
            vec![harness::cmd_simulate(
                &common.config,
                &controller,
                x0.as_deref(),
                steps,
                &common.out,
                &common.options(),
            )?]
        }
        Command::ExportAbstraction { common, controller } => vec![harness::cmd_export_abstraction(
            &common.config,
            &controller,
            &common.out,
            &common.options(),
        )?],
        Command::Bench { configs, out, workers } => {
            let opts = RunOptions {
                workers,
                ..RunOptions::default()
            };
            let rows = harness::bench(&configs, &out, &opts)?;
            for (name, r) in &rows {
                println!("{name}: {}", r.summary());
            }
            return Ok(Vec::new());
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(reports) => {
            let mut code = ExitCode::SUCCESS;
            for r in &reports {
                println!("{}", r.summary());
                if r.outcome == RunOutcome::BudgetExceeded {
                    code = ExitCode::from(3);
                }
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
