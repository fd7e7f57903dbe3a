use clap::{Args, Parser, Subcommand};
use seed_swarm::cli;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "seed-swarm",
    about = "Distributed constrained optimal-consensus simulator and verification harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Dotted-path overrides applied to the scenario JSON, e.g.
    /// --set beta=20 --set agents.0.x0.1=2.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for --set dt=...
    #[arg(long)]
    dt: Option<f64>,
    /// Shorthand for --set t_final=...
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Shorthand for --set method=...
    #[arg(long, value_parser = ["euler", "rk4"])]
    method: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, seed_swarm::cli::CliError> {
        let mut out = Vec::new();
        for raw in &self.set {
            out.push(cli::parse_override(raw)?);
        }
        if let Some(dt) = self.dt {
            out.push(("dt".into(), dt.to_string()));
        }
        if let Some(tf) = self.t_final {
            out.push(("t_final".into(), tf.to_string()));
        }
        if let Some(m) = &self.method {
            out.push(("method".into(), m.clone()));
        }
        Ok(out)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and export trajectory.csv + summary.json.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory (default: runs/<scenario-hash>/).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append per-coordinate consensus errors and the gradient-spread
        /// series as extra CSV columns.
        #[arg(long)]
        full_series: bool,
    },
    /// Solve the centralized problem and print the optimum as JSON.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Simulate, then verify every certificate; exit 0 only on a full pass.
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run one scenario under several values of alpha, beta, or dt.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to vary.
        #[arg(long, value_parser = ["alpha", "beta", "dt"])]
        param: String,
        /// Comma-separated list of values, e.g. --values 1,10,100
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Output directory (default: runs/<scenario-hash>/).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print topology facts: connectivity, spectrum, stability bound.
    GraphInfo {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SEED_SWARM_LOG")).init();
    let parsed = Cli::parse();
    let code = match parsed.command {
        Command::Run {
            common,
            out,
            full_series,
        } => match common.overrides() {
            Ok(overrides) => {
                cli::cmd_run(&common.scenario, out.as_deref(), &overrides, full_series)
            }
            Err(e) => report(e),
        },
        Command::Solve { common } => match common.overrides() {
            Ok(overrides) => cli::cmd_solve(&common.scenario, &overrides),
            Err(e) => report(e),
        },
        Command::Check { common } => match common.overrides() {
            Ok(overrides) => cli::cmd_check(&common.scenario, &overrides),
            Err(e) => report(e),
        },
        Command::Sweep {
            common,
            param,
            values,
            out,
        } => match common.overrides() {
            Ok(overrides) => cli::cmd_sweep(
                &common.scenario,
                &param,
                &values,
                out.as_deref(),
                &overrides,
            ),
            Err(e) => report(e),
        },
        Command::GraphInfo { common } => match common.overrides() {
            Ok(overrides) => cli::cmd_graph_info(&common.scenario, &overrides),
            Err(e) => report(e),
        },
    };
    ExitCode::from(code as u8)
}

fn report(e: seed_swarm::cli::CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
