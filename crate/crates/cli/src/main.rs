use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use payload_cli::{cmd_plan, cmd_simulate, cmd_sweep, CliError, CommonOptions};

#[derive(Parser)]
#[command(name = "payload-sim", version, about = "Suspended-payload planning, control and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reference CSV (`t,x,y,z`) overriding the configured reference.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Sensor noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Jitter the integration interval of each control tick.
    #[arg(long)]
    jitter_dt: bool,
}

impl Common {
    fn options(&self) -> CommonOptions {
        CommonOptions { config: self.config.clone(), reference: self.reference.clone(), seed: self.seed, jitter_dt: self.jitter_dt }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop and write the log and metrics to a directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the dense open-loop plan of a reference to a CSV file.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a payload-mass, cable-length and spacing grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid such as `m_l=0.5,1,1.5;l=1,2,3;dt=2`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the normalized configuration.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, out } => cmd_simulate(&common.options(), &out),
        Command::Plan { common, out } => cmd_plan(&common.options(), &out),
        Command::Sweep { common, grid, out } => cmd_sweep(&common.options(), &grid, &out),
        Command::Config { common } => {
            print!("{}", common.options().load_config()?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
