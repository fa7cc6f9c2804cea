use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tsagrid::scenario::{self, Format, Kind, ScenarioError};

/// Batch runner for time-synchronization attack scenarios.
#[derive(Debug, Parser)]
#[command(name = "tsagrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario sweep and write its result table.
    Run {
        scenario: PathBuf,
        /// Output file; defaults to the scenario's `output.path`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
    /// List the scenario kinds.
    ListKinds,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

const EXIT_SCENARIO: u8 = 1;
const EXIT_IO: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_SCENARIO)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_SCENARIO })
        }
    }
}

fn stdout_error(e: io::Error) -> ScenarioError {
    ScenarioError::Io {
        path: PathBuf::from("<stdout>"),
        reason: e.to_string(),
    }
}

fn execute(cmd: Command) -> Result<(), ScenarioError> {
    match cmd {
        Command::Run {
            scenario,
            out,
            format,
            threads,
        } => {
            let scn = scenario::load_scenario(&scenario)?;
            let format = format.map(Format::from).unwrap_or(scn.output.format);
            let table = scenario::run_sweep(&scn, threads)?;
            match out.or_else(|| scn.output.path.clone()) {
                Some(path) => scenario::emit(&table, &path, format),
                None => {
                    let stdout = io::stdout();
                    let mut w = BufWriter::new(stdout.lock());
                    scenario::write_table(&table, &mut w, format).map_err(stdout_error)?;
                    w.flush().map_err(stdout_error)
                }
            }
        }
        Command::Validate { scenario } => {
            let scn = scenario::load_scenario(&scenario)?;
            println!(
                "ok: {} scenario, {} grid point(s), columns: {}",
                scn.kind.name(),
                scn.grid().len(),
                scn.columns().join(", ")
            );
            Ok(())
        }
        Command::ListKinds => {
            for k in Kind::ALL {
                println!("{:<18} {}", k.name(), k.description());
            }
            Ok(())
        }
    }
}
