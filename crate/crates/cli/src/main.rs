mod error;
mod eval;
mod run;
mod settings;
mod tools;

use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;
use zbs_client::Client;

#[derive(Parser, Debug)]
#[command(name = "zbs", version, about = "Instance-level background subtraction over detection streams")]
struct Cli {
    /// Service URL. Without it an in-process server is started.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline over a detection stream and write masks.
    Run(run::RunArgs),
    /// Run with abandoned-object detection enabled.
    Aod(run::RunArgs),
    /// Score mask folders against ground truth.
    Eval(eval::EvalArgs),
    /// Generate a synthetic scenario.
    Synth(tools::SynthArgs),
    /// Threshold sensitivity table over one stream.
    Sweep(tools::SweepArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

async fn connect(server: Option<String>) -> Result<Client, CliError> {
    let base = match server {
        Some(url) => url,
        None => {
            let addr = zbs_server::spawn_local().await.map_err(CliError::io)?;
            format!("http://{addr}")
        }
    };
    Ok(Client::new(base))
}

async fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve(a) => {
            zbs_server::init_logging();
            let listener = tokio::net::TcpListener::bind(&a.addr).await.map_err(CliError::io)?;
            eprintln!("listening on http://{}", listener.local_addr().map_err(CliError::io)?);
            zbs_server::serve(listener).await.map_err(CliError::io)
        }
        Command::Run(a) => run::run(&connect(cli.server).await?, a, false).await,
        Command::Aod(a) => run::run(&connect(cli.server).await?, a, true).await,
        Command::Eval(a) => eval::eval(&connect(cli.server).await?, a).await,
        Command::Synth(a) => tools::synth(&connect(cli.server).await?, a).await,
        Command::Sweep(a) => tools::sweep(&connect(cli.server).await?, a).await,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("zbs: {e}");
            return ExitCode::from(error::EXIT_OTHER);
        }
    };
    match rt.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zbs: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(error::io_at(dir))
}
