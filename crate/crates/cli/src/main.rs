use std::process::ExitCode;

use clap::Parser;
use cosim_cli::{main_with, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = main_with(cli, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
