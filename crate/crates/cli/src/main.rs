use std::process::ExitCode;

use clap::Parser;
use spm_cli::{run, Cli};

fn main() -> ExitCode {
    let code = run(Cli::parse());
    ExitCode::from(code as u8)
}
