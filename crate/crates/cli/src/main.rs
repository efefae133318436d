use std::process::ExitCode;

use clap::Parser;
use mamsap::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(output) => {
            println!("{}", output.summary);
            for f in &output.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(output.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
