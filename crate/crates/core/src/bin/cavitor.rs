use std::process::ExitCode;

use clap::Parser;

use cavitor::cli::{execute, init_threads, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| execute(cli.command)) {
        Ok(prov) => {
            for (k, v) in &prov.notes {
                println!("{k} = {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cavitor: {e}");
            ExitCode::FAILURE
        }
    }
}
