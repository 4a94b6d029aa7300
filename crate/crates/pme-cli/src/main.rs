use clap::Parser;
use pme_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(error) = execute(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
