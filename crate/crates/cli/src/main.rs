use clap::Parser;
use fujita_cli::{run, Cli};

fn main() {
    std::process::exit(run(&Cli::parse()));
}
