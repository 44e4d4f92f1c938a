use clap::Parser;
use svnet::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("svnet: {e}");
        std::process::exit(e.exit_code());
    }
}
