use clap::Parser;

use fracgrad::cli;

fn main() {
    let parsed = cli::Cli::parse();
    std::process::exit(cli::execute(parsed));
}
